#include "cusemo/audio.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace cusemo {

void AudioClip::validate() const {
  if (sample_rate_hz <= 0) throw ValidationError("sample rate must be positive");
  if (samples.empty()) throw ValidationError("audio clip is empty");
  for (double s : samples) {
    if (!(s >= -1.0 && s <= 1.0)) {
      throw ValidationError("audio sample outside [-1, 1]");
    }
  }
}

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& s, std::uint32_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace

AudioClip read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("malformed WAV header: " + path);
  }

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t data_off = 0, data_len = 0;

  std::size_t off = 12;
  while (off + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + off);
    std::uint32_t len = read_u32(bytes.data() + off + 4);
    if (off + 8 + len > bytes.size()) {
      throw FormatError("truncated chunk in WAV file: " + path);
    }
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) throw FormatError("fmt chunk too short: " + path);
      const unsigned char* p = bytes.data() + off + 8;
      format = read_u16(p);
      channels = read_u16(p + 2);
      rate = read_u32(p + 4);
      bits = read_u16(p + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_off = off + 8;
      data_len = len;
    }
    off += 8 + len + (len & 1);  // chunks are word-aligned
  }

  if (!have_fmt || data_off == 0) {
    throw FormatError("missing fmt or data chunk: " + path);
  }
  if (format != 1) throw UnsupportedFormatError("only PCM WAV is supported: " + path);
  if (channels != 1) throw UnsupportedFormatError("only mono WAV is supported: " + path);
  if (bits != 16) throw UnsupportedFormatError("only 16-bit WAV is supported: " + path);
  if (rate == 0) throw FormatError("zero sample rate: " + path);
  if (data_len % 2 != 0) throw FormatError("odd data chunk size: " + path);

  AudioClip clip;
  clip.sample_rate_hz = static_cast<int>(rate);
  clip.samples.resize(data_len / 2);
  const unsigned char* d = bytes.data() + data_off;
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    std::int16_t v = static_cast<std::int16_t>(d[2 * i] | (d[2 * i + 1] << 8));
    clip.samples[i] = static_cast<double>(v) / 32768.0;
  }
  if (clip.samples.empty()) throw FormatError("empty data chunk: " + path);
  return clip;
}

void write_wav(const AudioClip& clip, const std::string& path) {
  clip.validate();
  const std::uint32_t n = static_cast<std::uint32_t>(clip.samples.size());
  const std::uint32_t data_bytes = n * 2;

  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVE";
  out += "fmt ";
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate_hz));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate_hz) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_bytes);
  for (double s : clip.samples) {
    long q = std::lround(s * 32768.0);
    if (q > 32767) q = 32767;
    if (q < -32768) q = -32768;
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw RuntimeFailure("cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw RuntimeFailure("write failed: " + path);
}

}  // namespace cusemo
