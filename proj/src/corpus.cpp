#include "cusemo/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include <json.hpp>

#include "cusemo/rng.hpp"
#include "cusemo/textio.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace cusemo {

void AnnotationTrack::validate() const {
  if (period_ms <= 0) throw ValidationError("annotation period must be positive");
  if (valence.size() != arousal.size()) {
    throw ValidationError("valence and arousal tracks differ in length");
  }
  if (valence.empty()) throw ValidationError("annotation track is empty");
  for (std::size_t i = 0; i < valence.size(); ++i) {
    if (!(valence[i] >= -1000.0 && valence[i] <= 1000.0) ||
        !(arousal[i] >= -1000.0 && arousal[i] <= 1000.0)) {
      throw ValidationError("annotation value outside [-1000, 1000]");
    }
  }
}

namespace {

void check_scale(double v, const char* name) {
  if (!(v >= 0.0 && v <= 10.0)) {
    throw ValidationError(std::string(name) + " must be in [0, 10]");
  }
}

}  // namespace

void ContextMetadata::validate() const {
  if (conversation_id.empty()) throw ValidationError("conversation_id is empty");
  check_scale(empathy, "empathy");
  check_scale(engagement, "engagement");
  check_scale(urgency, "urgency");
  check_scale(satisfaction, "satisfaction");
}

void Conversation::validate() const {
  if (id.empty()) throw ValidationError("conversation id is empty");
  audio.validate();
  metadata.validate();
  if (metadata.conversation_id != id) {
    throw ValidationError(id + ": metadata conversation_id mismatch");
  }
  if (tracks.empty()) throw ValidationError(id + ": conversation has no annotation tracks");
  const double audio_ms = audio.duration_ms();
  for (const auto& [annotator, track] : tracks) {
    track.validate();
    const double diff = std::abs(track.duration_ms() - audio_ms);
    if (diff > static_cast<double>(track.period_ms)) {
      throw ValidationError(id + ": track '" + annotator +
                            "' duration differs from audio by more than one label period");
    }
  }
}

// ---- enum names -------------------------------------------------------------

std::string to_string(SpeakerRole v) {
  return v == SpeakerRole::client ? "client" : "agent";
}
std::string to_string(Gender v) {
  switch (v) {
    case Gender::female: return "female";
    case Gender::male: return "male";
    default: return "unknown";
  }
}
std::string to_string(CallPurpose v) {
  switch (v) {
    case CallPurpose::purchase: return "purchase";
    case CallPurpose::issue: return "issue";
    default: return "information";
  }
}
std::string to_string(CallResolution v) {
  switch (v) {
    case CallResolution::resolved: return "resolved";
    case CallResolution::unresolved: return "unresolved";
    case CallResolution::client_action: return "client_action";
    default: return "agent_action";
  }
}

SpeakerRole speaker_role_from_string(const std::string& s) {
  if (s == "client") return SpeakerRole::client;
  if (s == "agent") return SpeakerRole::agent;
  throw ValidationError("unknown speaker_role: " + s);
}
Gender gender_from_string(const std::string& s) {
  if (s == "female") return Gender::female;
  if (s == "male") return Gender::male;
  if (s == "unknown") return Gender::unknown;
  throw ValidationError("unknown gender: " + s);
}
CallPurpose purpose_from_string(const std::string& s) {
  if (s == "purchase") return CallPurpose::purchase;
  if (s == "issue") return CallPurpose::issue;
  if (s == "information") return CallPurpose::information;
  throw ValidationError("unknown purpose: " + s);
}
CallResolution resolution_from_string(const std::string& s) {
  if (s == "resolved") return CallResolution::resolved;
  if (s == "unresolved") return CallResolution::unresolved;
  if (s == "client_action") return CallResolution::client_action;
  if (s == "agent_action") return CallResolution::agent_action;
  throw ValidationError("unknown resolution: " + s);
}

// ---- label CSV ----------------------------------------------------------------

AnnotationTrack read_label_csv(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || trim(lines[0]) != "t_ms,valence,arousal") {
    throw FormatError("label file must start with 't_ms,valence,arousal': " + path);
  }
  std::vector<long long> ts;
  AnnotationTrack track;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto f = split(lines[i], ',');
    if (f.size() != 3) throw FormatError("bad label row in " + path);
    ts.push_back(parse_int(trim(f[0]), path));
    track.valence.push_back(parse_double(trim(f[1]), path));
    track.arousal.push_back(parse_double(trim(f[2]), path));
  }
  if (ts.size() < 2) {
    throw FormatError("label file needs at least 2 rows to establish the period: " + path);
  }
  if (ts[0] != 0) throw FormatError("label timestamps must start at 0: " + path);
  const long long period = ts[1] - ts[0];
  if (period <= 0) throw FormatError("label timestamps must be increasing: " + path);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (ts[i] != static_cast<long long>(i) * period) {
      throw FormatError("label timestamps must be uniform multiples of the period: " + path);
    }
  }
  track.period_ms = static_cast<int>(period);
  track.validate();
  return track;
}

void write_label_csv(const AnnotationTrack& track, const std::string& path) {
  track.validate();
  std::string out = "t_ms,valence,arousal\n";
  for (std::size_t i = 0; i < track.size(); ++i) {
    out += std::to_string(static_cast<long long>(i) * track.period_ms);
    out += ',';
    out += format_double(track.valence[i]);
    out += ',';
    out += format_double(track.arousal[i]);
    out += '\n';
  }
  write_text_file(path, out);
}

// ---- metadata JSON -----------------------------------------------------------

ContextMetadata read_metadata_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("bad JSON in " + path + ": " + e.what());
  }
  const std::set<std::string> expected = {
      "conversation_id", "speaker_role", "gender",  "empathy",   "engagement",
      "urgency",         "satisfaction", "purpose", "resolution"};
  for (const auto& key : expected) {
    if (!j.contains(key)) throw FormatError(path + ": missing key '" + key + "'");
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!expected.count(it.key())) {
      throw FormatError(path + ": unexpected key '" + it.key() + "'");
    }
  }
  ContextMetadata m;
  try {
    m.conversation_id = j.at("conversation_id").get<std::string>();
    m.speaker_role = speaker_role_from_string(j.at("speaker_role").get<std::string>());
    m.gender = gender_from_string(j.at("gender").get<std::string>());
    m.empathy = j.at("empathy").get<double>();
    m.engagement = j.at("engagement").get<double>();
    m.urgency = j.at("urgency").get<double>();
    m.satisfaction = j.at("satisfaction").get<double>();
    m.purpose = purpose_from_string(j.at("purpose").get<std::string>());
    m.resolution = resolution_from_string(j.at("resolution").get<std::string>());
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  m.validate();
  return m;
}

void write_metadata_json(const ContextMetadata& meta, const std::string& path) {
  meta.validate();
  json j;
  j["conversation_id"] = meta.conversation_id;
  j["speaker_role"] = to_string(meta.speaker_role);
  j["gender"] = to_string(meta.gender);
  j["empathy"] = meta.empathy;
  j["engagement"] = meta.engagement;
  j["urgency"] = meta.urgency;
  j["satisfaction"] = meta.satisfaction;
  j["purpose"] = to_string(meta.purpose);
  j["resolution"] = to_string(meta.resolution);
  write_text_file(path, j.dump(2) + "\n");
}

// ---- manifest ------------------------------------------------------------------

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || trim(lines[0]) != "id,audio,labels_a1,labels_a2,metadata") {
    throw FormatError("manifest must start with 'id,audio,labels_a1,labels_a2,metadata': " +
                      path);
  }
  const fs::path base = fs::path(path).parent_path();
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto f = split(lines[i], ',');
    if (f.size() != 5) throw FormatError("bad manifest row in " + path);
    ManifestEntry e;
    e.id = trim(f[0]);
    if (e.id.empty()) throw FormatError("empty id in manifest row: " + path);
    if (!seen.insert(e.id).second) {
      throw ValidationError("duplicate conversation id in manifest: " + e.id);
    }
    e.audio_path = (base / trim(f[1])).string();
    const std::string a1 = trim(f[2]);
    const std::string a2 = trim(f[3]);
    if (!a1.empty()) e.label_paths.push_back((base / a1).string());
    if (!a2.empty()) e.label_paths.push_back((base / a2).string());
    e.metadata_path = (base / trim(f[4])).string();
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<Conversation> load_manifest(const std::string& path) {
  const auto entries = read_manifest(path);
  std::vector<Conversation> conversations;
  conversations.reserve(entries.size());
  for (const auto& e : entries) {
    try {
      for (const std::string& p : {e.audio_path, e.metadata_path}) {
        if (!fs::exists(p)) throw ValidationError("missing file: " + p);
      }
      for (const std::string& p : e.label_paths) {
        if (!fs::exists(p)) throw ValidationError("missing file: " + p);
      }
      if (e.label_paths.empty()) {
        throw ValidationError("manifest entry has no label tracks");
      }
      Conversation c;
      c.id = e.id;
      c.audio = read_wav(e.audio_path);
      for (std::size_t i = 0; i < e.label_paths.size(); ++i) {
        c.tracks.emplace_back("a" + std::to_string(i + 1),
                              read_label_csv(e.label_paths[i]));
      }
      c.metadata = read_metadata_json(e.metadata_path);
      c.validate();
      conversations.push_back(std::move(c));
    } catch (const ValidationError& err) {
      throw ValidationError("conversation '" + e.id + "': " + err.what());
    }
  }
  return conversations;
}

std::string write_corpus(const std::vector<Conversation>& conversations,
                         const std::string& out_dir) {
  fs::create_directories(fs::path(out_dir) / "audio");
  fs::create_directories(fs::path(out_dir) / "labels");
  fs::create_directories(fs::path(out_dir) / "meta");

  std::string manifest = "id,audio,labels_a1,labels_a2,metadata\n";
  for (const auto& c : conversations) {
    c.validate();
    const std::string wav_rel = "audio/" + c.id + ".wav";
    const std::string meta_rel = "meta/" + c.id + ".json";
    write_wav(c.audio, (fs::path(out_dir) / wav_rel).string());
    write_metadata_json(c.metadata, (fs::path(out_dir) / meta_rel).string());
    std::vector<std::string> label_rels;
    for (std::size_t i = 0; i < c.tracks.size() && i < 2; ++i) {
      const std::string rel = "labels/" + c.id + "_a" + std::to_string(i + 1) + ".csv";
      write_label_csv(c.tracks[i].second, (fs::path(out_dir) / rel).string());
      label_rels.push_back(rel);
    }
    manifest += c.id + "," + wav_rel + "," + label_rels[0] + ",";
    manifest += (label_rels.size() > 1 ? label_rels[1] : "");
    manifest += "," + meta_rel + "\n";
  }
  const std::string manifest_path = (fs::path(out_dir) / "manifest.csv").string();
  write_text_file(manifest_path, manifest);
  return manifest_path;
}

// ---- synthetic corpus ----------------------------------------------------------

namespace {

constexpr int kSampleRate = 8000;
constexpr int kLabelPeriodMs = 500;
constexpr double kNoiseFloor = 0.02;
constexpr double kTremoloHz = 12.0;
constexpr double kAnnotatorNoise = 35.0;

// Mean-reverting walk on the 500 ms grid, 3-tap smoothed, clipped to range.
std::vector<double> latent_walk(SplitMix64& rng, std::size_t n) {
  const double theta = std::exp(-0.5 / 4.0);  // ~4 s correlation time
  const double sigma_st = 450.0;
  const double step_sigma = sigma_st * std::sqrt(1.0 - theta * theta);
  std::vector<double> raw(n);
  double x = sigma_st * rng.gaussian();
  for (std::size_t i = 0; i < n; ++i) {
    raw[i] = x;
    x = theta * x + step_sigma * rng.gaussian();
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double prev = raw[i == 0 ? 0 : i - 1];
    const double next = raw[i + 1 < n ? i + 1 : n - 1];
    out[i] = std::clamp(0.25 * prev + 0.5 * raw[i] + 0.25 * next, -1000.0, 1000.0);
  }
  return out;
}

// Piecewise-linear interpolation of a 500 ms series at sample resolution.
double interp_at(const std::vector<double>& series, double t_ms) {
  const double pos = t_ms / kLabelPeriodMs;
  const std::size_t i = std::min(static_cast<std::size_t>(pos), series.size() - 1);
  const std::size_t j = std::min(i + 1, series.size() - 1);
  const double frac = pos - static_cast<double>(i);
  return series[i] + (series[j] - series[i]) * std::min(frac, 1.0);
}

std::vector<double> noisy_track(SplitMix64& rng, const std::vector<double>& latent) {
  std::vector<double> out(latent.size());
  for (std::size_t i = 0; i < latent.size(); ++i) {
    out[i] = std::clamp(latent[i] + kAnnotatorNoise * rng.gaussian(), -1000.0, 1000.0);
  }
  return out;
}

}  // namespace

std::vector<Conversation> generate_synthetic_corpus(int n_conversations,
                                                    int duration_s,
                                                    std::uint64_t seed) {
  if (n_conversations < 1) throw ValidationError("need at least one conversation");
  if (duration_s < 2) throw ValidationError("conversations must be at least 2 s long");

  std::vector<Conversation> out;
  out.reserve(static_cast<std::size_t>(n_conversations));
  const std::size_t n_labels = static_cast<std::size_t>(duration_s) * 1000 / kLabelPeriodMs;
  const std::size_t n_samples = static_cast<std::size_t>(duration_s) * kSampleRate;

  for (int ci = 0; ci < n_conversations; ++ci) {
    SplitMix64 rng(mix_seed(seed, static_cast<std::uint64_t>(ci)));

    Conversation c;
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "synth-%04d", ci);
    c.id = idbuf;

    ContextMetadata& m = c.metadata;
    m.conversation_id = c.id;
    m.speaker_role = SpeakerRole::client;
    m.gender = rng.uniform01() < 0.75 ? Gender::female : Gender::male;
    m.empathy = rng.uniform(0.0, 10.0);
    m.engagement = rng.uniform(0.0, 10.0);
    m.urgency = rng.uniform(0.0, 10.0);
    m.satisfaction = rng.uniform(0.0, 10.0);
    m.purpose = static_cast<CallPurpose>(rng.below(3));
    m.resolution = static_cast<CallResolution>(rng.below(4));

    const std::vector<double> valence = latent_walk(rng, n_labels);
    const std::vector<double> arousal = latent_walk(rng, n_labels);

    const double base_f0 = m.gender == Gender::female ? 210.0 : 120.0;
    const double tremolo_depth = 0.9 * (m.empathy / 10.0);
    const double harmonic_w[3] = {1.0, 0.45, 0.22};
    const double harmonic_norm = harmonic_w[0] + harmonic_w[1] + harmonic_w[2];

    AudioClip& clip = c.audio;
    clip.sample_rate_hz = kSampleRate;
    clip.samples.resize(n_samples);
    double phase = 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) {
      const double t_ms = static_cast<double>(s) * 1000.0 / kSampleRate;
      const double t_s = t_ms / 1000.0;
      const double v = interp_at(valence, t_ms);
      const double a = interp_at(arousal, t_ms);
      const double amp = 0.05 + (a + 1000.0) / 2000.0 * 0.85;
      const double f0 = base_f0 + 40.0 * v / 1000.0;
      phase += 2.0 * std::numbers::pi * f0 / kSampleRate;
      double tone = 0.0;
      for (int h = 0; h < 3; ++h) {
        tone += harmonic_w[h] * std::sin(static_cast<double>(h + 1) * phase);
      }
      tone /= harmonic_norm;
      const double trem =
          (1.0 + tremolo_depth * std::sin(2.0 * std::numbers::pi * kTremoloHz * t_s)) /
          (1.0 + tremolo_depth);
      const double sample = amp * trem * tone + kNoiseFloor * rng.gaussian();
      clip.samples[s] = std::clamp(sample, -1.0, 1.0);
    }

    AnnotationTrack latent;
    latent.period_ms = kLabelPeriodMs;
    latent.valence = valence;
    latent.arousal = arousal;

    for (int annot = 0; annot < 2; ++annot) {
      AnnotationTrack t;
      t.period_ms = kLabelPeriodMs;
      t.valence = noisy_track(rng, valence);
      t.arousal = noisy_track(rng, arousal);
      c.tracks.emplace_back("a" + std::to_string(annot + 1), std::move(t));
    }

    c.validate();
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace cusemo
