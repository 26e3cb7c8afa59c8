#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cusemo/audio.hpp"
#include "cusemo/common.hpp"

namespace cusemo {

// Uniformly sampled valence/arousal time series on the [-1000, 1000]
// annotation scale. Implied timestamps are 0, period_ms, 2*period_ms, ...
struct AnnotationTrack {
  int period_ms = 500;
  std::vector<double> valence;
  std::vector<double> arousal;

  std::size_t size() const { return valence.size(); }
  double duration_ms() const { return static_cast<double>(size()) * period_ms; }
  void validate() const;
};

enum class SpeakerRole { client, agent };
enum class Gender { female, male, unknown };
enum class CallPurpose { purchase, issue, information };
enum class CallResolution { resolved, unresolved, client_action, agent_action };

std::string to_string(SpeakerRole v);
std::string to_string(Gender v);
std::string to_string(CallPurpose v);
std::string to_string(CallResolution v);
SpeakerRole speaker_role_from_string(const std::string& s);
Gender gender_from_string(const std::string& s);
CallPurpose purpose_from_string(const std::string& s);
CallResolution resolution_from_string(const std::string& s);

// Conversation-level context: who is speaking and what the call was about.
// The 10-point scales run from 0 (least) to 10 (strongest).
struct ContextMetadata {
  std::string conversation_id;
  SpeakerRole speaker_role = SpeakerRole::client;
  Gender gender = Gender::unknown;
  double empathy = 0.0;
  double engagement = 0.0;
  double urgency = 0.0;
  double satisfaction = 0.0;
  CallPurpose purpose = CallPurpose::information;
  CallResolution resolution = CallResolution::resolved;

  void validate() const;
};

// One diarized single-speaker clip with its annotator tracks and context.
struct Conversation {
  std::string id;
  AudioClip audio;
  std::vector<std::pair<std::string, AnnotationTrack>> tracks;  // (annotator_id, track)
  ContextMetadata metadata;

  void validate() const;
};

// ---- on-disk formats -------------------------------------------------------
// Label file:  CSV `t_ms,valence,arousal`, t_ms = 0, period, 2*period, ...
// Metadata:    JSON object with exactly the ContextMetadata fields.
// Manifest:    CSV `id,audio,labels_a1,labels_a2,metadata` (labels_a2 may be
//              empty); paths are relative to the manifest's directory.

AnnotationTrack read_label_csv(const std::string& path);
void write_label_csv(const AnnotationTrack& track, const std::string& path);

ContextMetadata read_metadata_json(const std::string& path);
void write_metadata_json(const ContextMetadata& meta, const std::string& path);

struct ManifestEntry {
  std::string id;
  std::string audio_path;
  std::vector<std::string> label_paths;  // 1 or 2
  std::string metadata_path;
};

std::vector<ManifestEntry> read_manifest(const std::string& path);

// Loads and fully validates every conversation referenced by the manifest.
// Failures are reported with the offending conversation id.
std::vector<Conversation> load_manifest(const std::string& path);

// Writes audio/labels/metadata under out_dir and a manifest.csv tying them
// together. Returns the manifest path.
std::string write_corpus(const std::vector<Conversation>& conversations,
                         const std::string& out_dir);

// Deterministic synthetic stand-in corpus. Latent valence/arousal move as a
// smoothed, mean-reverting random walk on the 500 ms grid; the audio is a
// harmonic tone whose amplitude envelope follows arousal (linear map
// [-1000,1000] -> [0.05,0.9]) and whose fundamental follows valence
// (base f0 + 40 Hz * valence/1000, base 210 Hz female / 120 Hz male, drawn
// 3:1 female). Empathy sets the depth of a 5.5 Hz tremolo. A fixed
// low-level noise floor is added so absolute signal level stays decodable
// after per-segment normalization. Two annotator tracks are the latent
// trajectory plus independent noise.
std::vector<Conversation> generate_synthetic_corpus(int n_conversations,
                                                    int duration_s,
                                                    std::uint64_t seed);

}  // namespace cusemo
