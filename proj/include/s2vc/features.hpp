/*
 * Copyright (c) 2026 The S2VC Authors
 *
 * Licensed under the Apache License, Version 2.0;
 * You may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an 'AS IS' BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "s2vc/dsp.hpp"
#include "s2vc/tensor.hpp"

namespace s2vc {

/// Which representation a frame matrix holds. Mel is extracted natively; the
/// others are produced by external exporters and ingested as feature files.
class FeatureKind {
 public:
  enum class Id { Mel, PPG, APC, CPC, W2V, External };

  FeatureKind() = default;
  explicit FeatureKind(Id id) : id_(id) {}
  static FeatureKind external(std::string name);
  /// Case-insensitive; unknown names become External(name).
  static FeatureKind from_name(const std::string& name);

  Id id() const { return id_; }
  std::string name() const;

  friend bool operator==(const FeatureKind& a, const FeatureKind& b) {
    return a.id_ == b.id_ && (a.id_ != Id::External || a.external_name_ == b.external_name_);
  }

 private:
  Id id_ = Id::Mel;
  std::string external_name_;
};

struct FeatureKindInfo {
  /// 0 means the dimension is defined by the exporter (PPG inventories, external kinds);
  /// only internal consistency is checked for those.
  int nominal_dim = 0;
  double nominal_fps = 100.0;
};

/// Per-kind nominal dimensions and frame rates; defaults can be overridden from config.
class FeatureRegistry {
 public:
  FeatureRegistry();
  static const FeatureRegistry& defaults();

  FeatureKindInfo info(const FeatureKind& kind) const;
  void set_dim(const FeatureKind& kind, int dim);
  void set_fps(const FeatureKind& kind, double fps);

 private:
  std::map<std::string, FeatureKindInfo> table_;
};

struct FeatureSequence {
  FeatureKind kind;
  MatrixXf frames;  // T x D
  double fps = 100.0;
  std::string utterance_id;
  std::string speaker_id;

  Index length() const { return frames.rows(); }
  Index dim() const { return frames.cols(); }

  /// T >= 1, finite values, D equal to the kind's nominal dimension when one is registered.
  void validate(const FeatureRegistry& registry = FeatureRegistry::defaults()) const;
};

/// Log-mel features of 16 kHz audio at 100 frames/s.
FeatureSequence extract_mel(const dsp::AudioBuffer& audio, const dsp::MelConfig& cfg = {},
                            std::string utterance_id = {}, std::string speaker_id = {});

// -- Feature files -------------------------------------------------------------

inline constexpr std::uint16_t kFeatureFileVersion = 1;
inline constexpr std::uint16_t kFeatureDtypeF32 = 1;

std::vector<std::uint8_t> encode_feature_file(const FeatureSequence& seq);
/// `utterance_id` is not stored in the file; callers pass it (usually the file stem).
FeatureSequence decode_feature_file(std::span<const std::uint8_t> bytes, std::string utterance_id,
                                    const FeatureRegistry& registry = FeatureRegistry::defaults());

void save_feature_file(const std::filesystem::path& path, const FeatureSequence& seq);
FeatureSequence load_feature_file(const std::filesystem::path& path,
                                  const FeatureRegistry& registry = FeatureRegistry::defaults());

/// Nearest-neighbour repetition/decimation to a new frame rate.
FeatureSequence align_frame_rate(const FeatureSequence& seq, double target_fps);

/// Time-axis concatenation of utterances that share kind, rate, dimension and speaker.
FeatureSequence concat_target(std::span<const FeatureSequence> seqs);

// -- Manifests -------------------------------------------------------------------

struct ManifestEntry {
  std::string utterance_id;
  std::string speaker_id;
  std::filesystem::path wav;
  /// Feature-kind name -> feature file.
  std::map<std::string, std::filesystem::path> features;
};

/// JSON-lines manifest; relative paths are resolved against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
/// Paths are written as given.
void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);

/// Loads `kind` for one manifest entry: the registered feature file when present,
/// otherwise (Mel only) extraction from the WAV after resampling to the mel rate.
FeatureSequence load_entry_features(const ManifestEntry& entry, const FeatureKind& kind,
                                    const dsp::MelConfig& mel = {},
                                    const FeatureRegistry& registry = FeatureRegistry::defaults());

/// Distinct speakers, sorted.
std::vector<std::string> manifest_speakers(std::span<const ManifestEntry> entries);

}  // namespace s2vc
