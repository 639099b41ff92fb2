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

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "s2vc/features.hpp"
#include "s2vc/model.hpp"

namespace s2vc {

/// Runs fn(0..n-1) on up to `jobs` threads; jobs <= 1 runs inline in order.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

// -- Test pairs ----------------------------------------------------------------------

enum class Scenario { S2S, U2U };  // seen-to-seen, unseen-to-unseen

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

inline constexpr int kTargetsPerPair = 5;

struct TestPair {
  std::string id;
  Scenario scenario = Scenario::S2S;
  ManifestEntry source;
  std::vector<ManifestEntry> targets;  // kTargetsPerPair utterances of one speaker
  ManifestEntry reference;             // further target-speaker utterance for verification

  const std::string& source_speaker() const { return source.speaker_id; }
  const std::string& target_speaker() const { return targets.front().speaker_id; }
};

/// Seeded pairs: ordered speaker pair uniformly at random, one source utterance,
/// six distinct target-speaker utterances (five targets plus the reference).
/// Requires at least two speakers with six or more utterances.
std::vector<TestPair> sample_pairs(std::span<const ManifestEntry> entries, int n, Scenario scenario,
                                   std::uint64_t seed);

// -- Conversion ------------------------------------------------------------------------

struct ConversionOptions {
  dsp::MelConfig mel;
  int griffin_lim_iterations = 60;
  std::uint64_t seed = 0;
  bool synthesize = true;
};

struct Conversion {
  MatrixXf mel;  // Ts x mel_dim
  dsp::AudioBuffer audio;
  AttentionTrace<float> trace;
};

/// Inference-mode forward on already loaded features, then Griffin-Lim.
/// The waveform is trimmed to Ts * hop samples.
Conversion convert_features(Model& model, const FeatureSequence& source,
                            std::span<const FeatureSequence> targets, const ConversionOptions& options);

/// Loads the pair's features (source aligned to the mel frame rate) and converts.
Conversion convert(Model& model, const TestPair& pair, const ConversionOptions& options);

/// Source-kind features of an entry at the mel frame rate.
FeatureSequence load_source_features(const ManifestEntry& entry, const ModelConfig& config,
                                     const dsp::MelConfig& mel);

// -- Speaker verification ----------------------------------------------------------------

/// Cosine of the angle between a and b; throws NumericError on a zero vector.
double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct EerResult {
  double threshold = 0.0;
  double eer = 0.0;
};

/// Threshold where the false-acceptance rate (impostor > t) meets the false-rejection
/// rate (genuine < t), linearly interpolated between adjacent candidate thresholds.
/// Candidates are the midpoints of consecutive distinct scores plus one point
/// below and one above the observed range.
EerResult eer_threshold(std::span<const double> genuine, std::span<const double> impostor);

struct EmbedderOptions {
  int hidden = 64;
  int embedding_dim = 128;
  int steps = 400;
  int batch_size = 8;
  double learning_rate = 2e-3;
  double logit_scale = 10.0;
  std::uint64_t seed = 0;
};

/// Frame MLP -> temporal mean -> projection -> unit-norm embedding.
class SpeakerEmbedder {
 public:
  SpeakerEmbedder() = default;

  /// Trains on authentic log-mel spectrograms labelled with speaker indices.
  static SpeakerEmbedder train(std::span<const MatrixXf> logmels, std::span<const int> labels,
                               int n_speakers, const EmbedderOptions& options);

  /// Unit-norm embedding (L2 norm 1 within 1e-5).
  Eigen::VectorXd embed(const MatrixXf& logmel) const;
  Eigen::VectorXd embed(const dsp::AudioBuffer& audio, const dsp::MelConfig& mel) const;

  int embedding_dim() const { return static_cast<int>(projection_.out_features()); }

 private:
  Tensor normalise(const MatrixXf& logmel) const;
  Tensor forward_embedding(const MatrixXf& logmel) const;

  nn::Linear<float> first_, second_, projection_, head_;
  RowVector<float> channel_mean_, channel_scale_;
  double logit_scale_ = 10.0;
};

struct SvCalibration {
  double threshold = 0.0;
  double eer = 0.0;
  std::size_t n_genuine = 0;
  std::size_t n_impostor = 0;
};

/// All same-speaker pairs versus an equal-sized seeded sample of cross-speaker pairs.
SvCalibration calibrate_sv(std::span<const Eigen::VectorXd> embeddings, std::span<const std::string> speakers,
                           std::uint64_t seed);

/// Percentage of scores strictly above the threshold.
double sv_accuracy(std::span<const double> scores, double threshold);

/// Embedder and threshold built from the authentic audio of a manifest.
struct SvSystem {
  SpeakerEmbedder embedder;
  SvCalibration calibration;
  std::vector<std::string> speakers;
};

SvSystem build_sv_system(std::span<const ManifestEntry> entries, const dsp::MelConfig& mel,
                         const EmbedderOptions& options, int jobs = 1);

// -- Evaluation --------------------------------------------------------------------------

struct EvalOptions {
  int n_pairs = 400;
  Scenario scenario = Scenario::S2S;
  std::uint64_t seed = 0;
  int jobs = 1;
  int griffin_lim_iterations = 60;
  dsp::MelConfig mel;
  std::optional<std::filesystem::path> audio_dir;  // writes <pair_id>.wav when set
};

struct PairOutcome {
  std::string pair_id;
  std::string source_speaker;
  std::string target_speaker;
  double score = 0.0;
  bool accepted = false;

  bool operator==(const PairOutcome&) const = default;
};

struct EvalResult {
  double sv_accuracy = 0.0;  // percent
  double threshold = 0.0;
  double eer = 0.0;
  double recon_l1 = 0.0;  // identity reconstruction L1 over the pairs' source utterances
  std::vector<PairOutcome> pairs;
};

EvalResult evaluate(Model& model, std::span<const TestPair> pairs, const SvSystem& sv, const EvalOptions& options);

/// Mean L1 between the identity conversion (utterance as its own target) and its log-mel.
double identity_reconstruction_l1(Model& model, std::span<const ManifestEntry> entries,
                                  const dsp::MelConfig& mel, int jobs = 1);

// -- Probing -----------------------------------------------------------------------------

enum class ProbeSite { Q, K, V };

std::string to_string(ProbeSite s);
ProbeSite probe_site_from_string(const std::string& s);

struct ProbeData {
  MatrixXf features;         // frames x dim
  std::vector<int> labels;   // speaker index per frame
  std::vector<int> groups;   // conversion index per frame; splits never cut a group
  int n_classes = 0;
};

struct ProbeOptions {
  int steps = 1000;
  double learning_rate = 1e-2;
  double dev_fraction = 0.1;
  std::uint64_t seed = 0;
  int jobs = 1;
  dsp::MelConfig mel;
};

struct ProbeResult {
  ProbeSite site = ProbeSite::Q;
  std::string feature_pair;  // "<source kind>/<target kind>"
  double train_accuracy = 0.0;
  double dev_accuracy = 0.0;
  int n_classes = 0;
  std::size_t train_frames = 0;
  std::size_t dev_frames = 0;
};

/// One conversion per utterance with a target utterance from another speaker
/// (seeded); Q rows are labelled with the source speaker, K and V rows with the target.
std::array<ProbeData, 3> collect_probe_data(Model& model, std::span<const ManifestEntry> entries,
                                            const ProbeOptions& options);

/// Linear softmax classifier on standardised frames, full-batch AdamW, seeded
/// 90/10 split over groups; accuracies are frame-level.
ProbeResult train_probe(const ProbeData& data, const ProbeOptions& options);

ProbeResult probe_speaker_info(Model& model, std::span<const ManifestEntry> entries, ProbeSite site,
                               const ProbeOptions& options);

// -- Reports -----------------------------------------------------------------------------

struct ReportRow {
  std::string label;  // "(a)".."(g)" for ablation grids, otherwise free text
  std::string name;
  std::string scenario;
  int n_pairs = 0;
  std::optional<double> sv_accuracy;
  std::optional<double> eer;
  std::optional<double> threshold;
  std::optional<double> recon_l1;
  std::optional<double> probe_q;
  std::optional<double> probe_k;
  std::optional<double> probe_v;
  nlohmann::json config = nlohmann::json::object();
  std::vector<PairOutcome> pairs;

  bool operator==(const ReportRow&) const = default;
};

struct Report {
  nlohmann::json config = nlohmann::json::object();  // resolved run configuration
  std::vector<ReportRow> rows;

  nlohmann::json to_json() const;
  static Report from_json(const nlohmann::json& j);
  /// Aligned text table, one line per row.
  std::string to_text() const;

  bool operator==(const Report&) const = default;
};

/// Writes report.json and report.txt into `dir`.
void write_report(const std::filesystem::path& dir, const Report& report);
Report read_report(const std::filesystem::path& json_path);

}  // namespace s2vc
