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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "s2vc/features.hpp"
#include "s2vc/model.hpp"
#include "s2vc/optim.hpp"

namespace s2vc {

struct TrainConfig {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
  int batch_size = 8;
  int max_steps = 1000;
  std::uint64_t seed = 0;
  double clip_grad_norm = 1.0;
  int checkpoint_every = 0;  // 0: initial and final checkpoints only
  int max_frames = 512;      // random crop length
  int jobs = 1;              // feature decoding threads; 1 is fully synchronous

  ModelConfig model;
  dsp::MelConfig mel;

  std::filesystem::path manifest;
  std::filesystem::path output_dir = "run";
  std::optional<std::filesystem::path> resume;

  void validate() const;
  AdamWOptions optimizer_options() const;

  /// Hyperparameters only; paths are runtime inputs and stay out of the snapshot.
  nlohmann::json to_json() const;
  /// Reads {"seed", "jobs", "model", "dsp", "train"} sections; missing keys keep defaults.
  static TrainConfig from_json(const nlohmann::json& j);
};

/// One self-reconstruction example: content features, speaker features and
/// ground-truth log-mel of the same utterance. Source and mel share a time axis.
struct TrainingExample {
  std::string utterance_id;
  std::string speaker_id;
  MatrixXf source;  // T x source_dim, at the mel frame rate
  MatrixXf target;  // Tt x target_dim
  double target_fps = 100.0;
  MatrixXf mel;     // T x n_mels
};

/// Loads every entry; throws LoadError(Io) listing all missing files before reading any.
std::vector<TrainingExample> load_training_set(std::span<const ManifestEntry> entries,
                                               const ModelConfig& model, const dsp::MelConfig& mel,
                                               int jobs = 1);

struct TrainState {
  std::int64_t step = 0;
  AdamWState<float> optimizer;
  std::mt19937_64 rng;
  std::vector<int> order;  // current epoch permutation
  std::size_t cursor = 0;
  double running_loss = 0.0;  // exponential moving average, 0.98

  TrainState() = default;
  TrainState(const Model& model, const TrainConfig& cfg);

  /// Optimizer moments go to "optim.m.*" / "optim.v.*" blobs, the rest to the header.
  void save(CheckpointData& data, const Model& model) const;
  void load(const CheckpointData& data, const Model& model);
};

/// Mean absolute error over all entries.
Tensor reconstruction_loss(const Tensor& pred, const Tensor& target_logmel);

/// Next batch of example indices (epoch permutations, seeded from the state's RNG).
std::vector<int> next_batch(TrainState& state, std::size_t n_examples, int batch_size);

/// One optimisation step: per-utterance forward/backward accumulated and averaged
/// over the batch, global-norm clip, AdamW. Returns the mean batch loss.
double train_step(Model& model, std::span<const TrainingExample* const> batch, TrainState& state,
                  const TrainConfig& cfg);

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::vector<double> losses;  // losses of the steps run by this call
};

/// Writes <output_dir>/step_<N>.ckpt snapshots, final.ckpt and train_log.jsonl.
/// `config_snapshot` is embedded verbatim in every checkpoint (defaults to cfg.to_json()).
TrainResult run_training(const TrainConfig& cfg,
                         const nlohmann::json& config_snapshot = nlohmann::json());

/// Training checkpoint of model, optimizer and loop state.
CheckpointData training_checkpoint(Model& model, const TrainState& state, const TrainConfig& cfg,
                                   const nlohmann::json& config_snapshot);

// -- Ablations ---------------------------------------------------------------------

struct AblationRun {
  std::string label;  // "(a)" .. "(g)"
  std::string name;   // e.g. "no-bottleneck"
  TrainConfig config;
};

/// The seven comparison configurations, in table order.
std::vector<AblationRun> ablation_suite(const TrainConfig& base);

/// Applies a named ablation ("proposed", "baseline", "no-sap", "no-bottleneck",
/// "no-instance-norm", "no-bottleneck-no-instance-norm", "no-cross-attention").
void apply_ablation(ModelConfig& model, const std::string& name);
std::vector<std::string> ablation_names();

}  // namespace s2vc
