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

#include "s2vc/training.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <future>
#include <numeric>
#include <sstream>

namespace s2vc {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// TrainConfig

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (max_steps < 0) throw ConfigError("train: max_steps must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("train: checkpoint_every must be >= 0");
  if (max_frames < 1) throw ConfigError("train: max_frames must be >= 1");
  if (!(clip_grad_norm > 0.0)) throw ConfigError("train: clip_grad_norm must be > 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw ConfigError("train: betas must lie in [0, 1)");
  }
  if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
  if (jobs < 1) throw ConfigError("train: jobs must be >= 1");
  model.validate();
  mel.validate();
}

AdamWOptions TrainConfig::optimizer_options() const {
  AdamWOptions o;
  o.learning_rate = learning_rate;
  o.beta1 = beta1;
  o.beta2 = beta2;
  o.epsilon = epsilon;
  o.weight_decay = weight_decay;
  return o;
}

nlohmann::json TrainConfig::to_json() const {
  return {
      {"seed", seed},
      {"jobs", jobs},
      {"model", model.to_json()},
      {"dsp", mel.to_json()},
      {"train",
       {{"learning_rate", learning_rate},
        {"beta1", beta1},
        {"beta2", beta2},
        {"epsilon", epsilon},
        {"weight_decay", weight_decay},
        {"batch_size", batch_size},
        {"max_steps", max_steps},
        {"clip_grad_norm", clip_grad_norm},
        {"checkpoint_every", checkpoint_every},
        {"max_frames", max_frames}}},
  };
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.jobs = j.value("jobs", c.jobs);
    if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
    if (j.contains("dsp")) c.mel = dsp::MelConfig::from_json(j.at("dsp"));
    if (j.contains("train")) {
      const auto& t = j.at("train");
      c.learning_rate = t.value("learning_rate", c.learning_rate);
      c.beta1 = t.value("beta1", c.beta1);
      c.beta2 = t.value("beta2", c.beta2);
      c.epsilon = t.value("epsilon", c.epsilon);
      c.weight_decay = t.value("weight_decay", c.weight_decay);
      c.batch_size = t.value("batch_size", c.batch_size);
      c.max_steps = t.value("max_steps", c.max_steps);
      c.clip_grad_norm = t.value("clip_grad_norm", c.clip_grad_norm);
      c.checkpoint_every = t.value("checkpoint_every", c.checkpoint_every);
      c.max_frames = t.value("max_frames", c.max_frames);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Dataset

namespace {

double mel_fps(const dsp::MelConfig& mel) {
  return static_cast<double>(mel.sample_rate) / static_cast<double>(mel.hop_length);
}

void collect_missing(const ManifestEntry& e, const FeatureKind& kind, std::vector<std::string>& missing) {
  const auto it = e.features.find(kind.name());
  if (it != e.features.end()) {
    if (!fs::exists(it->second)) missing.push_back(it->second.string());
    return;
  }
  if (kind.id() == FeatureKind::Id::Mel) {
    if (e.wav.empty() || !fs::exists(e.wav)) {
      missing.push_back(e.wav.empty() ? e.utterance_id + " (no wav)" : e.wav.string());
    }
    return;
  }
  missing.push_back(e.utterance_id + " (" + kind.name() + " features not listed)");
}

TrainingExample load_example(const ManifestEntry& e, const ModelConfig& model, const dsp::MelConfig& mel) {
  const double fps = mel_fps(mel);
  FeatureSequence mel_seq = load_entry_features(e, FeatureKind(FeatureKind::Id::Mel), mel);
  if (mel_seq.dim() != mel.n_mels) {
    throw DimensionError(e.utterance_id + ": mel features have " + std::to_string(mel_seq.dim()) +
                         " channels, expected " + std::to_string(mel.n_mels));
  }
  FeatureSequence src = load_entry_features(e, model.source_kind, mel);
  FeatureSequence tgt = load_entry_features(e, model.target_kind, mel);
  if (src.dim() != model.source_dim) {
    throw DimensionError(e.utterance_id + ": source features have " + std::to_string(src.dim()) +
                         " channels, model expects " + std::to_string(model.source_dim));
  }
  if (tgt.dim() != model.target_dim) {
    throw DimensionError(e.utterance_id + ": target features have " + std::to_string(tgt.dim()) +
                         " channels, model expects " + std::to_string(model.target_dim));
  }
  src = align_frame_rate(src, fps);
  const Index t = std::min(src.length(), mel_seq.length());
  if (t == 0) throw ContractError(e.utterance_id + ": no frames after alignment");
  TrainingExample ex;
  ex.utterance_id = e.utterance_id;
  ex.speaker_id = e.speaker_id;
  ex.source = src.frames.topRows(t);
  ex.mel = mel_seq.frames.topRows(t);
  ex.target = tgt.frames;
  ex.target_fps = tgt.fps;
  return ex;
}

}  // namespace

std::vector<TrainingExample> load_training_set(std::span<const ManifestEntry> entries,
                                               const ModelConfig& model, const dsp::MelConfig& mel,
                                               int jobs) {
  std::vector<std::string> missing;
  for (const auto& e : entries) {
    collect_missing(e, FeatureKind(FeatureKind::Id::Mel), missing);
    collect_missing(e, model.source_kind, missing);
    if (!(model.target_kind == model.source_kind)) collect_missing(e, model.target_kind, missing);
  }
  if (!missing.empty()) {
    std::sort(missing.begin(), missing.end());
    missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
    std::string msg = "missing training inputs (" + std::to_string(missing.size()) + "):";
    for (const auto& m : missing) msg += "\n  " + m;
    throw LoadError(LoadError::Code::Io, msg);
  }

  std::vector<TrainingExample> out(entries.size());
  if (jobs <= 1) {
    for (std::size_t i = 0; i < entries.size(); ++i) out[i] = load_example(entries[i], model, mel);
    return out;
  }
  // Strided workers; results land by index so the order never depends on scheduling.
  std::vector<std::future<void>> workers;
  for (int w = 0; w < jobs; ++w) {
    workers.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = static_cast<std::size_t>(w); i < entries.size(); i += static_cast<std::size_t>(jobs)) {
        out[i] = load_example(entries[i], model, mel);
      }
    }));
  }
  for (auto& f : workers) f.get();
  return out;
}

// ---------------------------------------------------------------------------
// TrainState

TrainState::TrainState(const Model& model, const TrainConfig& cfg)
    : optimizer(model.parameters(), cfg.optimizer_options()), rng(cfg.seed ^ 0x5eedf00dULL) {}

void TrainState::save(CheckpointData& data, const Model& model) const {
  const auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    data.blobs.push_back({"optim.m." + params[i].name, optimizer.first_moment[i]});
    data.blobs.push_back({"optim.v." + params[i].name, optimizer.second_moment[i]});
  }
  std::ostringstream rng_state;
  rng_state << rng;
  data.header["train_state"] = {{"step", step},
                                {"optimizer_step", optimizer.step},
                                {"rng", rng_state.str()},
                                {"order", order},
                                {"cursor", cursor},
                                {"running_loss", running_loss}};
}

void TrainState::load(const CheckpointData& data, const Model& model) {
  if (!data.header.contains("train_state")) {
    throw LoadError(LoadError::Code::Malformed, "checkpoint has no training state; cannot resume");
  }
  const auto& s = data.header.at("train_state");
  const auto params = model.parameters();
  optimizer.first_moment.clear();
  optimizer.second_moment.clear();
  for (const auto& p : params) {
    const CheckpointBlob* m = data.find("optim.m." + p.name);
    const CheckpointBlob* v = data.find("optim.v." + p.name);
    if (m == nullptr || v == nullptr) {
      throw LoadError(LoadError::Code::Malformed, "checkpoint: missing optimizer state for " + p.name);
    }
    if (m->data.rows() != p.tensor.rows() || m->data.cols() != p.tensor.cols() ||
        v->data.rows() != p.tensor.rows() || v->data.cols() != p.tensor.cols()) {
      throw LoadError(LoadError::Code::DimensionMismatch, "checkpoint: optimizer state shape for " + p.name);
    }
    optimizer.first_moment.push_back(m->data);
    optimizer.second_moment.push_back(v->data);
  }
  step = s.at("step").get<std::int64_t>();
  optimizer.step = s.at("optimizer_step").get<std::int64_t>();
  std::istringstream rng_state(s.at("rng").get<std::string>());
  rng_state >> rng;
  if (!rng_state) throw LoadError(LoadError::Code::Malformed, "checkpoint: bad RNG state");
  order = s.at("order").get<std::vector<int>>();
  cursor = s.at("cursor").get<std::size_t>();
  running_loss = s.at("running_loss").get<double>();
}

// ---------------------------------------------------------------------------
// Steps

Tensor reconstruction_loss(const Tensor& pred, const Tensor& target_logmel) {
  if (pred.rows() != target_logmel.rows() || pred.cols() != target_logmel.cols()) {
    throw DimensionError("reconstruction_loss: prediction " + pred.shape_string() + " vs target " +
                         target_logmel.shape_string());
  }
  return l1_loss(pred, target_logmel);
}

std::vector<int> next_batch(TrainState& state, std::size_t n_examples, int batch_size) {
  if (n_examples == 0) throw ContractError("next_batch: empty training set");
  std::vector<int> batch;
  batch.reserve(static_cast<std::size_t>(batch_size));
  while (batch.size() < static_cast<std::size_t>(batch_size)) {
    if (state.cursor >= state.order.size() || state.order.size() != n_examples) {
      state.order.resize(n_examples);
      std::iota(state.order.begin(), state.order.end(), 0);
      std::shuffle(state.order.begin(), state.order.end(), state.rng);
      state.cursor = 0;
    }
    batch.push_back(state.order[state.cursor++]);
  }
  return batch;
}

namespace {

struct Crop {
  MatrixXf source, target, mel;
};

Crop crop_example(const TrainingExample& ex, int max_frames, double mel_rate, std::mt19937_64& rng) {
  const Index t = ex.source.rows();
  const Index len = std::min<Index>(t, max_frames);
  Index start = 0;
  if (t > len) start = std::uniform_int_distribution<Index>(0, t - len)(rng);
  Crop c;
  c.source = ex.source.middleRows(start, len);
  c.mel = ex.mel.middleRows(start, len);
  // Same time span of the speaker-path features, at their own frame rate.
  const double ratio = ex.target_fps / mel_rate;
  const Index tt = ex.target.rows();
  Index t0 = std::min<Index>(static_cast<Index>(std::floor(static_cast<double>(start) * ratio)), tt - 1);
  Index tlen = static_cast<Index>(std::ceil(static_cast<double>(len) * ratio));
  tlen = std::clamp<Index>(tlen, 1, tt - t0);
  if (t == len) {
    t0 = 0;
    tlen = tt;
  }
  c.target = ex.target.middleRows(t0, tlen);
  return c;
}

}  // namespace

double train_step(Model& model, std::span<const TrainingExample* const> batch, TrainState& state,
                  const TrainConfig& cfg) {
  if (batch.empty()) throw ContractError("train_step: empty batch");
  auto params = model.parameters();
  zero_grad(params);
  const double rate = mel_fps(cfg.mel);
  const float inv_batch = 1.0f / static_cast<float>(batch.size());
  double total = 0.0;
  for (const TrainingExample* ex : batch) {
    const Crop crop = crop_example(*ex, cfg.max_frames, rate, state.rng);
    nn::RunContext ctx{nn::Mode::Train, cfg.model.dropout, &state.rng};
    Tape<float> tape;
    auto scope = tape.record();
    double value = 0.0;
    try {
      const ForwardResult<float> out = model.forward(Tensor(crop.source), Tensor(crop.target), ctx);
      const Tensor loss = reconstruction_loss(out.mel, Tensor(crop.mel));
      value = static_cast<double>(loss.item());
      tape.backward(scale(loss, inv_batch));
    } catch (const NumericError& e) {
      throw NumericError("non-finite value while training on utterance '" + ex->utterance_id +
                         "' at step " + std::to_string(state.step + 1) + ": " + e.what());
    }
    total += value;
  }
  const double loss = total / static_cast<double>(batch.size());
  clip_grad_norm(params, cfg.clip_grad_norm);
  adamw_step(params, state.optimizer);
  ++state.step;
  state.running_loss = state.step == 1 ? loss : 0.98 * state.running_loss + 0.02 * loss;
  return loss;
}

// ---------------------------------------------------------------------------
// Loop

CheckpointData training_checkpoint(Model& model, const TrainState& state, const TrainConfig& cfg,
                                   const nlohmann::json& config_snapshot) {
  CheckpointData data = model_to_checkpoint(
      model, cfg.mel, {{"config", config_snapshot.is_null() ? cfg.to_json() : config_snapshot}});
  state.save(data, model);
  return data;
}

namespace {

fs::path step_path(const fs::path& dir, std::int64_t step) {
  char name[32];
  std::snprintf(name, sizeof name, "step_%06lld.ckpt", static_cast<long long>(step));
  return dir / name;
}

}  // namespace

TrainResult run_training(const TrainConfig& cfg, const nlohmann::json& config_snapshot) {
  cfg.validate();
  const auto entries = read_manifest(cfg.manifest);
  if (entries.empty()) throw ConfigError("manifest " + cfg.manifest.string() + " has no entries");

  std::optional<CheckpointData> resume_data;
  if (cfg.resume) resume_data = read_checkpoint_file(*cfg.resume);

  Model model = resume_data ? model_from_checkpoint(*resume_data, cfg.model.source_kind, cfg.model.target_kind)
                            : Model(cfg.model, cfg.seed);
  TrainState state(model, cfg);
  if (resume_data) state.load(*resume_data, model);

  const auto examples = load_training_set(entries, model.config(), cfg.mel, cfg.jobs);

  fs::create_directories(cfg.output_dir);
  const fs::path log_path = cfg.output_dir / "train_log.jsonl";
  std::ofstream log(log_path, resume_data ? std::ios::app : std::ios::trunc);
  if (!log) throw Error("cannot write " + log_path.string());

  TrainResult result;
  auto save = [&](const fs::path& path) { write_checkpoint_file(path, training_checkpoint(model, state, cfg, config_snapshot)); };
  if (!resume_data) save(step_path(cfg.output_dir, 0));

  const auto t0 = std::chrono::steady_clock::now();
  while (state.step < cfg.max_steps) {
    const auto indices = next_batch(state, examples.size(), cfg.batch_size);
    std::vector<const TrainingExample*> batch;
    for (int i : indices) batch.push_back(&examples[static_cast<std::size_t>(i)]);
    const double loss = train_step(model, batch, state, cfg);
    result.losses.push_back(loss);
    const auto wall = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0);
    log << nlohmann::json{{"step", state.step}, {"loss", loss}, {"lr", cfg.learning_rate}, {"wall_ms", wall.count()}}.dump()
        << '\n';
    log.flush();
    if (cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0) save(step_path(cfg.output_dir, state.step));
  }
  if (state.step > 0 && (cfg.checkpoint_every == 0 || state.step % cfg.checkpoint_every != 0)) {
    save(step_path(cfg.output_dir, state.step));
  }
  result.final_checkpoint = cfg.output_dir / "final.ckpt";
  save(result.final_checkpoint);
  return result;
}

// ---------------------------------------------------------------------------
// Ablations

std::vector<std::string> ablation_names() {
  return {"baseline",         "proposed", "no-sap", "no-bottleneck", "no-instance-norm",
          "no-bottleneck-no-instance-norm", "no-cross-attention"};
}

void apply_ablation(ModelConfig& m, const std::string& name) {
  m.use_sap = m.use_bottleneck = m.use_instance_norm = m.use_cross_attention = true;
  if (name == "proposed") return;
  if (name == "baseline") {
    m.use_sap = m.use_bottleneck = m.use_instance_norm = false;
  } else if (name == "no-sap") {
    m.use_sap = false;
  } else if (name == "no-bottleneck") {
    m.use_bottleneck = false;
  } else if (name == "no-instance-norm") {
    m.use_instance_norm = false;
  } else if (name == "no-bottleneck-no-instance-norm") {
    m.use_bottleneck = m.use_instance_norm = false;
  } else if (name == "no-cross-attention") {
    m.use_cross_attention = false;
  } else {
    throw ConfigError("unknown ablation '" + name + "'");
  }
}

std::vector<AblationRun> ablation_suite(const TrainConfig& base) {
  const auto names = ablation_names();
  std::vector<AblationRun> runs;
  for (std::size_t i = 0; i < names.size(); ++i) {
    AblationRun run;
    run.label = std::string("(") + static_cast<char>('a' + i) + ")";
    run.name = names[i];
    run.config = base;
    apply_ablation(run.config.model, names[i]);
    run.config.output_dir = base.output_dir / names[i];
    runs.push_back(std::move(run));
  }
  return runs;
}

}  // namespace s2vc
