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

#include "s2vc/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace s2vc {

namespace fs = std::filesystem;

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_index = n;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (i < failed_index) {
          failed_index = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> threads;
  const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
  for (std::size_t t = 0; t < count; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Pairs

std::string to_string(Scenario s) { return s == Scenario::S2S ? "s2s" : "u2u"; }

Scenario scenario_from_string(const std::string& s) {
  if (s == "s2s") return Scenario::S2S;
  if (s == "u2u") return Scenario::U2U;
  throw ConfigError("unknown scenario '" + s + "' (expected s2s or u2u)");
}

namespace {

std::map<std::string, std::vector<std::size_t>> group_by_speaker(std::span<const ManifestEntry> entries) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < entries.size(); ++i) groups[entries[i].speaker_id].push_back(i);
  return groups;
}

}  // namespace

std::vector<TestPair> sample_pairs(std::span<const ManifestEntry> entries, int n, Scenario scenario,
                                   std::uint64_t seed) {
  if (n < 1) throw ContractError("sample_pairs: n must be >= 1");
  constexpr std::size_t kNeeded = kTargetsPerPair + 1;
  const auto groups = group_by_speaker(entries);
  std::vector<const std::vector<std::size_t>*> eligible;
  std::vector<std::string> eligible_names;
  std::string deficits;
  for (const auto& [speaker, idx] : groups) {
    if (idx.size() >= kNeeded) {
      eligible.push_back(&idx);
      eligible_names.push_back(speaker);
    } else {
      deficits += " " + speaker + "(" + std::to_string(idx.size()) + ")";
    }
  }
  if (eligible.size() < 2) {
    throw ContractError("sample_pairs: need at least 2 speakers with >= " + std::to_string(kNeeded) +
                        " utterances, found " + std::to_string(eligible.size()) +
                        (deficits.empty() ? std::string() : "; short speakers:" + deficits));
  }

  std::mt19937_64 rng(seed);
  const std::size_t m = eligible.size();
  std::vector<TestPair> pairs;
  pairs.reserve(static_cast<std::size_t>(n));
  for (int p = 0; p < n; ++p) {
    const std::size_t s = std::uniform_int_distribution<std::size_t>(0, m - 1)(rng);
    std::size_t t = std::uniform_int_distribution<std::size_t>(0, m - 2)(rng);
    if (t >= s) ++t;
    const auto& src = *eligible[s];
    std::vector<std::size_t> tgt = *eligible[t];
    TestPair pair;
    char id[32];
    std::snprintf(id, sizeof id, "pair_%04d", p);
    pair.id = id;
    pair.scenario = scenario;
    pair.source = entries[src[std::uniform_int_distribution<std::size_t>(0, src.size() - 1)(rng)]];
    // Partial Fisher-Yates: distinct target utterances within the pair.
    for (std::size_t k = 0; k < kNeeded; ++k) {
      const std::size_t j = std::uniform_int_distribution<std::size_t>(k, tgt.size() - 1)(rng);
      std::swap(tgt[k], tgt[j]);
    }
    for (std::size_t k = 0; k < kTargetsPerPair; ++k) pair.targets.push_back(entries[tgt[k]]);
    pair.reference = entries[tgt[kTargetsPerPair]];
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// Conversion

FeatureSequence load_source_features(const ManifestEntry& entry, const ModelConfig& config,
                                     const dsp::MelConfig& mel) {
  const double fps = static_cast<double>(mel.sample_rate) / static_cast<double>(mel.hop_length);
  return align_frame_rate(load_entry_features(entry, config.source_kind, mel), fps);
}

Conversion convert_features(Model& model, const FeatureSequence& source,
                            std::span<const FeatureSequence> targets, const ConversionOptions& options) {
  const nn::RunContext ctx;
  ForwardResult<float> out = model.forward(source, targets, ctx);
  Conversion c;
  c.mel = out.mel.value();
  c.trace = std::move(out.trace);
  if (options.synthesize) {
    if (c.mel.cols() != options.mel.n_mels) {
      throw DimensionError("convert: model emits " + std::to_string(c.mel.cols()) +
                           " mel channels, vocoder expects " + std::to_string(options.mel.n_mels));
    }
    dsp::Spectrogram spec{c.mel.cast<double>(), options.mel, dsp::SpectrogramKind::LogMel};
    dsp::GriffinLimOptions gl;
    gl.iterations = options.griffin_lim_iterations;
    gl.seed = options.seed;
    c.audio = dsp::griffin_lim(spec, gl);
    const std::size_t n = static_cast<std::size_t>(c.mel.rows()) * static_cast<std::size_t>(options.mel.hop_length);
    if (c.audio.samples.size() > n) c.audio.samples.resize(n);
  }
  return c;
}

Conversion convert(Model& model, const TestPair& pair, const ConversionOptions& options) {
  const ModelConfig& cfg = model.config();
  const FeatureSequence source = load_source_features(pair.source, cfg, options.mel);
  std::vector<FeatureSequence> targets;
  for (const auto& t : pair.targets) targets.push_back(load_entry_features(t, cfg.target_kind, options.mel));
  return convert_features(model, source, targets, options);
}

// ---------------------------------------------------------------------------
// Speaker verification

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw DimensionError("cosine_similarity: size mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw NumericError("cosine_similarity: zero-norm embedding");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

EerResult eer_threshold(std::span<const double> genuine, std::span<const double> impostor) {
  if (genuine.empty() || impostor.empty()) {
    throw ContractError("eer_threshold: genuine and impostor score lists must be non-empty");
  }
  std::vector<double> g(genuine.begin(), genuine.end());
  std::vector<double> im(impostor.begin(), impostor.end());
  std::sort(g.begin(), g.end());
  std::sort(im.begin(), im.end());
  std::vector<double> all(g);
  all.insert(all.end(), im.begin(), im.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());

  std::vector<double> candidates;
  candidates.reserve(all.size() + 1);
  candidates.push_back(all.front() - 1.0);
  for (std::size_t i = 0; i + 1 < all.size(); ++i) candidates.push_back(0.5 * (all[i] + all[i + 1]));
  candidates.push_back(all.back() + 1.0);

  const double ng = static_cast<double>(g.size());
  const double ni = static_cast<double>(im.size());
  auto far = [&](double t) {
    return static_cast<double>(im.end() - std::upper_bound(im.begin(), im.end(), t)) / ni;
  };
  auto frr = [&](double t) {
    return static_cast<double>(std::lower_bound(g.begin(), g.end(), t) - g.begin()) / ng;
  };

  double prev_t = candidates.front();
  double prev_far = far(prev_t);
  double prev_frr = frr(prev_t);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const double t = candidates[i];
    const double fa = far(t);
    const double fr = frr(t);
    const double d = fa - fr;
    if (d <= 0.0) {
      const double prev_d = prev_far - prev_frr;
      if (d == 0.0) return {t, fa};
      const double w = prev_d / (prev_d - d);
      return {prev_t + w * (t - prev_t), prev_far + w * (fa - prev_far)};
    }
    prev_t = t;
    prev_far = fa;
    prev_frr = fr;
  }
  // Unreachable: the last candidate has FAR 0 and FRR 1.
  return {candidates.back(), 0.0};
}

double sv_accuracy(std::span<const double> scores, double threshold) {
  if (scores.empty()) return 0.0;
  const auto accepted = std::count_if(scores.begin(), scores.end(), [&](double s) { return s > threshold; });
  return 100.0 * static_cast<double>(accepted) / static_cast<double>(scores.size());
}

SpeakerEmbedder SpeakerEmbedder::train(std::span<const MatrixXf> logmels, std::span<const int> labels,
                                       int n_speakers, const EmbedderOptions& options) {
  if (logmels.empty() || logmels.size() != labels.size()) {
    throw ContractError("SpeakerEmbedder::train: need one label per utterance");
  }
  if (n_speakers < 2) throw ContractError("SpeakerEmbedder::train: need at least 2 speakers");
  const Index n_mels = logmels.front().cols();

  SpeakerEmbedder e;
  e.logit_scale_ = options.logit_scale;
  // Per-utterance level removal, then global per-channel standardisation.
  Eigen::ArrayXd sum = Eigen::ArrayXd::Zero(n_mels), sq = Eigen::ArrayXd::Zero(n_mels);
  double frames = 0.0;
  for (const auto& m : logmels) {
    if (m.cols() != n_mels || m.rows() == 0) throw DimensionError("SpeakerEmbedder::train: inconsistent inputs");
    const Eigen::ArrayXXd x = (m.cast<double>().array() - m.cast<double>().mean());
    sum += x.colwise().sum().transpose();
    sq += x.square().colwise().sum().transpose();
    frames += static_cast<double>(m.rows());
  }
  const Eigen::ArrayXd mu = sum / frames;
  const Eigen::ArrayXd var = (sq / frames - mu.square()).max(1e-8);
  e.channel_mean_ = mu.transpose().cast<float>().matrix();
  e.channel_scale_ = var.rsqrt().transpose().cast<float>().matrix();

  std::mt19937_64 rng(options.seed);
  e.first_ = nn::Linear<float>(n_mels, options.hidden, rng);
  e.second_ = nn::Linear<float>(options.hidden, options.hidden, rng);
  e.projection_ = nn::Linear<float>(options.hidden, options.embedding_dim, rng);
  e.head_ = nn::Linear<float>(options.embedding_dim, n_speakers, rng, false);

  ParameterList<float> params;
  e.first_.collect(params, "first");
  e.second_.collect(params, "second");
  e.projection_.collect(params, "projection");
  e.head_.collect(params, "head");
  AdamWOptions opt;
  opt.learning_rate = options.learning_rate;
  AdamWState<float> state(params, opt);

  std::vector<Tensor> inputs;
  inputs.reserve(logmels.size());
  for (const auto& m : logmels) inputs.push_back(e.normalise(m));

  const float inv_batch = 1.0f / static_cast<float>(options.batch_size);
  std::uniform_int_distribution<std::size_t> pick(0, logmels.size() - 1);
  for (int step = 0; step < options.steps; ++step) {
    zero_grad(params);
    for (int b = 0; b < options.batch_size; ++b) {
      const std::size_t i = pick(rng);
      Tape<float> tape;
      auto scope = tape.record();
      Tensor h = relu(e.second_(relu(e.first_(inputs[i]))));
      Tensor emb = e.projection_(mean_rows(h));
      emb = scale(normalize_rows(emb, 1e-5f), 1.0f / std::sqrt(static_cast<float>(options.embedding_dim)));
      const Tensor logits = scale(e.head_(emb), static_cast<float>(options.logit_scale));
      const int label = labels[i];
      const Tensor loss = softmax_cross_entropy(logits, std::span<const int>(&label, 1));
      tape.backward(scale(loss, inv_batch));
    }
    clip_grad_norm(params, 5.0);
    adamw_step(params, state);
  }
  return e;
}

Tensor SpeakerEmbedder::normalise(const MatrixXf& logmel) const {
  if (logmel.cols() != channel_mean_.cols()) {
    throw DimensionError("SpeakerEmbedder: expected " + std::to_string(channel_mean_.cols()) + " mel channels");
  }
  if (logmel.rows() == 0) throw ContractError("SpeakerEmbedder: empty spectrogram");
  MatrixXf x = logmel.array() - logmel.mean();
  x.rowwise() -= channel_mean_;
  x.array().rowwise() *= channel_scale_.array();
  return Tensor(std::move(x));
}

Tensor SpeakerEmbedder::forward_embedding(const MatrixXf& logmel) const {
  const Tensor h = relu(second_(relu(first_(normalise(logmel)))));
  return normalize_rows(projection_(mean_rows(h)), 1e-5f);
}

Eigen::VectorXd SpeakerEmbedder::embed(const MatrixXf& logmel) const {
  Eigen::VectorXd v = forward_embedding(logmel).value().row(0).transpose().cast<double>();
  const double norm = v.norm();
  if (!(norm > 0.0)) throw NumericError("SpeakerEmbedder: zero-norm embedding");
  return v / norm;
}

Eigen::VectorXd SpeakerEmbedder::embed(const dsp::AudioBuffer& audio, const dsp::MelConfig& mel) const {
  const dsp::AudioBuffer a = audio.sample_rate == mel.sample_rate ? audio : dsp::resample(audio, mel.sample_rate);
  return embed(MatrixXf(dsp::log_mel(a, mel).frames.cast<float>()));
}

SvCalibration calibrate_sv(std::span<const Eigen::VectorXd> embeddings, std::span<const std::string> speakers,
                           std::uint64_t seed) {
  if (embeddings.size() != speakers.size()) throw ContractError("calibrate_sv: one speaker per embedding");
  std::vector<double> genuine;
  std::vector<std::pair<std::size_t, std::size_t>> cross;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    for (std::size_t j = i + 1; j < embeddings.size(); ++j) {
      if (speakers[i] == speakers[j]) {
        genuine.push_back(cosine_similarity(embeddings[i], embeddings[j]));
      } else {
        cross.emplace_back(i, j);
      }
    }
  }
  if (genuine.empty() || cross.empty()) {
    throw ContractError("calibrate_sv: need same-speaker and cross-speaker utterance pairs");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(cross.begin(), cross.end(), rng);
  cross.resize(std::min(cross.size(), genuine.size()));
  std::vector<double> impostor;
  for (const auto& [i, j] : cross) impostor.push_back(cosine_similarity(embeddings[i], embeddings[j]));
  const EerResult eer = eer_threshold(genuine, impostor);
  return {eer.threshold, eer.eer, genuine.size(), impostor.size()};
}

SvSystem build_sv_system(std::span<const ManifestEntry> entries, const dsp::MelConfig& mel,
                         const EmbedderOptions& options, int jobs) {
  SvSystem sv;
  sv.speakers = manifest_speakers(entries);
  std::vector<MatrixXf> logmels(entries.size());
  std::vector<int> labels(entries.size());
  std::vector<std::string> speakers(entries.size());
  parallel_for(entries.size(), jobs, [&](std::size_t i) {
    logmels[i] = load_entry_features(entries[i], FeatureKind(FeatureKind::Id::Mel), mel).frames;
  });
  for (std::size_t i = 0; i < entries.size(); ++i) {
    labels[i] = static_cast<int>(std::lower_bound(sv.speakers.begin(), sv.speakers.end(), entries[i].speaker_id) -
                                 sv.speakers.begin());
    speakers[i] = entries[i].speaker_id;
  }
  sv.embedder = SpeakerEmbedder::train(logmels, labels, static_cast<int>(sv.speakers.size()), options);
  std::vector<Eigen::VectorXd> emb(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) emb[i] = sv.embedder.embed(logmels[i]);
  sv.calibration = calibrate_sv(emb, speakers, options.seed + 1);
  return sv;
}

// ---------------------------------------------------------------------------
// Evaluation

double identity_reconstruction_l1(Model& model, std::span<const ManifestEntry> entries,
                                  const dsp::MelConfig& mel, int jobs) {
  if (entries.empty()) return 0.0;
  std::vector<double> l1(entries.size());
  parallel_for(entries.size(), jobs, [&](std::size_t i) {
    const ModelConfig& cfg = model.config();
    const FeatureSequence src = load_source_features(entries[i], cfg, mel);
    const FeatureSequence tgt = load_entry_features(entries[i], cfg.target_kind, mel);
    const FeatureSequence ref = load_entry_features(entries[i], FeatureKind(FeatureKind::Id::Mel), mel);
    ConversionOptions opts;
    opts.mel = mel;
    opts.synthesize = false;
    const Conversion c = convert_features(model, src, std::span<const FeatureSequence>(&tgt, 1), opts);
    const Index t = std::min(c.mel.rows(), ref.frames.rows());
    l1[i] = (c.mel.topRows(t) - ref.frames.topRows(t)).cwiseAbs().cast<double>().mean();
  });
  return std::accumulate(l1.begin(), l1.end(), 0.0) / static_cast<double>(l1.size());
}

EvalResult evaluate(Model& model, std::span<const TestPair> pairs, const SvSystem& sv, const EvalOptions& options) {
  EvalResult result;
  result.threshold = sv.calibration.threshold;
  result.eer = sv.calibration.eer;
  result.pairs.resize(pairs.size());
  if (options.audio_dir) fs::create_directories(*options.audio_dir);
  parallel_for(pairs.size(), options.jobs, [&](std::size_t i) {
    const TestPair& pair = pairs[i];
    ConversionOptions co;
    co.mel = options.mel;
    co.griffin_lim_iterations = options.griffin_lim_iterations;
    co.seed = options.seed + 1000003ULL * (i + 1);
    const Conversion c = convert(model, pair, co);
    if (options.audio_dir) dsp::write_wav(*options.audio_dir / (pair.id + ".wav"), c.audio, dsp::WavEncoding::Pcm16);
    const MatrixXf ref = load_entry_features(pair.reference, FeatureKind(FeatureKind::Id::Mel), options.mel).frames;
    PairOutcome& o = result.pairs[i];
    o.pair_id = pair.id;
    o.source_speaker = pair.source_speaker();
    o.target_speaker = pair.target_speaker();
    o.score = cosine_similarity(sv.embedder.embed(c.audio, options.mel), sv.embedder.embed(ref));
    o.accepted = o.score > result.threshold;
  });
  std::vector<double> scores;
  for (const auto& o : result.pairs) scores.push_back(o.score);
  result.sv_accuracy = sv_accuracy(scores, result.threshold);

  std::vector<ManifestEntry> sources;
  std::set<std::string> seen;
  for (const auto& p : pairs) {
    if (seen.insert(p.source.utterance_id).second) sources.push_back(p.source);
  }
  result.recon_l1 = identity_reconstruction_l1(model, sources, options.mel, options.jobs);
  return result;
}

// ---------------------------------------------------------------------------
// Probing

std::string to_string(ProbeSite s) {
  switch (s) {
    case ProbeSite::Q: return "Q";
    case ProbeSite::K: return "K";
    case ProbeSite::V: return "V";
  }
  return "?";
}

ProbeSite probe_site_from_string(const std::string& s) {
  if (s == "Q" || s == "q") return ProbeSite::Q;
  if (s == "K" || s == "k") return ProbeSite::K;
  if (s == "V" || s == "v") return ProbeSite::V;
  throw ConfigError("unknown probe site '" + s + "' (expected Q, K or V)");
}

std::array<ProbeData, 3> collect_probe_data(Model& model, std::span<const ManifestEntry> entries,
                                            const ProbeOptions& options) {
  const auto speakers = manifest_speakers(entries);
  if (speakers.size() < 2) throw ContractError("probe: need at least 2 speakers, found " + std::to_string(speakers.size()));
  if (!model.config().use_cross_attention) {
    throw ContractError("probe: model has no cross attention, so there is no Q/K/V to probe");
  }
  auto speaker_index = [&](const std::string& s) {
    return static_cast<int>(std::lower_bound(speakers.begin(), speakers.end(), s) - speakers.begin());
  };

  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> partner(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < entries.size(); ++j) {
      if (entries[j].speaker_id != entries[i].speaker_id) others.push_back(j);
    }
    partner[i] = others[std::uniform_int_distribution<std::size_t>(0, others.size() - 1)(rng)];
  }

  std::vector<AttentionTrace<float>> traces(entries.size());
  parallel_for(entries.size(), options.jobs, [&](std::size_t i) {
    const ModelConfig& cfg = model.config();
    const FeatureSequence src = load_source_features(entries[i], cfg, options.mel);
    const FeatureSequence tgt = load_entry_features(entries[partner[i]], cfg.target_kind, options.mel);
    ConversionOptions co;
    co.mel = options.mel;
    co.synthesize = false;
    traces[i] = convert_features(model, src, std::span<const FeatureSequence>(&tgt, 1), co).trace;
  });

  std::array<ProbeData, 3> data;
  for (int s = 0; s < 3; ++s) {
    ProbeData& d = data[static_cast<std::size_t>(s)];
    d.n_classes = static_cast<int>(speakers.size());
    Index rows = 0, cols = 0;
    for (const auto& t : traces) {
      const MatrixXf& m = s == 0 ? t.query : (s == 1 ? t.key : t.value);
      rows += m.rows();
      cols = m.cols();
    }
    d.features.resize(rows, cols);
    Index r = 0;
    for (std::size_t i = 0; i < traces.size(); ++i) {
      const MatrixXf& m = s == 0 ? traces[i].query : (s == 1 ? traces[i].key : traces[i].value);
      d.features.middleRows(r, m.rows()) = m;
      r += m.rows();
      const int label = speaker_index(s == 0 ? entries[i].speaker_id : entries[partner[i]].speaker_id);
      d.labels.insert(d.labels.end(), static_cast<std::size_t>(m.rows()), label);
      d.groups.insert(d.groups.end(), static_cast<std::size_t>(m.rows()), static_cast<int>(i));
    }
  }
  return data;
}

namespace {

double accuracy(const MatrixXf& logits, std::span<const int> labels) {
  if (labels.empty()) return 0.0;
  std::size_t correct = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    if (static_cast<int>(arg) == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace

ProbeResult train_probe(const ProbeData& data, const ProbeOptions& options) {
  if (data.features.rows() != static_cast<Index>(data.labels.size()) || data.labels.size() != data.groups.size()) {
    throw ContractError("train_probe: features, labels and groups disagree in length");
  }
  if (data.n_classes < 2) throw ContractError("train_probe: need at least 2 classes");
  // Stratified over the label of each group's first frame, so every speaker appears in dev.
  std::map<int, int> group_label;
  for (std::size_t i = 0; i < data.groups.size(); ++i) group_label.emplace(data.groups[i], data.labels[i]);
  if (group_label.size() < 2) throw ContractError("train_probe: need at least 2 groups for a split");
  std::map<int, std::vector<int>> by_label;
  for (const auto& [g, l] : group_label) by_label[l].push_back(g);

  std::mt19937_64 rng(options.seed);
  std::set<int> dev_groups;
  for (auto& [label, groups] : by_label) {
    std::shuffle(groups.begin(), groups.end(), rng);
    if (groups.size() < 2) continue;
    const auto n_dev = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(options.dev_fraction * static_cast<double>(groups.size()))), 1,
        groups.size() - 1);
    dev_groups.insert(groups.begin(), groups.begin() + static_cast<std::ptrdiff_t>(n_dev));
  }
  if (dev_groups.empty()) {
    // Every class has a single group: fall back to holding out one group.
    dev_groups.insert(group_label.begin()->first);
  }

  std::vector<Index> train_rows, dev_rows;
  std::vector<int> train_labels, dev_labels;
  for (std::size_t i = 0; i < data.groups.size(); ++i) {
    if (dev_groups.count(data.groups[i])) {
      dev_rows.push_back(static_cast<Index>(i));
      dev_labels.push_back(data.labels[i]);
    } else {
      train_rows.push_back(static_cast<Index>(i));
      train_labels.push_back(data.labels[i]);
    }
  }
  const Index dim = data.features.cols();
  MatrixXf xtr = data.features(train_rows, Eigen::all);
  MatrixXf xdev = data.features(dev_rows, Eigen::all);
  const RowVector<float> mu = xtr.colwise().mean();
  RowVector<float> sd = ((xtr.rowwise() - mu).cwiseAbs2().colwise().mean()).cwiseSqrt();
  for (Index c = 0; c < dim; ++c) sd(c) = sd(c) > 1e-8f ? 1.0f / sd(c) : 1.0f;
  xtr = ((xtr.rowwise() - mu).array().rowwise() * sd.array()).matrix();
  xdev = ((xdev.rowwise() - mu).array().rowwise() * sd.array()).matrix();

  nn::Linear<float> classifier(dim, data.n_classes, rng);
  ParameterList<float> params;
  classifier.collect(params, "probe");
  AdamWOptions opt;
  opt.learning_rate = options.learning_rate;
  opt.weight_decay = 0.0;
  AdamWState<float> state(params, opt);
  const Tensor x(xtr);
  for (int step = 0; step < options.steps; ++step) {
    zero_grad(params);
    Tape<float> tape;
    auto scope = tape.record();
    tape.backward(softmax_cross_entropy(classifier(x), std::span<const int>(train_labels)));
    adamw_step(params, state);
  }

  ProbeResult r;
  r.n_classes = data.n_classes;
  r.train_frames = train_rows.size();
  r.dev_frames = dev_rows.size();
  r.train_accuracy = accuracy(classifier(x).value(), train_labels);
  r.dev_accuracy = accuracy(classifier(Tensor(xdev)).value(), dev_labels);
  return r;
}

ProbeResult probe_speaker_info(Model& model, std::span<const ManifestEntry> entries, ProbeSite site,
                               const ProbeOptions& options) {
  const auto data = collect_probe_data(model, entries, options);
  ProbeResult r = train_probe(data[static_cast<std::size_t>(site)], options);
  r.site = site;
  r.feature_pair = model.config().source_kind.name() + "/" + model.config().target_kind.name();
  return r;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> opt_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

std::string cell(const std::optional<double>& v, const char* fmt) {
  if (!v) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, *v);
  return buf;
}

}  // namespace

nlohmann::json Report::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json pairs_json = nlohmann::json::array();
    for (const auto& p : r.pairs) {
      pairs_json.push_back({{"pair_id", p.pair_id},
                            {"source_speaker", p.source_speaker},
                            {"target_speaker", p.target_speaker},
                            {"score", p.score},
                            {"accepted", p.accepted}});
    }
    rows_json.push_back({{"label", r.label},
                         {"name", r.name},
                         {"scenario", r.scenario},
                         {"n_pairs", r.n_pairs},
                         {"sv_accuracy", opt_json(r.sv_accuracy)},
                         {"eer", opt_json(r.eer)},
                         {"threshold", opt_json(r.threshold)},
                         {"recon_l1", opt_json(r.recon_l1)},
                         {"probe_q", opt_json(r.probe_q)},
                         {"probe_k", opt_json(r.probe_k)},
                         {"probe_v", opt_json(r.probe_v)},
                         {"config", r.config},
                         {"pairs", pairs_json}});
  }
  return {{"format", "s2vc-report"}, {"version", 1}, {"config", config}, {"rows", rows_json}};
}

Report Report::from_json(const nlohmann::json& j) {
  Report rep;
  try {
    if (j.value("format", std::string()) != "s2vc-report") throw ContractError("report: unexpected format tag");
    rep.config = j.value("config", nlohmann::json::object());
    for (const auto& rj : j.at("rows")) {
      ReportRow r;
      r.label = rj.at("label").get<std::string>();
      r.name = rj.at("name").get<std::string>();
      r.scenario = rj.at("scenario").get<std::string>();
      r.n_pairs = rj.at("n_pairs").get<int>();
      r.sv_accuracy = opt_from(rj, "sv_accuracy");
      r.eer = opt_from(rj, "eer");
      r.threshold = opt_from(rj, "threshold");
      r.recon_l1 = opt_from(rj, "recon_l1");
      r.probe_q = opt_from(rj, "probe_q");
      r.probe_k = opt_from(rj, "probe_k");
      r.probe_v = opt_from(rj, "probe_v");
      r.config = rj.value("config", nlohmann::json::object());
      for (const auto& pj : rj.value("pairs", nlohmann::json::array())) {
        r.pairs.push_back({pj.at("pair_id").get<std::string>(), pj.at("source_speaker").get<std::string>(),
                           pj.at("target_speaker").get<std::string>(), pj.at("score").get<double>(),
                           pj.at("accepted").get<bool>()});
      }
      rep.rows.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("report: malformed JSON: ") + e.what());
  }
  return rep;
}

std::string Report::to_text() const {
  const std::vector<std::string> header = {"label", "config", "scenario", "pairs", "SV acc %", "EER",
                                           "recon L1", "probe Q", "probe K", "probe V"};
  std::vector<std::vector<std::string>> table{header};
  for (const auto& r : rows) {
    table.push_back({r.label.empty() ? "-" : r.label, r.name, r.scenario.empty() ? "-" : r.scenario,
                     std::to_string(r.n_pairs), cell(r.sv_accuracy, "%.2f"), cell(r.eer, "%.4f"),
                     cell(r.recon_l1, "%.4f"), cell(r.probe_q, "%.4f"), cell(r.probe_k, "%.4f"),
                     cell(r.probe_v, "%.4f")});
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : table) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  for (std::size_t r = 0; r < table.size(); ++r) {
    for (std::size_t c = 0; c < table[r].size(); ++c) {
      const std::string& s = table[r][c];
      // Names left-aligned, numbers right-aligned.
      if (c < 3) {
        out << s << std::string(width[c] - s.size(), ' ');
      } else {
        out << std::string(width[c] - s.size(), ' ') << s;
      }
      out << (c + 1 < table[r].size() ? "  " : "\n");
    }
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t c = 0; c < width.size(); ++c) total += width[c] + (c + 1 < width.size() ? 2 : 0);
      out << std::string(total, '-') << '\n';
    }
  }
  return out.str();
}

void write_report(const fs::path& dir, const Report& report) {
  fs::create_directories(dir);
  {
    std::ofstream json(dir / "report.json", std::ios::binary);
    if (!json) throw Error("cannot write " + (dir / "report.json").string());
    json << report.to_json().dump(2) << '\n';
  }
  std::ofstream text(dir / "report.txt", std::ios::binary);
  if (!text) throw Error("cannot write " + (dir / "report.txt").string());
  text << report.to_text();
}

Report read_report(const fs::path& json_path) {
  std::ifstream in(json_path, std::ios::binary);
  if (!in) throw LoadError(LoadError::Code::Io, "cannot open " + json_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw LoadError(LoadError::Code::Malformed, "report " + json_path.string() + ": " + e.what());
  }
  return Report::from_json(j);
}

}  // namespace s2vc
