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

// s2vc command-line driver.
//
// Exit codes: 0 success, 1 runtime/evaluation failure, 2 usage or configuration error.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>

#include "s2vc/config.hpp"
#include "s2vc/eval.hpp"
#include "s2vc/toy_corpus.hpp"
#include "s2vc/training.hpp"

namespace fs = std::filesystem;
using namespace s2vc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct GlobalOptions {
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  bool show_config = false;
};

/// Defaults < S2VC_SEED < config file < --set < dedicated flags.
LayeredConfig resolve_config(const GlobalOptions& g, const std::map<std::string, nlohmann::json>& flags) {
  LayeredConfig cfg;
  if (const char* env = std::getenv("S2VC_SEED"); env != nullptr && *env != '\0') cfg.set("seed", env, "env");
  if (!g.config_file.empty()) cfg.load_file(g.config_file);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1), "--set");
  }
  if (g.seed) cfg.set_json("seed", *g.seed);
  if (g.jobs) cfg.set_json("jobs", *g.jobs);
  for (const auto& [k, v] : flags) cfg.set_json(k, v);
  return cfg;
}

bool show(const GlobalOptions& g, const LayeredConfig& cfg) {
  if (!g.show_config) return false;
  std::cout << "# resolved configuration (defaults < S2VC_SEED < file < flags)\n" << cfg.render();
  return true;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

fs::path relative_to(const fs::path& p, const fs::path& base) {
  const fs::path rel = fs::relative(fs::absolute(p), fs::absolute(base));
  return rel.empty() ? p : rel;
}

FeatureSequence load_input(const fs::path& path, const FeatureKind& kind, const dsp::MelConfig& mel) {
  if (lower(path.extension().string()) == ".wav") {
    if (kind.id() != FeatureKind::Id::Mel) {
      throw KindMismatchError("model expects " + kind.name() + " features but " + path.string() +
                              " is audio (only Mel can be extracted natively)");
    }
    dsp::AudioBuffer audio = dsp::read_wav(path);
    if (audio.sample_rate != mel.sample_rate) audio = dsp::resample(audio, mel.sample_rate);
    return extract_mel(audio, mel, path.stem().string(), "");
  }
  FeatureSequence seq = load_feature_file(path);
  if (!(seq.kind == kind)) {
    throw KindMismatchError("feature kind mismatch for " + path.string() + ": expected " + kind.name() + ", got " +
                            seq.kind.name());
  }
  return seq;
}

// -- make-toy -------------------------------------------------------------------------------

int cmd_make_toy(const GlobalOptions& g, const std::string& out, int speakers, int utterances, bool with_mel) {
  const LayeredConfig cfg = resolve_config(g, {});
  if (show(g, cfg)) return kExitOk;
  ToyCorpusOptions o;
  o.n_speakers = speakers;
  o.utterances_per_speaker = utterances;
  o.write_mel = with_mel;
  o.seed = cfg.resolved().at("seed").get<std::uint64_t>();
  o.mel = dsp::MelConfig::from_json(cfg.resolved().at("dsp"));
  const auto entries = make_toy_corpus(out, o);
  std::cout << "wrote " << entries.size() << " utterances to " << (fs::path(out) / "manifest.jsonl").string() << "\n";
  return kExitOk;
}

// -- feats ----------------------------------------------------------------------------------

int cmd_feats(const GlobalOptions& g, const std::string& wav_dir, const std::string& out_dir, const std::string& kind_name,
              const std::string& merge) {
  const LayeredConfig cfg = resolve_config(g, {});
  if (show(g, cfg)) return kExitOk;
  const FeatureKind kind = FeatureKind::from_name(kind_name);
  if (kind.id() != FeatureKind::Id::Mel) {
    throw ConfigError(kind.name() + " features cannot be extracted natively; export them externally as feature "
                      "files and list them in the manifest");
  }
  const dsp::MelConfig mel = dsp::MelConfig::from_json(cfg.resolved().at("dsp"));
  if (!fs::is_directory(wav_dir)) throw ConfigError("not a directory: " + wav_dir);
  fs::create_directories(out_dir);

  std::vector<fs::path> wavs;
  for (const auto& e : fs::recursive_directory_iterator(wav_dir)) {
    if (e.is_regular_file() && lower(e.path().extension().string()) == ".wav") wavs.push_back(e.path());
  }
  std::sort(wavs.begin(), wavs.end());

  std::vector<ManifestEntry> produced;
  std::vector<std::string> errors;
  for (const auto& w : wavs) {
    const std::string name = w.filename().string();
    const std::string utt = name.substr(0, name.find('.'));
    std::string speaker;
    const fs::path parent = fs::relative(w.parent_path(), wav_dir);
    if (!parent.empty() && parent != ".") {
      speaker = parent.filename().string();
    } else {
      speaker = utt.substr(0, utt.find('_'));
    }
    try {
      dsp::AudioBuffer audio = dsp::read_wav(w);
      if (audio.sample_rate != mel.sample_rate) audio = dsp::resample(audio, mel.sample_rate);
      const FeatureSequence seq = extract_mel(audio, mel, utt, speaker);
      const fs::path file = fs::path(out_dir) / (utt + ".mel.s2vf");
      save_feature_file(file, seq);
      ManifestEntry e;
      e.utterance_id = utt;
      e.speaker_id = speaker;
      e.wav = w;
      e.features["Mel"] = file;
      produced.push_back(std::move(e));
    } catch (const std::exception& ex) {
      errors.push_back(w.string() + ": " + ex.what());
    }
  }

  std::vector<ManifestEntry> entries;
  if (!merge.empty()) {
    entries = read_manifest(merge);
    std::map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < entries.size(); ++i) by_id[entries[i].utterance_id] = i;
    for (auto& p : produced) {
      const auto it = by_id.find(p.utterance_id);
      if (it == by_id.end()) {
        entries.push_back(std::move(p));
      } else {
        entries[it->second].features["Mel"] = p.features["Mel"];
      }
    }
  } else {
    entries = std::move(produced);
  }
  for (auto& e : entries) {
    if (!e.wav.empty()) e.wav = relative_to(e.wav, out_dir);
    for (auto& [k, v] : e.features) v = relative_to(v, out_dir);
  }
  write_manifest(fs::path(out_dir) / "manifest.jsonl", entries);
  std::cout << "extracted " << (wavs.size() - errors.size()) << " of " << wavs.size() << " files; manifest "
            << (fs::path(out_dir) / "manifest.jsonl").string() << "\n";
  for (const auto& e : errors) std::cerr << "error: " << e << "\n";
  return errors.empty() ? kExitOk : kExitRuntime;
}

// -- train ----------------------------------------------------------------------------------

std::map<std::string, nlohmann::json> ablation_flags(const std::string& ablation) {
  if (ablation.empty()) return {};
  ModelConfig m;
  apply_ablation(m, ablation);
  return {{"model.use_sap", m.use_sap},
          {"model.use_bottleneck", m.use_bottleneck},
          {"model.use_instance_norm", m.use_instance_norm},
          {"model.use_cross_attention", m.use_cross_attention}};
}

int cmd_train(const GlobalOptions& g, const std::string& manifest, const std::string& out, std::optional<int> max_steps,
              const std::string& ablation, const std::string& resume) {
  auto flags = ablation_flags(ablation);
  if (max_steps) flags["train.max_steps"] = *max_steps;
  const LayeredConfig cfg = resolve_config(g, flags);
  if (show(g, cfg)) return kExitOk;
  TrainConfig tc = train_config_from(cfg.resolved());
  tc.manifest = manifest;
  tc.output_dir = out;
  if (!resume.empty()) tc.resume = resume;
  if (!fs::exists(manifest)) throw ConfigError("manifest not found: " + manifest);
  const TrainResult r = run_training(tc, cfg.resolved());
  std::cout << "trained " << r.losses.size() << " steps";
  if (!r.losses.empty()) std::cout << ", final loss " << r.losses.back();
  std::cout << "; checkpoint " << r.final_checkpoint.string() << "\n";
  return kExitOk;
}

// -- convert --------------------------------------------------------------------------------

int cmd_convert(const GlobalOptions& g, const std::string& checkpoint, const std::string& source,
                const std::vector<std::string>& targets, const std::string& out, const std::string& trace_path) {
  const LayeredConfig cfg = resolve_config(g, {});
  if (show(g, cfg)) return kExitOk;
  if (targets.empty()) throw ConfigError("convert: at least one --target is required");
  if (targets.size() < kTargetsPerPair) {
    std::cerr << "warning: " << targets.size() << " target utterance(s) given, " << kTargetsPerPair
              << " recommended; concatenating what was given\n";
  }
  const CheckpointData data = read_checkpoint_file(checkpoint);
  Model model = model_from_checkpoint(data);
  const dsp::MelConfig mel = data.header.contains("dsp") ? dsp::MelConfig::from_json(data.header.at("dsp"))
                                                         : dsp::MelConfig::from_json(cfg.resolved().at("dsp"));
  const double fps = static_cast<double>(mel.sample_rate) / mel.hop_length;
  const FeatureSequence src = align_frame_rate(load_input(source, model.config().source_kind, mel), fps);
  std::vector<FeatureSequence> tgts;
  for (const auto& t : targets) {
    FeatureSequence seq = load_input(t, model.config().target_kind, mel);
    seq.speaker_id = "target";  // files need not agree on speaker labels here
    tgts.push_back(std::move(seq));
  }
  ConversionOptions co;
  co.mel = mel;
  co.griffin_lim_iterations = cfg.resolved().at("eval").at("griffin_lim_iterations").get<int>();
  co.seed = cfg.resolved().at("seed").get<std::uint64_t>();
  const Conversion c = convert_features(model, src, tgts, co);
  if (const fs::path parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
  dsp::write_wav(out, c.audio, dsp::WavEncoding::Pcm16);
  if (!trace_path.empty()) {
    if (c.trace.empty()) std::cerr << "warning: model has no cross attention; trace holds no attention weights\n";
    save_trace(trace_path, c.trace);
  }
  std::cout << "wrote " << out << " (" << c.audio.duration_seconds() << " s)\n";
  return kExitOk;
}

// -- eval / probe / ablate ------------------------------------------------------------------

nlohmann::json report_config(const LayeredConfig& cfg) {
  nlohmann::json j = cfg.resolved();
  j.erase("jobs");  // parallelism never changes results
  return j;
}

ReportRow eval_row(Model& model, std::span<const TestPair> pairs, const SvSystem& sv, const EvalOptions& eo) {
  const EvalResult r = evaluate(model, pairs, sv, eo);
  ReportRow row;
  row.name = "eval";
  row.scenario = to_string(eo.scenario);
  row.n_pairs = static_cast<int>(pairs.size());
  row.sv_accuracy = r.sv_accuracy;
  row.eer = r.eer;
  row.threshold = r.threshold;
  row.recon_l1 = r.recon_l1;
  row.config = model.config().to_json();
  row.pairs = r.pairs;
  return row;
}

void add_probes(ReportRow& row, Model& model, std::span<const ManifestEntry> entries, const ProbeOptions& po) {
  if (!model.config().use_cross_attention) return;
  const auto data = collect_probe_data(model, entries, po);
  row.probe_q = train_probe(data[0], po).dev_accuracy;
  row.probe_k = train_probe(data[1], po).dev_accuracy;
  row.probe_v = train_probe(data[2], po).dev_accuracy;
}

int cmd_eval(const GlobalOptions& g, const std::string& checkpoint, const std::string& manifest, const std::string& out,
             const std::optional<std::string>& scenario, std::optional<int> n_pairs, bool write_audio) {
  std::map<std::string, nlohmann::json> flags;
  if (scenario) flags["eval.scenario"] = *scenario;
  if (n_pairs) flags["eval.n_pairs"] = *n_pairs;
  const LayeredConfig cfg = resolve_config(g, flags);
  if (show(g, cfg)) return kExitOk;
  EvalOptions eo = eval_options_from(cfg.resolved());
  const auto entries = read_manifest(manifest);
  const CheckpointData data = read_checkpoint_file(checkpoint);
  Model model = model_from_checkpoint(data);
  if (data.header.contains("dsp")) eo.mel = dsp::MelConfig::from_json(data.header.at("dsp"));
  if (write_audio) eo.audio_dir = fs::path(out) / "out";
  const auto pairs = sample_pairs(entries, eo.n_pairs, eo.scenario, eo.seed);
  const SvSystem sv = build_sv_system(entries, eo.mel, embedder_options_from(cfg.resolved()), eo.jobs);
  Report report;
  report.config = report_config(cfg);
  report.rows.push_back(eval_row(model, pairs, sv, eo));
  write_report(out, report);
  std::cout << report.to_text();
  return kExitOk;
}

int cmd_probe(const GlobalOptions& g, const std::string& checkpoint, const std::string& manifest, const std::string& out,
              const std::string& site) {
  const LayeredConfig cfg = resolve_config(g, {});
  if (show(g, cfg)) return kExitOk;
  ProbeOptions po = probe_options_from(cfg.resolved());
  const auto entries = read_manifest(manifest);
  const CheckpointData data = read_checkpoint_file(checkpoint);
  Model model = model_from_checkpoint(data);
  if (data.header.contains("dsp")) po.mel = dsp::MelConfig::from_json(data.header.at("dsp"));
  const auto probe_data = collect_probe_data(model, entries, po);
  ReportRow row;
  row.name = "probe";
  row.config = model.config().to_json();
  const std::string pair = model.config().source_kind.name() + "/" + model.config().target_kind.name();
  for (ProbeSite s : {ProbeSite::Q, ProbeSite::K, ProbeSite::V}) {
    if (site != "all" && probe_site_from_string(site) != s) continue;
    const ProbeResult r = train_probe(probe_data[static_cast<std::size_t>(s)], po);
    std::optional<double>& slot = s == ProbeSite::Q ? row.probe_q : (s == ProbeSite::K ? row.probe_k : row.probe_v);
    slot = r.dev_accuracy;
    std::cout << to_string(s) << " (" << pair << "): train " << r.train_accuracy << ", dev " << r.dev_accuracy << " over "
              << r.n_classes << " speakers, chance " << 1.0 / r.n_classes << "\n";
  }
  Report report;
  report.config = report_config(cfg);
  report.rows.push_back(std::move(row));
  write_report(out, report);
  return kExitOk;
}

int cmd_ablate(const GlobalOptions& g, const std::string& manifest, const std::string& eval_manifest, const std::string& out,
               std::optional<int> max_steps, std::optional<int> n_pairs) {
  std::map<std::string, nlohmann::json> flags;
  if (max_steps) flags["train.max_steps"] = *max_steps;
  if (n_pairs) flags["eval.n_pairs"] = *n_pairs;
  const LayeredConfig cfg = resolve_config(g, flags);
  if (show(g, cfg)) return kExitOk;
  TrainConfig base = train_config_from(cfg.resolved());
  base.manifest = manifest;
  base.output_dir = out;
  if (!fs::exists(manifest)) throw ConfigError("manifest not found: " + manifest);
  const auto eval_entries = read_manifest(eval_manifest.empty() ? manifest : eval_manifest);
  EvalOptions eo = eval_options_from(cfg.resolved());
  eo.mel = base.mel;
  ProbeOptions po = probe_options_from(cfg.resolved());
  po.mel = base.mel;

  // Identical pairs, verifier and seeds for every row.
  const auto pairs = sample_pairs(eval_entries, eo.n_pairs, eo.scenario, eo.seed);
  std::optional<SvSystem> sv;

  Report report;
  report.config = report_config(cfg);
  for (const AblationRun& run : ablation_suite(base)) {
    const fs::path result_path = run.config.output_dir / "result.json";
    if (fs::exists(result_path)) {
      std::ifstream in(result_path);
      const Report cached = Report::from_json(nlohmann::json::parse(in));
      report.rows.push_back(cached.rows.at(0));
      std::cout << run.label << " " << run.name << ": cached\n";
      continue;
    }
    const fs::path final_ckpt = run.config.output_dir / "final.ckpt";
    if (!fs::exists(final_ckpt)) {
      nlohmann::json snapshot = cfg.resolved();
      snapshot["model"] = run.config.model.to_json();
      run_training(run.config, snapshot);
    }
    if (!sv) sv = build_sv_system(eval_entries, eo.mel, embedder_options_from(cfg.resolved()), eo.jobs);
    Model model = load_checkpoint(final_ckpt);
    ReportRow row = eval_row(model, pairs, *sv, eo);
    row.label = run.label;
    row.name = run.name;
    add_probes(row, model, eval_entries, po);
    Report single;
    single.rows.push_back(row);
    std::ofstream(result_path) << single.to_json().dump(2) << '\n';
    report.rows.push_back(std::move(row));
    std::cout << run.label << " " << run.name << ": done\n";
  }
  write_report(out, report);
  std::cout << report.to_text();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"s2vc: any-to-any voice conversion with cross attention over self-supervised features"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config_file, "Configuration file (key = value, [section] headers)");
  app.add_option("--set", g.overrides, "Override a configuration key, e.g. --set model.d_model=64");
  app.add_option("--seed", g.seed, "Global seed (falls back to S2VC_SEED, then the config file)");
  app.add_option("--jobs", g.jobs, "Worker threads for feature loading and evaluation")->check(CLI::PositiveNumber);
  app.add_flag("--show-config", g.show_config, "Print the resolved configuration and exit");

  std::function<int()> action;

  auto* toy = app.add_subcommand("make-toy", "Generate the synthetic multi-speaker corpus");
  std::string toy_out;
  int toy_speakers = 8, toy_utts = 20;
  bool toy_mel = false;
  toy->add_option("out_dir", toy_out, "Output directory")->required();
  toy->add_option("--speakers", toy_speakers, "Number of speakers")->check(CLI::PositiveNumber);
  toy->add_option("--utterances", toy_utts, "Utterances per speaker")->check(CLI::PositiveNumber);
  toy->add_flag("--with-mel", toy_mel, "Also write log-mel feature files");
  toy->callback([&] { action = [&] { return cmd_make_toy(g, toy_out, toy_speakers, toy_utts, toy_mel); }; });

  auto* feats = app.add_subcommand("feats", "Extract log-mel feature files from a directory of WAVs");
  std::string wav_dir, feat_out, kind = "Mel", merge;
  feats->add_option("wav_dir", wav_dir, "Directory searched recursively for .wav files")->required();
  feats->add_option("out_dir", feat_out, "Output directory for feature files and manifest.jsonl")->required();
  feats->add_option("--kind", kind, "Feature kind (only Mel is extracted natively)");
  feats->add_option("--merge", merge, "Existing manifest whose entries gain the extracted Mel paths");
  feats->callback([&] { action = [&] { return cmd_feats(g, wav_dir, feat_out, kind, merge); }; });

  auto* train = app.add_subcommand("train", "Self-reconstruction training");
  std::string train_manifest, train_out = "run", ablation, resume;
  std::optional<int> max_steps;
  train->add_option("--manifest", train_manifest, "Training manifest (JSON lines)")->required();
  train->add_option("--out", train_out, "Output directory for checkpoints and the training log");
  train->add_option("--max-steps", max_steps, "Number of optimisation steps");
  train->add_option("--ablation", ablation, "Named ablation")->check(CLI::IsMember(ablation_names()));
  train->add_option("--resume", resume, "Training checkpoint to resume from");
  train->callback([&] { action = [&] { return cmd_train(g, train_manifest, train_out, max_steps, ablation, resume); }; });

  auto* conv = app.add_subcommand("convert", "Convert one utterance to the voice of the target utterances");
  std::string ckpt, source, conv_out, trace;
  std::vector<std::string> targets;
  conv->add_option("--checkpoint", ckpt, "Model checkpoint")->required();
  conv->add_option("--source", source, "Source WAV or feature file")->required();
  conv->add_option("--target", targets, "Target WAV or feature file (repeat, five recommended)")->required();
  conv->add_option("--out", conv_out, "Output WAV")->required();
  conv->add_option("--dump-trace", trace, "Write the attention trace to this file");
  conv->callback([&] { action = [&] { return cmd_convert(g, ckpt, source, targets, conv_out, trace); }; });

  auto* ev = app.add_subcommand("eval", "Speaker-verification and reconstruction evaluation");
  std::string eval_ckpt, eval_manifest, eval_out = "eval";
  std::optional<std::string> scenario;
  std::optional<int> n_pairs;
  bool no_audio = false;
  ev->add_option("--checkpoint", eval_ckpt, "Model checkpoint")->required();
  ev->add_option("--manifest", eval_manifest, "Evaluation manifest")->required();
  ev->add_option("--out", eval_out, "Output directory for report.json, report.txt and out/*.wav");
  ev->add_option("--scenario", scenario, "s2s or u2u")->check(CLI::IsMember({"s2s", "u2u"}));
  ev->add_option("--n-pairs", n_pairs, "Number of test pairs")->check(CLI::PositiveNumber);
  ev->add_flag("--no-audio", no_audio, "Skip writing converted WAVs");
  ev->callback([&] { action = [&] { return cmd_eval(g, eval_ckpt, eval_manifest, eval_out, scenario, n_pairs, !no_audio); }; });

  auto* pr = app.add_subcommand("probe", "Speaker-information probing of Q, K and V");
  std::string probe_ckpt, probe_manifest, probe_out = "probe", site = "all";
  pr->add_option("--checkpoint", probe_ckpt, "Model checkpoint")->required();
  pr->add_option("--manifest", probe_manifest, "Manifest with at least two speakers")->required();
  pr->add_option("--out", probe_out, "Output directory for the probe report");
  pr->add_option("--site", site, "Q, K, V or all")->check(CLI::IsMember({"Q", "K", "V", "q", "k", "v", "all"}));
  pr->callback([&] { action = [&] { return cmd_probe(g, probe_ckpt, probe_manifest, probe_out, site); }; });

  auto* ab = app.add_subcommand("ablate", "Train and evaluate the seven ablation configurations");
  std::string ab_manifest, ab_eval_manifest, ab_out = "ablation";
  std::optional<int> ab_steps, ab_pairs;
  ab->add_option("--manifest", ab_manifest, "Training manifest")->required();
  ab->add_option("--eval-manifest", ab_eval_manifest, "Evaluation manifest (defaults to the training manifest)");
  ab->add_option("--out", ab_out, "Output directory; completed runs are skipped on rerun");
  ab->add_option("--max-steps", ab_steps, "Training steps per run");
  ab->add_option("--n-pairs", ab_pairs, "Test pairs per run")->check(CLI::PositiveNumber);
  ab->callback([&] { action = [&] { return cmd_ablate(g, ab_manifest, ab_eval_manifest, ab_out, ab_steps, ab_pairs); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    return action();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const KindMismatchError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const LoadError& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return e.code() == LoadError::Code::Io || e.code() == LoadError::Code::KindMismatch ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
