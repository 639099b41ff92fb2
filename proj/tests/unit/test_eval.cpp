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

#include "doctest.h"

#include <atomic>
#include <cmath>
#include <fstream>
#include <set>

#include "s2vc/eval.hpp"
#include "s2vc/toy_corpus.hpp"
#include "support.hpp"

using namespace s2vc;
using s2vc::testing::TempDir;

namespace {

std::vector<double> uniform_scores(std::size_t n, double lo, double hi, std::mt19937_64& rng, double grid = 0.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> out(n);
  for (auto& x : out) {
    x = d(rng);
    if (grid > 0.0) x = std::round(x / grid) * grid;  // forces ties
  }
  return out;
}

ManifestEntry entry(const std::string& speaker, int i) {
  ManifestEntry e;
  e.speaker_id = speaker;
  e.utterance_id = speaker + "_" + std::to_string(i);
  e.wav = e.utterance_id + ".wav";
  return e;
}

struct Corpus {
  TempDir dir{"eval"};
  std::vector<ManifestEntry> entries;
  ModelConfig model;

  Corpus() {
    ToyCorpusOptions o;
    o.n_speakers = 3;
    o.utterances_per_speaker = 6;
    o.min_seconds = 0.3;
    o.max_seconds = 0.4;
    entries = make_toy_corpus(dir.path(), o);
    model.d_model = 16;
    model.source_kind = FeatureKind(FeatureKind::Id::CPC);
    model.source_dim = 256;
    model.target_kind = FeatureKind(FeatureKind::Id::Mel);
    model.target_dim = 80;
    model.n_decoder_conformer = 1;
    model.conformer_ff_dim = 32;
  }
};

Corpus& corpus() {
  static Corpus c;
  return c;
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("EER equals the exhaustive sweep") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 100; ++trial) {
      const double grid = trial % 3 == 0 ? 0.05 : 0.0;
      const auto genuine = uniform_scores(25, -0.2, 1.0, rng, grid);
      const auto impostor = uniform_scores(25, -1.0, 0.4, rng, grid);
      const auto got = eer_threshold(genuine, impostor);
      const auto want = s2vc::testing::exhaustive_eer(genuine, impostor);
      CHECK(std::abs(got.eer - want.eer) < 1e-9);
      CHECK(std::abs(got.threshold - want.threshold) < 1e-9);
    }
  }

  TEST_CASE("separable scores give zero EER") {
    const std::vector<double> genuine{0.9, 0.8, 0.75};
    const std::vector<double> impostor{0.1, 0.3, 0.2, -0.4};
    const auto r = eer_threshold(genuine, impostor);
    CHECK(r.eer == 0.0);
    CHECK(r.threshold > 0.3);
    CHECK(r.threshold < 0.75);
    CHECK_THROWS_AS(eer_threshold(genuine, std::vector<double>{}), ContractError);
  }

  TEST_CASE("cosine similarity and accuracy") {
    Eigen::VectorXd a(3), b(3);
    a << 1, 0, 0;
    b << 1, 1, 0;
    CHECK(cosine_similarity(a, b) == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(cosine_similarity(a, -a) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(cosine_similarity(a, Eigen::VectorXd::Zero(3)), NumericError);
    CHECK_THROWS_AS(cosine_similarity(a, Eigen::VectorXd::Ones(2)), DimensionError);
    const std::vector<double> scores{0.1, 0.5, 0.5, 0.9};
    CHECK(sv_accuracy(scores, 0.5) == doctest::Approx(25.0));
    CHECK(sv_accuracy(scores, 0.0) == doctest::Approx(100.0));
  }

  TEST_CASE("pair sampling") {
    std::vector<ManifestEntry> entries;
    for (int i = 0; i < 6; ++i) entries.push_back(entry("p1", i));
    for (int i = 0; i < 7; ++i) entries.push_back(entry("p2", i));
    for (int i = 0; i < 3; ++i) entries.push_back(entry("p3", i));  // too few to be a target
    const auto pairs = sample_pairs(entries, 40, Scenario::U2U, 9);
    REQUIRE(pairs.size() == 40);
    for (const auto& p : pairs) {
      CHECK(p.scenario == Scenario::U2U);
      CHECK(p.source_speaker() != p.target_speaker());
      CHECK(p.target_speaker() != "p3");
      REQUIRE(p.targets.size() == kTargetsPerPair);
      std::set<std::string> ids{p.reference.utterance_id};
      for (const auto& t : p.targets) {
        CHECK(t.speaker_id == p.target_speaker());
        ids.insert(t.utterance_id);
      }
      CHECK(ids.size() == kTargetsPerPair + 1);
      CHECK(p.reference.speaker_id == p.target_speaker());
    }
    const auto again = sample_pairs(entries, 40, Scenario::U2U, 9);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      CHECK(again[i].id == pairs[i].id);
      CHECK(again[i].source.utterance_id == pairs[i].source.utterance_id);
    }
    CHECK_THROWS_AS(sample_pairs(std::span(entries).first(6), 1, Scenario::S2S, 0), ContractError);
    CHECK_THROWS_AS(sample_pairs(entries, 0, Scenario::S2S, 0), ContractError);
  }

  TEST_CASE("names round-trip") {
    CHECK(scenario_from_string(to_string(Scenario::S2S)) == Scenario::S2S);
    CHECK(scenario_from_string("u2u") == Scenario::U2U);
    CHECK_THROWS_AS(scenario_from_string("x2y"), ConfigError);
    for (auto s : {ProbeSite::Q, ProbeSite::K, ProbeSite::V}) CHECK(probe_site_from_string(to_string(s)) == s);
    CHECK_THROWS_AS(probe_site_from_string("W"), ConfigError);
  }

  TEST_CASE("parallel_for visits every index once and rethrows") {
    for (int jobs : {1, 3}) {
      std::vector<std::atomic<int>> hits(50);
      parallel_for(hits.size(), jobs, [&](std::size_t i) { hits[i]++; });
      for (const auto& h : hits) CHECK(h.load() == 1);
      CHECK_THROWS_AS(parallel_for(10, jobs, [](std::size_t i) {
                        if (i == 7) throw NumericError("boom");
                      }),
                      NumericError);
    }
  }

  TEST_CASE("probe split keeps groups whole and reaches separable accuracy") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> noise(0.0, 0.3);
    ProbeData data;
    data.n_classes = 3;
    const int groups = 30, frames = 8;
    data.features.resize(groups * frames, 4);
    for (int g = 0; g < groups; ++g) {
      for (int f = 0; f < frames; ++f) {
        const int row = g * frames + f;
        const int label = g % 3;
        for (int c = 0; c < 4; ++c) data.features(row, c) = static_cast<float>((c == label ? 2.0 : 0.0) + noise(rng));
        data.labels.push_back(label);
        data.groups.push_back(g);
      }
    }
    ProbeOptions o;
    o.steps = 200;
    const auto r = train_probe(data, o);
    CHECK(r.n_classes == 3);
    CHECK(r.train_frames + r.dev_frames == static_cast<std::size_t>(groups * frames));
    CHECK(r.dev_frames % frames == 0);
    CHECK(r.dev_frames >= 3 * frames);
    CHECK(r.dev_accuracy > 0.95);
    CHECK(r.train_accuracy > 0.95);
    const auto again = train_probe(data, o);
    CHECK(again.dev_accuracy == r.dev_accuracy);
    data.n_classes = 1;
    CHECK_THROWS_AS(train_probe(data, o), ContractError);
  }

  TEST_CASE("reports round-trip through JSON and text") {
    Report rep;
    rep.config = {{"seed", 3}};
    ReportRow row;
    row.label = "(b)";
    row.name = "proposed";
    row.scenario = "s2s";
    row.n_pairs = 2;
    row.sv_accuracy = 50.0;
    row.eer = 0.125;
    row.probe_q = 0.3;
    row.pairs.push_back({"pair_0", "a", "b", 0.4, true});
    rep.rows.push_back(row);
    row.label = "(g)";
    row.probe_q.reset();
    rep.rows.push_back(row);
    CHECK(Report::from_json(rep.to_json()) == rep);
    TempDir dir("report");
    write_report(dir.path(), rep);
    CHECK(read_report(dir / "report.json") == rep);
    std::ifstream text(dir / "report.txt");
    const std::string body((std::istreambuf_iterator<char>(text)), std::istreambuf_iterator<char>());
    CHECK(body.find("(g)") != std::string::npos);
    CHECK(body == rep.to_text());
    CHECK_THROWS_AS(read_report(dir / "absent.json"), LoadError);
  }

  TEST_CASE("speaker embedder yields unit-norm embeddings") {
    const auto& c = corpus();
    std::vector<MatrixXf> mels;
    std::vector<int> labels;
    std::map<std::string, int> index;
    for (const auto& e : c.entries) {
      mels.push_back(extract_mel(dsp::read_wav(e.wav)).frames);
      labels.push_back(index.emplace(e.speaker_id, static_cast<int>(index.size())).first->second);
    }
    EmbedderOptions o;
    o.steps = 30;
    o.hidden = 16;
    o.embedding_dim = 8;
    const auto emb = SpeakerEmbedder::train(mels, labels, static_cast<int>(index.size()), o);
    CHECK(emb.embedding_dim() == 8);
    for (const auto& m : mels) CHECK(std::abs(emb.embed(m).norm() - 1.0) < 1e-5);
    CHECK_THROWS_AS(emb.embed(MatrixXf::Zero(4, 40)), DimensionError);
  }

  TEST_CASE("conversion and evaluation are deterministic across thread counts") {
    const auto& c = corpus();
    Model model(c.model, 2);
    const auto pairs = sample_pairs(c.entries, 3, Scenario::S2S, 4);
    ConversionOptions co;
    co.griffin_lim_iterations = 5;
    const auto conv = convert(model, pairs[0], co);
    const auto src = load_source_features(pairs[0].source, c.model, co.mel);
    CHECK(conv.mel.rows() == src.frames.rows());
    CHECK(conv.audio.samples.size() == static_cast<std::size_t>(conv.mel.rows() * co.mel.hop_length));
    CHECK(conv.trace.weights.rows() == conv.mel.rows());

    EmbedderOptions eo;
    eo.steps = 20;
    eo.hidden = 16;
    eo.embedding_dim = 8;
    const SvSystem sv = build_sv_system(c.entries, co.mel, eo);
    EvalOptions opt;
    opt.griffin_lim_iterations = 5;
    opt.n_pairs = 3;
    const auto serial = evaluate(model, pairs, sv, opt);
    opt.jobs = 3;
    const auto threaded = evaluate(model, pairs, sv, opt);
    CHECK(serial.pairs == threaded.pairs);
    CHECK(serial.sv_accuracy == threaded.sv_accuracy);
    CHECK(serial.recon_l1 == threaded.recon_l1);
    REQUIRE(serial.pairs.size() == 3);
    for (const auto& p : serial.pairs) CHECK(p.accepted == (p.score > sv.calibration.threshold));
  }
}
