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

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "s2vc/model.hpp"
#include "support.hpp"

using namespace s2vc;
using s2vc::testing::random_matrix;
using s2vc::testing::TempDir;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.d_model = 16;
  c.source_kind = FeatureKind(FeatureKind::Id::PPG);
  c.source_dim = 6;
  c.target_kind = FeatureKind(FeatureKind::Id::Mel);
  c.target_dim = 80;
  c.n_decoder_conformer = 1;
  c.conformer_ff_dim = 32;
  c.conformer_conv_kernel = 5;
  c.dropout = 0.0;
  return c;
}

FeatureSequence seq(FeatureKind kind, Index t, Index d, std::mt19937_64& rng, std::string speaker = "s") {
  FeatureSequence s;
  s.kind = std::move(kind);
  s.frames = random_matrix(t, d, rng).cast<float>();
  s.speaker_id = std::move(speaker);
  s.utterance_id = "u";
  return s;
}

void rewrite_crc(std::vector<std::uint8_t>& bytes) {
  const std::size_t body = bytes.size() - 4;
  const auto crc = static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(body)));
  for (int i = 0; i < 4; ++i) bytes[body + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>((crc >> (8 * i)) & 0xff);
}

LoadError::Code checkpoint_code(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_checkpoint(bytes);
  } catch (const LoadError& e) {
    return e.code();
  }
  FAIL("expected LoadError");
  return LoadError::Code::Io;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("attention rows are distributions equal to the naive oracle") {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> len(1, 12), width(1, 16);
    for (int trial = 0; trial < 30; ++trial) {
      const MatrixXd q = random_matrix(len(rng), width(rng), rng, -3.0, 3.0);
      const MatrixXd k = random_matrix(len(rng), q.cols(), rng, -3.0, 3.0);
      const MatrixXd w = nn::attention_weights(Tensor(q.cast<float>()), Tensor(k.cast<float>())).value().cast<double>();
      CHECK((w.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-5);
      CHECK((w - s2vc::testing::naive_attention(q.cast<float>().cast<double>(), k.cast<float>().cast<double>()))
                .cwiseAbs()
                .maxCoeff() < 1e-5);
    }
  }

  TEST_CASE("instance norm standardises every non-constant channel") {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> len(2, 40), width(1, 12);
    std::uniform_real_distribution<double> log_scale(0.0, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
      MatrixXd x = random_matrix(len(rng), width(rng), rng);
      x *= std::pow(10.0, log_scale(rng));
      const MatrixXd y = nn::instance_norm(Tensor(x.cast<float>())).value().cast<double>();
      for (Index ch = 0; ch < y.cols(); ++ch) {
        const double raw = (x.col(ch).array() - x.col(ch).mean()).square().mean();
        if (raw < 1e-2) continue;  // epsilon alone would move the variance by more than 1e-3
        const double mu = y.col(ch).mean();
        CHECK(std::abs(mu) < 1e-5);
        CHECK(std::abs((y.col(ch).array() - mu).square().mean() - 1.0) < 1e-3);
      }
    }
  }

  TEST_CASE("cross-attention queries and keys are centred; bottleneck width") {
    std::mt19937_64 rng(2);
    ModelConfig c = small_config();
    c.use_bottleneck = false;
    Model plain(c, 3);
    const auto src = plain.source_encode(Tensor(random_matrix(9, 6, rng).cast<float>()), {});
    const auto tgt = plain.target_encode(Tensor(random_matrix(7, 80, rng).cast<float>()));
    const auto trace = plain.cross_attention(src, tgt).second;
    for (const MatrixXf* m : {&trace.query, &trace.key}) {
      REQUIRE(m->cols() == c.d_model);
      CHECK(m->cast<double>().colwise().mean().cwiseAbs().maxCoeff() < 1e-4);
    }
    c.use_bottleneck = true;
    Model bottleneck(c, 3);
    const auto t2 = bottleneck.cross_attention(src, tgt).second;
    CHECK(t2.query.cols() == 4);
    CHECK(t2.key.cols() == 4);
    CHECK(t2.value.cols() == c.d_model);
    CHECK(t2.weights.rows() == 9);
    CHECK(t2.weights.cols() == 7);
  }

  TEST_CASE("pooled target is invariant under frame permutation") {
    std::mt19937_64 rng(4);
    Model m(small_config(), 5);
    const MatrixXf h = random_matrix(6, 16, rng).cast<float>();
    const MatrixXf ref = m.pool_target(Tensor(h)).value();
    std::vector<Index> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    do {
      const MatrixXf p = h(perm, Eigen::all);
      CHECK((m.pool_target(Tensor(p)).value() - ref).cwiseAbs().maxCoeff() < 1e-6);
    } while (std::next_permutation(perm.begin(), perm.end()));
  }

  TEST_CASE("forward shapes and target-count independence") {
    std::mt19937_64 rng(6);
    Model m(small_config(), 7);
    const auto src = seq(FeatureKind(FeatureKind::Id::PPG), 11, 6, rng);
    std::vector<FeatureSequence> targets;
    for (int i = 0; i < 5; ++i) targets.push_back(seq(FeatureKind(FeatureKind::Id::Mel), 5 + i, 80, rng));
    const auto five = m.forward(src, targets, {});
    CHECK(five.mel.rows() == 11);
    CHECK(five.mel.cols() == 80);
    CHECK(five.trace.weights.cols() == 5 + 6 + 7 + 8 + 9);
    REQUIRE(five.trace.pooled_target.has_value());
    const auto one = m.forward(src, std::span<const FeatureSequence>(targets).first(1), {});
    CHECK(one.mel.rows() == 11);
  }

  TEST_CASE("feature kinds and widths are checked") {
    std::mt19937_64 rng(8);
    Model m(small_config(), 9);
    const std::vector<FeatureSequence> targets{seq(FeatureKind(FeatureKind::Id::Mel), 4, 80, rng)};
    CHECK_THROWS_AS(m.forward(seq(FeatureKind(FeatureKind::Id::CPC), 4, 6, rng), targets, {}), KindMismatchError);
    CHECK_THROWS_AS(m.forward(seq(FeatureKind(FeatureKind::Id::PPG), 4, 7, rng), targets, {}), DimensionError);
    const std::vector<FeatureSequence> bad{seq(FeatureKind(FeatureKind::Id::PPG), 4, 80, rng)};
    CHECK_THROWS_AS(m.forward(seq(FeatureKind(FeatureKind::Id::PPG), 4, 6, rng), bad, {}), KindMismatchError);
  }

  TEST_CASE("ablation switches") {
    std::mt19937_64 rng(10);
    const Tensor src(random_matrix(5, 6, rng).cast<float>());
    const Tensor tgt(random_matrix(4, 80, rng).cast<float>());

    ModelConfig c = small_config();
    c.use_sap = false;
    Model no_sap(c, 11);
    const auto r = no_sap.forward(src, tgt, {});
    CHECK_FALSE(r.trace.pooled_target.has_value());
    for (auto& p : no_sap.parameters()) CHECK(p.name.find("sap") == std::string::npos);

    c = small_config();
    c.use_cross_attention = false;
    Model no_ca(c, 11);
    const auto r2 = no_ca.forward(src, tgt, {});
    CHECK(r2.trace.empty());
    const auto expected =
        no_ca.decode(no_ca.condition_source(no_ca.source_encode(src, {}), no_ca.pool_target(no_ca.target_encode(tgt))), {});
    CHECK(r2.mel.value() == expected.value());
  }

  TEST_CASE("model configuration") {
    ModelConfig c = small_config();
    c.sap_strategy = SapStrategy::ConcatProject;
    const auto back = ModelConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    c.attn_bottleneck_dim = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.conformer_heads = 3;  // does not divide d_model
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("checkpoints are byte-exact and restore the model") {
    std::mt19937_64 rng(12);
    Model m(small_config(), 13);
    TempDir dir("ckpt");
    save_checkpoint(m, dir / "m.ckpt");
    const auto bytes = read_file_bytes(dir / "m.ckpt");
    CHECK(encode_checkpoint(decode_checkpoint(bytes)) == bytes);

    Model restored = load_checkpoint(dir / "m.ckpt", FeatureKind(FeatureKind::Id::PPG), FeatureKind(FeatureKind::Id::Mel));
    const Tensor src(random_matrix(6, 6, rng).cast<float>());
    const Tensor tgt(random_matrix(5, 80, rng).cast<float>());
    CHECK(restored.forward(src, tgt, {}).mel.value() == m.forward(src, tgt, {}).mel.value());

    try {
      load_checkpoint(dir / "m.ckpt", FeatureKind(FeatureKind::Id::CPC));
      FAIL("expected LoadError");
    } catch (const LoadError& e) {
      CHECK(e.code() == LoadError::Code::KindMismatch);
    }
  }

  TEST_CASE("corrupted checkpoints fail with structured codes") {
    Model m(small_config(), 14);
    const auto good = encode_checkpoint(model_to_checkpoint(m));
    auto bytes = good;
    bytes[0] = 'Z';
    CHECK(checkpoint_code(bytes) == LoadError::Code::BadMagic);
    bytes = good;
    bytes[bytes.size() / 2] ^= 0x40;
    CHECK(checkpoint_code(bytes) == LoadError::Code::ChecksumMismatch);
    bytes = good;
    bytes[4] = 7;
    rewrite_crc(bytes);
    CHECK(checkpoint_code(bytes) == LoadError::Code::VersionMismatch);
    bytes = good;
    bytes.resize(8);
    CHECK(checkpoint_code(bytes) == LoadError::Code::LengthMismatch);

    auto data = model_to_checkpoint(m);
    data.blobs.erase(data.blobs.begin());
    try {
      model_from_checkpoint(data);
      FAIL("expected LoadError");
    } catch (const LoadError& e) {
      CHECK(e.code() == LoadError::Code::Malformed);
    }
    data = model_to_checkpoint(m);
    data.blobs.front().data = MatrixXf::Zero(1, 1);
    try {
      model_from_checkpoint(data);
      FAIL("expected LoadError");
    } catch (const LoadError& e) {
      CHECK(e.code() == LoadError::Code::DimensionMismatch);
    }
  }

  TEST_CASE("attention traces are byte-exact and checksummed") {
    std::mt19937_64 rng(15);
    Model m(small_config(), 16);
    const auto r = m.forward(Tensor(random_matrix(5, 6, rng).cast<float>()), Tensor(random_matrix(4, 80, rng).cast<float>()), {});
    const auto bytes = encode_trace(r.trace);
    const auto back = decode_trace(bytes);
    CHECK(back.weights == r.trace.weights);
    CHECK(back.query == r.trace.query);
    CHECK(back.pooled_target == r.trace.pooled_target);
    CHECK(encode_trace(back) == bytes);
    auto bad = bytes;
    bad[bad.size() - 10] ^= 1;
    CHECK_THROWS_AS(decode_trace(bad), LoadError);
  }
}
