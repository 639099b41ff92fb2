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

#include <array>

#include "s2vc/model.hpp"
#include "s2vc/nn.hpp"
#include "support.hpp"

namespace s2vc::testing {

namespace {

using M = MatrixXd;
using T = TensorD;

// Scalar loss with non-uniform weights, so that e.g. softmax rows do not sum to a constant.
T weighted(const T& out, std::uint64_t salt) {
  std::mt19937_64 rng(0x9e37u + salt);
  return sum(mul(out, T(random_matrix(out.rows(), out.cols(), rng))));
}

GradCase unary(const std::string& name, std::function<T(const T&)> op, M x, double tol = 1e-4) {
  return {name, tol, [=] {
            return check_gradients([op](const std::vector<T>& in) { return weighted(op(in[0]), 1); }, {x});
          }};
}

GradCase binary(const std::string& name, std::function<T(const T&, const T&)> op, M a, M b, double tol = 1e-4) {
  return {name, tol, [=] {
            return check_gradients([op](const std::vector<T>& in) { return weighted(op(in[0], in[1]), 2); },
                                   {a, b});
          }};
}

std::vector<T> leaves_of(const ParameterList<double>& params, const std::string& prefix = "") {
  std::vector<T> out;
  for (const auto& p : params) {
    if (p.name.rfind(prefix, 0) == 0) out.push_back(p.tensor);
  }
  return out;
}

template <typename Layer>
std::vector<T> layer_leaves(const Layer& layer) {
  ParameterList<double> params;
  layer.collect(params, "layer");
  return leaves_of(params);
}

ModelConfig toy_model_config() {
  ModelConfig c;
  c.d_model = 8;
  c.source_dim = 6;
  c.target_dim = 5;
  c.n_source_layers = 4;
  c.n_target_conv = 3;
  c.conv_kernel = 3;
  c.n_decoder_conformer = 1;
  c.conformer_heads = 2;
  c.conformer_ff_dim = 16;
  c.conformer_conv_kernel = 3;
  c.mel_dim = 5;
  c.dropout = 0.0;
  return c;
}

}  // namespace

std::vector<GradCase> gradient_cases(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto r = [&](Index rows, Index cols) { return random_matrix(rows, cols, rng); };
  auto nz = [&](Index rows, Index cols) { return random_away_from_zero(rows, cols, rng); };
  auto pos = [&](Index rows, Index cols) { return random_matrix(rows, cols, rng, 0.5, 2.0); };

  std::vector<GradCase> cases;
  cases.push_back(binary("add", [](const T& a, const T& b) { return add(a, b); }, r(3, 4), r(3, 4)));
  cases.push_back(binary("add/row-broadcast", [](const T& a, const T& b) { return add(a, b); }, r(3, 4), r(1, 4)));
  cases.push_back(binary("sub/scalar-broadcast", [](const T& a, const T& b) { return sub(a, b); }, r(3, 4), r(1, 1)));
  cases.push_back(binary("mul", [](const T& a, const T& b) { return mul(a, b); }, r(3, 4), r(3, 4)));
  cases.push_back(binary("mul/row-broadcast", [](const T& a, const T& b) { return mul(a, b); }, r(3, 4), r(1, 4)));
  cases.push_back(unary("scale", [](const T& a) { return scale(a, 2.5); }, r(3, 4)));
  cases.push_back(unary("relu", [](const T& a) { return relu(a); }, nz(3, 4)));
  cases.push_back(unary("exp", [](const T& a) { return exp(a); }, r(3, 4), 1e-3));
  cases.push_back(unary("log", [](const T& a) { return log(a); }, pos(3, 4), 1e-3));
  cases.push_back(unary("abs", [](const T& a) { return abs(a); }, nz(3, 4)));
  cases.push_back(unary("sigmoid", [](const T& a) { return sigmoid(a); }, r(3, 4)));
  cases.push_back(unary("swish", [](const T& a) { return swish(a); }, r(3, 4)));
  cases.push_back(binary("elementwise/mul", [](const T& a, const T& b) { return elementwise(Elementwise::Mul, a, b); },
                         r(2, 3), r(2, 3)));
  cases.push_back(unary("exp-log chain", [](const T& a) { return log(add(exp(a), T::scalar(1.0))); }, r(3, 4), 1e-3));
  cases.push_back(binary("matmul", [](const T& a, const T& b) { return matmul(a, b); }, r(3, 4), r(4, 2)));
  cases.push_back(binary("matmul_nt", [](const T& a, const T& b) { return matmul_nt(a, b); }, r(3, 4), r(2, 4)));
  cases.push_back(unary("transpose", [](const T& a) { return transpose(a); }, r(3, 4)));
  cases.push_back(unary("softmax/rows", [](const T& a) { return softmax(a, 1); }, r(3, 4), 1e-3));
  cases.push_back(unary("softmax/cols", [](const T& a) { return softmax(a, 0); }, r(3, 4), 1e-3));
  cases.push_back(unary("sum", [](const T& a) { return mul(sum(a), sum(a)); }, r(3, 4)));
  cases.push_back(unary("mean", [](const T& a) { return mul(mean(a), sum(a)); }, r(3, 4)));
  cases.push_back(unary("mean_rows", [](const T& a) { return mean_rows(a); }, r(4, 3)));
  cases.push_back(unary("normalize_columns", [](const T& a) { return normalize_columns(a, 1e-5); }, r(4, 3)));
  cases.push_back(unary("normalize_rows", [](const T& a) { return normalize_rows(a, 1e-5); }, r(3, 5)));
  cases.push_back(unary("unfold_time", [](const T& a) { return unfold_time(a, 3); }, r(4, 2)));
  cases.push_back(binary("depthwise_conv", [](const T& a, const T& w) { return depthwise_conv(a, w); }, r(4, 3), r(3, 3)));
  cases.push_back(binary("concat_cols",
                         [](const T& a, const T& b) {
                           const std::array<T, 2> parts{a, b};
                           return concat_cols<double>(parts);
                         },
                         r(3, 2), r(3, 3)));
  cases.push_back(binary("concat_rows",
                         [](const T& a, const T& b) {
                           const std::array<T, 2> parts{a, b};
                           return concat_rows<double>(parts);
                         },
                         r(2, 3), r(1, 3)));
  cases.push_back(unary("slice_cols", [](const T& a) { return slice_cols(a, 1, 2); }, r(3, 4)));
  cases.push_back(unary("slice_rows", [](const T& a) { return slice_rows(a, 1, 2); }, r(4, 3)));
  cases.push_back(unary("dropout",
                        [](const T& a) {
                          std::mt19937_64 mask_rng(11);
                          return dropout(a, 0.3, mask_rng);
                        },
                        r(4, 4)));
  cases.push_back(unary("softmax_cross_entropy",
                        [](const T& a) {
                          static const std::array<int, 4> labels{0, 2, 1, 2};
                          return softmax_cross_entropy<double>(a, labels);
                        },
                        r(4, 3), 1e-3));
  {
    const M target = r(3, 4);
    M pred = target + nz(3, 4);
    cases.push_back(unary("l1_loss", [target](const T& a) { return l1_loss(a, T(target)); }, pred));
  }

  // Layers: gradients with respect to the input and every parameter.
  auto layer_case = [&](const std::string& name, auto layer, M x, auto call) {
    return GradCase{name, 1e-4, [=]() mutable {
                      T input(x, true);
                      auto leaves = layer_leaves(layer);
                      leaves.push_back(input);
                      return check_gradients([&] { return weighted(call(layer, input), 3); }, leaves);
                    }};
  };
  const nn::RunContext train_ctx{nn::Mode::Train, 0.0, nullptr};
  const nn::RunContext infer_ctx;
  cases.push_back(GradCase{"instance_norm", 1e-4, [x = r(4, 3)] {
                             return check_gradients(
                                 [](const std::vector<T>& in) { return weighted(nn::instance_norm(in[0]), 4); }, {x});
                           }});
  cases.push_back(binary("self_attention_pool",
                         [](const T& h, const T& w) { return nn::self_attention_pool(h, w); }, r(4, 3), r(3, 1), 1e-3));
  cases.push_back(binary("attention_weights", [](const T& q, const T& k) { return nn::attention_weights(q, k); },
                         r(4, 3), r(3, 3), 1e-3));
  cases.push_back(layer_case("Linear", nn::Linear<double>(3, 4, rng), r(4, 3),
                             [](auto& l, const T& x) { return l(x); }));
  cases.push_back(layer_case("BatchNorm/train", nn::BatchNorm<double>(3, 0.1), r(4, 3),
                             [train_ctx](auto& l, const T& x) { return l(x, train_ctx); }));
  cases.push_back(layer_case("LayerNorm", nn::LayerNorm<double>(5), r(3, 5), [](auto& l, const T& x) { return l(x); }));
  cases.push_back(layer_case("Conv1d", nn::Conv1d<double>(3, 2, 3, rng), r(4, 3),
                             [](auto& l, const T& x) { return l(x); }));
  cases.push_back(layer_case("MultiHeadSelfAttention", nn::MultiHeadSelfAttention<double>(8, 2, rng), r(4, 8),
                             [infer_ctx](auto& l, const T& x) { return l(x, infer_ctx); }));
  cases.push_back(layer_case("FeedForward", nn::FeedForward<double>(8, 16, rng), r(4, 8),
                             [infer_ctx](auto& l, const T& x) { return l(x, infer_ctx); }));
  cases.push_back(layer_case("ConvModule", nn::ConvModule<double>(8, 3, rng), r(4, 8),
                             [infer_ctx](auto& l, const T& x) { return l(x, infer_ctx); }));

  // Composed toys.
  cases.push_back(layer_case("toy/conformer-block", nn::ConformerBlock<double>(8, 2, 16, 3, rng), r(4, 8),
                             [infer_ctx](auto& l, const T& x) { return l(x, infer_ctx); }));
  cases.push_back(GradCase{"toy/source-encoder", 1e-4, [x = r(4, 6), seed, train_ctx] {
                             S2VCModel<double> model(toy_model_config(), seed);
                             T input(x, true);
                             auto leaves = leaves_of(model.parameters(), "source.");
                             leaves.push_back(input);
                             return check_gradients(
                                 [&] { return weighted(model.source_encode(input, train_ctx), 5); }, leaves);
                           }});
  for (const bool constrained : {true, false}) {
    const std::string name = constrained ? "toy/cross-attention" : "toy/cross-attention (no IN, no bottleneck)";
    cases.push_back(GradCase{name, 1e-4, [src = r(4, 8), tgt = r(3, 8), seed, constrained] {
                               ModelConfig c = toy_model_config();
                               c.use_bottleneck = c.use_instance_norm = constrained;
                               S2VCModel<double> model(c, seed);
                               T s(src, true), t(tgt, true);
                               auto leaves = leaves_of(model.parameters(), "attention");
                               leaves.push_back(s);
                               leaves.push_back(t);
                               return check_gradients([&] { return weighted(model.cross_attention(s, t).first, 6); },
                                                      leaves);
                             }});
  }
  cases.push_back(GradCase{"toy/full-model", 1e-4, [src = r(4, 6), tgt = r(3, 5), seed, train_ctx] {
                             S2VCModel<double> model(toy_model_config(), seed);
                             const T s(src), t(tgt);
                             return check_gradients([&] { return weighted(model.forward(s, t, train_ctx).mel, 7); },
                                                    leaves_of(model.parameters()));
                           }});
  return cases;
}

}  // namespace s2vc::testing
