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

#include "s2vc/nn.hpp"

#include <cmath>

namespace s2vc::nn {

namespace {

template <typename S>
BasicTensor<S> uniform_param(Index rows, Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix<S> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(dist(rng));
  return BasicTensor<S>(std::move(m), true);
}

template <typename S>
void push(ParameterList<S>& out, const std::string& name, const BasicTensor<S>& t) {
  out.push_back({name, t});
}

}  // namespace

template <typename S>
BasicTensor<S> apply_dropout(const BasicTensor<S>& x, const RunContext& ctx) {
  if (!ctx.training() || ctx.dropout <= 0.0) return x;
  if (ctx.rng == nullptr) throw ContractError("dropout in train mode needs an RNG");
  return dropout(x, ctx.dropout, *ctx.rng);
}

template <typename S>
BasicTensor<S> instance_norm(const BasicTensor<S>& x) {
  return normalize_columns(x, S(1e-5));
}

template <typename S>
BasicTensor<S> self_attention_pool(const BasicTensor<S>& h, const BasicTensor<S>& score_weights) {
  if (h.rows() < 1) throw ContractError("self_attention_pool: empty sequence");
  BasicTensor<S> alpha = softmax(matmul(h, score_weights), 0);  // T x 1
  return matmul(transpose(alpha), h);
}

template <typename S>
BasicTensor<S> attention_weights(const BasicTensor<S>& q, const BasicTensor<S>& k) {
  if (k.rows() == 0) throw ContractError("attention: key sequence is empty");
  const S inv = S(1) / std::sqrt(static_cast<S>(q.cols()));
  return softmax(scale(matmul_nt(q, k), inv), 1);
}

// ---------------------------------------------------------------------------

template <typename S>
Linear<S>::Linear(Index in, Index out, std::mt19937_64& rng, bool bias) : has_bias(bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = uniform_param<S>(in, out, bound, rng);
  this->bias = has_bias ? uniform_param<S>(1, out, bound, rng) : BasicTensor<S>();
}

template <typename S>
BasicTensor<S> Linear<S>::operator()(const BasicTensor<S>& x) const {
  BasicTensor<S> y = matmul(x, weight);
  return has_bias ? add(y, bias) : y;
}

template <typename S>
void Linear<S>::collect(ParameterList<S>& out, const std::string& prefix) const {
  push(out, prefix + ".weight", weight);
  if (has_bias) push(out, prefix + ".bias", bias);
}

template <typename S>
BatchNorm<S>::BatchNorm(Index channels, double momentum_)
    : gamma(BasicTensor<S>::constant(1, channels, S(1), true)),
      beta(BasicTensor<S>::zeros(1, channels, true)),
      running_mean(Matrix<S>::Zero(1, channels)),
      running_var(Matrix<S>::Ones(1, channels)),
      momentum(momentum_) {}

template <typename S>
BasicTensor<S> BatchNorm<S>::operator()(const BasicTensor<S>& x, const RunContext& ctx) {
  if (x.cols() != gamma.cols()) {
    throw DimensionError("batch norm: input " + x.shape_string() + " vs " +
                         std::to_string(gamma.cols()) + " channels");
  }
  if (ctx.training()) {
    const Index t = x.rows();
    RowVector<S> mu = x.value().colwise().mean();
    RowVector<S> var = (x.value().rowwise() - mu).cwiseAbs2().colwise().mean();
    if (t > 1) var *= S(t) / S(t - 1);
    const S m = static_cast<S>(momentum);
    running_mean = (S(1) - m) * running_mean + m * mu;
    running_var = (S(1) - m) * running_var + m * var;
    return add(mul(normalize_columns(x, static_cast<S>(kEps)), gamma), beta);
  }
  RowVector<S> inv_std = (running_var.array() + static_cast<S>(kEps)).rsqrt().matrix();
  BasicTensor<S> centered = sub(x, BasicTensor<S>(running_mean));
  return add(mul(mul(centered, BasicTensor<S>(Matrix<S>(inv_std))), gamma), beta);
}

template <typename S>
void BatchNorm<S>::collect(ParameterList<S>& out, const std::string& prefix) const {
  push(out, prefix + ".gamma", gamma);
  push(out, prefix + ".beta", beta);
}

template <typename S>
void BatchNorm<S>::collect_buffers(std::vector<NamedBuffer<S>>& out, const std::string& prefix) {
  out.push_back({prefix + ".running_mean", &running_mean});
  out.push_back({prefix + ".running_var", &running_var});
}

template <typename S>
LayerNorm<S>::LayerNorm(Index channels)
    : gamma(BasicTensor<S>::constant(1, channels, S(1), true)),
      beta(BasicTensor<S>::zeros(1, channels, true)) {}

template <typename S>
BasicTensor<S> LayerNorm<S>::operator()(const BasicTensor<S>& x) const {
  return add(mul(normalize_rows(x, S(1e-5)), gamma), beta);
}

template <typename S>
void LayerNorm<S>::collect(ParameterList<S>& out, const std::string& prefix) const {
  push(out, prefix + ".gamma", gamma);
  push(out, prefix + ".beta", beta);
}

template <typename S>
Conv1d<S>::Conv1d(Index in, Index out, Index kernel_, std::mt19937_64& rng) : kernel(kernel_) {
  if (kernel % 2 == 0) throw ConfigError("conv1d: kernel size must be odd");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel));
  weight = uniform_param<S>(in * kernel, out, bound, rng);
  bias = uniform_param<S>(1, out, bound, rng);
}

template <typename S>
BasicTensor<S> Conv1d<S>::operator()(const BasicTensor<S>& x) const {
  if (x.cols() * kernel != weight.rows()) {
    throw DimensionError("conv1d: input " + x.shape_string() + " does not match weight " +
                         weight.shape_string());
  }
  return add(matmul(unfold_time(x, kernel), weight), bias);
}

template <typename S>
void Conv1d<S>::collect(ParameterList<S>& out, const std::string& prefix) const {
  push(out, prefix + ".weight", weight);
  push(out, prefix + ".bias", bias);
}

template <typename S>
MultiHeadSelfAttention<S>::MultiHeadSelfAttention(Index d_model, Index heads_, std::mt19937_64& rng)
    : query(d_model, d_model, rng),
      key(d_model, d_model, rng),
      value(d_model, d_model, rng),
      output(d_model, d_model, rng),
      heads(heads_) {
  if (heads < 1 || d_model % heads != 0) {
    throw ConfigError("attention: d_model " + std::to_string(d_model) +
                      " is not divisible by heads " + std::to_string(heads));
  }
}

template <typename S>
BasicTensor<S> MultiHeadSelfAttention<S>::operator()(const BasicTensor<S>& x,
                                                     const RunContext& ctx) const {
  const BasicTensor<S> q = query(x);
  const BasicTensor<S> k = key(x);
  const BasicTensor<S> v = value(x);
  const Index width = q.cols() / heads;
  std::vector<BasicTensor<S>> parts;
  parts.reserve(static_cast<std::size_t>(heads));
  for (Index h = 0; h < heads; ++h) {
    BasicTensor<S> w = attention_weights(slice_cols(q, h * width, width), slice_cols(k, h * width, width));
    w = apply_dropout(w, ctx);
    parts.push_back(matmul(w, slice_cols(v, h * width, width)));
  }
  BasicTensor<S> merged = heads == 1 ? parts.front() : concat_cols<S>(parts);
  return output(merged);
}

template <typename S>
void MultiHeadSelfAttention<S>::collect(ParameterList<S>& out, const std::string& prefix) const {
  query.collect(out, prefix + ".query");
  key.collect(out, prefix + ".key");
  value.collect(out, prefix + ".value");
  output.collect(out, prefix + ".output");
}

template <typename S>
FeedForward<S>::FeedForward(Index d_model, Index hidden, std::mt19937_64& rng)
    : norm(d_model), up(d_model, hidden, rng), down(hidden, d_model, rng) {}

template <typename S>
BasicTensor<S> FeedForward<S>::operator()(const BasicTensor<S>& x, const RunContext& ctx) const {
  BasicTensor<S> h = apply_dropout(swish(up(norm(x))), ctx);
  return apply_dropout(down(h), ctx);
}

template <typename S>
void FeedForward<S>::collect(ParameterList<S>& out, const std::string& prefix) const {
  norm.collect(out, prefix + ".norm");
  up.collect(out, prefix + ".up");
  down.collect(out, prefix + ".down");
}

template <typename S>
ConvModule<S>::ConvModule(Index d_model, Index kernel, std::mt19937_64& rng)
    : norm(d_model),
      mid_norm(d_model),
      pointwise_in(d_model, 2 * d_model, rng),
      pointwise_out(d_model, d_model, rng),
      depthwise(uniform_param<S>(kernel, d_model, 1.0 / std::sqrt(static_cast<double>(kernel)), rng)) {
  if (kernel % 2 == 0) throw ConfigError("conformer: conv kernel must be odd");
}

template <typename S>
BasicTensor<S> ConvModule<S>::operator()(const BasicTensor<S>& x, const RunContext& ctx) const {
  const Index d = x.cols();
  BasicTensor<S> h = pointwise_in(norm(x));
  h = mul(slice_cols(h, 0, d), sigmoid(slice_cols(h, d, d)));
  h = depthwise_conv(h, depthwise);
  h = swish(mid_norm(h));
  return apply_dropout(pointwise_out(h), ctx);
}

template <typename S>
void ConvModule<S>::collect(ParameterList<S>& out, const std::string& prefix) const {
  norm.collect(out, prefix + ".norm");
  pointwise_in.collect(out, prefix + ".pointwise_in");
  push(out, prefix + ".depthwise", depthwise);
  mid_norm.collect(out, prefix + ".mid_norm");
  pointwise_out.collect(out, prefix + ".pointwise_out");
}

template <typename S>
ConformerBlock<S>::ConformerBlock(Index d_model, Index heads, Index ff_dim, Index conv_kernel,
                                  std::mt19937_64& rng)
    : ff_first(d_model, ff_dim, rng),
      ff_second(d_model, ff_dim, rng),
      attention_norm(d_model),
      final_norm(d_model),
      attention(d_model, heads, rng),
      conv(d_model, conv_kernel, rng) {}

template <typename S>
BasicTensor<S> ConformerBlock<S>::operator()(const BasicTensor<S>& x, const RunContext& ctx) const {
  BasicTensor<S> h = add(x, scale(ff_first(x, ctx), S(0.5)));
  h = add(h, apply_dropout(attention(attention_norm(h), ctx), ctx));
  h = add(h, conv(h, ctx));
  h = add(h, scale(ff_second(h, ctx), S(0.5)));
  return final_norm(h);
}

template <typename S>
void ConformerBlock<S>::collect(ParameterList<S>& out, const std::string& prefix) const {
  ff_first.collect(out, prefix + ".ff_first");
  attention_norm.collect(out, prefix + ".attention_norm");
  attention.collect(out, prefix + ".attention");
  conv.collect(out, prefix + ".conv");
  ff_second.collect(out, prefix + ".ff_second");
  final_norm.collect(out, prefix + ".final_norm");
}

#define S2VC_INSTANTIATE(S)                                                                     \
  template BasicTensor<S> apply_dropout(const BasicTensor<S>&, const RunContext&);              \
  template BasicTensor<S> instance_norm(const BasicTensor<S>&);                                 \
  template BasicTensor<S> self_attention_pool(const BasicTensor<S>&, const BasicTensor<S>&);    \
  template BasicTensor<S> attention_weights(const BasicTensor<S>&, const BasicTensor<S>&);      \
  template class Linear<S>;                                                                     \
  template class BatchNorm<S>;                                                                  \
  template class LayerNorm<S>;                                                                  \
  template class Conv1d<S>;                                                                     \
  template class MultiHeadSelfAttention<S>;                                                     \
  template class FeedForward<S>;                                                                \
  template class ConvModule<S>;                                                                 \
  template class ConformerBlock<S>;

S2VC_INSTANTIATE(float)
S2VC_INSTANTIATE(double)

#undef S2VC_INSTANTIATE

}  // namespace s2vc::nn
