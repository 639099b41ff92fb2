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

// Layer building blocks shared by the voice-conversion network, the speaker
// embedder and the probing classifier. Activations are T x C (time on rows).

#pragma once

#include <random>
#include <string>
#include <vector>

#include "s2vc/optim.hpp"
#include "s2vc/tensor.hpp"

namespace s2vc::nn {

enum class Mode { Train, Infer };

/// Per-forward settings: batch-norm statistics source, dropout and its RNG.
struct RunContext {
  Mode mode = Mode::Infer;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;

  bool training() const { return mode == Mode::Train; }
};

/// Non-trainable state (batch-norm running statistics) exposed for checkpoints.
template <typename Scalar>
struct NamedBuffer {
  std::string name;
  Matrix<Scalar>* data;
};

template <typename Scalar>
BasicTensor<Scalar> apply_dropout(const BasicTensor<Scalar>& x, const RunContext& ctx);

/// Per-channel standardisation over time, no learned affine, eps = 1e-5.
template <typename Scalar>
BasicTensor<Scalar> instance_norm(const BasicTensor<Scalar>& x);

/// Softmax-weighted temporal average: alpha = softmax(h w) over time, returns alpha^T h (1 x d).
template <typename Scalar>
BasicTensor<Scalar> self_attention_pool(const BasicTensor<Scalar>& h,
                                        const BasicTensor<Scalar>& score_weights);

/// softmax(q k^T / sqrt(dq)) row-wise; q is Tq x dq, k is Tk x dq.
template <typename Scalar>
BasicTensor<Scalar> attention_weights(const BasicTensor<Scalar>& q, const BasicTensor<Scalar>& k);

template <typename Scalar>
class Linear {
 public:
  Linear() = default;
  Linear(Index in, Index out, std::mt19937_64& rng, bool bias = true);

  BasicTensor<Scalar> operator()(const BasicTensor<Scalar>& x) const;
  void collect(ParameterList<Scalar>& out, const std::string& prefix) const;

  Index in_features() const { return weight.rows(); }
  Index out_features() const { return weight.cols(); }

  BasicTensor<Scalar> weight;  // in x out
  BasicTensor<Scalar> bias;    // 1 x out
  bool has_bias = true;
};

/// Batch normalisation across time frames of one utterance.
template <typename Scalar>
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(Index channels, double momentum);

  /// Train: normalise with the utterance's statistics and update running ones.
  /// Infer: normalise with the running statistics (frame-independent).
  BasicTensor<Scalar> operator()(const BasicTensor<Scalar>& x, const RunContext& ctx);
  void collect(ParameterList<Scalar>& out, const std::string& prefix) const;
  void collect_buffers(std::vector<NamedBuffer<Scalar>>& out, const std::string& prefix);

  BasicTensor<Scalar> gamma, beta;
  Matrix<Scalar> running_mean, running_var;
  double momentum = 0.1;
  static constexpr double kEps = 1e-5;
};

template <typename Scalar>
class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(Index channels);

  BasicTensor<Scalar> operator()(const BasicTensor<Scalar>& x) const;
  void collect(ParameterList<Scalar>& out, const std::string& prefix) const;

  BasicTensor<Scalar> gamma, beta;
};

/// Temporal convolution with zero "same" padding; weight is (kernel * in) x out.
template <typename Scalar>
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(Index in, Index out, Index kernel, std::mt19937_64& rng);

  BasicTensor<Scalar> operator()(const BasicTensor<Scalar>& x) const;
  void collect(ParameterList<Scalar>& out, const std::string& prefix) const;

  BasicTensor<Scalar> weight, bias;
  Index kernel = 1;
};

template <typename Scalar>
class MultiHeadSelfAttention {
 public:
  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(Index d_model, Index heads, std::mt19937_64& rng);

  BasicTensor<Scalar> operator()(const BasicTensor<Scalar>& x, const RunContext& ctx) const;
  void collect(ParameterList<Scalar>& out, const std::string& prefix) const;

  Linear<Scalar> query, key, value, output;
  Index heads = 1;
};

/// Pre-norm feed-forward module: LN -> Linear -> Swish -> Linear.
template <typename Scalar>
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(Index d_model, Index hidden, std::mt19937_64& rng);

  BasicTensor<Scalar> operator()(const BasicTensor<Scalar>& x, const RunContext& ctx) const;
  void collect(ParameterList<Scalar>& out, const std::string& prefix) const;

  LayerNorm<Scalar> norm;
  Linear<Scalar> up, down;
};

/// LN -> pointwise (2d) -> GLU -> depthwise conv -> LN -> Swish -> pointwise.
template <typename Scalar>
class ConvModule {
 public:
  ConvModule() = default;
  ConvModule(Index d_model, Index kernel, std::mt19937_64& rng);

  BasicTensor<Scalar> operator()(const BasicTensor<Scalar>& x, const RunContext& ctx) const;
  void collect(ParameterList<Scalar>& out, const std::string& prefix) const;

  LayerNorm<Scalar> norm, mid_norm;
  Linear<Scalar> pointwise_in, pointwise_out;
  BasicTensor<Scalar> depthwise;  // kernel x d
};

/// Macaron conformer block:
///   x += FF/2; x += MHSA(LN x); x += Conv; x += FF/2; x = LN(x)
template <typename Scalar>
class ConformerBlock {
 public:
  ConformerBlock() = default;
  ConformerBlock(Index d_model, Index heads, Index ff_dim, Index conv_kernel, std::mt19937_64& rng);

  BasicTensor<Scalar> operator()(const BasicTensor<Scalar>& x, const RunContext& ctx) const;
  void collect(ParameterList<Scalar>& out, const std::string& prefix) const;

  FeedForward<Scalar> ff_first, ff_second;
  LayerNorm<Scalar> attention_norm, final_norm;
  MultiHeadSelfAttention<Scalar> attention;
  ConvModule<Scalar> conv;
};

}  // namespace s2vc::nn
