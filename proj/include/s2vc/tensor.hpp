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

// Dense 2-D tensors with define-by-run reverse-mode differentiation.
//
// Every model activation is a (rows x cols) matrix: time along rows, channels
// along columns. Scalars are 1x1 and vectors are 1xN. Operations are free
// functions; while a Tape is recording, any op that touches a tensor with
// requires_grad appends a backward closure to it.

#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "s2vc/errors.hpp"

namespace s2vc {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic, Eigen::RowMajor>;

using MatrixXf = Matrix<float>;
using MatrixXd = Matrix<double>;

template <typename Scalar>
class Tape;

template <typename Scalar>
class BasicTensor {
 public:
  using MatrixType = Matrix<Scalar>;

  BasicTensor();
  explicit BasicTensor(MatrixType value, bool requires_grad = false);

  static BasicTensor zeros(Index rows, Index cols, bool requires_grad = false);
  static BasicTensor constant(Index rows, Index cols, Scalar value, bool requires_grad = false);
  static BasicTensor scalar(Scalar value, bool requires_grad = false);

  Index rows() const { return impl_->value.rows(); }
  Index cols() const { return impl_->value.cols(); }
  Index size() const { return impl_->value.size(); }
  std::vector<Index> shape() const { return {rows(), cols()}; }
  std::string shape_string() const;

  const MatrixType& value() const { return impl_->value; }
  /// Mutable access for optimizers and initializers; never call on a taped intermediate.
  MatrixType& mutable_value() { return impl_->value; }

  bool requires_grad() const { return impl_->requires_grad; }
  /// Gradient buffer; only meaningful when requires_grad() is true.
  const MatrixType& grad() const;
  MatrixType& mutable_grad();
  void zero_grad();

  Scalar item() const;

  /// Same storage, detached from the tape (no gradient flow).
  BasicTensor detach() const;

  struct Impl {
    MatrixType value;
    MatrixType grad;
    bool requires_grad = false;
  };
  const std::shared_ptr<Impl>& impl() const { return impl_; }

 private:
  std::shared_ptr<Impl> impl_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Ordered record of differentiable operations for one forward pass.
///
/// Entries are appended in execution order, so the list is already
/// topologically sorted; backward() walks it once in reverse.
template <typename Scalar>
class Tape {
 public:
  using Impl = typename BasicTensor<Scalar>::Impl;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// RAII guard that makes a tape the thread's recording target.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  Scope record() { return Scope(*this); }

  /// Propagates d(loss)/d(x) into every requires_grad tensor on the tape.
  /// Gradients accumulate, so leaves shared across tapes sum their contributions.
  void backward(const BasicTensor<Scalar>& loss);

  void reset();
  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

  static Tape* active();

  // Used by op implementations.
  void push(std::vector<std::shared_ptr<Impl>> inputs, std::shared_ptr<Impl> output,
            std::function<void()> backward);

 private:
  struct Entry {
    std::vector<std::shared_ptr<Impl>> inputs;
    std::shared_ptr<Impl> output;
    std::function<void()> backward;
  };
  std::vector<Entry> entries_;
  bool consumed_ = false;
};

enum class Elementwise { Add, Sub, Mul, Relu, Exp, Log, Abs };

// Arithmetic. Binary ops accept equal shapes, a 1x1 operand, or a 1xN row
// broadcast against an MxN matrix; anything else throws DimensionError.
template <typename S> BasicTensor<S> add(const BasicTensor<S>& a, const BasicTensor<S>& b);
template <typename S> BasicTensor<S> sub(const BasicTensor<S>& a, const BasicTensor<S>& b);
template <typename S> BasicTensor<S> mul(const BasicTensor<S>& a, const BasicTensor<S>& b);
template <typename S> BasicTensor<S> scale(const BasicTensor<S>& a, S factor);
template <typename S> BasicTensor<S> relu(const BasicTensor<S>& a);
template <typename S> BasicTensor<S> exp(const BasicTensor<S>& a);
template <typename S> BasicTensor<S> log(const BasicTensor<S>& a);
template <typename S> BasicTensor<S> abs(const BasicTensor<S>& a);
template <typename S> BasicTensor<S> sigmoid(const BasicTensor<S>& a);
/// x * sigmoid(x)
template <typename S> BasicTensor<S> swish(const BasicTensor<S>& a);

template <typename S>
BasicTensor<S> elementwise(Elementwise op, const BasicTensor<S>& a,
                           const BasicTensor<S>& b = BasicTensor<S>());

template <typename S> BasicTensor<S> matmul(const BasicTensor<S>& a, const BasicTensor<S>& b);
/// a * b^T without materialising the transpose.
template <typename S> BasicTensor<S> matmul_nt(const BasicTensor<S>& a, const BasicTensor<S>& b);
template <typename S> BasicTensor<S> transpose(const BasicTensor<S>& a);

/// axis 1 normalises each row, axis 0 each column.
template <typename S> BasicTensor<S> softmax(const BasicTensor<S>& a, int axis = 1);

template <typename S> BasicTensor<S> sum(const BasicTensor<S>& a);
template <typename S> BasicTensor<S> mean(const BasicTensor<S>& a);
/// Column means as a 1xC row.
template <typename S> BasicTensor<S> mean_rows(const BasicTensor<S>& a);

/// Per-column standardisation over rows: (x - mu_c) / sqrt(var_c + eps), biased variance.
template <typename S> BasicTensor<S> normalize_columns(const BasicTensor<S>& a, S eps);
/// Per-row standardisation over columns (layer norm without affine).
template <typename S> BasicTensor<S> normalize_rows(const BasicTensor<S>& a, S eps);

/// Time unfolding for 1-D convolution with zero "same" padding: row t of the
/// result is [x_{t-p}, ..., x_{t+p}] concatenated, p = kernel/2. kernel must be odd.
template <typename S> BasicTensor<S> unfold_time(const BasicTensor<S>& a, Index kernel);
/// Depthwise temporal convolution, same padding. weights is kernel x C.
template <typename S>
BasicTensor<S> depthwise_conv(const BasicTensor<S>& a, const BasicTensor<S>& weights);

template <typename S> BasicTensor<S> concat_cols(std::span<const BasicTensor<S>> parts);
template <typename S> BasicTensor<S> concat_rows(std::span<const BasicTensor<S>> parts);
template <typename S> BasicTensor<S> slice_cols(const BasicTensor<S>& a, Index start, Index count);
template <typename S> BasicTensor<S> slice_rows(const BasicTensor<S>& a, Index start, Index count);

/// Inverted dropout; identity when p == 0.
template <typename S>
BasicTensor<S> dropout(const BasicTensor<S>& a, double p, std::mt19937_64& rng);

/// Mean softmax cross-entropy over rows; labels[i] indexes a column of logits.
template <typename S>
BasicTensor<S> softmax_cross_entropy(const BasicTensor<S>& logits, std::span<const int> labels);

/// Mean absolute error over all entries.
template <typename S>
BasicTensor<S> l1_loss(const BasicTensor<S>& prediction, const BasicTensor<S>& target);

}  // namespace s2vc
