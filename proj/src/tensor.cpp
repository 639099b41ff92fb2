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

#include "s2vc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace s2vc {

namespace {

template <typename S>
Tape<S>*& active_slot() {
  thread_local Tape<S>* slot = nullptr;
  return slot;
}

template <typename S>
using ImplPtr = std::shared_ptr<typename BasicTensor<S>::Impl>;

template <typename S>
std::string shape_of(const Matrix<S>& m) {
  std::ostringstream os;
  os << "[" << m.rows() << "x" << m.cols() << "]";
  return os.str();
}

template <typename S>
void check_finite(const char* op, const Matrix<S>& value) {
  if (!value.allFinite()) {
    throw NumericError(std::string(op) + ": produced a non-finite value");
  }
}

template <typename S>
void accumulate(const ImplPtr<S>& target, const Matrix<S>& contribution) {
  if (target->requires_grad) target->grad += contribution;
}

// Wraps a freshly computed value; when a tape is recording and any input
// participates in differentiation, registers `backward(grad_out, inputs)`.
template <typename S, typename Backward>
BasicTensor<S> record(const char* op, Matrix<S> value, std::vector<BasicTensor<S>> inputs,
                      Backward backward) {
  check_finite(op, value);
  Tape<S>* tape = Tape<S>::active();
  const bool track =
      tape != nullptr && std::any_of(inputs.begin(), inputs.end(),
                                     [](const BasicTensor<S>& t) { return t.requires_grad(); });
  BasicTensor<S> out(std::move(value), track);
  if (track) {
    std::vector<ImplPtr<S>> in;
    in.reserve(inputs.size());
    for (const auto& t : inputs) in.push_back(t.impl());
    ImplPtr<S> out_impl = out.impl();
    tape->push(in, out_impl, [in, out_impl, backward]() { backward(out_impl->grad, in); });
  }
  return out;
}

enum class Broadcast { Same, LeftScalar, RightScalar, LeftRow, RightRow };

template <typename S>
Broadcast broadcast_kind(const char* op, const Matrix<S>& a, const Matrix<S>& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::Same;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::RightScalar;
  if (a.rows() == 1 && a.cols() == 1) return Broadcast::LeftScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::RightRow;
  if (a.rows() == 1 && a.cols() == b.cols()) return Broadcast::LeftRow;
  throw DimensionError(std::string(op) + ": shapes " + shape_of(a) + " and " + shape_of(b) +
                       " are not broadcast-compatible");
}

template <typename S>
Matrix<S> expand(const Matrix<S>& x, Index rows, Index cols) {
  if (x.rows() == rows && x.cols() == cols) return x;
  if (x.rows() == 1 && x.cols() == 1) return Matrix<S>::Constant(rows, cols, x(0, 0));
  return x.replicate(rows, 1);
}

template <typename S>
Matrix<S> reduce_to(const Matrix<S>& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Matrix<S>::Constant(1, 1, g.sum());
  return g.colwise().sum();
}

template <typename S, typename Forward, typename Backward>
BasicTensor<S> binary(const char* op, const BasicTensor<S>& a, const BasicTensor<S>& b,
                      Forward forward, Backward backward) {
  broadcast_kind(op, a.value(), b.value());
  const Index rows = std::max(a.rows(), b.rows());
  const Index cols = std::max(a.cols(), b.cols());
  Matrix<S> ea = expand(a.value(), rows, cols);
  Matrix<S> eb = expand(b.value(), rows, cols);
  Matrix<S> out = forward(ea, eb);
  const Index ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  return record<S>(op, std::move(out), {a, b},
                   [ea, eb, ar, ac, br, bc, backward](const Matrix<S>& g,
                                                      const std::vector<ImplPtr<S>>& in) {
                     Matrix<S> ga, gb;
                     backward(g, ea, eb, ga, gb);
                     accumulate<S>(in[0], reduce_to<S>(ga, ar, ac));
                     accumulate<S>(in[1], reduce_to<S>(gb, br, bc));
                   });
}

template <typename S, typename Forward, typename Derivative>
BasicTensor<S> unary(const char* op, const BasicTensor<S>& a, Forward forward,
                     Derivative derivative) {
  Matrix<S> out = forward(a.value());
  Matrix<S> x = a.value();
  Matrix<S> y = out;
  return record<S>(op, std::move(out), {a},
                   [x, y, derivative](const Matrix<S>& g, const std::vector<ImplPtr<S>>& in) {
                     accumulate<S>(in[0], derivative(g, x, y));
                   });
}

}  // namespace

const char* to_string(LoadError::Code code) {
  switch (code) {
    case LoadError::Code::Io: return "io";
    case LoadError::Code::BadMagic: return "bad-magic";
    case LoadError::Code::VersionMismatch: return "version-mismatch";
    case LoadError::Code::UnsupportedDtype: return "unsupported-dtype";
    case LoadError::Code::LengthMismatch: return "length-mismatch";
    case LoadError::Code::DimensionMismatch: return "dimension-mismatch";
    case LoadError::Code::NonFinite: return "non-finite";
    case LoadError::Code::ChecksumMismatch: return "checksum-mismatch";
    case LoadError::Code::KindMismatch: return "kind-mismatch";
    case LoadError::Code::Malformed: return "malformed";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// BasicTensor

template <typename S>
BasicTensor<S>::BasicTensor() : impl_(std::make_shared<Impl>()) {}

template <typename S>
BasicTensor<S>::BasicTensor(MatrixType value, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  impl_->requires_grad = requires_grad;
  if (requires_grad) impl_->grad = MatrixType::Zero(value.rows(), value.cols());
  impl_->value = std::move(value);
}

template <typename S>
BasicTensor<S> BasicTensor<S>::zeros(Index rows, Index cols, bool requires_grad) {
  return BasicTensor(MatrixType::Zero(rows, cols), requires_grad);
}

template <typename S>
BasicTensor<S> BasicTensor<S>::constant(Index rows, Index cols, S value, bool requires_grad) {
  return BasicTensor(MatrixType::Constant(rows, cols, value), requires_grad);
}

template <typename S>
BasicTensor<S> BasicTensor<S>::scalar(S value, bool requires_grad) {
  return constant(1, 1, value, requires_grad);
}

template <typename S>
std::string BasicTensor<S>::shape_string() const {
  return shape_of(impl_->value);
}

template <typename S>
const typename BasicTensor<S>::MatrixType& BasicTensor<S>::grad() const {
  if (!impl_->requires_grad) throw ContractError("grad(): tensor does not require grad");
  return impl_->grad;
}

template <typename S>
typename BasicTensor<S>::MatrixType& BasicTensor<S>::mutable_grad() {
  if (!impl_->requires_grad) throw ContractError("grad(): tensor does not require grad");
  return impl_->grad;
}

template <typename S>
void BasicTensor<S>::zero_grad() {
  if (impl_->requires_grad) impl_->grad.setZero(impl_->value.rows(), impl_->value.cols());
}

template <typename S>
S BasicTensor<S>::item() const {
  if (size() != 1) throw ContractError("item(): tensor " + shape_string() + " is not a scalar");
  return impl_->value(0, 0);
}

template <typename S>
BasicTensor<S> BasicTensor<S>::detach() const {
  return BasicTensor(impl_->value, false);
}

// ---------------------------------------------------------------------------
// Tape

template <typename S>
Tape<S>::Scope::Scope(Tape& tape) : previous_(active_slot<S>()) {
  active_slot<S>() = &tape;
}

template <typename S>
Tape<S>::Scope::~Scope() {
  active_slot<S>() = previous_;
}

template <typename S>
Tape<S>* Tape<S>::active() {
  return active_slot<S>();
}

template <typename S>
void Tape<S>::push(std::vector<std::shared_ptr<Impl>> inputs, std::shared_ptr<Impl> output,
                   std::function<void()> backward) {
  if (consumed_) throw ContractError("tape already consumed by backward(); call reset()");
  entries_.push_back({std::move(inputs), std::move(output), std::move(backward)});
}

template <typename S>
void Tape<S>::backward(const BasicTensor<S>& loss) {
  if (consumed_) throw ContractError("backward() called twice on the same tape without reset()");
  if (loss.size() != 1) {
    throw ContractError("backward(): loss must be a scalar, got " + loss.shape_string());
  }
  if (entries_.empty() || !loss.requires_grad()) {
    throw ContractError("backward(): loss was not produced on this tape");
  }
  loss.impl()->grad(0, 0) += S(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backward();
  entries_.clear();
  consumed_ = true;
}

template <typename S>
void Tape<S>::reset() {
  entries_.clear();
  consumed_ = false;
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename S>
BasicTensor<S> add(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  return binary<S>(
      "add", a, b, [](const Matrix<S>& x, const Matrix<S>& y) -> Matrix<S> { return x + y; },
      [](const Matrix<S>& g, const Matrix<S>&, const Matrix<S>&, Matrix<S>& ga, Matrix<S>& gb) {
        ga = g;
        gb = g;
      });
}

template <typename S>
BasicTensor<S> sub(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  return binary<S>(
      "sub", a, b, [](const Matrix<S>& x, const Matrix<S>& y) -> Matrix<S> { return x - y; },
      [](const Matrix<S>& g, const Matrix<S>&, const Matrix<S>&, Matrix<S>& ga, Matrix<S>& gb) {
        ga = g;
        gb = -g;
      });
}

template <typename S>
BasicTensor<S> mul(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  return binary<S>(
      "mul", a, b,
      [](const Matrix<S>& x, const Matrix<S>& y) -> Matrix<S> { return x.cwiseProduct(y); },
      [](const Matrix<S>& g, const Matrix<S>& x, const Matrix<S>& y, Matrix<S>& ga,
         Matrix<S>& gb) {
        ga = g.cwiseProduct(y);
        gb = g.cwiseProduct(x);
      });
}

template <typename S>
BasicTensor<S> scale(const BasicTensor<S>& a, S factor) {
  return unary<S>(
      "scale", a, [factor](const Matrix<S>& x) -> Matrix<S> { return x * factor; },
      [factor](const Matrix<S>& g, const Matrix<S>&, const Matrix<S>&) -> Matrix<S> {
        return g * factor;
      });
}

template <typename S>
BasicTensor<S> relu(const BasicTensor<S>& a) {
  return unary<S>(
      "relu", a, [](const Matrix<S>& x) -> Matrix<S> { return x.cwiseMax(S(0)); },
      [](const Matrix<S>& g, const Matrix<S>& x, const Matrix<S>&) -> Matrix<S> {
        return (x.array() > S(0)).select(g, S(0));
      });
}

template <typename S>
BasicTensor<S> exp(const BasicTensor<S>& a) {
  return unary<S>(
      "exp", a, [](const Matrix<S>& x) -> Matrix<S> { return x.array().exp().matrix(); },
      [](const Matrix<S>& g, const Matrix<S>&, const Matrix<S>& y) -> Matrix<S> {
        return g.cwiseProduct(y);
      });
}

template <typename S>
BasicTensor<S> log(const BasicTensor<S>& a) {
  if ((a.value().array() <= S(0)).any()) {
    throw NumericError("log: argument outside the domain (x <= 0)");
  }
  return unary<S>(
      "log", a, [](const Matrix<S>& x) -> Matrix<S> { return x.array().log().matrix(); },
      [](const Matrix<S>& g, const Matrix<S>& x, const Matrix<S>&) -> Matrix<S> {
        return g.cwiseQuotient(x);
      });
}

template <typename S>
BasicTensor<S> abs(const BasicTensor<S>& a) {
  return unary<S>(
      "abs", a, [](const Matrix<S>& x) -> Matrix<S> { return x.cwiseAbs(); },
      [](const Matrix<S>& g, const Matrix<S>& x, const Matrix<S>&) -> Matrix<S> {
        return g.cwiseProduct(x.unaryExpr([](S v) { return S((v > S(0)) - (v < S(0))); }));
      });
}

template <typename S>
BasicTensor<S> sigmoid(const BasicTensor<S>& a) {
  return unary<S>(
      "sigmoid", a,
      [](const Matrix<S>& x) -> Matrix<S> {
        return x.unaryExpr([](S v) { return S(1) / (S(1) + std::exp(-v)); });
      },
      [](const Matrix<S>& g, const Matrix<S>&, const Matrix<S>& y) -> Matrix<S> {
        return g.cwiseProduct(y.cwiseProduct((S(1) - y.array()).matrix()));
      });
}

template <typename S>
BasicTensor<S> swish(const BasicTensor<S>& a) {
  return unary<S>(
      "swish", a,
      [](const Matrix<S>& x) -> Matrix<S> {
        return x.unaryExpr([](S v) { return v / (S(1) + std::exp(-v)); });
      },
      [](const Matrix<S>& g, const Matrix<S>& x, const Matrix<S>&) -> Matrix<S> {
        Matrix<S> d = x.unaryExpr([](S v) {
          const S s = S(1) / (S(1) + std::exp(-v));
          return s * (S(1) + v * (S(1) - s));
        });
        return g.cwiseProduct(d);
      });
}

template <typename S>
BasicTensor<S> elementwise(Elementwise op, const BasicTensor<S>& a, const BasicTensor<S>& b) {
  switch (op) {
    case Elementwise::Add: return add(a, b);
    case Elementwise::Sub: return sub(a, b);
    case Elementwise::Mul: return mul(a, b);
    case Elementwise::Relu: return relu(a);
    case Elementwise::Exp: return exp(a);
    case Elementwise::Log: return log(a);
    case Elementwise::Abs: return abs(a);
  }
  throw ContractError("elementwise: unknown op");
}

// ---------------------------------------------------------------------------
// Linear algebra

template <typename S>
BasicTensor<S> matmul(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ for " + a.shape_string() + " x " +
                         b.shape_string());
  }
  Matrix<S> out = a.value() * b.value();
  Matrix<S> av = a.value();
  Matrix<S> bv = b.value();
  return record<S>("matmul", std::move(out), {a, b},
                   [av, bv](const Matrix<S>& g, const std::vector<ImplPtr<S>>& in) {
                     if (in[0]->requires_grad) in[0]->grad.noalias() += g * bv.transpose();
                     if (in[1]->requires_grad) in[1]->grad.noalias() += av.transpose() * g;
                   });
}

template <typename S>
BasicTensor<S> matmul_nt(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: inner dimensions differ for " + a.shape_string() +
                         " x " + b.shape_string() + "^T");
  }
  Matrix<S> out = a.value() * b.value().transpose();
  Matrix<S> av = a.value();
  Matrix<S> bv = b.value();
  return record<S>("matmul_nt", std::move(out), {a, b},
                   [av, bv](const Matrix<S>& g, const std::vector<ImplPtr<S>>& in) {
                     if (in[0]->requires_grad) in[0]->grad.noalias() += g * bv;
                     if (in[1]->requires_grad) in[1]->grad.noalias() += g.transpose() * av;
                   });
}

template <typename S>
BasicTensor<S> transpose(const BasicTensor<S>& a) {
  Matrix<S> out = a.value().transpose();
  return record<S>("transpose", std::move(out), {a},
                   [](const Matrix<S>& g, const std::vector<ImplPtr<S>>& in) {
                     accumulate<S>(in[0], g.transpose());
                   });
}

// ---------------------------------------------------------------------------
// Softmax and reductions

template <typename S>
BasicTensor<S> softmax(const BasicTensor<S>& a, int axis) {
  if (axis != 0 && axis != 1) throw ContractError("softmax: axis must be 0 or 1");
  Matrix<S> y(a.rows(), a.cols());
  if (axis == 1) {
    for (Index r = 0; r < a.rows(); ++r) {
      const S m = a.value().row(r).maxCoeff();
      y.row(r) = (a.value().row(r).array() - m).exp().matrix();
      y.row(r) /= y.row(r).sum();
    }
  } else {
    for (Index c = 0; c < a.cols(); ++c) {
      const S m = a.value().col(c).maxCoeff();
      y.col(c) = (a.value().col(c).array() - m).exp().matrix();
      y.col(c) /= y.col(c).sum();
    }
  }
  Matrix<S> yv = y;
  return record<S>("softmax", std::move(y), {a},
                   [yv, axis](const Matrix<S>& g, const std::vector<ImplPtr<S>>& in) {
                     if (!in[0]->requires_grad) return;
                     Matrix<S> gy = g.cwiseProduct(yv);
                     if (axis == 1) {
                       Eigen::Matrix<S, Eigen::Dynamic, 1> dot = gy.rowwise().sum();
                       in[0]->grad += gy - (yv.array().colwise() * dot.array()).matrix();
                     } else {
                       RowVector<S> dot = gy.colwise().sum();
                       in[0]->grad += gy - (yv.array().rowwise() * dot.array()).matrix();
                     }
                   });
}

template <typename S>
BasicTensor<S> sum(const BasicTensor<S>& a) {
  Matrix<S> out = Matrix<S>::Constant(1, 1, a.value().sum());
  const Index r = a.rows(), c = a.cols();
  return record<S>("sum", std::move(out), {a},
                   [r, c](const Matrix<S>& g, const std::vector<ImplPtr<S>>& in) {
                     accumulate<S>(in[0], Matrix<S>::Constant(r, c, g(0, 0)));
                   });
}

template <typename S>
BasicTensor<S> mean(const BasicTensor<S>& a) {
  if (a.size() == 0) throw ContractError("mean: empty tensor");
  return scale(sum(a), S(1) / S(a.size()));
}

template <typename S>
BasicTensor<S> mean_rows(const BasicTensor<S>& a) {
  if (a.rows() == 0) throw ContractError("mean_rows: empty tensor");
  Matrix<S> out = a.value().colwise().mean();
  const Index r = a.rows();
  return record<S>("mean_rows", std::move(out), {a},
                   [r](const Matrix<S>& g, const std::vector<ImplPtr<S>>& in) {
                     accumulate<S>(in[0], (g / S(r)).replicate(r, 1));
                   });
}

// ---------------------------------------------------------------------------
// Normalisation

template <typename S>
BasicTensor<S> normalize_columns(const BasicTensor<S>& a, S eps) {
  const Index t = a.rows();
  if (t == 0) throw ContractError("normalize_columns: empty tensor");
  RowVector<S> mu = a.value().colwise().mean();
  Matrix<S> centered = a.value().rowwise() - mu;
  RowVector<S> var = centered.cwiseAbs2().colwise().mean();
  RowVector<S> inv_std = (var.array() + eps).rsqrt().matrix();
  Matrix<S> y = (centered.array().rowwise() * inv_std.array()).matrix();
  Matrix<S> yv = y;
  return record<S>("normalize_columns", std::move(y), {a},
                   [yv, inv_std, t](const Matrix<S>& g, const std::vector<ImplPtr<S>>& in) {
                     if (!in[0]->requires_grad) return;
                     RowVector<S> g_mean = g.colwise().mean();
                     RowVector<S> gy_mean = g.cwiseProduct(yv).colwise().mean();
                     Matrix<S> d = g.rowwise() - g_mean;
                     d -= (yv.array().rowwise() * gy_mean.array()).matrix();
                     in[0]->grad += (d.array().rowwise() * inv_std.array()).matrix();
                   });
}

template <typename S>
BasicTensor<S> normalize_rows(const BasicTensor<S>& a, S eps) {
  if (a.cols() == 0) throw ContractError("normalize_rows: empty tensor");
  using Col = Eigen::Matrix<S, Eigen::Dynamic, 1>;
  Col mu = a.value().rowwise().mean();
  Matrix<S> centered = a.value().colwise() - mu;
  Col var = centered.cwiseAbs2().rowwise().mean();
  Col inv_std = (var.array() + eps).rsqrt().matrix();
  Matrix<S> y = (centered.array().colwise() * inv_std.array()).matrix();
  Matrix<S> yv = y;
  return record<S>("normalize_rows", std::move(y), {a},
                   [yv, inv_std](const Matrix<S>& g, const std::vector<ImplPtr<S>>& in) {
                     if (!in[0]->requires_grad) return;
                     Col g_mean = g.rowwise().mean();
                     Col gy_mean = g.cwiseProduct(yv).rowwise().mean();
                     Matrix<S> d = g.colwise() - g_mean;
                     d -= (yv.array().colwise() * gy_mean.array()).matrix();
                     in[0]->grad += (d.array().colwise() * inv_std.array()).matrix();
                   });
}

// ---------------------------------------------------------------------------
// Temporal convolution helpers

template <typename S>
BasicTensor<S> unfold_time(const BasicTensor<S>& a, Index kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw ContractError("unfold_time: kernel must be odd");
  const Index t = a.rows(), c = a.cols(), pad = kernel / 2;
  Matrix<S> out = Matrix<S>::Zero(t, kernel * c);
  for (Index i = 0; i < t; ++i) {
    for (Index j = 0; j < kernel; ++j) {
      const Index src = i + j - pad;
      if (src >= 0 && src < t) out.block(i, j * c, 1, c) = a.value().row(src);
    }
  }
  return record<S>("unfold_time", std::move(out), {a},
                   [t, c, kernel, pad](const Matrix<S>& g, const std::vector<ImplPtr<S>>& in) {
                     if (!in[0]->requires_grad) return;
                     for (Index i = 0; i < t; ++i) {
                       for (Index j = 0; j < kernel; ++j) {
                         const Index src = i + j - pad;
                         if (src >= 0 && src < t) in[0]->grad.row(src) += g.block(i, j * c, 1, c);
                       }
                     }
                   });
}

template <typename S>
BasicTensor<S> depthwise_conv(const BasicTensor<S>& a, const BasicTensor<S>& weights) {
  const Index t = a.rows(), c = a.cols(), kernel = weights.rows();
  if (weights.cols() != c) {
    throw DimensionError("depthwise_conv: weights " + weights.shape_string() +
                         " do not match input " + a.shape_string());
  }
  if (kernel % 2 == 0) throw ContractError("depthwise_conv: kernel must be odd");
  const Index pad = kernel / 2;
  const Matrix<S>& x = a.value();
  const Matrix<S>& w = weights.value();
  Matrix<S> out = Matrix<S>::Zero(t, c);
  for (Index i = 0; i < t; ++i) {
    for (Index j = 0; j < kernel; ++j) {
      const Index src = i + j - pad;
      if (src >= 0 && src < t) out.row(i) += w.row(j).cwiseProduct(x.row(src));
    }
  }
  Matrix<S> xv = x;
  Matrix<S> wv = w;
  return record<S>(
      "depthwise_conv", std::move(out), {a, weights},
      [xv, wv, t, kernel, pad](const Matrix<S>& g, const std::vector<ImplPtr<S>>& in) {
        for (Index i = 0; i < t; ++i) {
          for (Index j = 0; j < kernel; ++j) {
            const Index src = i + j - pad;
            if (src < 0 || src >= t) continue;
            if (in[0]->requires_grad) in[0]->grad.row(src) += wv.row(j).cwiseProduct(g.row(i));
            if (in[1]->requires_grad) in[1]->grad.row(j) += xv.row(src).cwiseProduct(g.row(i));
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Reshaping

template <typename S>
BasicTensor<S> concat_cols(std::span<const BasicTensor<S>> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const Index rows = parts[0].rows();
  Index cols = 0;
  std::vector<Index> widths;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row counts differ (" + parts[0].shape_string() + " vs " +
                           p.shape_string() + ")");
    }
    widths.push_back(p.cols());
    cols += p.cols();
  }
  Matrix<S> out(rows, cols);
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  return record<S>("concat_cols", std::move(out),
                   std::vector<BasicTensor<S>>(parts.begin(), parts.end()),
                   [widths](const Matrix<S>& g, const std::vector<ImplPtr<S>>& in) {
                     Index off = 0;
                     for (std::size_t i = 0; i < in.size(); ++i) {
                       accumulate<S>(in[i], g.middleCols(off, widths[i]));
                       off += widths[i];
                     }
                   });
}

template <typename S>
BasicTensor<S> concat_rows(std::span<const BasicTensor<S>> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const Index cols = parts[0].cols();
  Index rows = 0;
  std::vector<Index> heights;
  for (const auto& p : parts) {
    if (p.cols() != cols) {
      throw DimensionError("concat_rows: column counts differ (" + parts[0].shape_string() +
                           " vs " + p.shape_string() + ")");
    }
    heights.push_back(p.rows());
    rows += p.rows();
  }
  Matrix<S> out(rows, cols);
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
  }
  return record<S>("concat_rows", std::move(out),
                   std::vector<BasicTensor<S>>(parts.begin(), parts.end()),
                   [heights](const Matrix<S>& g, const std::vector<ImplPtr<S>>& in) {
                     Index off = 0;
                     for (std::size_t i = 0; i < in.size(); ++i) {
                       accumulate<S>(in[i], g.middleRows(off, heights[i]));
                       off += heights[i];
                     }
                   });
}

template <typename S>
BasicTensor<S> slice_cols(const BasicTensor<S>& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw DimensionError("slice_cols: range out of bounds for " + a.shape_string());
  }
  Matrix<S> out = a.value().middleCols(start, count);
  return record<S>("slice_cols", std::move(out), {a},
                   [start, count](const Matrix<S>& g, const std::vector<ImplPtr<S>>& in) {
                     if (in[0]->requires_grad) in[0]->grad.middleCols(start, count) += g;
                   });
}

template <typename S>
BasicTensor<S> slice_rows(const BasicTensor<S>& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw DimensionError("slice_rows: range out of bounds for " + a.shape_string());
  }
  Matrix<S> out = a.value().middleRows(start, count);
  return record<S>("slice_rows", std::move(out), {a},
                   [start, count](const Matrix<S>& g, const std::vector<ImplPtr<S>>& in) {
                     if (in[0]->requires_grad) in[0]->grad.middleRows(start, count) += g;
                   });
}

template <typename S>
BasicTensor<S> dropout(const BasicTensor<S>& a, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) throw ContractError("dropout: p must be < 1");
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Matrix<S> mask(a.rows(), a.cols());
  const S keep = S(1.0 / (1.0 - p));
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = uniform(rng) < p ? S(0) : keep;
  return mul(a, BasicTensor<S>(std::move(mask)));
}

template <typename S>
BasicTensor<S> softmax_cross_entropy(const BasicTensor<S>& logits, std::span<const int> labels) {
  const Index n = logits.rows(), k = logits.cols();
  if (static_cast<Index>(labels.size()) != n) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + logits.shape_string());
  }
  if (n == 0) throw ContractError("softmax_cross_entropy: empty batch");
  Matrix<S> prob(n, k);
  S loss = 0;
  for (Index r = 0; r < n; ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= k) throw ContractError("softmax_cross_entropy: label out of range");
    const S m = logits.value().row(r).maxCoeff();
    prob.row(r) = (logits.value().row(r).array() - m).exp().matrix();
    const S z = prob.row(r).sum();
    prob.row(r) /= z;
    loss += (m + std::log(z)) - logits.value()(r, y);
  }
  loss /= S(n);
  std::vector<int> lab(labels.begin(), labels.end());
  return record<S>("softmax_cross_entropy", Matrix<S>::Constant(1, 1, loss), {logits},
                   [prob, lab, n](const Matrix<S>& g, const std::vector<ImplPtr<S>>& in) {
                     if (!in[0]->requires_grad) return;
                     Matrix<S> d = prob;
                     for (Index r = 0; r < n; ++r) d(r, lab[static_cast<std::size_t>(r)]) -= S(1);
                     in[0]->grad += d * (g(0, 0) / S(n));
                   });
}

template <typename S>
BasicTensor<S> l1_loss(const BasicTensor<S>& prediction, const BasicTensor<S>& target) {
  if (prediction.rows() != target.rows() || prediction.cols() != target.cols()) {
    throw DimensionError("l1_loss: prediction " + prediction.shape_string() +
                         " and target " + target.shape_string() + " differ");
  }
  return mean(abs(sub(prediction, target)));
}

// ---------------------------------------------------------------------------
// Explicit instantiation

#define S2VC_INSTANTIATE(S)                                                                   \
  template class BasicTensor<S>;                                                              \
  template class Tape<S>;                                                                     \
  template BasicTensor<S> add(const BasicTensor<S>&, const BasicTensor<S>&);                  \
  template BasicTensor<S> sub(const BasicTensor<S>&, const BasicTensor<S>&);                  \
  template BasicTensor<S> mul(const BasicTensor<S>&, const BasicTensor<S>&);                  \
  template BasicTensor<S> scale(const BasicTensor<S>&, S);                                    \
  template BasicTensor<S> relu(const BasicTensor<S>&);                                        \
  template BasicTensor<S> exp(const BasicTensor<S>&);                                         \
  template BasicTensor<S> log(const BasicTensor<S>&);                                         \
  template BasicTensor<S> abs(const BasicTensor<S>&);                                         \
  template BasicTensor<S> sigmoid(const BasicTensor<S>&);                                     \
  template BasicTensor<S> swish(const BasicTensor<S>&);                                       \
  template BasicTensor<S> elementwise(Elementwise, const BasicTensor<S>&,                     \
                                      const BasicTensor<S>&);                                 \
  template BasicTensor<S> matmul(const BasicTensor<S>&, const BasicTensor<S>&);               \
  template BasicTensor<S> matmul_nt(const BasicTensor<S>&, const BasicTensor<S>&);            \
  template BasicTensor<S> transpose(const BasicTensor<S>&);                                   \
  template BasicTensor<S> softmax(const BasicTensor<S>&, int);                                \
  template BasicTensor<S> sum(const BasicTensor<S>&);                                         \
  template BasicTensor<S> mean(const BasicTensor<S>&);                                        \
  template BasicTensor<S> mean_rows(const BasicTensor<S>&);                                   \
  template BasicTensor<S> normalize_columns(const BasicTensor<S>&, S);                        \
  template BasicTensor<S> normalize_rows(const BasicTensor<S>&, S);                           \
  template BasicTensor<S> unfold_time(const BasicTensor<S>&, Index);                          \
  template BasicTensor<S> depthwise_conv(const BasicTensor<S>&, const BasicTensor<S>&);       \
  template BasicTensor<S> concat_cols(std::span<const BasicTensor<S>>);                       \
  template BasicTensor<S> concat_rows(std::span<const BasicTensor<S>>);                       \
  template BasicTensor<S> slice_cols(const BasicTensor<S>&, Index, Index);                    \
  template BasicTensor<S> slice_rows(const BasicTensor<S>&, Index, Index);                    \
  template BasicTensor<S> dropout(const BasicTensor<S>&, double, std::mt19937_64&);           \
  template BasicTensor<S> softmax_cross_entropy(const BasicTensor<S>&, std::span<const int>); \
  template BasicTensor<S> l1_loss(const BasicTensor<S>&, const BasicTensor<S>&);

S2VC_INSTANTIATE(float)
S2VC_INSTANTIATE(double)

#undef S2VC_INSTANTIATE

}  // namespace s2vc
