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

#include "s2vc/optim.hpp"

#include <cmath>

namespace s2vc {

template <typename S>
AdamWState<S>::AdamWState(const ParameterList<S>& params, AdamWOptions opts) : options(opts) {
  first_moment.reserve(params.size());
  second_moment.reserve(params.size());
  for (const auto& p : params) {
    first_moment.push_back(Matrix<S>::Zero(p.tensor.rows(), p.tensor.cols()));
    second_moment.push_back(Matrix<S>::Zero(p.tensor.rows(), p.tensor.cols()));
  }
}

template <typename S>
void adamw_step(ParameterList<S>& params, AdamWState<S>& state) {
  if (params.size() != state.first_moment.size()) {
    throw OptimizerError("adamw_step: state tracks " + std::to_string(state.first_moment.size()) +
                         " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (state.first_moment[i].rows() != p.tensor.rows() ||
        state.first_moment[i].cols() != p.tensor.cols()) {
      throw OptimizerError("adamw_step: moment shape mismatch for parameter '" + p.name + "'");
    }
    if (!p.tensor.grad().allFinite()) {
      throw OptimizerError("adamw_step: non-finite gradient for parameter '" + p.name + "'");
    }
  }

  const AdamWOptions& o = state.options;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(o.beta1, t);
  const double bias2 = 1.0 - std::pow(o.beta2, t);
  const double decay = 1.0 - o.learning_rate * o.weight_decay;

  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix<S>& theta = params[i].tensor.mutable_value();
    const Matrix<S>& g = params[i].tensor.grad();
    Matrix<S>& m = state.first_moment[i];
    Matrix<S>& v = state.second_moment[i];
    for (Index k = 0; k < theta.size(); ++k) {
      const double gk = static_cast<double>(g.data()[k]);
      const double mk = o.beta1 * static_cast<double>(m.data()[k]) + (1.0 - o.beta1) * gk;
      const double vk = o.beta2 * static_cast<double>(v.data()[k]) + (1.0 - o.beta2) * gk * gk;
      m.data()[k] = static_cast<S>(mk);
      v.data()[k] = static_cast<S>(vk);
      const double m_hat = mk / bias1;
      const double v_hat = vk / bias2;
      double th = static_cast<double>(theta.data()[k]) * decay;
      th -= o.learning_rate * m_hat / (std::sqrt(v_hat) + o.epsilon);
      theta.data()[k] = static_cast<S>(th);
    }
  }
}

template <typename S>
double grad_norm(const ParameterList<S>& params) {
  double sq = 0.0;
  for (const auto& p : params) sq += p.tensor.grad().template cast<double>().squaredNorm();
  return std::sqrt(sq);
}

template <typename S>
double clip_grad_norm(ParameterList<S>& params, double max_norm) {
  const double norm = grad_norm(params);
  if (norm > max_norm) {
    const S factor = static_cast<S>(max_norm / (norm + 1e-6));
    for (auto& p : params) p.tensor.mutable_grad() *= factor;
  }
  return norm;
}

template <typename S>
void zero_grad(ParameterList<S>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

#define S2VC_INSTANTIATE(S)                                      \
  template struct AdamWState<S>;                                 \
  template void adamw_step(ParameterList<S>&, AdamWState<S>&);   \
  template double grad_norm(const ParameterList<S>&);            \
  template double clip_grad_norm(ParameterList<S>&, double);     \
  template void zero_grad(ParameterList<S>&);

S2VC_INSTANTIATE(float)
S2VC_INSTANTIATE(double)

#undef S2VC_INSTANTIATE

}  // namespace s2vc
