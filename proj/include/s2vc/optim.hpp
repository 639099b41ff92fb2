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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s2vc/tensor.hpp"

namespace s2vc {

template <typename Scalar>
struct NamedParameter {
  std::string name;
  BasicTensor<Scalar> tensor;
};

template <typename Scalar>
using ParameterList = std::vector<NamedParameter<Scalar>>;

struct AdamWOptions {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

/// First/second moments mirror the parameter list they were created for.
template <typename Scalar>
struct AdamWState {
  AdamWOptions options;
  std::int64_t step = 0;
  std::vector<Matrix<Scalar>> first_moment;
  std::vector<Matrix<Scalar>> second_moment;

  AdamWState() = default;
  AdamWState(const ParameterList<Scalar>& params, AdamWOptions opts);
};

/// One AdamW update from the gradients currently stored on `params`.
///
///   theta <- theta - lr * wd * theta
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   theta <- theta - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
///
/// Throws OptimizerError naming the first parameter whose gradient is not finite;
/// nothing is modified in that case.
template <typename Scalar>
void adamw_step(ParameterList<Scalar>& params, AdamWState<Scalar>& state);

/// Global L2 norm over all parameter gradients.
template <typename Scalar>
double grad_norm(const ParameterList<Scalar>& params);

/// Rescales gradients so their global norm is at most max_norm. Returns the pre-clip norm.
template <typename Scalar>
double clip_grad_norm(ParameterList<Scalar>& params, double max_norm);

template <typename Scalar>
void zero_grad(ParameterList<Scalar>& params);

}  // namespace s2vc
