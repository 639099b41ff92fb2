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

// Shared oracles and fixtures for the unit and acceptance suites.

#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "s2vc/eval.hpp"
#include "s2vc/tensor.hpp"

namespace s2vc::testing {

using GradFn = std::function<TensorD(const std::vector<TensorD>&)>;
using LossFn = std::function<TensorD()>;

struct GradCheck {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;  // scalar partial derivatives compared
};

/// Reverse-mode gradients of a scalar loss with respect to `leaves` against
/// central differences, perturbing leaf values in place.
/// Relative error is |a - n| / max(|a|, |n|, 1e-3).
GradCheck check_gradients(const LossFn& f, const std::vector<TensorD>& leaves, double h = 1e-6);
/// Same, with fresh leaves built from `inputs` and handed to f.
GradCheck check_gradients(const GradFn& f, const std::vector<MatrixXd>& inputs, double h = 1e-6);

struct GradCase {
  std::string name;
  double tolerance = 1e-4;  // 1e-3 for exp/log chains
  std::function<GradCheck()> run;
};

/// Every differentiable op and layer, plus the composed source-encoder,
/// conformer-block and cross-attention toys (d = 8, T <= 4), in double precision.
std::vector<GradCase> gradient_cases(std::uint64_t seed = 0);

MatrixXd random_matrix(Index rows, Index cols, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0);
/// Entries with |x| in [lo, hi] and random sign; keeps kinks (relu, abs) out of reach of h.
MatrixXd random_away_from_zero(Index rows, Index cols, std::mt19937_64& rng, double lo = 0.2, double hi = 1.0);

/// Double-loop softmax(q k^T / sqrt(d)).
MatrixXd naive_attention(const MatrixXd& q, const MatrixXd& k);

/// Exhaustive EER: every pair of adjacent candidate thresholds, including one
/// below and one above the score range, scanned for the FAR/FRR crossing.
EerResult exhaustive_eer(std::span<const double> genuine, std::span<const double> impostor);

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Pure tone at `hz`.
dsp::AudioBuffer sine(double hz, double seconds, int sample_rate = 16000, double amplitude = 0.5);

/// Configuration file shipped with the repository for toy-scale runs.
std::filesystem::path toy_config_path();

}  // namespace s2vc::testing
