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

#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#ifndef S2VC_SOURCE_DIR
#define S2VC_SOURCE_DIR "."
#endif

namespace s2vc::testing {

namespace fs = std::filesystem;

GradCheck check_gradients(const LossFn& f, const std::vector<TensorD>& leaves, double h) {
  for (auto leaf : leaves) leaf.zero_grad();
  Tape<double> tape;
  TensorD loss;
  {
    auto scope = tape.record();
    loss = f();
  }
  tape.backward(loss);

  GradCheck out;
  for (auto leaf : leaves) {
    const MatrixXd analytic = leaf.grad();
    MatrixXd& value = leaf.mutable_value();
    for (Index e = 0; e < value.size(); ++e) {
      const double saved = value.data()[e];
      value.data()[e] = saved + h;
      const double up = f().item();
      value.data()[e] = saved - h;
      const double down = f().item();
      value.data()[e] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic.data()[e];
      const double abs_err = std::abs(a - numeric);
      out.max_abs_error = std::max(out.max_abs_error, abs_err);
      out.max_rel_error = std::max(out.max_rel_error, abs_err / std::max({std::abs(a), std::abs(numeric), 1e-3}));
      ++out.checked;
    }
  }
  return out;
}

GradCheck check_gradients(const GradFn& f, const std::vector<MatrixXd>& inputs, double h) {
  std::vector<TensorD> leaves;
  for (const auto& m : inputs) leaves.emplace_back(m, true);
  return check_gradients([&] { return f(leaves); }, leaves, h);
}

MatrixXd random_matrix(Index rows, Index cols, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  MatrixXd m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

MatrixXd random_away_from_zero(Index rows, Index cols, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::bernoulli_distribution sign(0.5);
  MatrixXd m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = sign(rng) ? u(rng) : -u(rng);
  return m;
}

MatrixXd naive_attention(const MatrixXd& q, const MatrixXd& k) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  MatrixXd w(q.rows(), k.rows());
  for (Index i = 0; i < q.rows(); ++i) {
    double peak = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < k.rows(); ++j) {
      double s = 0.0;
      for (Index c = 0; c < q.cols(); ++c) s += q(i, c) * k(j, c);
      w(i, j) = s * scale;
      peak = std::max(peak, w(i, j));
    }
    double z = 0.0;
    for (Index j = 0; j < k.rows(); ++j) {
      w(i, j) = std::exp(w(i, j) - peak);
      z += w(i, j);
    }
    for (Index j = 0; j < k.rows(); ++j) w(i, j) /= z;
  }
  return w;
}

EerResult exhaustive_eer(std::span<const double> genuine, std::span<const double> impostor) {
  std::set<double> distinct(genuine.begin(), genuine.end());
  distinct.insert(impostor.begin(), impostor.end());
  const std::vector<double> s(distinct.begin(), distinct.end());
  std::vector<double> thresholds{s.front() - 1.0};
  for (std::size_t i = 0; i + 1 < s.size(); ++i) thresholds.push_back((s[i] + s[i + 1]) / 2.0);
  thresholds.push_back(s.back() + 1.0);

  auto rates = [&](double t) {
    double fa = 0.0, fr = 0.0;
    for (double x : impostor) fa += x > t ? 1.0 : 0.0;
    for (double x : genuine) fr += x < t ? 1.0 : 0.0;
    return std::pair{fa / static_cast<double>(impostor.size()), fr / static_cast<double>(genuine.size())};
  };
  std::vector<std::pair<double, double>> r;
  for (double t : thresholds) r.push_back(rates(t));
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    const double d0 = r[i - 1].first - r[i - 1].second;
    const double d1 = r[i].first - r[i].second;
    if (d0 > 0.0 && d1 <= 0.0) {
      const double w = d1 == 0.0 ? 1.0 : d0 / (d0 - d1);
      const double far = r[i - 1].first + w * (r[i].first - r[i - 1].first);
      const double frr = r[i - 1].second + w * (r[i].second - r[i - 1].second);
      return {thresholds[i - 1] + w * (thresholds[i] - thresholds[i - 1]), 0.5 * (far + frr)};
    }
  }
  return {thresholds.back(), 0.0};
}

TempDir::TempDir(const std::string& tag) {
  std::random_device rd;
  for (;;) {
    path_ = fs::temp_directory_path() / ("s2vc_" + tag + "_" + std::to_string(rd()));
    if (fs::create_directories(path_)) break;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

dsp::AudioBuffer sine(double hz, double seconds, int sample_rate, double amplitude) {
  dsp::AudioBuffer a;
  a.sample_rate = sample_rate;
  a.samples.resize(static_cast<std::size_t>(seconds * sample_rate));
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    a.samples[i] = static_cast<float>(amplitude * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) /
                                                           static_cast<double>(sample_rate)));
  }
  return a;
}

fs::path toy_config_path() { return fs::path(S2VC_SOURCE_DIR) / "configs" / "toy.toml"; }

}  // namespace s2vc::testing
