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

#include <array>
#include <cmath>

#include "s2vc/tensor.hpp"
#include "support.hpp"

using namespace s2vc;
using s2vc::testing::random_matrix;

TEST_SUITE("tensor") {
  TEST_CASE("every gradient case matches central differences") {
    for (const auto& c : s2vc::testing::gradient_cases(3)) {
      CAPTURE(c.name);
      const auto r = c.run();
      CHECK(r.checked > 0);
      CHECK(r.max_rel_error < c.tolerance);
    }
  }

  TEST_CASE("broadcasting rules") {
    const Tensor a(MatrixXf::Ones(3, 4));
    CHECK(add(a, Tensor(MatrixXf::Ones(1, 4))).value().isApproxToConstant(2.0f));
    CHECK(mul(a, Tensor::scalar(3.0f)).value().isApproxToConstant(3.0f));
    CHECK_THROWS_AS(add(a, Tensor(MatrixXf::Ones(3, 1))), DimensionError);
    CHECK_THROWS_AS(matmul(a, a), DimensionError);
  }

  TEST_CASE("softmax is stable for large logits") {
    MatrixXf x(1, 3);
    x << 1000.0f, 1001.0f, 999.0f;
    const auto y = softmax(Tensor(x)).value();
    CHECK(y.allFinite());
    CHECK(y.sum() == doctest::Approx(1.0));
    CHECK(y(0, 1) > y(0, 0));
  }

  TEST_CASE("unfold_time zero-pads at the edges") {
    MatrixXf x(3, 1);
    x << 1, 2, 3;
    const auto u = unfold_time(Tensor(x), 3).value();
    REQUIRE(u.rows() == 3);
    REQUIRE(u.cols() == 3);
    CHECK(u(0, 0) == 0.0f);
    CHECK(u(0, 1) == 1.0f);
    CHECK(u(1, 0) == 1.0f);
    CHECK(u(1, 2) == 3.0f);
    CHECK(u(2, 2) == 0.0f);
    CHECK_THROWS_AS(unfold_time(Tensor(x), 2), ContractError);
  }

  TEST_CASE("gradients accumulate into leaves used twice") {
    Tensor x(MatrixXf::Constant(2, 2, 3.0f), true);
    Tape<float> tape;
    Tensor loss;
    {
      auto scope = tape.record();
      loss = sum(mul(x, x));
    }
    tape.backward(loss);
    CHECK(x.grad().isApproxToConstant(6.0f));
  }

  TEST_CASE("tape contract violations") {
    Tensor x(MatrixXf::Ones(2, 2), true);
    Tape<float> tape;
    Tensor y, loss;
    {
      auto scope = tape.record();
      y = scale(x, 2.0f);
      loss = sum(y);
    }
    CHECK_THROWS_AS(tape.backward(y), ContractError);
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), ContractError);
    CHECK_THROWS_AS(Tensor(MatrixXf::Ones(2, 2)).grad(), ContractError);
    CHECK_THROWS_AS(Tensor(MatrixXf::Ones(2, 2)).item(), ContractError);
  }

  TEST_CASE("operations without an active tape record nothing") {
    Tensor x(MatrixXf::Ones(2, 2), true);
    const Tensor y = mul(x, x);
    CHECK(Tape<float>::active() == nullptr);
    CHECK(y.value().isApproxToConstant(1.0f));
  }

  TEST_CASE("domain and finiteness errors") {
    CHECK_THROWS_AS(log(Tensor(MatrixXf::Constant(1, 2, -1.0f))), NumericError);
    CHECK_THROWS_AS(exp(Tensor(MatrixXf::Constant(1, 1, 1000.0f))), NumericError);
    const std::array<int, 2> bad{0, 5};
    CHECK_THROWS_AS(softmax_cross_entropy<float>(Tensor(MatrixXf::Zero(2, 3)), bad), ContractError);
  }

  TEST_CASE("dropout is the identity at p = 0 and preserves the mean otherwise") {
    std::mt19937_64 rng(1);
    const Tensor x(MatrixXf::Ones(200, 50));
    CHECK(dropout(x, 0.0, rng).value() == x.value());
    const auto y = dropout(x, 0.5, rng).value();
    CHECK(y.mean() == doctest::Approx(1.0).epsilon(0.05));
    CHECK_THROWS_AS(dropout(x, 1.0, rng), ContractError);
  }

  TEST_CASE("normalize_columns standardises every channel") {
    std::mt19937_64 rng(2);
    const auto y = normalize_columns(TensorD(random_matrix(16, 5, rng)), 0.0).value();
    for (Index c = 0; c < y.cols(); ++c) {
      CHECK(std::abs(y.col(c).mean()) < 1e-12);
      CHECK((y.col(c).array().square().mean()) == doctest::Approx(1.0));
    }
  }
}
