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

#include "s2vc/config.hpp"
#include "support.hpp"

using namespace s2vc;

TEST_SUITE("config") {
  TEST_CASE("layers override in order and remember their origin") {
    LayeredConfig cfg;
    CHECK(cfg.origin("model.d_model") == "default");
    cfg.parse_text("seed = 7\n[model]\nd_model = 64   # wider\nsource_kind = \"CPC\"\n", "run.toml");
    CHECK(cfg.resolved().at("seed") == 7);
    CHECK(cfg.resolved().at("model").at("d_model") == 64);
    CHECK(cfg.origin("model.d_model") == "run.toml");
    cfg.set("model.d_model", "128");
    CHECK(cfg.resolved().at("model").at("d_model") == 128);
    CHECK(cfg.origin("model.d_model") == "flag");
    cfg.set("train.learning_rate", "1");  // integer accepted for a float key
    CHECK(train_config_from(cfg.resolved()).learning_rate == 1.0);
  }

  TEST_CASE("unknown keys, sections and type changes are rejected") {
    LayeredConfig cfg;
    CHECK_THROWS_AS(cfg.parse_text("[modle]\nd_model = 3\n", "x"), ConfigError);
    CHECK_THROWS_AS(cfg.parse_text("[model]\nwidth = 3\n", "x"), ConfigError);
    CHECK_THROWS_AS(cfg.parse_text("[model\n", "x"), ConfigError);
    CHECK_THROWS_AS(cfg.parse_text("seed 3\n", "x"), ConfigError);
    CHECK_THROWS_AS(cfg.set("model.d_model", "\"wide\""), ConfigError);
    CHECK_THROWS_AS(cfg.set("model.use_sap", "1"), ConfigError);
    CHECK_THROWS_AS(cfg.set("model", "3"), ConfigError);
    CHECK_THROWS_AS(cfg.load_file("/nonexistent/run.toml"), ConfigError);
  }

  TEST_CASE("rendered configuration reloads to the same values") {
    LayeredConfig cfg;
    cfg.load_file(s2vc::testing::toy_config_path());
    cfg.set("eval.scenario", "\"u2u\"");
    LayeredConfig again;
    again.parse_text(cfg.render(), "rendered");
    CHECK(again.resolved() == cfg.resolved());
  }

  TEST_CASE("option structs are read from the resolved tree") {
    LayeredConfig cfg;
    cfg.load_file(s2vc::testing::toy_config_path());
    const auto train = train_config_from(cfg.resolved());
    CHECK(train.model.d_model == 32);
    CHECK(train.model.source_kind == FeatureKind(FeatureKind::Id::CPC));
    CHECK(train.max_steps == 300);
    CHECK(eval_options_from(cfg.resolved()).n_pairs == 80);
    CHECK(embedder_options_from(cfg.resolved()).steps == 300);
    cfg.set("eval.n_pairs", "0");
    CHECK_THROWS_AS(eval_options_from(cfg.resolved()), ConfigError);
    cfg.set("eval.scenario", "\"x2y\"");
    CHECK_THROWS_AS(eval_options_from(cfg.resolved()), ConfigError);
  }
}
