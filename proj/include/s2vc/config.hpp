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

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <string>

#include "s2vc/eval.hpp"
#include "s2vc/training.hpp"

namespace s2vc {

/// Layered run configuration: built-in defaults < config file < command-line overrides.
///
/// Files use a small TOML-like syntax:
///
///   seed = 7
///   [model]
///   d_model = 64            # trailing comments allowed
///   source_kind = "CPC"
///
/// Only keys present in the defaults are accepted, and a value must keep the
/// type of its default (integers may replace floats).
class LayeredConfig {
 public:
  LayeredConfig();
  explicit LayeredConfig(nlohmann::json defaults);

  void load_file(const std::filesystem::path& path);
  void parse_text(const std::string& text, const std::string& origin);
  /// `key` is dotted ("model.d_model" or "seed"); `value` uses file syntax.
  void set(const std::string& key, const std::string& value, const std::string& origin = "flag");
  void set_json(const std::string& key, const nlohmann::json& value, const std::string& origin = "flag");

  const nlohmann::json& resolved() const { return resolved_; }
  /// Where each key's value came from ("default", a file path, "flag", "env").
  std::string origin(const std::string& key) const;
  /// Resolved configuration in file syntax, keys sorted; reloading it reproduces resolved().
  std::string render() const;

 private:
  nlohmann::json resolved_;
  std::map<std::string, std::string> origins_;
};

/// Defaults for every section: seed, jobs, model, dsp, train, eval.
nlohmann::json default_config();

TrainConfig train_config_from(const nlohmann::json& resolved);
EvalOptions eval_options_from(const nlohmann::json& resolved);
EmbedderOptions embedder_options_from(const nlohmann::json& resolved);
ProbeOptions probe_options_from(const nlohmann::json& resolved);

}  // namespace s2vc
