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

#include "s2vc/config.hpp"

#include <fstream>
#include <sstream>

namespace s2vc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Drops a trailing '#' comment that is not inside a quoted string.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

nlohmann::json parse_value(const std::string& raw) {
  const std::string v = trim(raw);
  if (v.empty()) throw ConfigError("empty value");
  if (v.front() == '"' || v == "true" || v == "false" || v.front() == '-' || v.front() == '+' ||
      std::isdigit(static_cast<unsigned char>(v.front())) || v.front() == '.') {
    try {
      return nlohmann::json::parse(v.front() == '+' ? v.substr(1) : v);
    } catch (const nlohmann::json::parse_error&) {
      if (v.front() == '"') throw ConfigError("bad quoted string " + v);
    }
  }
  return v;  // bare word
}

bool compatible(const nlohmann::json& old_value, const nlohmann::json& new_value) {
  if (old_value.is_number_float()) return new_value.is_number();
  if (old_value.is_number_integer()) return new_value.is_number_integer();
  if (old_value.is_boolean()) return new_value.is_boolean();
  if (old_value.is_string()) return new_value.is_string();
  return false;
}

nlohmann::json::json_pointer pointer(const std::string& dotted) {
  std::string p;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) p += "/" + part;
  return nlohmann::json::json_pointer(p);
}

std::string render_value(const nlohmann::json& v) { return v.dump(); }

}  // namespace

LayeredConfig::LayeredConfig() : LayeredConfig(default_config()) {}

LayeredConfig::LayeredConfig(nlohmann::json defaults) : resolved_(std::move(defaults)) {}

void LayeredConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  parse_text(buffer.str(), path.string());
}

void LayeredConfig::parse_text(const std::string& text, const std::string& origin) {
  std::stringstream ss(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const std::string l = trim(strip_comment(line));
    if (l.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    if (l.front() == '[') {
      if (l.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = trim(l.substr(1, l.size() - 2));
      if (!resolved_.contains(section) || !resolved_.at(section).is_object()) {
        throw ConfigError(where + ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = l.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(l.substr(0, eq));
    try {
      set(section.empty() ? key : section + "." + key, l.substr(eq + 1), origin);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

void LayeredConfig::set(const std::string& key, const std::string& value, const std::string& origin) {
  nlohmann::json parsed;
  try {
    parsed = parse_value(value);
  } catch (const ConfigError& e) {
    throw ConfigError("key '" + key + "': " + e.what());
  }
  set_json(key, parsed, origin);
}

void LayeredConfig::set_json(const std::string& key, const nlohmann::json& value, const std::string& origin) {
  if (key.empty()) throw ConfigError("empty configuration key");
  const auto ptr = pointer(key);
  if (!resolved_.contains(ptr)) throw ConfigError("unknown configuration key '" + key + "'");
  nlohmann::json& slot = resolved_.at(ptr);
  if (slot.is_object()) throw ConfigError("'" + key + "' is a section, not a key");
  if (!compatible(slot, value)) {
    throw ConfigError("key '" + key + "' expects a " + std::string(slot.type_name()) + ", got " + value.dump());
  }
  slot = value;
  origins_[key] = origin;
}

std::string LayeredConfig::origin(const std::string& key) const {
  const auto it = origins_.find(key);
  return it == origins_.end() ? "default" : it->second;
}

std::string LayeredConfig::render() const {
  std::ostringstream out;
  for (const auto& [k, v] : resolved_.items()) {
    if (!v.is_object()) out << k << " = " << render_value(v) << '\n';
  }
  for (const auto& [k, v] : resolved_.items()) {
    if (!v.is_object()) continue;
    out << "\n[" << k << "]\n";
    for (const auto& [kk, vv] : v.items()) out << kk << " = " << render_value(vv) << '\n';
  }
  return out.str();
}

nlohmann::json default_config() {
  nlohmann::json j = TrainConfig{}.to_json();
  const EvalOptions eval;
  const EmbedderOptions emb;
  const ProbeOptions probe;
  j["eval"] = {
      {"n_pairs", eval.n_pairs},
      {"scenario", to_string(eval.scenario)},
      {"griffin_lim_iterations", eval.griffin_lim_iterations},
      {"embedder_hidden", emb.hidden},
      {"embedder_dim", emb.embedding_dim},
      {"embedder_steps", emb.steps},
      {"embedder_batch_size", emb.batch_size},
      {"embedder_learning_rate", emb.learning_rate},
      {"probe_steps", probe.steps},
      {"probe_learning_rate", probe.learning_rate},
      {"probe_dev_fraction", probe.dev_fraction},
  };
  return j;
}

TrainConfig train_config_from(const nlohmann::json& resolved) { return TrainConfig::from_json(resolved); }

EvalOptions eval_options_from(const nlohmann::json& r) {
  EvalOptions o;
  try {
    const auto& e = r.at("eval");
    o.n_pairs = e.at("n_pairs").get<int>();
    o.scenario = scenario_from_string(e.at("scenario").get<std::string>());
    o.griffin_lim_iterations = e.at("griffin_lim_iterations").get<int>();
    o.seed = r.at("seed").get<std::uint64_t>();
    o.jobs = r.at("jobs").get<int>();
    o.mel = dsp::MelConfig::from_json(r.at("dsp"));
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("eval config: ") + ex.what());
  }
  if (o.n_pairs < 1) throw ConfigError("eval.n_pairs must be >= 1");
  if (o.griffin_lim_iterations < 1) throw ConfigError("eval.griffin_lim_iterations must be >= 1");
  if (o.jobs < 1) throw ConfigError("jobs must be >= 1");
  return o;
}

EmbedderOptions embedder_options_from(const nlohmann::json& r) {
  EmbedderOptions o;
  try {
    const auto& e = r.at("eval");
    o.hidden = e.at("embedder_hidden").get<int>();
    o.embedding_dim = e.at("embedder_dim").get<int>();
    o.steps = e.at("embedder_steps").get<int>();
    o.batch_size = e.at("embedder_batch_size").get<int>();
    o.learning_rate = e.at("embedder_learning_rate").get<double>();
    o.seed = r.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("embedder config: ") + ex.what());
  }
  if (o.hidden < 1 || o.embedding_dim < 1 || o.steps < 0 || o.batch_size < 1 || !(o.learning_rate > 0.0)) {
    throw ConfigError("embedder options out of range");
  }
  return o;
}

ProbeOptions probe_options_from(const nlohmann::json& r) {
  ProbeOptions o;
  try {
    const auto& e = r.at("eval");
    o.steps = e.at("probe_steps").get<int>();
    o.learning_rate = e.at("probe_learning_rate").get<double>();
    o.dev_fraction = e.at("probe_dev_fraction").get<double>();
    o.seed = r.at("seed").get<std::uint64_t>();
    o.jobs = r.at("jobs").get<int>();
    o.mel = dsp::MelConfig::from_json(r.at("dsp"));
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("probe config: ") + ex.what());
  }
  if (o.steps < 0 || !(o.learning_rate > 0.0) || !(o.dev_fraction > 0.0 && o.dev_fraction < 1.0)) {
    throw ConfigError("probe options out of range");
  }
  return o;
}

}  // namespace s2vc
