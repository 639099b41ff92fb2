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

#include "s2vc/features.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

namespace s2vc {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

class ByteWriter {
 public:
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) {
    std::uint32_t raw;
    std::memcpy(&raw, &v, sizeof raw);
    u32(raw);
  }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void string16(const std::string& s) {
    if (s.size() > 0xffff) throw ContractError("feature file: string field longer than 65535 bytes");
    u16(static_cast<std::uint16_t>(s.size()));
    raw(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (pos_ + n > bytes_.size()) {
      throw LoadError(LoadError::Code::LengthMismatch,
                      std::string("feature file: truncated while reading ") + what);
    }
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) {
    const std::uint32_t raw = u32(what);
    float v;
    std::memcpy(&v, &raw, sizeof v);
    return v;
  }
  std::string string16(const char* what) {
    const std::uint16_t n = u16(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::uint8_t* cursor() const { return bytes_.data() + pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::string file_stem_id(const std::filesystem::path& path) {
  std::string name = path.filename().string();
  const auto dot = name.find('.');
  return dot == std::string::npos ? name : name.substr(0, dot);
}

}  // namespace

// ---------------------------------------------------------------------------
// FeatureKind

FeatureKind FeatureKind::external(std::string name) {
  FeatureKind k(Id::External);
  k.external_name_ = std::move(name);
  return k;
}

FeatureKind FeatureKind::from_name(const std::string& name) {
  const std::string n = lower(name);
  if (n == "mel") return FeatureKind(Id::Mel);
  if (n == "ppg") return FeatureKind(Id::PPG);
  if (n == "apc") return FeatureKind(Id::APC);
  if (n == "cpc") return FeatureKind(Id::CPC);
  if (n == "w2v" || n == "wav2vec2") return FeatureKind(Id::W2V);
  if (n.empty()) throw ConfigError("feature kind name is empty");
  return external(name);
}

std::string FeatureKind::name() const {
  switch (id_) {
    case Id::Mel: return "Mel";
    case Id::PPG: return "PPG";
    case Id::APC: return "APC";
    case Id::CPC: return "CPC";
    case Id::W2V: return "W2V";
    case Id::External: return external_name_;
  }
  return external_name_;
}

// ---------------------------------------------------------------------------
// FeatureRegistry

FeatureRegistry::FeatureRegistry() {
  table_["Mel"] = {80, 100.0};
  table_["PPG"] = {0, 100.0};
  table_["APC"] = {512, 100.0};
  table_["CPC"] = {256, 100.0};
  table_["W2V"] = {768, 50.0};
}

const FeatureRegistry& FeatureRegistry::defaults() {
  static const FeatureRegistry registry;
  return registry;
}

FeatureKindInfo FeatureRegistry::info(const FeatureKind& kind) const {
  const auto it = table_.find(kind.name());
  return it == table_.end() ? FeatureKindInfo{0, 100.0} : it->second;
}

void FeatureRegistry::set_dim(const FeatureKind& kind, int dim) {
  if (dim < 0) throw ConfigError("feature registry: dimension must be non-negative");
  auto info = this->info(kind);
  info.nominal_dim = dim;
  table_[kind.name()] = info;
}

void FeatureRegistry::set_fps(const FeatureKind& kind, double fps) {
  if (!(fps > 0.0)) throw ConfigError("feature registry: fps must be positive");
  auto info = this->info(kind);
  info.nominal_fps = fps;
  table_[kind.name()] = info;
}

// ---------------------------------------------------------------------------
// FeatureSequence

void FeatureSequence::validate(const FeatureRegistry& registry) const {
  if (frames.rows() < 1) throw DimensionError("feature sequence '" + utterance_id + "' is empty");
  if (frames.cols() < 1) throw DimensionError("feature sequence '" + utterance_id + "' has zero width");
  if (!(fps > 0.0)) throw ContractError("feature sequence '" + utterance_id + "' has non-positive fps");
  const int nominal = registry.info(kind).nominal_dim;
  if (nominal > 0 && frames.cols() != nominal) {
    throw DimensionError("feature sequence '" + utterance_id + "': kind " + kind.name() +
                         " expects dimension " + std::to_string(nominal) + ", got " +
                         std::to_string(frames.cols()));
  }
  if (!frames.allFinite()) throw NumericError("feature sequence '" + utterance_id + "' has non-finite values");
}

FeatureSequence extract_mel(const dsp::AudioBuffer& audio, const dsp::MelConfig& cfg,
                            std::string utterance_id, std::string speaker_id) {
  const dsp::Spectrogram spec = dsp::log_mel(audio, cfg);
  FeatureSequence seq;
  seq.kind = FeatureKind(FeatureKind::Id::Mel);
  seq.frames = spec.frames.cast<float>();
  seq.fps = static_cast<double>(cfg.sample_rate) / cfg.hop_length;
  seq.utterance_id = std::move(utterance_id);
  seq.speaker_id = std::move(speaker_id);
  return seq;
}

// ---------------------------------------------------------------------------
// Feature files

std::vector<std::uint8_t> encode_feature_file(const FeatureSequence& seq) {
  if (!seq.frames.allFinite()) throw NumericError("feature file: refusing to write non-finite values");
  ByteWriter w;
  w.raw("S2VF", 4);
  w.u16(kFeatureFileVersion);
  w.u16(kFeatureDtypeF32);
  w.u32(static_cast<std::uint32_t>(seq.frames.rows()));
  w.u32(static_cast<std::uint32_t>(seq.frames.cols()));
  w.f32(static_cast<float>(seq.fps));
  w.string16(seq.kind.name());
  w.string16(seq.speaker_id);
  for (Index i = 0; i < seq.frames.size(); ++i) w.f32(seq.frames.data()[i]);
  return w.take();
}

FeatureSequence decode_feature_file(std::span<const std::uint8_t> bytes, std::string utterance_id,
                                    const FeatureRegistry& registry) {
  ByteReader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(r.cursor(), "S2VF", 4) != 0) {
    throw LoadError(LoadError::Code::BadMagic, "feature file: bad magic (expected S2VF)");
  }
  (void)r.u32("magic");
  const std::uint16_t version = r.u16("version");
  if (version != kFeatureFileVersion) {
    throw LoadError(LoadError::Code::VersionMismatch,
                    "feature file: version " + std::to_string(version) + " unsupported (expected " +
                        std::to_string(kFeatureFileVersion) + ")");
  }
  const std::uint16_t dtype = r.u16("dtype");
  if (dtype != kFeatureDtypeF32) {
    throw LoadError(LoadError::Code::UnsupportedDtype,
                    "feature file: dtype code " + std::to_string(dtype) + " unsupported");
  }
  const std::uint32_t t = r.u32("frame count");
  const std::uint32_t d = r.u32("dimension");
  const float fps = r.f32("fps");
  const std::string kind_name = r.string16("kind name");
  const std::string speaker = r.string16("speaker id");

  const std::uint64_t payload = 4ull * t * d;
  if (r.remaining() != payload) {
    throw LoadError(LoadError::Code::LengthMismatch,
                    "feature file: payload is " + std::to_string(r.remaining()) +
                        " bytes, header implies " + std::to_string(payload));
  }
  if (t == 0 || d == 0) throw LoadError(LoadError::Code::Malformed, "feature file: empty matrix");
  if (!(fps > 0.0f) || !std::isfinite(fps)) {
    throw LoadError(LoadError::Code::Malformed, "feature file: fps must be positive");
  }

  FeatureSequence seq;
  seq.kind = FeatureKind::from_name(kind_name);
  const int nominal = registry.info(seq.kind).nominal_dim;
  if (nominal > 0 && static_cast<int>(d) != nominal) {
    throw LoadError(LoadError::Code::DimensionMismatch,
                    "feature file: kind " + seq.kind.name() + " expects dimension " +
                        std::to_string(nominal) + ", file declares " + std::to_string(d));
  }
  seq.frames.resize(t, d);
  std::memcpy(seq.frames.data(), r.cursor(), payload);
  if (!seq.frames.allFinite()) {
    throw LoadError(LoadError::Code::NonFinite, "feature file: payload contains non-finite values");
  }
  seq.fps = fps;
  seq.speaker_id = speaker;
  seq.utterance_id = std::move(utterance_id);
  return seq;
}

void save_feature_file(const std::filesystem::path& path, const FeatureSequence& seq) {
  const auto bytes = encode_feature_file(seq);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("feature file: cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

FeatureSequence load_feature_file(const std::filesystem::path& path,
                                  const FeatureRegistry& registry) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(LoadError::Code::Io, "feature file: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_feature_file(bytes, file_stem_id(path), registry);
  } catch (const LoadError& e) {
    throw LoadError(e.code(), std::string(e.what()) + " [" + path.string() + "]");
  }
}

// ---------------------------------------------------------------------------
// Alignment and concatenation

FeatureSequence align_frame_rate(const FeatureSequence& seq, double target_fps) {
  if (!(seq.fps > 0.0) || !(target_fps > 0.0)) {
    throw ContractError("align_frame_rate: frame rates must be positive");
  }
  if (seq.fps == target_fps) return seq;
  const Index t_in = seq.length();
  const double ratio = target_fps / seq.fps;
  const Index t_out = std::max<Index>(1, std::llround(static_cast<double>(t_in) * ratio));
  FeatureSequence out = seq;
  out.fps = target_fps;
  out.frames.resize(t_out, seq.dim());
  for (Index i = 0; i < t_out; ++i) {
    const auto src = static_cast<Index>(std::floor(static_cast<double>(i) * seq.fps / target_fps + 1e-9));
    out.frames.row(i) = seq.frames.row(std::min(src, t_in - 1));
  }
  return out;
}

FeatureSequence concat_target(std::span<const FeatureSequence> seqs) {
  if (seqs.empty()) throw ContractError("concat_target: no sequences");
  const FeatureSequence& first = seqs.front();
  Index total = 0;
  std::string joined;
  for (const auto& s : seqs) {
    if (!(s.kind == first.kind)) {
      throw KindMismatchError("concat_target: mixed kinds " + first.kind.name() + " and " + s.kind.name());
    }
    if (s.fps != first.fps) throw ContractError("concat_target: mixed frame rates");
    if (s.dim() != first.dim()) throw DimensionError("concat_target: mixed dimensions");
    if (s.speaker_id != first.speaker_id) {
      throw ContractError("concat_target: mixed speakers '" + first.speaker_id + "' and '" +
                          s.speaker_id + "'");
    }
    total += s.length();
    if (!joined.empty()) joined += "+";
    joined += s.utterance_id;
  }
  if (seqs.size() == 1) return first;
  FeatureSequence out;
  out.kind = first.kind;
  out.fps = first.fps;
  out.speaker_id = first.speaker_id;
  out.utterance_id = joined;
  out.frames.resize(total, first.dim());
  Index offset = 0;
  for (const auto& s : seqs) {
    out.frames.middleRows(offset, s.length()) = s.frames;
    offset += s.length();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifests

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("manifest not found: " + path.string());
  const std::filesystem::path base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() || fp.empty() ? fp : base / fp;
  };
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("manifest " + path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.contains("utterance_id") || !j.contains("speaker_id")) {
      throw ConfigError("manifest " + path.string() + ":" + std::to_string(line_no) +
                        ": utterance_id and speaker_id are required");
    }
    ManifestEntry e;
    e.utterance_id = j.at("utterance_id").get<std::string>();
    e.speaker_id = j.at("speaker_id").get<std::string>();
    if (j.contains("wav") && !j.at("wav").is_null()) e.wav = resolve(j.at("wav").get<std::string>());
    if (j.contains("features")) {
      for (const auto& [k, v] : j.at("features").items()) {
        e.features[FeatureKind::from_name(k).name()] = resolve(v.get<std::string>());
      }
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest " + path.string());
  for (const auto& e : entries) {
    nlohmann::json j;
    j["utterance_id"] = e.utterance_id;
    j["speaker_id"] = e.speaker_id;
    if (!e.wav.empty()) j["wav"] = e.wav.generic_string();
    nlohmann::json feats = nlohmann::json::object();
    for (const auto& [k, v] : e.features) feats[k] = v.generic_string();
    j["features"] = feats;
    out << j.dump() << "\n";
  }
}

FeatureSequence load_entry_features(const ManifestEntry& entry, const FeatureKind& kind,
                                    const dsp::MelConfig& mel, const FeatureRegistry& registry) {
  FeatureSequence seq;
  const auto it = entry.features.find(kind.name());
  if (it != entry.features.end()) {
    seq = load_feature_file(it->second, registry);
    if (!(seq.kind == kind)) {
      throw KindMismatchError("feature file " + it->second.string() + " holds " + seq.kind.name() +
                              ", manifest lists it as " + kind.name());
    }
  } else if (kind.id() == FeatureKind::Id::Mel && !entry.wav.empty()) {
    dsp::AudioBuffer audio = dsp::read_wav(entry.wav);
    if (audio.sample_rate != mel.sample_rate) audio = dsp::resample(audio, mel.sample_rate);
    seq = extract_mel(audio, mel);
  } else {
    throw ConfigError("no " + kind.name() + " features for utterance '" + entry.utterance_id +
                      "'; export them externally and list them in the manifest");
  }
  seq.utterance_id = entry.utterance_id;
  seq.speaker_id = entry.speaker_id;
  seq.validate(registry);
  return seq;
}

std::vector<std::string> manifest_speakers(std::span<const ManifestEntry> entries) {
  std::set<std::string> speakers;
  for (const auto& e : entries) speakers.insert(e.speaker_id);
  return {speakers.begin(), speakers.end()};
}

}  // namespace s2vc
