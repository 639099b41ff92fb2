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

#include "s2vc/model.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <map>

namespace s2vc {

// ---------------------------------------------------------------------------
// ModelConfig

void ModelConfig::validate() const {
  const auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string("model config: ") + name + " must be positive");
  };
  positive(d_model, "d_model");
  positive(source_dim, "source_dim");
  positive(target_dim, "target_dim");
  positive(n_source_layers, "n_source_layers");
  positive(n_target_conv, "n_target_conv");
  positive(conv_kernel, "conv_kernel");
  positive(n_attention_blocks, "n_attention_blocks");
  positive(conformer_heads, "conformer_heads");
  positive(conformer_ff_dim, "conformer_ff_dim");
  positive(conformer_conv_kernel, "conformer_conv_kernel");
  positive(attn_bottleneck_dim, "attn_bottleneck_dim");
  positive(mel_dim, "mel_dim");
  if (n_decoder_conformer < 0) throw ConfigError("model config: n_decoder_conformer must be >= 0");
  if (attn_bottleneck_dim > d_model) throw ConfigError("model config: attn_bottleneck_dim exceeds d_model");
  if (d_model % conformer_heads != 0) throw ConfigError("model config: d_model not divisible by conformer_heads");
  if (conv_kernel % 2 == 0 || conformer_conv_kernel % 2 == 0) {
    throw ConfigError("model config: convolution kernels must be odd");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model config: dropout must be in [0, 1)");
}

nlohmann::json ModelConfig::to_json() const {
  return {
      {"d_model", d_model},
      {"source_kind", source_kind.name()},
      {"source_dim", source_dim},
      {"target_kind", target_kind.name()},
      {"target_dim", target_dim},
      {"n_source_layers", n_source_layers},
      {"n_target_conv", n_target_conv},
      {"conv_kernel", conv_kernel},
      {"n_attention_blocks", n_attention_blocks},
      {"n_decoder_conformer", n_decoder_conformer},
      {"conformer_heads", conformer_heads},
      {"conformer_ff_dim", conformer_ff_dim},
      {"conformer_conv_kernel", conformer_conv_kernel},
      {"attn_bottleneck_dim", attn_bottleneck_dim},
      {"use_bottleneck", use_bottleneck},
      {"use_instance_norm", use_instance_norm},
      {"use_sap", use_sap},
      {"use_cross_attention", use_cross_attention},
      {"sap_strategy", sap_strategy == SapStrategy::Add ? "add" : "concat_project"},
      {"mel_dim", mel_dim},
      {"dropout", dropout},
      {"bn_momentum", bn_momentum},
  };
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d_model = j.value("d_model", c.d_model);
  c.source_kind = FeatureKind::from_name(j.value("source_kind", c.source_kind.name()));
  c.source_dim = j.value("source_dim", c.source_dim);
  c.target_kind = FeatureKind::from_name(j.value("target_kind", c.target_kind.name()));
  c.target_dim = j.value("target_dim", c.target_dim);
  c.n_source_layers = j.value("n_source_layers", c.n_source_layers);
  c.n_target_conv = j.value("n_target_conv", c.n_target_conv);
  c.conv_kernel = j.value("conv_kernel", c.conv_kernel);
  c.n_attention_blocks = j.value("n_attention_blocks", c.n_attention_blocks);
  c.n_decoder_conformer = j.value("n_decoder_conformer", c.n_decoder_conformer);
  c.conformer_heads = j.value("conformer_heads", c.conformer_heads);
  c.conformer_ff_dim = j.value("conformer_ff_dim", c.conformer_ff_dim);
  c.conformer_conv_kernel = j.value("conformer_conv_kernel", c.conformer_conv_kernel);
  c.attn_bottleneck_dim = j.value("attn_bottleneck_dim", c.attn_bottleneck_dim);
  c.use_bottleneck = j.value("use_bottleneck", c.use_bottleneck);
  c.use_instance_norm = j.value("use_instance_norm", c.use_instance_norm);
  c.use_sap = j.value("use_sap", c.use_sap);
  c.use_cross_attention = j.value("use_cross_attention", c.use_cross_attention);
  const std::string strategy = j.value("sap_strategy", std::string("add"));
  if (strategy == "add") {
    c.sap_strategy = SapStrategy::Add;
  } else if (strategy == "concat_project") {
    c.sap_strategy = SapStrategy::ConcatProject;
  } else {
    throw ConfigError("model config: unknown sap_strategy '" + strategy + "'");
  }
  c.mel_dim = j.value("mel_dim", c.mel_dim);
  c.dropout = j.value("dropout", c.dropout);
  c.bn_momentum = j.value("bn_momentum", c.bn_momentum);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// S2VCModel

template <typename S>
S2VCModel<S>::S2VCModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const Index d = config_.d_model;

  for (int i = 0; i < config_.n_source_layers; ++i) {
    source_layers_.emplace_back(i == 0 ? config_.source_dim : d, d, rng);
    source_norms_.emplace_back(d, config_.bn_momentum);
  }
  for (int i = 0; i < config_.n_target_conv; ++i) {
    target_convs_.emplace_back(i == 0 ? config_.target_dim : d, d, config_.conv_kernel, rng);
  }
  if (config_.use_sap) {
    std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(double(d)), 1.0 / std::sqrt(double(d)));
    Matrix<S> w(d, 1);
    for (Index i = 0; i < d; ++i) w(i, 0) = static_cast<S>(dist(rng));
    sap_weights_ = TensorType(std::move(w), true);
    if (config_.sap_strategy == SapStrategy::ConcatProject) sap_projection_.emplace(2 * d, d, rng);
  }
  if (config_.use_cross_attention) {
    for (int b = 0; b < config_.n_attention_blocks; ++b) {
      AttentionBlock block;
      block.query = nn::Linear<S>(d, d, rng, false);
      block.key = nn::Linear<S>(d, d, rng, false);
      block.value = nn::Linear<S>(d, d, rng, false);
      if (config_.use_bottleneck) {
        block.query_bottleneck = nn::Linear<S>(d, config_.attn_bottleneck_dim, rng, false);
        block.key_bottleneck = nn::Linear<S>(d, config_.attn_bottleneck_dim, rng, false);
      }
      attention_.push_back(std::move(block));
    }
  }
  for (int i = 0; i < config_.n_decoder_conformer; ++i) {
    decoder_.emplace_back(d, config_.conformer_heads, config_.conformer_ff_dim,
                          config_.conformer_conv_kernel, rng);
  }
  output_projection_ = nn::Linear<S>(d, config_.mel_dim, rng);
}

template <typename S>
typename S2VCModel<S>::TensorType S2VCModel<S>::source_encode(const TensorType& src,
                                                              const nn::RunContext& ctx) {
  if (src.cols() != config_.source_dim) {
    throw DimensionError("source_encode: expected " + std::to_string(config_.source_dim) +
                         " input channels, got " + src.shape_string());
  }
  TensorType h = src;
  for (std::size_t i = 0; i < source_layers_.size(); ++i) {
    h = source_norms_[i](source_layers_[i](h), ctx);
    if (i + 1 < source_layers_.size()) h = relu(h);
  }
  return h;
}

template <typename S>
typename S2VCModel<S>::TensorType S2VCModel<S>::target_encode(const TensorType& tgt) const {
  if (tgt.cols() != config_.target_dim) {
    throw DimensionError("target_encode: expected " + std::to_string(config_.target_dim) +
                         " input channels, got " + tgt.shape_string());
  }
  if (tgt.rows() == 0) throw ContractError("target_encode: empty target sequence");
  TensorType h = tgt;
  for (const auto& conv : target_convs_) h = relu(conv(h));
  return h;
}

template <typename S>
typename S2VCModel<S>::TensorType S2VCModel<S>::pool_target(const TensorType& tgt_h) const {
  if (!sap_weights_) throw ContractError("pool_target: model built without self-attention pooling");
  return nn::self_attention_pool(tgt_h, *sap_weights_);
}

template <typename S>
typename S2VCModel<S>::TensorType S2VCModel<S>::condition_source(const TensorType& src_h,
                                                                 const TensorType& pooled) const {
  if (config_.sap_strategy == SapStrategy::Add) return add(src_h, pooled);
  const TensorType ones = TensorType::constant(src_h.rows(), 1, S(1));
  const TensorType parts[] = {src_h, matmul(ones, pooled)};
  return (*sap_projection_)(concat_cols<S>(parts));
}

template <typename S>
std::pair<typename S2VCModel<S>::TensorType, AttentionTrace<S>> S2VCModel<S>::cross_attention(
    const TensorType& src_h, const TensorType& tgt_h) const {
  AttentionTrace<S> trace;
  if (!config_.use_cross_attention) return {src_h, trace};
  if (tgt_h.rows() == 0) throw ContractError("cross_attention: target sequence has zero length");
  TensorType h = src_h;
  for (const auto& block : attention_) {
    TensorType q = block.query(h);
    TensorType k = block.key(tgt_h);
    const TensorType v = block.value(tgt_h);
    if (config_.use_instance_norm) {
      q = nn::instance_norm(q);
      k = nn::instance_norm(k);
    }
    if (config_.use_bottleneck) {
      q = block.query_bottleneck(q);
      k = block.key_bottleneck(k);
    }
    const TensorType weights = nn::attention_weights(q, k);
    h = add(h, matmul(weights, v));
    trace.query = q.value();
    trace.key = k.value();
    trace.value = v.value();
    trace.weights = weights.value();
  }
  return {h, trace};
}

template <typename S>
typename S2VCModel<S>::TensorType S2VCModel<S>::decode(const TensorType& h,
                                                       const nn::RunContext& ctx) const {
  TensorType x = h;
  for (const auto& block : decoder_) x = block(x, ctx);
  return output_projection_(x);
}

template <typename S>
ForwardResult<S> S2VCModel<S>::forward(const TensorType& src, const TensorType& tgt,
                                       const nn::RunContext& ctx) {
  TensorType src_h = source_encode(src, ctx);
  const TensorType tgt_h = target_encode(tgt);
  std::optional<TensorType> pooled;
  if (config_.use_sap) {
    pooled = pool_target(tgt_h);
    src_h = condition_source(src_h, *pooled);
  }
  auto [h, trace] = cross_attention(src_h, tgt_h);
  if (pooled) trace.pooled_target = pooled->value();
  ForwardResult<S> result;
  result.mel = decode(h, ctx);
  result.trace = std::move(trace);
  return result;
}

template <typename S>
ForwardResult<S> S2VCModel<S>::forward(const FeatureSequence& src,
                                       std::span<const FeatureSequence> targets,
                                       const nn::RunContext& ctx) {
  if (!(src.kind == config_.source_kind)) {
    throw KindMismatchError("source feature kind mismatch: model expects " +
                            config_.source_kind.name() + ", got " + src.kind.name());
  }
  if (targets.empty()) throw ContractError("forward: at least one target utterance is required");
  for (const auto& t : targets) {
    if (!(t.kind == config_.target_kind)) {
      throw KindMismatchError("target feature kind mismatch: model expects " +
                              config_.target_kind.name() + ", got " + t.kind.name());
    }
  }
  const FeatureSequence target = concat_target(targets);
  return forward(TensorType(src.frames.template cast<S>()), TensorType(target.frames.template cast<S>()), ctx);
}

template <typename S>
ParameterList<S> S2VCModel<S>::parameters() const {
  ParameterList<S> out;
  for (std::size_t i = 0; i < source_layers_.size(); ++i) {
    source_layers_[i].collect(out, "source.linear" + std::to_string(i));
    source_norms_[i].collect(out, "source.bn" + std::to_string(i));
  }
  for (std::size_t i = 0; i < target_convs_.size(); ++i) {
    target_convs_[i].collect(out, "target.conv" + std::to_string(i));
  }
  if (sap_weights_) out.push_back({"sap.weights", *sap_weights_});
  if (sap_projection_) sap_projection_->collect(out, "sap.projection");
  for (std::size_t b = 0; b < attention_.size(); ++b) {
    const std::string p = "attention" + std::to_string(b);
    attention_[b].query.collect(out, p + ".query");
    attention_[b].key.collect(out, p + ".key");
    attention_[b].value.collect(out, p + ".value");
    if (config_.use_bottleneck) {
      attention_[b].query_bottleneck.collect(out, p + ".query_bottleneck");
      attention_[b].key_bottleneck.collect(out, p + ".key_bottleneck");
    }
  }
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    decoder_[i].collect(out, "decoder.block" + std::to_string(i));
  }
  output_projection_.collect(out, "decoder.output");
  return out;
}

template <typename S>
std::vector<nn::NamedBuffer<S>> S2VCModel<S>::buffers() {
  std::vector<nn::NamedBuffer<S>> out;
  for (std::size_t i = 0; i < source_norms_.size(); ++i) {
    source_norms_[i].collect_buffers(out, "source.bn" + std::to_string(i));
  }
  return out;
}

template class S2VCModel<float>;
template class S2VCModel<double>;

// ---------------------------------------------------------------------------
// Binary helpers

namespace {

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) {
    std::uint32_t r;
    std::memcpy(&r, &v, 4);
    u32(r);
  }
  void matrix(const MatrixXf& m) {
    u32(static_cast<std::uint32_t>(m.rows()));
    u32(static_cast<std::uint32_t>(m.cols()));
    for (Index i = 0; i < m.size(); ++i) f32(m.data()[i]);
  }
  void crc_trailer() {
    const uLong crc = crc32(0L, bytes.data(), static_cast<uInt>(bytes.size()));
    u32(static_cast<std::uint32_t>(crc));
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> b, const char* format) : bytes_(b), format_(format) {}

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw LoadError(LoadError::Code::LengthMismatch, std::string(format_) + ": truncated");
    }
  }
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  MatrixXf matrix() {
    const std::uint32_t rows = u32();
    const std::uint32_t cols = u32();
    const std::uint64_t n = 4ull * rows * cols;
    need(static_cast<std::size_t>(n));
    MatrixXf m(rows, cols);
    if (n > 0) std::memcpy(m.data(), bytes_.data() + pos_, static_cast<std::size_t>(n));
    pos_ += static_cast<std::size_t>(n);
    if (!m.allFinite()) throw LoadError(LoadError::Code::NonFinite, std::string(format_) + ": non-finite values");
    return m;
  }
  std::size_t position() const { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  const char* format_;
  std::size_t pos_ = 0;
};

// Verifies magic and the CRC32 trailer; returns the body without the trailer.
std::span<const std::uint8_t> check_envelope(std::span<const std::uint8_t> bytes, const char* magic,
                                             const char* format) {
  if (bytes.size() < 12) {
    throw LoadError(LoadError::Code::LengthMismatch, std::string(format) + ": file too short");
  }
  if (std::memcmp(bytes.data(), magic, 4) != 0) {
    throw LoadError(LoadError::Code::BadMagic,
                    std::string(format) + ": bad magic (expected " + magic + ")");
  }
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body + i]) << (8 * i);
  const auto actual = static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(body)));
  if (stored != actual) {
    throw LoadError(LoadError::Code::ChecksumMismatch, std::string(format) + ": CRC32 mismatch");
  }
  return bytes.first(body);
}

}  // namespace

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(LoadError::Code::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

// ---------------------------------------------------------------------------
// Checkpoints

const CheckpointBlob* CheckpointData::find(const std::string& name) const {
  for (const auto& b : blobs) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const CheckpointData& data) {
  Writer w;
  w.raw("S2VC", 4);
  w.u32(kCheckpointVersion);
  const std::string header = data.header.dump();
  w.u32(static_cast<std::uint32_t>(header.size()));
  w.raw(header.data(), header.size());
  w.u32(static_cast<std::uint32_t>(data.blobs.size()));
  for (const auto& blob : data.blobs) {
    w.u16(static_cast<std::uint16_t>(blob.name.size()));
    w.raw(blob.name.data(), blob.name.size());
    w.matrix(blob.data);
  }
  w.crc_trailer();
  return std::move(w.bytes);
}

CheckpointData decode_checkpoint(std::span<const std::uint8_t> bytes) {
  const auto body = check_envelope(bytes, "S2VC", "checkpoint");
  Reader r(body, "checkpoint");
  (void)r.u32();
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw LoadError(LoadError::Code::VersionMismatch,
                    "checkpoint: version " + std::to_string(version) + " unsupported (expected " +
                        std::to_string(kCheckpointVersion) + ")");
  }
  CheckpointData data;
  const std::uint32_t header_len = r.u32();
  try {
    data.header = nlohmann::json::parse(r.string(header_len));
  } catch (const nlohmann::json::parse_error& e) {
    throw LoadError(LoadError::Code::Malformed, std::string("checkpoint: header is not JSON: ") + e.what());
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointBlob blob;
    blob.name = r.string(r.u16());
    blob.data = r.matrix();
    data.blobs.push_back(std::move(blob));
  }
  if (r.position() != body.size()) {
    throw LoadError(LoadError::Code::LengthMismatch, "checkpoint: trailing bytes after last blob");
  }
  return data;
}

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointData& data) {
  write_file_bytes(path, encode_checkpoint(data));
}

CheckpointData read_checkpoint_file(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file_bytes(path));
  } catch (const LoadError& e) {
    throw LoadError(e.code(), std::string(e.what()) + " [" + path.string() + "]");
  }
}

CheckpointData model_to_checkpoint(Model& model, const dsp::MelConfig& mel, const nlohmann::json& extra) {
  CheckpointData data;
  data.header = {{"format", "s2vc-checkpoint"},
                 {"model", model.config().to_json()},
                 {"dsp", mel.to_json()},
                 {"metadata", extra}};
  for (const auto& p : model.parameters()) data.blobs.push_back({p.name, p.tensor.value()});
  for (const auto& b : model.buffers()) data.blobs.push_back({b.name, *b.data});
  return data;
}

Model model_from_checkpoint(const CheckpointData& data, const std::optional<FeatureKind>& expect_source,
                            const std::optional<FeatureKind>& expect_target) {
  if (!data.header.contains("model")) {
    throw LoadError(LoadError::Code::Malformed, "checkpoint: header has no model configuration");
  }
  ModelConfig config;
  try {
    config = ModelConfig::from_json(data.header.at("model"));
  } catch (const ConfigError& e) {
    throw LoadError(LoadError::Code::Malformed, std::string("checkpoint: ") + e.what());
  }
  if (expect_source && !(*expect_source == config.source_kind)) {
    throw LoadError(LoadError::Code::KindMismatch,
                    "checkpoint: source feature kind is " + config.source_kind.name() +
                        ", requested " + expect_source->name());
  }
  if (expect_target && !(*expect_target == config.target_kind)) {
    throw LoadError(LoadError::Code::KindMismatch,
                    "checkpoint: target feature kind is " + config.target_kind.name() +
                        ", requested " + expect_target->name());
  }
  Model model(config, 0);
  auto assign = [&](const std::string& name, MatrixXf& dst) {
    const CheckpointBlob* blob = data.find(name);
    if (blob == nullptr) throw LoadError(LoadError::Code::Malformed, "checkpoint: missing blob '" + name + "'");
    if (blob->data.rows() != dst.rows() || blob->data.cols() != dst.cols()) {
      throw LoadError(LoadError::Code::DimensionMismatch, "checkpoint: blob '" + name + "' has wrong shape");
    }
    dst = blob->data;
  };
  for (auto& p : model.parameters()) assign(p.name, p.tensor.mutable_value());
  for (auto& b : model.buffers()) assign(b.name, *b.data);
  return model;
}

void save_checkpoint(Model& model, const std::filesystem::path& path, const dsp::MelConfig& mel,
                     const nlohmann::json& extra) {
  write_checkpoint_file(path, model_to_checkpoint(model, mel, extra));
}

Model load_checkpoint(const std::filesystem::path& path, const std::optional<FeatureKind>& expect_source,
                      const std::optional<FeatureKind>& expect_target) {
  return model_from_checkpoint(read_checkpoint_file(path), expect_source, expect_target);
}

// ---------------------------------------------------------------------------
// Attention traces

std::vector<std::uint8_t> encode_trace(const AttentionTrace<float>& trace) {
  Writer w;
  w.raw("S2VT", 4);
  w.u32(1);
  w.matrix(trace.query);
  w.matrix(trace.key);
  w.matrix(trace.value);
  w.matrix(trace.weights);
  w.u8(trace.pooled_target ? 1 : 0);
  if (trace.pooled_target) w.matrix(*trace.pooled_target);
  w.crc_trailer();
  return std::move(w.bytes);
}

AttentionTrace<float> decode_trace(std::span<const std::uint8_t> bytes) {
  const auto body = check_envelope(bytes, "S2VT", "trace");
  Reader r(body, "trace");
  (void)r.u32();
  const std::uint32_t version = r.u32();
  if (version != 1) throw LoadError(LoadError::Code::VersionMismatch, "trace: unsupported version");
  AttentionTrace<float> trace;
  trace.query = r.matrix();
  trace.key = r.matrix();
  trace.value = r.matrix();
  trace.weights = r.matrix();
  const std::uint8_t has_pooled = r.u8();
  if (has_pooled > 1) throw LoadError(LoadError::Code::Malformed, "trace: bad pooled flag");
  if (has_pooled) trace.pooled_target = r.matrix();
  if (r.position() != body.size()) throw LoadError(LoadError::Code::LengthMismatch, "trace: trailing bytes");
  return trace;
}

void save_trace(const std::filesystem::path& path, const AttentionTrace<float>& trace) {
  write_file_bytes(path, encode_trace(trace));
}

AttentionTrace<float> load_trace(const std::filesystem::path& path) {
  return decode_trace(read_file_bytes(path));
}

}  // namespace s2vc
