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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "s2vc/dsp.hpp"
#include "s2vc/features.hpp"
#include "s2vc/nn.hpp"

namespace s2vc {

enum class SapStrategy {
  Add,            ///< pooled target vector added to every source frame
  ConcatProject,  ///< [source frame | pooled] projected back to d_model
};

struct ModelConfig {
  int d_model = 512;
  FeatureKind source_kind{FeatureKind::Id::Mel};
  int source_dim = 80;
  FeatureKind target_kind{FeatureKind::Id::Mel};
  int target_dim = 80;
  int n_source_layers = 4;
  int n_target_conv = 3;
  int conv_kernel = 5;
  int n_attention_blocks = 1;
  int n_decoder_conformer = 3;
  int conformer_heads = 2;
  int conformer_ff_dim = 1024;
  int conformer_conv_kernel = 15;
  int attn_bottleneck_dim = 4;
  bool use_bottleneck = true;
  bool use_instance_norm = true;
  bool use_sap = true;
  bool use_cross_attention = true;
  SapStrategy sap_strategy = SapStrategy::Add;
  int mel_dim = 80;
  double dropout = 0.1;
  double bn_momentum = 0.1;

  void validate() const;
  /// Width of queries and keys entering the score computation.
  int query_dim() const { return use_bottleneck ? attn_bottleneck_dim : d_model; }

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Q/K/V and attention weights of one conversion, for probing and inspection.
template <typename Scalar>
struct AttentionTrace {
  Matrix<Scalar> query;    // Ts x dq
  Matrix<Scalar> key;      // Tt x dq
  Matrix<Scalar> value;    // Tt x d_model
  Matrix<Scalar> weights;  // Ts x Tt; empty when cross attention is disabled
  std::optional<Matrix<Scalar>> pooled_target;  // 1 x d_model

  bool empty() const { return weights.size() == 0; }
};

template <typename Scalar>
struct ForwardResult {
  BasicTensor<Scalar> mel;  // Ts x mel_dim
  AttentionTrace<Scalar> trace;
};

template <typename Scalar>
class S2VCModel {
 public:
  using TensorType = BasicTensor<Scalar>;

  explicit S2VCModel(ModelConfig config, std::uint64_t seed = 0);

  const ModelConfig& config() const { return config_; }

  /// Linear -> BatchNorm -> ReLU stack (no ReLU after the last layer), per frame.
  TensorType source_encode(const TensorType& src, const nn::RunContext& ctx);
  /// Conv1d -> ReLU stack along time, length preserving.
  TensorType target_encode(const TensorType& tgt) const;
  /// Pooled target representation (1 x d_model); requires use_sap.
  TensorType pool_target(const TensorType& tgt_h) const;
  /// Applies the pooled target vector to the source encoding.
  TensorType condition_source(const TensorType& src_h, const TensorType& pooled) const;
  /// Residual cross attention of source frames over target frames. With
  /// use_cross_attention off, returns src_h unchanged and an empty trace.
  std::pair<TensorType, AttentionTrace<Scalar>> cross_attention(const TensorType& src_h,
                                                                const TensorType& tgt_h) const;
  /// Conformer stack plus projection to mel_dim.
  TensorType decode(const TensorType& h, const nn::RunContext& ctx) const;

  ForwardResult<Scalar> forward(const TensorType& src, const TensorType& tgt, const nn::RunContext& ctx);

  /// Checks kinds and widths, concatenates the target utterances, then runs forward().
  ForwardResult<Scalar> forward(const FeatureSequence& src, std::span<const FeatureSequence> targets,
                                const nn::RunContext& ctx);

  ParameterList<Scalar> parameters() const;
  std::vector<nn::NamedBuffer<Scalar>> buffers();

 private:
  struct AttentionBlock {
    nn::Linear<Scalar> query, key, value;
    nn::Linear<Scalar> query_bottleneck, key_bottleneck;
  };

  ModelConfig config_;
  std::vector<nn::Linear<Scalar>> source_layers_;
  std::vector<nn::BatchNorm<Scalar>> source_norms_;
  std::vector<nn::Conv1d<Scalar>> target_convs_;
  std::optional<TensorType> sap_weights_;             // d_model x 1
  std::optional<nn::Linear<Scalar>> sap_projection_;  // ConcatProject only
  std::vector<AttentionBlock> attention_;
  std::vector<nn::ConformerBlock<Scalar>> decoder_;
  nn::Linear<Scalar> output_projection_;
};

using Model = S2VCModel<float>;

// -- Checkpoints ----------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointBlob {
  std::string name;
  MatrixXf data;
};

/// Generic container: canonical JSON header plus named float blobs, CRC32 trailer.
struct CheckpointData {
  nlohmann::json header;
  std::vector<CheckpointBlob> blobs;

  const CheckpointBlob* find(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const CheckpointData& data);
CheckpointData decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint_file(const std::filesystem::path& path, const CheckpointData& data);
CheckpointData read_checkpoint_file(const std::filesystem::path& path);

/// Parameters and running statistics as blobs, with model and DSP configuration in the header.
CheckpointData model_to_checkpoint(Model& model, const dsp::MelConfig& mel = {},
                                   const nlohmann::json& extra = nlohmann::json::object());
/// Rebuilds a model; throws LoadError(KindMismatch) when expected kinds are given and differ.
Model model_from_checkpoint(const CheckpointData& data,
                            const std::optional<FeatureKind>& expect_source = std::nullopt,
                            const std::optional<FeatureKind>& expect_target = std::nullopt);

void save_checkpoint(Model& model, const std::filesystem::path& path, const dsp::MelConfig& mel = {},
                     const nlohmann::json& extra = nlohmann::json::object());
Model load_checkpoint(const std::filesystem::path& path,
                      const std::optional<FeatureKind>& expect_source = std::nullopt,
                      const std::optional<FeatureKind>& expect_target = std::nullopt);

// -- Attention trace files ----------------------------------------------------------

std::vector<std::uint8_t> encode_trace(const AttentionTrace<float>& trace);
AttentionTrace<float> decode_trace(std::span<const std::uint8_t> bytes);
void save_trace(const std::filesystem::path& path, const AttentionTrace<float>& trace);
AttentionTrace<float> load_trace(const std::filesystem::path& path);

/// Reads a whole file into memory; throws LoadError(Io) when it cannot be opened.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace s2vc
