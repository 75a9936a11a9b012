#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ocrcap/features.hpp"
#include "ocrcap/tensor.hpp"

namespace ocrcap {

// Model variants:
//   baseline  - regions only, softmax over the fixed vocabulary.
//   extended  - regions + OCR embeddings, softmax over the extended vocabulary.
//   pointer   - regions + OCR embeddings, fixed-vocabulary generator mixed with
//               a copy distribution over the image's OCR tokens.
enum class Variant { baseline, extended, pointer };

std::string_view to_string(Variant v);
// Throws ContractError for unknown names.
Variant parse_variant(std::string_view name);

struct ModelConfig {
  Variant variant = Variant::pointer;
  std::size_t d_model = 64;
  std::size_t d_region = 32;
  std::size_t d_ocr = 32;
  std::size_t encoder_layers = 2;
  std::size_t fixed_vocab_size = 0;
  std::size_t extended_vocab_size = 0;
  double init_range = 0.08;
  std::uint64_t seed = 1;

  bool uses_ocr() const { return variant != Variant::baseline; }
  bool uses_pointer() const { return variant == Variant::pointer; }
  // Size of the embedding table and of the generator softmax.
  std::size_t generation_vocab_size() const {
    return variant == Variant::extended ? extended_vocab_size : fixed_vocab_size;
  }
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

// Attention-on-attention gate: info = q Wiq + v Wiv + bi, gate = sigmoid(q Wgq + v Wgv + bg).
struct AoaParams {
  Tensor info_query, info_value, info_bias;
  Tensor gate_query, gate_value, gate_bias;
};

struct EncoderLayerParams {
  Tensor query, key, value;
  AoaParams aoa;
  Tensor norm_gain, norm_bias;
};

// Gated recurrent cell; weights hold the [update | reset | candidate] gates side by side.
struct RecurrentCellParams {
  Tensor input_weight, hidden_weight, input_bias, hidden_bias;
};

struct PointerParams {
  Tensor w_context, w_state, w_input, bias;
};

struct ModelParams {
  Tensor region_proj, region_bias;
  Tensor ocr_proj, ocr_bias;  // absent for baseline
  std::vector<EncoderLayerParams> encoder;
  Tensor embedding;
  RecurrentCellParams cell;
  Tensor attn_query, attn_key;
  AoaParams decoder_aoa;
  Tensor output_weight, output_bias;
  PointerParams pointer;  // pointer variant only

  // Uniform(-init_range, init_range) from config.seed; layer-norm gains start at 1.
  static ModelParams initialize(const ModelConfig& config);

  // Every defined parameter in a fixed order with a stable name.
  std::vector<std::pair<std::string, Tensor>> named() const;
  std::vector<Tensor> tensors() const;
  std::size_t parameter_count() const;
};

// Closed-form parameter count for a configuration.
std::size_t expected_parameter_count(const ModelConfig& config);

struct Attention {
  Tensor values;   // {queries, d_v}
  Tensor weights;  // {queries, keys}, rows sum to 1
};

// Scaled dot-product attention, scaling by 1/sqrt(query dimension).
Attention attend(const Tensor& queries, const Tensor& keys, const Tensor& values);

// Attention-on-attention refinement of an attended vector for its query.
Tensor aoa(const Tensor& query, const Tensor& attended, const AoaParams& params);

// Encoder output for one image.
struct Memory {
  Tensor rows;    // {R + M, d}
  Tensor keys;    // rows projected for decoder attention
  Tensor pooled;  // {1, d} mean of rows
  std::size_t region_count = 0;
  TokenList ocr_tokens;  // aligned with rows R .. R+M-1

  std::size_t size() const { return region_count + ocr_tokens.size(); }
};

// Projects regions (and OCR embeddings unless baseline) to d_model, then
// applies encoder_layers rounds of self-attention + AoA with residual
// connection and layer norm. Row order follows the bundle.
Memory encode(const FeatureBundle& bundle, const ModelParams& params, const ModelConfig& config);

struct DecoderState {
  Tensor hidden;  // {1, d}
};

DecoderState initial_state(const ModelConfig& config);

struct DecoderStep {
  Tensor attention;  // a_t {1, R+M}
  Tensor context;    // c_t {1, d}
  Tensor hidden;     // h_t {1, d}
  Tensor input;      // x_t {1, d}
  Tensor p_vocab;    // {1, generation_vocab_size}
};

// One decoder step conditioned on the previous token (an id below
// generation_vocab_size; callers feed OCR-only tokens back as kUnk).
std::pair<DecoderStep, DecoderState> decode_step(const DecoderState& state, std::size_t prev_token,
                                                 const Memory& memory, const ModelParams& params,
                                                 const ModelConfig& config);

}  // namespace ocrcap
