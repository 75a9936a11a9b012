#include "ocrcap/model.hpp"

#include <cmath>

#include "ocrcap/error.hpp"
#include "ocrcap/rng.hpp"

namespace ocrcap {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::baseline:
      return "baseline";
    case Variant::extended:
      return "extended";
    case Variant::pointer:
      return "pointer";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  if (name == "baseline") return Variant::baseline;
  if (name == "extended") return Variant::extended;
  if (name == "pointer") return Variant::pointer;
  throw ContractError("unknown variant '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  if (d_model == 0 || d_region == 0 || (uses_ocr() && d_ocr == 0)) {
    throw ContractError("model config: dimensions must be positive");
  }
  if (fixed_vocab_size <= kSpecialCount) throw ContractError("model config: fixed vocabulary too small");
  if (extended_vocab_size < fixed_vocab_size) {
    throw ContractError("model config: extended vocabulary smaller than fixed vocabulary");
  }
}

namespace {

Tensor uniform(Rng& rng, Shape shape, double range) {
  const std::size_t n = shape_numel(shape);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-range, range);
  return Tensor::from(std::move(shape), std::move(v), true);
}

AoaParams make_aoa(Rng& rng, std::size_t d, double r) {
  AoaParams p;
  p.info_query = uniform(rng, {d, d}, r);
  p.info_value = uniform(rng, {d, d}, r);
  p.info_bias = uniform(rng, {1, d}, r);
  p.gate_query = uniform(rng, {d, d}, r);
  p.gate_value = uniform(rng, {d, d}, r);
  p.gate_bias = uniform(rng, {1, d}, r);
  return p;
}

void push_aoa(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix, const AoaParams& p) {
  out.emplace_back(prefix + ".info_query", p.info_query);
  out.emplace_back(prefix + ".info_value", p.info_value);
  out.emplace_back(prefix + ".info_bias", p.info_bias);
  out.emplace_back(prefix + ".gate_query", p.gate_query);
  out.emplace_back(prefix + ".gate_value", p.gate_value);
  out.emplace_back(prefix + ".gate_bias", p.gate_bias);
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) { return add_bias(matmul(x, w), b); }

Tensor matrix_from(const std::vector<std::vector<double>>& rows) {
  const std::size_t cols = rows.front().size();
  std::vector<double> flat;
  flat.reserve(rows.size() * cols);
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return Tensor::from({rows.size(), cols}, std::move(flat));
}

}  // namespace

ModelParams ModelParams::initialize(const ModelConfig& config) {
  config.validate();
  Rng rng(mix64(config.seed));
  const double r = config.init_range;
  const std::size_t d = config.d_model;
  const std::size_t v = config.generation_vocab_size();
  ModelParams p;
  p.region_proj = uniform(rng, {config.d_region, d}, r);
  p.region_bias = uniform(rng, {1, d}, r);
  if (config.uses_ocr()) {
    p.ocr_proj = uniform(rng, {config.d_ocr, d}, r);
    p.ocr_bias = uniform(rng, {1, d}, r);
  }
  for (std::size_t l = 0; l < config.encoder_layers; ++l) {
    EncoderLayerParams layer;
    layer.query = uniform(rng, {d, d}, r);
    layer.key = uniform(rng, {d, d}, r);
    layer.value = uniform(rng, {d, d}, r);
    layer.aoa = make_aoa(rng, d, r);
    layer.norm_gain = Tensor::full({1, d}, 1.0, true);
    layer.norm_bias = Tensor::zeros({1, d}, true);
    p.encoder.push_back(std::move(layer));
  }
  p.embedding = uniform(rng, {v, d}, r);
  p.cell.input_weight = uniform(rng, {2 * d, 3 * d}, r);
  p.cell.hidden_weight = uniform(rng, {d, 3 * d}, r);
  p.cell.input_bias = uniform(rng, {1, 3 * d}, r);
  p.cell.hidden_bias = uniform(rng, {1, 3 * d}, r);
  p.attn_query = uniform(rng, {d, d}, r);
  p.attn_key = uniform(rng, {d, d}, r);
  p.decoder_aoa = make_aoa(rng, d, r);
  p.output_weight = uniform(rng, {d, v}, r);
  p.output_bias = uniform(rng, {1, v}, r);
  if (config.uses_pointer()) {
    p.pointer.w_context = uniform(rng, {d, 1}, r);
    p.pointer.w_state = uniform(rng, {d, 1}, r);
    p.pointer.w_input = uniform(rng, {d, 1}, r);
    p.pointer.bias = uniform(rng, {1, 1}, r);
  }
  return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("encoder.region_proj", region_proj);
  out.emplace_back("encoder.region_bias", region_bias);
  if (ocr_proj.defined()) {
    out.emplace_back("encoder.ocr_proj", ocr_proj);
    out.emplace_back("encoder.ocr_bias", ocr_bias);
  }
  for (std::size_t l = 0; l < encoder.size(); ++l) {
    const std::string prefix = "encoder.layer" + std::to_string(l);
    const auto& layer = encoder[l];
    out.emplace_back(prefix + ".query", layer.query);
    out.emplace_back(prefix + ".key", layer.key);
    out.emplace_back(prefix + ".value", layer.value);
    push_aoa(out, prefix + ".aoa", layer.aoa);
    out.emplace_back(prefix + ".norm_gain", layer.norm_gain);
    out.emplace_back(prefix + ".norm_bias", layer.norm_bias);
  }
  out.emplace_back("decoder.embedding", embedding);
  out.emplace_back("decoder.cell.input_weight", cell.input_weight);
  out.emplace_back("decoder.cell.hidden_weight", cell.hidden_weight);
  out.emplace_back("decoder.cell.input_bias", cell.input_bias);
  out.emplace_back("decoder.cell.hidden_bias", cell.hidden_bias);
  out.emplace_back("decoder.attn_query", attn_query);
  out.emplace_back("decoder.attn_key", attn_key);
  push_aoa(out, "decoder.aoa", decoder_aoa);
  out.emplace_back("decoder.output_weight", output_weight);
  out.emplace_back("decoder.output_bias", output_bias);
  if (pointer.bias.defined()) {
    out.emplace_back("pointer.w_context", pointer.w_context);
    out.emplace_back("pointer.w_state", pointer.w_state);
    out.emplace_back("pointer.w_input", pointer.w_input);
    out.emplace_back("pointer.bias", pointer.bias);
  }
  return out;
}

std::vector<Tensor> ModelParams::tensors() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named()) n += t.numel();
  return n;
}

std::size_t expected_parameter_count(const ModelConfig& c) {
  const std::size_t d = c.d_model;
  const std::size_t v = c.generation_vocab_size();
  const std::size_t aoa = 4 * d * d + 2 * d;
  std::size_t n = c.d_region * d + d;
  if (c.uses_ocr()) n += c.d_ocr * d + d;
  n += c.encoder_layers * (3 * d * d + aoa + 2 * d);
  n += v * d;                                  // embedding
  n += 2 * d * 3 * d + d * 3 * d + 2 * 3 * d;  // recurrent cell
  n += 2 * d * d + aoa;                        // decoder attention + AoA
  n += d * v + v;                              // output projection
  if (c.uses_pointer()) n += 3 * d + 1;
  return n;
}

Attention attend(const Tensor& queries, const Tensor& keys, const Tensor& values) {
  if (queries.rank() != 2 || keys.rank() != 2 || values.rank() != 2) {
    throw DimensionError("attend: expected matrices, got Q " + shape_str(queries.shape()) + ", K " +
                         shape_str(keys.shape()) + ", V " + shape_str(values.shape()));
  }
  if (queries.dim(1) != keys.dim(1)) {
    throw DimensionError("attend: query " + shape_str(queries.shape()) + " and key " +
                         shape_str(keys.shape()) + " dimensions differ");
  }
  if (keys.dim(0) != values.dim(0)) {
    throw DimensionError("attend: " + std::to_string(keys.dim(0)) + " keys but " +
                         std::to_string(values.dim(0)) + " values");
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(queries.dim(1)));
  const Tensor scores = scale(matmul(queries, transpose(keys)), inv_sqrt_d);
  Tensor weights = softmax(scores, 1);
  Tensor attended = matmul(weights, values);
  return {std::move(attended), std::move(weights)};
}

Tensor aoa(const Tensor& query, const Tensor& attended, const AoaParams& p) {
  if (query.shape() != attended.shape()) {
    throw DimensionError("aoa: query " + shape_str(query.shape()) + " and attended " +
                         shape_str(attended.shape()) + " differ");
  }
  const Tensor info = add_bias(add(matmul(query, p.info_query), matmul(attended, p.info_value)), p.info_bias);
  const Tensor gate =
      sigmoid(add_bias(add(matmul(query, p.gate_query), matmul(attended, p.gate_value)), p.gate_bias));
  return hadamard(gate, info);
}

Memory encode(const FeatureBundle& bundle, const ModelParams& params, const ModelConfig& config) {
  if (bundle.regions.empty()) throw DataError(bundle.image_id + ": no regions");
  if (bundle.region_dim() != config.d_region) {
    throw DimensionError(bundle.image_id + ": region dimension " + std::to_string(bundle.region_dim()) +
                         " but model expects " + std::to_string(config.d_region));
  }
  Memory memory;
  memory.region_count = bundle.region_count();
  Tensor x = affine(matrix_from(bundle.regions), params.region_proj, params.region_bias);
  if (config.uses_ocr() && !bundle.ocr.empty()) {
    if (bundle.ocr_dim() != config.d_ocr) {
      throw DimensionError(bundle.image_id + ": OCR embedding dimension " + std::to_string(bundle.ocr_dim()) +
                           " but model expects " + std::to_string(config.d_ocr));
    }
    std::vector<std::vector<double>> emb;
    for (const auto& e : bundle.ocr) {
      emb.push_back(e.embedding);
      memory.ocr_tokens.push_back(e.token);
    }
    x = concat({x, affine(matrix_from(emb), params.ocr_proj, params.ocr_bias)}, 0);
  }
  for (const auto& layer : params.encoder) {
    const Attention att = attend(matmul(x, layer.query), matmul(x, layer.key), matmul(x, layer.value));
    x = layer_norm(add(x, aoa(x, att.values, layer.aoa)), layer.norm_gain, layer.norm_bias);
  }
  memory.rows = x;
  memory.keys = matmul(x, params.attn_key);
  memory.pooled = scale(sum(x, 0), 1.0 / static_cast<double>(x.dim(0)));
  return memory;
}

DecoderState initial_state(const ModelConfig& config) { return {Tensor::zeros({1, config.d_model})}; }

std::pair<DecoderStep, DecoderState> decode_step(const DecoderState& state, std::size_t prev_token,
                                                 const Memory& memory, const ModelParams& params,
                                                 const ModelConfig& config) {
  const std::size_t d = config.d_model;
  if (prev_token >= config.generation_vocab_size()) {
    throw ContractError("decode_step: token id " + std::to_string(prev_token) + " outside generation vocabulary of " +
                        std::to_string(config.generation_vocab_size()));
  }
  DecoderStep step;
  const std::size_t ids[] = {prev_token};
  step.input = gather_rows(params.embedding, ids);

  // Gated recurrent update on [x_t ; pooled memory].
  const Tensor cell_in = concat({step.input, memory.pooled}, 1);
  const Tensor gx = affine(cell_in, params.cell.input_weight, params.cell.input_bias);
  const Tensor gh = affine(state.hidden, params.cell.hidden_weight, params.cell.hidden_bias);
  const Tensor update = sigmoid(add(slice(gx, 1, 0, d), slice(gh, 1, 0, d)));
  const Tensor reset = sigmoid(add(slice(gx, 1, d, 2 * d), slice(gh, 1, d, 2 * d)));
  const Tensor candidate = tanh(add(slice(gx, 1, 2 * d, 3 * d), hadamard(reset, slice(gh, 1, 2 * d, 3 * d))));
  step.hidden = add(candidate, hadamard(update, sub(state.hidden, candidate)));

  const Attention att = attend(matmul(step.hidden, params.attn_query), memory.keys, memory.rows);
  step.attention = att.weights;
  step.context = att.values;

  const Tensor refined = aoa(step.hidden, step.context, params.decoder_aoa);
  step.p_vocab = softmax(affine(refined, params.output_weight, params.output_bias), 1);
  DecoderState next{step.hidden};
  return {std::move(step), std::move(next)};
}

}  // namespace ocrcap
