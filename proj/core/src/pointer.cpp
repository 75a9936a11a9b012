#include "ocrcap/pointer.hpp"

#include <algorithm>
#include <numeric>

namespace ocrcap {

Tensor generation_probability(const DecoderStep& step, const PointerParams& params) {
  for (const Tensor* v : {&step.context, &step.hidden, &step.input}) {
    if (v->rank() != 2 || v->dim(0) != 1) {
      throw DimensionError("generation_probability: expected row vectors, got " + shape_str(v->shape()));
    }
  }
  const Tensor logit = add(add(matmul(step.context, params.w_context), matmul(step.hidden, params.w_state)),
                           matmul(step.input, params.w_input));
  return sigmoid(add(logit, params.bias));
}

bool CopySupport::contains(std::size_t id) const { return std::find(ids.begin(), ids.end(), id) != ids.end(); }

CopySupport copy_support(const Memory& memory, const ExtendedVocabulary& vocab) {
  CopySupport support;
  for (std::size_t i = 0; i < memory.ocr_tokens.size(); ++i) {
    if (auto id = vocab.find(memory.ocr_tokens[i])) {
      support.positions.push_back(memory.region_count + i);
      support.ids.push_back(*id);
    }
  }
  return support;
}

Tensor copy_distribution(const Tensor& attention, const CopySupport& support, std::size_t vocab_size) {
  if (support.empty()) throw NoCopyChannel("copy_distribution: image has no copyable OCR token");
  if (attention.rank() != 2 || attention.dim(0) != 1) {
    throw DimensionError("copy_distribution: attention must be a row vector, got " + shape_str(attention.shape()));
  }
  const std::size_t n = attention.dim(1);
  for (std::size_t p : support.positions) {
    if (p >= n) {
      throw DimensionError("copy_distribution: position " + std::to_string(p) + " beyond attention of length " +
                           std::to_string(n));
    }
  }
  const std::size_t k = support.positions.size();
  const Tensor mass = reshape(gather_rows(reshape(attention, {n, 1}), support.positions), {1, k});
  const Tensor renormalized = mul_scalar(reciprocal(sum(mass)), mass);
  return scatter_add(renormalized, support.ids, vocab_size);
}

Tensor copy_distribution(const Tensor& attention, const Memory& memory, const ExtendedVocabulary& vocab) {
  if (attention.numel() != memory.size()) {
    throw DimensionError("copy_distribution: attention over " + std::to_string(attention.numel()) +
                         " positions but memory has " + std::to_string(memory.size()));
  }
  return copy_distribution(attention, copy_support(memory, vocab), vocab.size());
}

ExtendedDistribution mix(const Tensor& p_vocab, const Tensor& copy, const Tensor& p_gen,
                         const ExtendedVocabulary& vocab) {
  if (p_gen.numel() != 1) throw DimensionError("mix: p_gen must be a single value");
  const double g = p_gen.item();
  if (!(g > 0.0 && g < 1.0)) throw ContractError("mix: p_gen = " + std::to_string(g) + " outside (0, 1)");
  if (p_vocab.numel() != vocab.fixed_size()) {
    throw DimensionError("mix: P_vocab " + shape_str(p_vocab.shape()) + " does not cover the fixed vocabulary of " +
                         std::to_string(vocab.fixed_size()));
  }
  if (copy.numel() != vocab.size()) {
    throw DimensionError("mix: copy distribution " + shape_str(copy.shape()) +
                         " does not cover the extended vocabulary of " + std::to_string(vocab.size()));
  }
  std::vector<std::size_t> identity(vocab.fixed_size());
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  const Tensor padded = scatter_add(p_vocab, identity, vocab.size());
  const Tensor copy_row = reshape(copy, {1, vocab.size()});
  const Tensor keep = add_scalar(scale(p_gen, -1.0), 1.0);
  return {add(mul_scalar(p_gen, padded), mul_scalar(keep, copy_row)), vocab.fixed_size()};
}

}  // namespace ocrcap
