#pragma once

#include <vector>

#include "ocrcap/error.hpp"
#include "ocrcap/model.hpp"
#include "ocrcap/vocab.hpp"

namespace ocrcap {

// Probability vector over the extended vocabulary, shape {1, vocab.size()}.
struct ExtendedDistribution {
  Tensor probs;
  std::size_t fixed_size = 0;
};

// Raised when an image has no OCR token that can be copied; the caller must
// then generate from the fixed vocabulary alone (p_gen = 1).
class NoCopyChannel : public ContractError {
 public:
  using ContractError::ContractError;
};

// p_gen = sigmoid(w_context . c_t + w_state . h_t + w_input . x_t + bias), shape {1, 1}.
Tensor generation_probability(const DecoderStep& step, const PointerParams& params);

// Memory rows that take part in copying and the extended id each one copies.
// OCR tokens without an extended id are left out.
struct CopySupport {
  std::vector<std::size_t> positions;
  std::vector<std::size_t> ids;

  bool empty() const { return positions.empty(); }
  bool contains(std::size_t id) const;
};

CopySupport copy_support(const Memory& memory, const ExtendedVocabulary& vocab);

// Attention restricted to the OCR positions, renormalized, then summed per
// token onto extended-vocabulary ids. Throws NoCopyChannel when the support is empty.
Tensor copy_distribution(const Tensor& attention, const Memory& memory, const ExtendedVocabulary& vocab);
Tensor copy_distribution(const Tensor& attention, const CopySupport& support, std::size_t vocab_size);

// P(w) = p_gen * P_vocab(w) + (1 - p_gen) * copy(w), with P_vocab zero above
// the fixed boundary. p_vocab has fixed_size entries, copy has vocab.size().
ExtendedDistribution mix(const Tensor& p_vocab, const Tensor& copy, const Tensor& p_gen,
                         const ExtendedVocabulary& vocab);

}  // namespace ocrcap
