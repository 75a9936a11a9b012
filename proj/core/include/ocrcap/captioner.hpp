#pragma once

#include <vector>

#include "ocrcap/features.hpp"
#include "ocrcap/model.hpp"
#include "ocrcap/pointer.hpp"
#include "ocrcap/vocab.hpp"

namespace ocrcap {

// An image ready for decoding: OCR preprocessed, encoded, copy support resolved.
struct PreparedImage {
  FeatureBundle bundle;
  Memory memory;
  CopySupport copy;
};

struct StepOutput {
  ExtendedDistribution dist;
  // Pointer variant with a copy channel: the two terms of the mixture and p_gen.
  // Otherwise undefined, and p_gen_value is 1.
  Tensor p_gen;
  Tensor generated;
  Tensor copied;
  double p_gen_value = 1.0;
  DecoderStep step;
  DecoderState next;
};

// Binds model parameters and vocabulary and produces, for every variant, the
// per-step distribution over the extended vocabulary.
class Captioner {
 public:
  Captioner(ModelConfig config, ModelParams params, ExtendedVocabulary vocab);

  const ModelConfig& config() const { return config_; }
  const ModelParams& params() const { return params_; }
  const ExtendedVocabulary& vocab() const { return vocab_; }

  PreparedImage prepare(const FeatureBundle& raw) const;
  DecoderState start() const { return initial_state(config_); }
  StepOutput step(const PreparedImage& image, const DecoderState& state, std::size_t prev_id) const;

  // Token fed back to the decoder; ids the embedding table lacks become kUnk.
  std::size_t feedback_id(std::size_t id) const;

  // Training/scoring target ids for a reference caption, ending with kEos.
  //   pointer:  a token among the image's copyable OCR tokens maps to its extended id,
  //             otherwise its fixed id, otherwise kUnk;
  //   extended: extended id or kUnk;  baseline: fixed id or kUnk.
  std::vector<std::size_t> target_ids(const TokenList& caption, const PreparedImage& image) const;

  // Whether the model can place probability on the literal token for this image.
  bool can_emit(const std::string& token, const PreparedImage& image) const;

 private:
  ModelConfig config_;
  ModelParams params_;
  ExtendedVocabulary vocab_;
};

}  // namespace ocrcap
