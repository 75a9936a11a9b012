#include "ocrcap/captioner.hpp"

#include <numeric>

#include "ocrcap/error.hpp"

namespace ocrcap {

Captioner::Captioner(ModelConfig config, ModelParams params, ExtendedVocabulary vocab)
    : config_(std::move(config)), params_(std::move(params)), vocab_(std::move(vocab)) {
  if (config_.fixed_vocab_size != vocab_.fixed_size() || config_.extended_vocab_size != vocab_.size()) {
    throw DataError("captioner: model expects vocabulary sizes " + std::to_string(config_.fixed_vocab_size) + "/" +
                    std::to_string(config_.extended_vocab_size) + ", got " + std::to_string(vocab_.fixed_size()) +
                    "/" + std::to_string(vocab_.size()));
  }
}

PreparedImage Captioner::prepare(const FeatureBundle& raw) const {
  PreparedImage image;
  image.bundle = prepare_ocr(raw);
  image.memory = encode(image.bundle, params_, config_);
  if (config_.uses_pointer()) image.copy = copy_support(image.memory, vocab_);
  return image;
}

std::size_t Captioner::feedback_id(std::size_t id) const {
  return id < config_.generation_vocab_size() ? id : kUnk;
}

StepOutput Captioner::step(const PreparedImage& image, const DecoderState& state, std::size_t prev_id) const {
  auto [step, next] = decode_step(state, feedback_id(prev_id), image.memory, params_, config_);
  StepOutput out;
  out.dist.fixed_size = vocab_.fixed_size();
  switch (config_.variant) {
    case Variant::extended:
      out.dist.probs = step.p_vocab;
      break;
    case Variant::baseline: {
      std::vector<std::size_t> identity(vocab_.fixed_size());
      std::iota(identity.begin(), identity.end(), std::size_t{0});
      out.dist.probs = scatter_add(step.p_vocab, identity, vocab_.size());
      break;
    }
    case Variant::pointer:
      if (image.copy.empty()) {
        std::vector<std::size_t> identity(vocab_.fixed_size());
        std::iota(identity.begin(), identity.end(), std::size_t{0});
        out.dist.probs = scatter_add(step.p_vocab, identity, vocab_.size());
      } else {
        out.p_gen = generation_probability(step, params_.pointer);
        out.p_gen_value = out.p_gen.item();
        const Tensor copy = copy_distribution(step.attention, image.copy, vocab_.size());
        out.dist = mix(step.p_vocab, copy, out.p_gen, vocab_);
        NoGradGuard no_grad;
        std::vector<std::size_t> identity(vocab_.fixed_size());
        std::iota(identity.begin(), identity.end(), std::size_t{0});
        out.generated = mul_scalar(out.p_gen, scatter_add(step.p_vocab, identity, vocab_.size()));
        out.copied = mul_scalar(add_scalar(scale(out.p_gen, -1.0), 1.0), copy);
      }
      break;
  }
  out.step = std::move(step);
  out.next = std::move(next);
  return out;
}

std::vector<std::size_t> Captioner::target_ids(const TokenList& caption, const PreparedImage& image) const {
  std::vector<std::size_t> ids;
  ids.reserve(caption.size() + 1);
  for (const auto& token : caption) {
    std::size_t id = kUnk;
    switch (config_.variant) {
      case Variant::baseline:
        id = vocab_.base().id(token);
        break;
      case Variant::extended:
        id = vocab_.find(token).value_or(kUnk);
        break;
      case Variant::pointer: {
        const auto ext = vocab_.find(token);
        if (ext && *ext < vocab_.fixed_size()) {
          id = *ext;
        } else if (ext && image.copy.contains(*ext)) {
          id = *ext;
        }
        break;
      }
    }
    ids.push_back(id);
  }
  ids.push_back(kEos);
  return ids;
}

bool Captioner::can_emit(const std::string& token, const PreparedImage& image) const {
  const auto ids = target_ids({token}, image);
  return ids.front() != kUnk || token == kSpecialTokens[kUnk];
}

}  // namespace ocrcap
