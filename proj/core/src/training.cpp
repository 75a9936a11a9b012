#include "ocrcap/training.hpp"

#include <cmath>
#include <map>

#include "ocrcap/error.hpp"
#include "ocrcap/rng.hpp"

namespace ocrcap {

TrainConfig TrainConfig::paper(Variant variant) {
  TrainConfig c;
  c.variant = variant;
  c.preset = "paper";
  c.learning_rate = 2e-5;
  c.anneal_factor = 0.8;
  c.anneal_every = 3;
  c.epochs = variant == Variant::baseline ? 10 : 15;
  return c;
}

TrainConfig TrainConfig::synthetic(Variant variant) {
  TrainConfig c = paper(variant);
  c.preset = "synthetic";
  c.learning_rate = 5e-3;
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ContractError("train config: learning_rate must be a finite non-negative value");
  }
  if (!(anneal_factor > 0.0 && anneal_factor <= 1.0)) throw ContractError("train config: anneal_factor must be in (0, 1]");
  if (anneal_every == 0) throw ContractError("train config: anneal_every must be >= 1");
  if (epochs == 0) throw ContractError("train config: epochs must be >= 1");
  if (batch_size == 0) throw ContractError("train config: batch_size must be >= 1");
  if (ocr_threshold == 0) throw ContractError("train config: ocr_threshold must be >= 1");
  if (pointer_bias_init && variant != Variant::pointer) {
    throw ContractError("train config: pointer_bias_init applies to the pointer variant only");
  }
}

double lr_schedule(std::size_t epoch, const TrainConfig& config) {
  return config.learning_rate *
         std::pow(config.anneal_factor, static_cast<double>(epoch / config.anneal_every));
}

Tensor sequence_loss(std::span<const ExtendedDistribution> steps, std::span<const std::size_t> target,
                     double floor) {
  if (steps.size() != target.size()) {
    throw DimensionError("sequence_loss: " + std::to_string(steps.size()) + " distributions for " +
                         std::to_string(target.size()) + " targets");
  }
  if (steps.empty()) throw DimensionError("sequence_loss: empty sequence");
  Tensor total;
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const Tensor nll = scale(log(clamp_min(pick(steps[t].probs, target[t]), floor)), -1.0);
    total = total.defined() ? add(total, nll) : nll;
  }
  return total;
}

void adam_step(std::span<Tensor> params, std::span<const std::vector<double>> grads, AdamState& state, double lr,
               const AdamOptions& o) {
  if (params.size() != grads.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].numel()) {
      throw DimensionError("adam_step: gradient " + std::to_string(i) + " has " + std::to_string(grads[i].size()) +
                           " values for parameter " + shape_str(params[i].shape()));
    }
    for (double g : grads[i]) {
      if (!std::isfinite(g)) throw NumericalError("adam_step: non-finite gradient in parameter " + std::to_string(i));
    }
  }
  if (state.first_moment.empty()) {
    for (const Tensor& p : params) {
      state.first_moment.emplace_back(p.numel(), 0.0);
      state.second_moment.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) throw DimensionError("adam_step: optimizer state mismatch");
  ++state.step;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].mutable_values();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * g[j];
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      values[j] -= lr * m_hat / (std::sqrt(v_hat) + o.eps);
    }
  }
}

double clip_global_norm(std::vector<std::vector<double>>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double x : g) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double k = max_norm / norm;
    for (auto& g : grads)
      for (double& x : g) x *= k;
  }
  return norm;
}

std::vector<Example> make_examples(const Dataset& data) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < data.bundles.size(); ++i) index.emplace(data.bundles[i].image_id, i);
  std::vector<std::vector<TokenList>> per_bundle(data.bundles.size());
  for (const auto& rec : data.captions) {
    const auto it = index.find(rec.image_id);
    if (it == index.end()) throw DataError(rec.image_id + ": captions without a feature bundle");
    for (const auto& c : rec.captions) per_bundle[it->second].push_back(c);
  }
  std::vector<Example> examples;
  for (std::size_t i = 0; i < per_bundle.size(); ++i) {
    for (auto& c : per_bundle[i]) examples.push_back({i, std::move(c)});
  }
  return examples;
}

SequenceResult teacher_forced_loss(const Captioner& captioner, const PreparedImage& image,
                                   std::span<const std::size_t> target) {
  SequenceResult result;
  std::vector<ExtendedDistribution> dists;
  dists.reserve(target.size());
  DecoderState state = captioner.start();
  std::size_t prev = kBos;
  for (std::size_t id : target) {
    StepOutput out = captioner.step(image, state, prev);
    result.p_gen_sum += out.p_gen_value;
    dists.push_back(std::move(out.dist));
    state = std::move(out.next);
    prev = id;
  }
  result.steps = target.size();
  result.loss = sequence_loss(dists, target);
  return result;
}

namespace {

void check_finite_params(const ModelParams& params, std::size_t epoch, std::size_t batch) {
  for (const auto& [name, t] : params.named()) {
    if (!t.all_finite()) {
      throw NumericalError("parameter " + name + " became non-finite at epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(batch));
    }
  }
}

}  // namespace

TrainResult train(const Dataset& data, const ExtendedVocabulary& vocab, ModelConfig model_config,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  model_config.variant = config.variant;
  model_config.seed = config.seed;
  model_config.fixed_vocab_size = vocab.fixed_size();
  model_config.extended_vocab_size = vocab.size();
  const std::vector<Example> examples = make_examples(data);
  if (examples.empty()) throw DataError("train: dataset has no captioned images");

  ModelParams params = ModelParams::initialize(model_config);
  if (config.pointer_bias_init) params.pointer.bias.mutable_values()[0] = *config.pointer_bias_init;
  const Captioner captioner(model_config, params, vocab);
  std::vector<Tensor> tensors = params.tensors();
  AdamState adam;
  Rng rng(mix64(config.seed ^ 0x7ea1ULL));

  TrainResult result{params, {}};
  std::vector<std::size_t> order(examples.size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, config);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    double loss_sum = 0.0, p_gen_sum = 0.0;
    std::size_t p_gen_steps = 0;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += config.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      Tensor batch_loss;
      for (std::size_t i = start; i < end; ++i) {
        const Example& ex = examples[order[i]];
        const PreparedImage image = captioner.prepare(data.bundles[ex.bundle_index]);
        const auto target = captioner.target_ids(ex.caption, image);
        SequenceResult seq = teacher_forced_loss(captioner, image, target);
        loss_sum += seq.loss.item();
        p_gen_sum += seq.p_gen_sum;
        p_gen_steps += seq.steps;
        batch_loss = batch_loss.defined() ? add(batch_loss, seq.loss) : seq.loss;
      }
      batch_loss = scale(batch_loss, 1.0 / static_cast<double>(end - start));
      if (!std::isfinite(batch_loss.item())) {
        throw NumericalError("loss diverged at epoch " + std::to_string(epoch) + " batch " + std::to_string(batch));
      }
      for (Tensor& t : tensors) t.zero_grad();
      batch_loss.backward();
      std::vector<std::vector<double>> grads;
      grads.reserve(tensors.size());
      for (const Tensor& t : tensors) {
        grads.push_back(t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                     : std::vector<double>(t.numel(), 0.0));
      }
      for (const auto& g : grads) {
        for (double x : g) {
          if (!std::isfinite(x)) {
            throw NumericalError("non-finite gradient at epoch " + std::to_string(epoch) + " batch " +
                                 std::to_string(batch));
          }
        }
      }
      clip_global_norm(grads, config.clip_norm);
      adam_step(tensors, grads, adam, lr);
      check_finite_params(params, epoch, batch);
    }
    for (Tensor& t : tensors) t.zero_grad();

    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = lr;
    entry.mean_loss = loss_sum / static_cast<double>(examples.size());
    if (config.variant == Variant::pointer) entry.mean_p_gen = p_gen_sum / static_cast<double>(p_gen_steps);
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry, params);
  }
  return result;
}

double evaluation_nll(const Captioner& captioner, const Dataset& data) {
  NoGradGuard no_grad;
  const std::vector<Example> examples = make_examples(data);
  if (examples.empty()) throw DataError("evaluation_nll: dataset has no captioned images");
  const double floor_cost = -std::log(kProbabilityFloor);
  double total = 0.0;
  std::size_t cached = SIZE_MAX;
  PreparedImage image;
  for (const Example& ex : examples) {
    if (ex.bundle_index != cached) {
      image = captioner.prepare(data.bundles[ex.bundle_index]);
      cached = ex.bundle_index;
    }
    const auto target = captioner.target_ids(ex.caption, image);
    DecoderState state = captioner.start();
    std::size_t prev = kBos;
    for (std::size_t t = 0; t < target.size(); ++t) {
      StepOutput out = captioner.step(image, state, prev);
      const bool representable = t + 1 == target.size() || captioner.can_emit(ex.caption[t], image);
      if (representable) {
        total += -std::log(std::max(out.dist.probs[target[t]], kProbabilityFloor));
      } else {
        total += floor_cost;
      }
      state = std::move(out.next);
      prev = target[t];
    }
  }
  return total / static_cast<double>(examples.size());
}

}  // namespace ocrcap
