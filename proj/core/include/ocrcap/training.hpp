#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ocrcap/captioner.hpp"
#include "ocrcap/features.hpp"
#include "ocrcap/model.hpp"
#include "ocrcap/pointer.hpp"

namespace ocrcap {

inline constexpr double kProbabilityFloor = 1e-12;

struct TrainConfig {
  Variant variant = Variant::pointer;
  std::string preset = "synthetic";
  std::size_t ocr_threshold = 2;
  double learning_rate = 5e-3;
  double anneal_factor = 0.8;
  std::size_t anneal_every = 3;
  std::size_t epochs = 15;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  double clip_norm = 5.0;
  // Pointer variant only: initial value of the p_gen bias.
  std::optional<double> pointer_bias_init;

  // Adam at 2e-5 annealed by 0.8 every 3 epochs; 10 epochs for the baseline, 15 otherwise.
  static TrainConfig paper(Variant variant);
  // Same schedule with a desk-scale learning rate of 5e-3.
  static TrainConfig synthetic(Variant variant);

  void validate() const;
};

// base * anneal_factor ^ floor(epoch / anneal_every), epochs counted from 0.
double lr_schedule(std::size_t epoch, const TrainConfig& config);

// Sum over steps of -log max(P_t(target_t), floor). Throws DimensionError on a
// length mismatch.
Tensor sequence_loss(std::span<const ExtendedDistribution> steps, std::span<const std::size_t> target,
                     double floor = kProbabilityFloor);

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::size_t step = 0;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update of params in place. grads[i] must match
// params[i] in size; any non-finite gradient throws NumericalError before
// anything is modified.
void adam_step(std::span<Tensor> params, std::span<const std::vector<double>> grads, AdamState& state, double lr,
               const AdamOptions& options = {});

// Scales gradients so their global L2 norm is at most max_norm; returns the norm before scaling.
double clip_global_norm(std::vector<std::vector<double>>& grads, double max_norm);

// Images and their reference captions, paired by image_id.
struct Dataset {
  std::vector<FeatureBundle> bundles;
  std::vector<CaptionRecord> captions;
};

struct Example {
  std::size_t bundle_index = 0;
  TokenList caption;
};

// One example per reference caption, in bundle order. Throws DataError when a
// caption record has no bundle.
std::vector<Example> make_examples(const Dataset& data);

// Teacher-forced loss of one caption; step t conditions on the gold token t-1.
struct SequenceResult {
  Tensor loss;
  double p_gen_sum = 0.0;
  std::size_t steps = 0;
};
SequenceResult teacher_forced_loss(const Captioner& captioner, const PreparedImage& image,
                                   std::span<const std::size_t> target);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  std::optional<double> mean_p_gen;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&, const ModelParams&)>;

// Trains a freshly initialized model (seeded from config.seed). Deterministic
// for fixed inputs. Throws NumericalError naming the batch if the loss diverges.
TrainResult train(const Dataset& data, const ExtendedVocabulary& vocab, ModelConfig model_config,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

// Mean per-caption negative log-likelihood of the reference captions. Tokens
// the model cannot produce for an image are charged the probability floor.
double evaluation_nll(const Captioner& captioner, const Dataset& data);

}  // namespace ocrcap
