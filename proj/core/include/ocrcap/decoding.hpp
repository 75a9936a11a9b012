#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ocrcap/captioner.hpp"

namespace ocrcap {

struct DecodeReport {
  std::string image_id;
  // Emitted ids; ends with kEos when the caption finished before max_len.
  std::vector<std::size_t> ids;
  TokenList tokens;  // words, without kEos
  double log_prob = 0.0;
  double score = 0.0;
  bool finished = false;
  std::vector<double> p_gen_trace;  // pointer variant only
  // Output positions whose token came mainly from the copy term.
  std::vector<std::size_t> copied_positions;
  bool repetition_flag = false;
};

struct BeamOptions {
  std::size_t beam_size = 3;
  std::size_t max_len = 20;
  double length_penalty = 1.0;  // score = log_prob / length^alpha
};

// Beam search; the greedy hypothesis is kept as a candidate so the result never
// scores below greedy decoding. Ties go to the lexicographically smaller id sequence.
DecodeReport beam_search(const Captioner& captioner, const FeatureBundle& bundle, const BeamOptions& options = {});
DecodeReport greedy_decode(const Captioner& captioner, const FeatureBundle& bundle, std::size_t max_len = 20);

struct SampleOptions {
  std::size_t k = 5;
  double temperature = 1.0;
  std::size_t max_len = 20;
  std::uint64_t seed = 1;
};

// Samples from the renormalized top-k of p^(1/T) at each step.
DecodeReport top_k_sample(const Captioner& captioner, const FeatureBundle& bundle, const SampleOptions& options);

// Log-probability the model assigns to ids under teacher forcing.
double sequence_log_prob(const Captioner& captioner, const FeatureBundle& bundle, std::span<const std::size_t> ids);

// True if some token repeats `run` or more times consecutively.
bool has_repetition(std::span<const std::size_t> ids, std::size_t run = 3);

// Fraction of reports flagged as repetitive. Throws ContractError on an empty set.
double repetition_rate(std::span<const DecodeReport> reports);

}  // namespace ocrcap
