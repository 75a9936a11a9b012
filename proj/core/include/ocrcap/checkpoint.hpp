#pragma once

#include <cstdint>
#include <string>

#include "ocrcap/model.hpp"
#include "ocrcap/vocab.hpp"

namespace ocrcap {

struct Checkpoint {
  ModelConfig config;
  std::uint64_t vocab_hash = 0;
  std::size_t epoch = 0;
  ModelParams params;
};

// Layout: a magic line, one JSON header line (config, vocab hash, parameter
// names and shapes), then every parameter as little-endian float64 in header order.
void save_checkpoint(const std::string& path, const ModelConfig& config, const ModelParams& params,
                     const ExtendedVocabulary& vocab, std::size_t epoch);

// Reads without checking the vocabulary. Throws DataError on a malformed file.
Checkpoint read_checkpoint(const std::string& path);

// As read_checkpoint, but throws DataError when the checkpoint was trained
// against a different vocabulary.
Checkpoint load_checkpoint(const std::string& path, const ExtendedVocabulary& vocab);

}  // namespace ocrcap
