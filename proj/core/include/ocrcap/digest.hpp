#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace ocrcap {

// 64-bit FNV-1a. Used for content digests in manifests and the vocabulary hash
// stored in checkpoints; not a cryptographic hash.
constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t state = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    state ^= c;
    state *= 0x100000001b3ULL;
  }
  return state;
}

std::string hex64(std::uint64_t value);

// Digest of a file's bytes as 16 hex characters. Throws DataError if unreadable.
std::string file_digest(const std::string& path);

}  // namespace ocrcap
