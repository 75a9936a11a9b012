#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ocrcap {

using TokenList = std::vector<std::string>;

// Special token ids; fixed for every vocabulary.
inline constexpr std::size_t kPad = 0;
inline constexpr std::size_t kBos = 1;
inline constexpr std::size_t kEos = 2;
inline constexpr std::size_t kUnk = 3;
inline constexpr std::size_t kSpecialCount = 4;
inline constexpr std::string_view kSpecialTokens[kSpecialCount] = {"<pad>", "<bos>", "<eos>", "<unk>"};

// Caption tokenizer shared by training and scoring: ASCII-lowercases, splits
// every punctuation character into its own token, then splits on whitespace.
TokenList tokenize(std::string_view text);
std::string join_tokens(const TokenList& tokens);

// Bundled English stopword list (127 words), matched case-insensitively.
std::span<const std::string_view> stopwords();
bool is_stopword(std::string_view token);
TokenList filter_stopwords(const TokenList& tokens);

// Lowercases and strips surrounding punctuation. Returns nullopt when nothing
// alphanumeric remains.
std::optional<std::string> normalize_ocr_token(std::string_view raw);

// Token <-> id mapping for the caption vocabulary. Ids 0..3 are the specials;
// corpus tokens follow in descending frequency, ties broken lexicographically.
class Vocabulary {
 public:
  Vocabulary();

  std::size_t size() const { return tokens_.size(); }
  std::size_t min_count() const { return min_count_; }
  std::optional<std::size_t> find(std::string_view token) const;
  // OOV tokens map to kUnk.
  std::size_t id(std::string_view token) const;
  const std::string& token(std::size_t id) const;
  std::size_t count(std::size_t id) const;

  std::vector<std::size_t> encode(const TokenList& tokens) const;
  TokenList decode(std::span<const std::size_t> ids) const;

  // `token<TAB>count` per line in id order, specials first.
  std::string serialize() const;
  static Vocabulary parse(std::string_view text);

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_ && counts_ == other.counts_;
  }

 private:
  friend Vocabulary build_fixed_vocab(const std::vector<TokenList>& captions, std::size_t min_count);
  void push(std::string token, std::size_t count);

  std::vector<std::string> tokens_;
  std::vector<std::size_t> counts_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t min_count_ = 1;
};

// Tokens with corpus frequency >= min_count, plus specials. Throws
// ContractError on an empty corpus or min_count == 0.
Vocabulary build_fixed_vocab(const std::vector<TokenList>& captions, std::size_t min_count);

// Fixed vocabulary followed by OCR-only additions. Ids below fixed_size()
// belong to the fixed vocabulary; ids at or above it are OCR words that the
// fixed vocabulary does not contain.
class ExtendedVocabulary {
 public:
  ExtendedVocabulary() = default;
  ExtendedVocabulary(Vocabulary base, std::vector<std::string> ocr_tokens,
                     std::vector<std::size_t> ocr_counts);

  const Vocabulary& base() const { return base_; }
  std::size_t fixed_size() const { return base_.size(); }
  std::size_t size() const { return base_.size() + ocr_tokens_.size(); }
  std::size_t added_count() const { return ocr_tokens_.size(); }
  const std::vector<std::string>& ocr_tokens() const { return ocr_tokens_; }
  std::size_t ocr_count(std::size_t ocr_index) const { return ocr_counts_.at(ocr_index); }

  std::optional<std::size_t> find(std::string_view token) const;
  const std::string& token(std::size_t id) const;
  bool is_ocr_only(std::size_t id) const { return id >= fixed_size() && id < size(); }

  TokenList decode(std::span<const std::size_t> ids) const;

  // OCR additions as `token<TAB>count` lines (no special header).
  std::string serialize_ocr() const;
  // Digest of both serialized parts; stored in checkpoints.
  std::uint64_t hash() const;

 private:
  Vocabulary base_;
  std::vector<std::string> ocr_tokens_;
  std::vector<std::size_t> ocr_counts_;
  std::unordered_map<std::string, std::size_t> ocr_index_;
};

// Appends every OCR token with corpus frequency >= threshold that the base
// vocabulary lacks. Stopwords are skipped.
ExtendedVocabulary extend_with_ocr(const Vocabulary& base, const std::vector<TokenList>& ocr_corpus,
                                   std::size_t threshold);

// Directory layout: vocab.txt (fixed, with special header) and ocr_vocab.txt.
void save_vocabulary(const std::string& dir, const ExtendedVocabulary& vocab);
ExtendedVocabulary load_vocabulary(const std::string& dir);

}  // namespace ocrcap
