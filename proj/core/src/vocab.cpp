#include "ocrcap/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "ocrcap/digest.hpp"
#include "ocrcap/error.hpp"

namespace ocrcap {

namespace {

bool is_special(std::string_view token) {
  return std::find(std::begin(kSpecialTokens), std::end(kSpecialTokens), token) != std::end(kSpecialTokens);
}

bool ascii_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }
// Bytes of multi-byte UTF-8 sequences count as word characters.
bool word_char(unsigned char c) { return c >= 0x80 || std::isalnum(c); }

// Descending count, then lexicographic.
std::vector<std::pair<std::string, std::size_t>> ranked(const std::map<std::string, std::size_t>& counts,
                                                        std::size_t min_count) {
  std::vector<std::pair<std::string, std::size_t>> out;
  for (const auto& [token, n] : counts) {
    if (n >= min_count) out.emplace_back(token, n);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::pair<std::string, std::size_t>> parse_lines(std::string_view text, const std::string& what) {
  std::vector<std::pair<std::string, std::size_t>> rows;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    const std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos || tab == 0) {
      throw DataError(what + ": line " + std::to_string(line_no) + " is not token<TAB>count");
    }
    std::size_t count = 0;
    try {
      std::size_t used = 0;
      const std::string num(line.substr(tab + 1));
      count = std::stoull(num, &used);
      if (used != num.size()) throw std::invalid_argument(num);
    } catch (const std::exception&) {
      throw DataError(what + ": line " + std::to_string(line_no) + " has a bad count");
    }
    rows.emplace_back(std::string(line.substr(0, tab)), count);
  }
  return rows;
}

}  // namespace

TokenList tokenize(std::string_view text) {
  TokenList tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (ascii_punct(c)) {
      flush();
      tokens.emplace_back(1, static_cast<char>(c));
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return tokens;
}

std::string join_tokens(const TokenList& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::optional<std::string> normalize_ocr_token(std::string_view raw) {
  std::size_t begin = 0, end = raw.size();
  while (begin < end && (ascii_punct(raw[begin]) || std::isspace(static_cast<unsigned char>(raw[begin])))) ++begin;
  while (end > begin &&
         (ascii_punct(raw[end - 1]) || std::isspace(static_cast<unsigned char>(raw[end - 1])))) --end;
  std::string out;
  bool has_word_char = false;
  for (std::size_t i = begin; i < end; ++i) {
    const auto c = static_cast<unsigned char>(raw[i]);
    has_word_char = has_word_char || word_char(c);
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  if (!has_word_char) return std::nullopt;
  return out;
}

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() {
  for (std::string_view s : kSpecialTokens) push(std::string(s), 0);
}

void Vocabulary::push(std::string token, std::size_t count) {
  index_.emplace(token, tokens_.size());
  tokens_.push_back(std::move(token));
  counts_.push_back(count);
}

std::optional<std::size_t> Vocabulary::find(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocabulary::id(std::string_view token) const { return find(token).value_or(kUnk); }

const std::string& Vocabulary::token(std::size_t id) const {
  if (id >= tokens_.size()) {
    throw ContractError("token id " + std::to_string(id) + " out of range for vocabulary of " +
                        std::to_string(tokens_.size()));
  }
  return tokens_[id];
}

std::size_t Vocabulary::count(std::size_t id) const {
  token(id);
  return counts_[id];
}

std::vector<std::size_t> Vocabulary::encode(const TokenList& tokens) const {
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

TokenList Vocabulary::decode(std::span<const std::size_t> ids) const {
  TokenList out;
  out.reserve(ids.size());
  for (std::size_t i : ids) out.push_back(token(i));
  return out;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out += tokens_[i];
    out += '\t';
    out += std::to_string(counts_[i]);
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::parse(std::string_view text) {
  const auto rows = parse_lines(text, "vocabulary");
  if (rows.size() < kSpecialCount) throw DataError("vocabulary: missing special-token header");
  Vocabulary v;
  for (std::size_t i = 0; i < kSpecialCount; ++i) {
    if (rows[i].first != kSpecialTokens[i]) {
      throw DataError("vocabulary: header line " + std::to_string(i + 1) + " must be " +
                      std::string(kSpecialTokens[i]));
    }
  }
  std::size_t min_count = SIZE_MAX;
  for (std::size_t i = kSpecialCount; i < rows.size(); ++i) {
    const auto& [token, count] = rows[i];
    if (is_special(token) || v.find(token)) throw DataError("vocabulary: duplicate token '" + token + "'");
    v.push(token, count);
    min_count = std::min(min_count, count);
  }
  v.min_count_ = rows.size() > kSpecialCount ? min_count : 1;
  return v;
}

Vocabulary build_fixed_vocab(const std::vector<TokenList>& captions, std::size_t min_count) {
  if (min_count == 0) throw ContractError("build_fixed_vocab: min_count must be >= 1");
  if (captions.empty()) throw ContractError("build_fixed_vocab: empty caption corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& caption : captions) {
    for (const auto& token : caption) {
      if (!token.empty() && !is_special(token)) ++counts[token];
    }
  }
  Vocabulary v;
  v.min_count_ = min_count;
  for (auto& [token, n] : ranked(counts, min_count)) v.push(token, n);
  return v;
}

// ---------------------------------------------------------------------------

ExtendedVocabulary::ExtendedVocabulary(Vocabulary base, std::vector<std::string> ocr_tokens,
                                       std::vector<std::size_t> ocr_counts)
    : base_(std::move(base)), ocr_tokens_(std::move(ocr_tokens)), ocr_counts_(std::move(ocr_counts)) {
  if (ocr_counts_.size() != ocr_tokens_.size()) {
    throw ContractError("extended vocabulary: token/count length mismatch");
  }
  for (std::size_t i = 0; i < ocr_tokens_.size(); ++i) {
    const std::string& t = ocr_tokens_[i];
    if (base_.find(t) || is_special(t)) {
      throw DataError("extended vocabulary: OCR token '" + t + "' already in the fixed vocabulary");
    }
    if (is_stopword(t)) throw DataError("extended vocabulary: OCR token '" + t + "' is a stopword");
    if (!ocr_index_.emplace(t, base_.size() + i).second) {
      throw DataError("extended vocabulary: duplicate OCR token '" + t + "'");
    }
  }
}

std::optional<std::size_t> ExtendedVocabulary::find(std::string_view token) const {
  if (auto id = base_.find(token)) return id;
  const auto it = ocr_index_.find(std::string(token));
  if (it == ocr_index_.end()) return std::nullopt;
  return it->second;
}

const std::string& ExtendedVocabulary::token(std::size_t id) const {
  if (id < fixed_size()) return base_.token(id);
  if (id >= size()) {
    throw ContractError("token id " + std::to_string(id) + " out of range for extended vocabulary of " +
                        std::to_string(size()));
  }
  return ocr_tokens_[id - fixed_size()];
}

TokenList ExtendedVocabulary::decode(std::span<const std::size_t> ids) const {
  TokenList out;
  out.reserve(ids.size());
  for (std::size_t i : ids) out.push_back(token(i));
  return out;
}

std::string ExtendedVocabulary::serialize_ocr() const {
  std::string out;
  for (std::size_t i = 0; i < ocr_tokens_.size(); ++i) {
    out += ocr_tokens_[i];
    out += '\t';
    out += std::to_string(ocr_counts_[i]);
    out += '\n';
  }
  return out;
}

std::uint64_t ExtendedVocabulary::hash() const {
  return fnv1a64(serialize_ocr(), fnv1a64("\x1e", fnv1a64(base_.serialize())));
}

ExtendedVocabulary extend_with_ocr(const Vocabulary& base, const std::vector<TokenList>& ocr_corpus,
                                   std::size_t threshold) {
  if (threshold == 0) throw ContractError("extend_with_ocr: threshold must be >= 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& tokens : ocr_corpus) {
    for (const auto& t : tokens) {
      if (t.empty() || is_special(t) || is_stopword(t) || base.find(t)) continue;
      ++counts[t];
    }
  }
  std::vector<std::string> tokens;
  std::vector<std::size_t> token_counts;
  for (auto& [token, n] : ranked(counts, threshold)) {
    tokens.push_back(token);
    token_counts.push_back(n);
  }
  return ExtendedVocabulary(base, std::move(tokens), std::move(token_counts));
}

void save_vocabulary(const std::string& dir, const ExtendedVocabulary& vocab) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const std::pair<const char*, std::string> files[] = {{"vocab.txt", vocab.base().serialize()},
                                                       {"ocr_vocab.txt", vocab.serialize_ocr()}};
  for (const auto& [name, text] : files) {
    const fs::path path = fs::path(dir) / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
  }
}

ExtendedVocabulary load_vocabulary(const std::string& dir) {
  namespace fs = std::filesystem;
  Vocabulary base = Vocabulary::parse(read_file(fs::path(dir) / "vocab.txt"));
  const fs::path ocr_path = fs::path(dir) / "ocr_vocab.txt";
  std::vector<std::string> tokens;
  std::vector<std::size_t> counts;
  if (fs::exists(ocr_path)) {
    for (auto& [token, n] : parse_lines(read_file(ocr_path), "ocr vocabulary")) {
      tokens.push_back(std::move(token));
      counts.push_back(n);
    }
  }
  return ExtendedVocabulary(std::move(base), std::move(tokens), std::move(counts));
}

}  // namespace ocrcap
