#include <algorithm>
#include <array>
#include <cctype>
#include <string>

#include "ocrcap/vocab.hpp"

namespace ocrcap {

namespace {
// NLTK English list as distributed in sebleier/554280.
constexpr std::array<std::string_view, 127> kStopwords = {
    "i",       "me",      "my",         "myself",  "we",      "our",     "ours",    "ourselves",
    "you",     "your",    "yours",      "yourself", "yourselves", "he",  "him",     "his",
    "himself", "she",     "her",        "hers",    "herself", "it",      "its",     "itself",
    "they",    "them",    "their",      "theirs",  "themselves", "what", "which",  "who",
    "whom",    "this",    "that",       "these",   "those",   "am",      "is",      "are",
    "was",     "were",    "be",         "been",    "being",   "have",    "has",     "had",
    "having",  "do",      "does",       "did",     "doing",   "a",       "an",      "the",
    "and",     "but",     "if",         "or",      "because", "as",      "until",   "while",
    "of",      "at",      "by",         "for",     "with",    "about",   "against", "between",
    "into",    "through", "during",     "before",  "after",   "above",   "below",   "to",
    "from",    "up",      "down",       "in",      "out",     "on",      "off",     "over",
    "under",   "again",   "further",    "then",    "once",    "here",    "there",   "when",
    "where",   "why",     "how",        "all",     "any",     "both",    "each",    "few",
    "more",    "most",    "other",      "some",    "such",    "no",      "nor",     "not",
    "only",    "own",     "same",       "so",      "than",    "too",     "very",    "s",
    "t",       "can",     "will",       "just",    "don",     "should",  "now"};
}  // namespace

std::span<const std::string_view> stopwords() { return kStopwords; }

bool is_stopword(std::string_view token) {
  std::string lower(token);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return std::find(kStopwords.begin(), kStopwords.end(), lower) != kStopwords.end();
}

TokenList filter_stopwords(const TokenList& tokens) {
  TokenList kept;
  std::copy_if(tokens.begin(), tokens.end(), std::back_inserter(kept),
               [](const std::string& t) { return !is_stopword(t); });
  return kept;
}

}  // namespace ocrcap
