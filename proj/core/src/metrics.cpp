#include "ocrcap/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include "ocrcap/error.hpp"

namespace ocrcap {

namespace {

constexpr std::size_t kMaxN = 4;
using NGram = std::vector<std::string>;
using NGramCounts = std::map<NGram, double>;

NGramCounts ngram_counts(const TokenList& tokens, std::size_t n) {
  NGramCounts counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    counts[NGram(tokens.begin() + static_cast<std::ptrdiff_t>(i), tokens.begin() + static_cast<std::ptrdiff_t>(i + n))] += 1.0;
  }
  return counts;
}

std::vector<EvalItem> canonical(const EvalCorpus& corpus) {
  corpus.validate();
  std::vector<EvalItem> items = corpus.items;
  for (auto& item : items) std::sort(item.references.begin(), item.references.end());
  std::sort(items.begin(), items.end(), [](const EvalItem& a, const EvalItem& b) { return a.image_id < b.image_id; });
  return items;
}

std::size_t lcs_length(const TokenList& a, const TokenList& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

void EvalCorpus::validate() const {
  std::set<std::string> seen;
  for (const auto& item : items) {
    if (item.references.empty()) throw DataError(item.image_id + ": no reference captions");
    if (!seen.insert(item.image_id).second) throw DataError(item.image_id + ": duplicate image in corpus");
  }
}

EvalCorpus make_corpus(const std::map<std::string, TokenList>& candidates, const std::vector<CaptionRecord>& references) {
  EvalCorpus corpus;
  std::set<std::string> matched;
  for (const auto& rec : references) {
    const auto it = candidates.find(rec.image_id);
    if (it == candidates.end()) throw DataError(rec.image_id + ": no candidate caption");
    corpus.items.push_back({rec.image_id, it->second, rec.captions});
    matched.insert(rec.image_id);
  }
  for (const auto& [id, _] : candidates) {
    if (!matched.contains(id)) throw DataError(id + ": candidate caption without references");
  }
  corpus.validate();
  return corpus;
}

double bleu4(const EvalCorpus& corpus) {
  const auto items = canonical(corpus);
  std::array<double, kMaxN> correct{}, guess{};
  double test_len = 0.0, ref_len = 0.0;
  for (const auto& item : items) {
    const auto len = static_cast<double>(item.candidate.size());
    test_len += len;
    double closest = static_cast<double>(item.references.front().size());
    for (const auto& r : item.references) {
      const auto rl = static_cast<double>(r.size());
      const double d = std::abs(rl - len), best = std::abs(closest - len);
      if (d < best || (d == best && rl < closest)) closest = rl;
    }
    ref_len += closest;
    for (std::size_t n = 1; n <= kMaxN; ++n) {
      NGramCounts max_ref;
      for (const auto& r : item.references) {
        for (const auto& [g, c] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], c);
      }
      for (const auto& [g, c] : ngram_counts(item.candidate, n)) {
        const auto it = max_ref.find(g);
        if (it != max_ref.end()) correct[n - 1] += std::min(c, it->second);
        guess[n - 1] += c;
      }
    }
  }
  if (test_len == 0.0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < kMaxN; ++n) {
    const double p = correct[n] > 0.0 ? correct[n] / guess[n] : 1e-15 / (guess[n] + 1e-9);
    log_sum += std::log(p);
  }
  const double bp = test_len < ref_len ? std::exp(1.0 - ref_len / test_len) : 1.0;
  return 100.0 * bp * std::exp(log_sum / static_cast<double>(kMaxN));
}

double rouge_l(const EvalCorpus& corpus) {
  constexpr double beta = 1.2;
  const auto items = canonical(corpus);
  if (items.empty()) return 0.0;
  double total = 0.0;
  for (const auto& item : items) {
    if (item.candidate.empty()) continue;
    double p_max = 0.0, r_max = 0.0;
    for (const auto& r : item.references) {
      if (r.empty()) continue;
      const auto lcs = static_cast<double>(lcs_length(item.candidate, r));
      p_max = std::max(p_max, lcs / static_cast<double>(item.candidate.size()));
      r_max = std::max(r_max, lcs / static_cast<double>(r.size()));
    }
    if (p_max > 0.0 && r_max > 0.0) {
      total += (1.0 + beta * beta) * p_max * r_max / (r_max + beta * beta * p_max);
    }
  }
  return 100.0 * total / static_cast<double>(items.size());
}

namespace {

struct CiderVec {
  std::array<std::map<NGram, double>, kMaxN> weights;
  std::array<double, kMaxN> norm{};
  double length = 0.0;
};

CiderVec cider_vec(const TokenList& tokens, const std::map<NGram, double>& df, double log_n) {
  CiderVec v;
  for (std::size_t n = 1; n <= kMaxN; ++n) {
    for (const auto& [g, tf] : ngram_counts(tokens, n)) {
      const auto it = df.find(g);
      const double d = it == df.end() ? 0.0 : it->second;
      const double w = tf * (log_n - std::log(std::max(1.0, d)));
      v.weights[n - 1][g] = w;
      v.norm[n - 1] += w * w;
      if (n == 2) v.length += tf;
    }
  }
  for (double& x : v.norm) x = std::sqrt(x);
  return v;
}

}  // namespace

double cider(const EvalCorpus& corpus) {
  constexpr double sigma = 6.0;
  const auto items = canonical(corpus);
  if (items.size() < 2) throw ContractError("cider: needs at least 2 images, got " + std::to_string(items.size()));
  std::map<NGram, double> df;
  for (const auto& item : items) {
    std::set<NGram> present;
    for (const auto& r : item.references) {
      for (std::size_t n = 1; n <= kMaxN; ++n) {
        for (const auto& [g, _] : ngram_counts(r, n)) present.insert(g);
      }
    }
    for (const auto& g : present) df[g] += 1.0;
  }
  const double log_n = std::log(static_cast<double>(items.size()));
  double total = 0.0;
  for (const auto& item : items) {
    const CiderVec hyp = cider_vec(item.candidate, df, log_n);
    std::array<double, kMaxN> acc{};
    for (const auto& r : item.references) {
      const CiderVec ref = cider_vec(r, df, log_n);
      const double delta = hyp.length - ref.length;
      const double penalty = std::exp(-(delta * delta) / (2.0 * sigma * sigma));
      for (std::size_t n = 0; n < kMaxN; ++n) {
        double val = 0.0;
        for (const auto& [g, w] : hyp.weights[n]) {
          const auto it = ref.weights[n].find(g);
          if (it != ref.weights[n].end()) val += std::min(w, it->second) * it->second;
        }
        if (hyp.norm[n] != 0.0 && ref.norm[n] != 0.0) val /= hyp.norm[n] * ref.norm[n];
        acc[n] += val * penalty;
      }
    }
    double mean_n = 0.0;
    for (double a : acc) mean_n += a;
    mean_n /= static_cast<double>(kMaxN);
    total += 10.0 * mean_n / static_cast<double>(item.references.size());
  }
  return total / static_cast<double>(items.size());
}

MetricScores evaluate(const EvalCorpus& corpus) {
  return {bleu4(corpus), rouge_l(corpus), cider(corpus), corpus.items.size()};
}

}  // namespace ocrcap
