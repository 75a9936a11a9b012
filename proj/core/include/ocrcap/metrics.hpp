#pragma once

#include <map>
#include <string>
#include <vector>

#include "ocrcap/features.hpp"
#include "ocrcap/vocab.hpp"

namespace ocrcap {

struct EvalItem {
  std::string image_id;
  TokenList candidate;                 // may be empty
  std::vector<TokenList> references;  // 1..5
};

// Items are scored in image_id order with references sorted, so every metric is
// exactly invariant to corpus and reference order.
struct EvalCorpus {
  std::vector<EvalItem> items;

  // Throws DataError for an image without references or with duplicate ids.
  void validate() const;
};

// Pairs candidates with references by image_id. Every candidate needs references
// and vice versa (DataError otherwise).
EvalCorpus make_corpus(const std::map<std::string, TokenList>& candidates, const std::vector<CaptionRecord>& references);

// Corpus BLEU-4 x100: clipped n-gram precisions pooled over the corpus,
// geometric mean, brevity penalty against the closest reference length (shorter
// wins ties). A precision with zero matches is smoothed to 1e-15 / (guess + 1e-9).
double bleu4(const EvalCorpus& corpus);

// Mean over images of the LCS F-measure (beta 1.2) x100; precision and recall
// are each maximized over references.
double rouge_l(const EvalCorpus& corpus);

// CIDEr-D x10 with document frequencies over the reference sets, clipped
// candidate tf-idf and a Gaussian length penalty (sigma 6). Requires >= 2 images.
double cider(const EvalCorpus& corpus);

struct MetricScores {
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  double cider = 0.0;
  std::size_t n_images = 0;
};

MetricScores evaluate(const EvalCorpus& corpus);

}  // namespace ocrcap
