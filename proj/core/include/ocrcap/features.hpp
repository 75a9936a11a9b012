#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ocrcap/vocab.hpp"

namespace ocrcap {

struct OcrEntry {
  std::string token;
  std::vector<double> embedding;
  // Index in the joint encoder sequence; OCR entries follow the regions.
  std::size_t position = 0;

  bool operator==(const OcrEntry&) const = default;
};

// One image's model inputs: region features then OCR tokens with embeddings.
struct FeatureBundle {
  std::string image_id;
  std::vector<std::vector<double>> regions;
  std::vector<OcrEntry> ocr;

  std::size_t region_count() const { return regions.size(); }
  std::size_t region_dim() const { return regions.empty() ? 0 : regions.front().size(); }
  std::size_t ocr_dim() const { return ocr.empty() ? 0 : ocr.front().embedding.size(); }
  TokenList ocr_tokens() const;

  // Throws DataError naming image_id when an invariant does not hold.
  void validate() const;

  bool operator==(const FeatureBundle&) const = default;
};

struct CaptionRecord {
  std::string image_id;
  std::vector<TokenList> captions;

  bool operator==(const CaptionRecord&) const = default;
};

// bundles.jsonl: one {image_id, regions, ocr: [{token, embedding}]} object per
// line; OCR positions are implied by order. Blank lines are ignored.
std::vector<FeatureBundle> load_bundles(const std::string& path);
std::vector<FeatureBundle> parse_bundles(const std::string& text);
std::string serialize_bundles(const std::vector<FeatureBundle>& bundles);
void write_bundles(const std::string& path, const std::vector<FeatureBundle>& bundles);

// captions.json: {image_id: [[token, ...], ...]}. Records come back sorted by id.
std::vector<CaptionRecord> load_captions(const std::string& path);
std::vector<CaptionRecord> parse_captions(const std::string& text);
std::string serialize_captions(const std::vector<CaptionRecord>& records);
void write_captions(const std::string& path, const std::vector<CaptionRecord>& records);

// Deterministic unit-norm stand-in for contextual token embeddings.
std::vector<double> hash_embed(const std::string& token, std::size_t dim, std::uint64_t seed);

// OCR preprocessing applied before a bundle reaches the model: tokens are
// normalized, stopwords and empty residues are dropped together with their
// embeddings, and positions are renumbered.
FeatureBundle prepare_ocr(const FeatureBundle& bundle);

// Per-image normalized OCR tokens (after prepare_ocr), in bundle order.
std::vector<TokenList> ocr_corpus(const std::vector<FeatureBundle>& bundles);

// Reference captions with every token that also appears among the same image's
// normalized OCR tokens removed, for counting a fixed vocabulary that leaves
// scene text to the OCR channel. Captions whose image has no bundle pass through.
std::vector<TokenList> captions_without_ocr(const std::vector<CaptionRecord>& captions,
                                            const std::vector<FeatureBundle>& bundles);

// Synthetic copy task ---------------------------------------------------------

struct SynthConfig {
  std::size_t n_images = 200;
  std::size_t n_regions = 8;
  std::size_t d_v = 32;
  std::size_t d_e = 32;
  // Generic content words used in captions that do not copy.
  std::vector<std::string> fixed_vocab_words = default_content_words();
  // Brand words printed on the products; only copyable when outside the
  // fixed vocabulary.
  std::vector<std::string> ocr_lexicon = default_ocr_lexicon(40);
  double copy_rate = 1.0;
  std::size_t captions_per_image = 3;
  // 0 cycles the lexicon evenly; > 0 samples brands with weight 1/rank^s.
  double zipf_exponent = 0.0;
  // Extra non-brand OCR tokens (sizes, dates) per image.
  std::size_t distractors = 1;
  double region_noise = 0.5;
  std::uint64_t embedding_seed = 13;

  static std::vector<std::string> default_content_words();
  static std::vector<std::string> default_ocr_lexicon(std::size_t n);
  // Every word the caption templates can produce without copying.
  std::vector<std::string> template_words() const;
};

struct SynthDataset {
  std::vector<FeatureBundle> bundles;
  std::vector<CaptionRecord> captions;
  // Brand shown on each image, aligned with bundles.
  std::vector<std::string> brands;
  // Whether the image's captions mention the brand.
  std::vector<bool> copies;
};

SynthDataset synth_generate(const SynthConfig& config, std::uint64_t seed);

}  // namespace ocrcap
