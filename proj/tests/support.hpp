#pragma once

#include <cmath>
#include <filesystem>
#include <unistd.h>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ocrcap/features.hpp"
#include "ocrcap/model.hpp"
#include "ocrcap/rng.hpp"
#include "ocrcap/tensor.hpp"
#include "ocrcap/training.hpp"
#include "ocrcap/vocab.hpp"
#include "oracle/oracle_values.hpp"

namespace test {

using namespace ocrcap;

template <std::size_t N>
std::vector<double> vec(const double (&a)[N]) {
  return {a, a + N};
}

template <std::size_t N>
Tensor mat(const double (&a)[N], std::size_t rows, std::size_t cols, bool rg = true) {
  return Tensor::from({rows, cols}, vec(a), rg);
}

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0, bool rg = true) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), rg);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <std::size_t N>
double max_abs_diff(const Tensor& t, const double (&a)[N]) {
  return max_abs_diff(t.values(), std::span<const double>(a, N));
}

inline AoaParams oracle_aoa(const double (&iq)[16], const double (&iv)[16], const double (&ib)[4],
                            const double (&gq)[16], const double (&gv)[16], const double (&gb)[4]) {
  return {mat(iq, 4, 4), mat(iv, 4, 4), mat(ib, 1, 4), mat(gq, 4, 4), mat(gv, 4, 4), mat(gb, 1, 4)};
}

// d=4, one encoder layer, regions/OCR of dimension 3, six-token vocabulary,
// pointer head; every value comes from the oracle tables.
struct OracleModel {
  ModelConfig config;
  ModelParams params;
  FeatureBundle bundle;

  OracleModel() {
    using namespace oracle;
    config.variant = Variant::pointer;
    config.d_model = 4;
    config.d_region = 3;
    config.d_ocr = 3;
    config.encoder_layers = 1;
    config.fixed_vocab_size = 6;
    config.extended_vocab_size = 6;

    params.region_proj = mat(kModelRegionProj, 3, 4);
    params.region_bias = mat(kModelRegionBias, 1, 4);
    params.ocr_proj = mat(kModelOcrProj, 3, 4);
    params.ocr_bias = mat(kModelOcrBias, 1, 4);
    EncoderLayerParams layer;
    layer.query = mat(kModelLayerQuery, 4, 4);
    layer.key = mat(kModelLayerKey, 4, 4);
    layer.value = mat(kModelLayerValue, 4, 4);
    layer.aoa = oracle_aoa(kLayerAoa_iq, kLayerAoa_iv, kLayerAoa_ib, kLayerAoa_gq, kLayerAoa_gv, kLayerAoa_gb);
    layer.norm_gain = mat(kModelNormGain, 1, 4);
    layer.norm_bias = mat(kModelNormBias, 1, 4);
    params.encoder.push_back(layer);
    params.embedding = mat(kModelEmbedding, 6, 4);
    params.cell = {mat(kModelCellInput, 8, 12), mat(kModelCellHidden, 4, 12), mat(kModelCellInputBias, 1, 12),
                   mat(kModelCellHiddenBias, 1, 12)};
    params.attn_query = mat(kModelAttnQuery, 4, 4);
    params.attn_key = mat(kModelAttnKey, 4, 4);
    params.decoder_aoa =
        oracle_aoa(kDecoderAoa_iq, kDecoderAoa_iv, kDecoderAoa_ib, kDecoderAoa_gq, kDecoderAoa_gv, kDecoderAoa_gb);
    params.output_weight = mat(kModelOutputWeight, 4, 6);
    params.output_bias = mat(kModelOutputBias, 1, 6);
    params.pointer = {mat(kPtrContext, 4, 1), mat(kPtrState, 4, 1), mat(kPtrInput, 4, 1), mat(kPtrBias, 1, 1)};

    bundle.image_id = "oracle";
    bundle.regions = {{kModelRegions[0], kModelRegions[1], kModelRegions[2]},
                      {kModelRegions[3], kModelRegions[4], kModelRegions[5]}};
    bundle.ocr = {{"acme", vec(kModelOcr), 2}};
  }

  DecoderState hidden0() const { return {Tensor::from({1, 4}, vec(oracle::kModelHidden0), true)}; }
};

// Small configuration with random parameters for property and gradient tests.
inline ModelConfig tiny_config(Variant variant, std::size_t fixed = 8, std::size_t extended = 11,
                               std::uint64_t seed = 3) {
  ModelConfig c;
  c.variant = variant;
  c.d_model = 4;
  c.d_region = 3;
  c.d_ocr = 3;
  c.encoder_layers = 1;
  c.fixed_vocab_size = fixed;
  c.extended_vocab_size = extended;
  c.init_range = 0.5;
  c.seed = seed;
  return c;
}

inline FeatureBundle random_bundle(Rng& rng, std::size_t regions, const std::vector<std::string>& ocr_tokens,
                                   std::size_t d_region = 3, std::size_t d_ocr = 3, std::string id = "img") {
  FeatureBundle b;
  b.image_id = std::move(id);
  for (std::size_t r = 0; r < regions; ++r) {
    std::vector<double> f(d_region);
    for (double& x : f) x = rng.uniform(-1.0, 1.0);
    b.regions.push_back(std::move(f));
  }
  for (const auto& t : ocr_tokens) {
    std::vector<double> e(d_ocr);
    for (double& x : e) x = rng.uniform(-1.0, 1.0);
    b.ocr.push_back({t, std::move(e), b.regions.size() + b.ocr.size()});
  }
  return b;
}

// specials + a bottle of table (fixed 8) + acme zorp qux (OCR, extended 11)
inline ExtendedVocabulary tiny_vocab() {
  const std::vector<TokenList> captions = {{"a", "bottle", "of", "table"}};
  const Vocabulary base = build_fixed_vocab(captions, 1);
  return ExtendedVocabulary(base, {"acme", "zorp", "qux"}, {3, 2, 2});
}

// Small synthetic copy task with vocabulary built as the CLI does with --mask-ocr.
struct SmallTask {
  SynthDataset synth;
  ExtendedVocabulary vocab;

  explicit SmallTask(std::size_t n_images = 24, double copy_rate = 1.0, std::uint64_t seed = 7)
      : synth(make(n_images, copy_rate, seed)),
        vocab(extend_with_ocr(build_fixed_vocab(captions_without_ocr(synth.captions, synth.bundles), 2),
                              ocr_corpus(synth.bundles), 1)) {}

  Dataset data() const { return {synth.bundles, synth.captions}; }

  ModelConfig model(Variant v) const {
    ModelConfig c;
    c.variant = v;
    c.d_model = 16;
    c.d_region = synth.bundles.front().region_dim();
    c.d_ocr = synth.bundles.front().ocr_dim();
    c.encoder_layers = 1;
    c.fixed_vocab_size = vocab.fixed_size();
    c.extended_vocab_size = vocab.size();
    return c;
  }

 private:
  static SynthDataset make(std::size_t n, double copy_rate, std::uint64_t seed) {
    SynthConfig c;
    c.n_images = n;
    c.copy_rate = copy_rate;
    c.ocr_lexicon = SynthConfig::default_ocr_lexicon(6);
    return synth_generate(c, seed);
  }
};

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ocrcap-test-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace test
