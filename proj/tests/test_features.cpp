#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "ocrcap/error.hpp"
#include "ocrcap/features.hpp"
#include "support.hpp"

using namespace ocrcap;

TEST(Bundles, ParsesPositionsFromOrder) {
  const std::string text =
      R"({"image_id":"x","regions":[[1,2,3,4],[5,6,7,8]],"ocr":[{"token":"Acme","embedding":[0.1,0.2,0.3,0.4]}]})"
      "\n";
  const auto bundles = parse_bundles(text);
  ASSERT_EQ(bundles.size(), 1u);
  EXPECT_EQ(bundles[0].region_count(), 2u);
  ASSERT_EQ(bundles[0].ocr.size(), 1u);
  EXPECT_EQ(bundles[0].ocr[0].position, 2u);
  EXPECT_EQ(bundles[0].ocr_dim(), 4u);
}

TEST(Bundles, RaggedRegionNamesImage) {
  const std::string text = R"({"image_id":"img-bad","regions":[[1,2,3,4],[5,6,7]],"ocr":[]})";
  try {
    parse_bundles(text);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("img-bad"), std::string::npos);
  }
}

TEST(Bundles, EmptyInputGivesEmptyList) {
  EXPECT_TRUE(parse_bundles("").empty());
  EXPECT_TRUE(parse_bundles("\n\n").empty());
}

TEST(Bundles, RejectsDuplicatesAndGarbage) {
  const std::string one = R"({"image_id":"a","regions":[[1]],"ocr":[]})";
  EXPECT_THROW(parse_bundles(one + "\n" + one), DataError);
  EXPECT_THROW(parse_bundles("{not json"), DataError);
}

TEST(Bundles, SerializeRoundTrip) {
  Rng rng(4);
  std::vector<FeatureBundle> bundles = {test::random_bundle(rng, 3, {"acme", "500ml"}, 3, 3, "a"),
                                        test::random_bundle(rng, 2, {}, 3, 3, "b")};
  EXPECT_EQ(parse_bundles(serialize_bundles(bundles)), bundles);
}

TEST(Captions, RoundTripAndValidation) {
  const std::vector<CaptionRecord> recs = {{"b", {{"a", "can"}}}, {"a", {{"a", "jar", "of", "acme"}, {"x"}}}};
  const auto back = parse_captions(serialize_captions(recs));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].image_id, "a");
  EXPECT_EQ(back[1], recs[0]);
  EXPECT_THROW(parse_captions(R"({"a":[]})"), DataError);
  EXPECT_THROW(parse_captions(R"({"a":[["x"],["x"],["x"],["x"],["x"],["x"]]})"), DataError);
}

TEST(HashEmbed, DeterministicUnitNormDistinct) {
  const auto a = hash_embed("acme", 16, 13);
  EXPECT_EQ(a, hash_embed("acme", 16, 13));
  double n = 0;
  for (double x : a) n += x * x;
  EXPECT_NEAR(std::sqrt(n), 1.0, 1e-9);
  const auto z = hash_embed("zorp", 16, 13);
  double dot = 0;
  for (std::size_t i = 0; i < 16; ++i) dot += a[i] * z[i];
  EXPECT_LT(std::abs(dot), 0.9);
}

TEST(PrepareOcr, DropsStopwordsAndRenumbers) {
  FeatureBundle b;
  b.image_id = "x";
  b.regions = {{0.0}, {1.0}};
  b.ocr = {{"The", {1}, 2}, {"ACME!", {2}, 3}, {"!!!", {3}, 4}, {"500ml", {4}, 5}};
  const FeatureBundle p = prepare_ocr(b);
  ASSERT_EQ(p.ocr.size(), 2u);
  EXPECT_EQ(p.ocr[0].token, "acme");
  EXPECT_EQ(p.ocr[0].position, 2u);
  EXPECT_EQ(p.ocr[0].embedding, (std::vector<double>{2}));
  EXPECT_EQ(p.ocr[1].token, "500ml");
  EXPECT_EQ(p.ocr[1].position, 3u);
}

TEST(CaptionsWithoutOcr, RemovesImageOwnOcrTokens) {
  FeatureBundle b;
  b.image_id = "i";
  b.regions = {{0.0}};
  b.ocr = {{"ACME", {1}, 1}};
  const auto out = captions_without_ocr({{"i", {{"a", "can", "of", "acme"}}}, {"j", {{"acme"}}}}, {b});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0], (TokenList{"a", "can", "of"}));
  EXPECT_EQ(out[1], (TokenList{"acme"}));
}

namespace {

SynthConfig small_synth(double copy_rate) {
  SynthConfig c;
  c.n_images = 60;
  c.copy_rate = copy_rate;
  return c;
}

}  // namespace

TEST(Synth, CopyRateZeroStaysInFixedWords) {
  const SynthConfig cfg = small_synth(0.0);
  const auto words = cfg.template_words();
  const std::set<std::string> fixed(words.begin(), words.end());
  const auto data = synth_generate(cfg, 5);
  for (const auto& rec : data.captions)
    for (const auto& c : rec.captions)
      for (const auto& t : c) EXPECT_TRUE(fixed.contains(t)) << t;
}

TEST(Synth, CopyRateOneNeedsCopyInEveryCaption) {
  const SynthConfig cfg = small_synth(1.0);
  const auto words = cfg.template_words();
  const std::set<std::string> fixed(words.begin(), words.end());
  const auto data = synth_generate(cfg, 5);
  for (std::size_t i = 0; i < data.captions.size(); ++i) {
    const auto ocr = prepare_ocr(data.bundles[i]).ocr_tokens();
    for (const auto& c : data.captions[i].captions) {
      bool copy_only = false;
      for (const auto& t : c) {
        if (!fixed.contains(t) && std::find(ocr.begin(), ocr.end(), t) != ocr.end()) copy_only = true;
      }
      EXPECT_TRUE(copy_only) << join_tokens(c);
    }
  }
}

TEST(Synth, SameSeedIsByteIdentical) {
  const auto a = synth_generate(small_synth(0.5), 9);
  const auto b = synth_generate(small_synth(0.5), 9);
  EXPECT_EQ(serialize_bundles(a.bundles), serialize_bundles(b.bundles));
  EXPECT_EQ(serialize_captions(a.captions), serialize_captions(b.captions));
  const auto c = synth_generate(small_synth(0.5), 10);
  EXPECT_NE(serialize_captions(a.captions), serialize_captions(c.captions));
}

TEST(Synth, BundlesSatisfyInvariants) {
  const auto data = synth_generate(small_synth(0.7), 2);
  for (const auto& b : data.bundles) {
    EXPECT_NO_THROW(b.validate());
    EXPECT_EQ(b.region_count(), 8u);
    EXPECT_EQ(b.region_dim(), 32u);
  }
}

TEST(Synth, RejectsBadCopyRate) {
  EXPECT_THROW(synth_generate(small_synth(1.5), 1), ContractError);
  EXPECT_THROW(synth_generate(small_synth(-0.1), 1), ContractError);
}

TEST(Synth, DefaultLexiconAvoidsTemplateWords) {
  const SynthConfig cfg;
  const auto words = cfg.template_words();
  const std::set<std::string> fixed(words.begin(), words.end());
  EXPECT_EQ(cfg.ocr_lexicon.size(), 40u);
  for (const auto& w : cfg.ocr_lexicon) EXPECT_FALSE(fixed.contains(w)) << w;
}
