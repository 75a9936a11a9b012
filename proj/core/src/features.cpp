#include "ocrcap/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ocrcap/digest.hpp"
#include "ocrcap/error.hpp"
#include "ocrcap/rng.hpp"

namespace ocrcap {

using nlohmann::json;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << text;
}

std::vector<double> number_array(const json& j, const std::string& image_id, const char* what) {
  if (!j.is_array()) throw DataError(image_id + ": " + what + " is not an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) throw DataError(image_id + ": " + what + " holds a non-number");
    out.push_back(v.get<double>());
  }
  return out;
}

FeatureBundle bundle_from_json(const json& j, std::size_t line_no) {
  const std::string where = "line " + std::to_string(line_no);
  if (!j.is_object() || !j.contains("image_id") || !j["image_id"].is_string()) {
    throw DataError(where + ": record lacks a string image_id");
  }
  FeatureBundle b;
  b.image_id = j["image_id"].get<std::string>();
  if (!j.contains("regions") || !j["regions"].is_array()) {
    throw DataError(b.image_id + ": missing regions array");
  }
  for (const auto& r : j["regions"]) b.regions.push_back(number_array(r, b.image_id, "region"));
  if (j.contains("ocr")) {
    if (!j["ocr"].is_array()) throw DataError(b.image_id + ": ocr is not an array");
    std::size_t pos = b.regions.size();
    for (const auto& e : j["ocr"]) {
      if (!e.is_object() || !e.contains("token") || !e["token"].is_string() || !e.contains("embedding")) {
        throw DataError(b.image_id + ": malformed ocr entry");
      }
      b.ocr.push_back({e["token"].get<std::string>(), number_array(e["embedding"], b.image_id, "embedding"),
                       pos++});
    }
  }
  b.validate();
  return b;
}

}  // namespace

TokenList FeatureBundle::ocr_tokens() const {
  TokenList out;
  out.reserve(ocr.size());
  for (const auto& e : ocr) out.push_back(e.token);
  return out;
}

void FeatureBundle::validate() const {
  if (image_id.empty()) throw DataError("bundle with empty image_id");
  if (regions.empty()) throw DataError(image_id + ": at least one region is required");
  const std::size_t dv = regions.front().size();
  if (dv == 0) throw DataError(image_id + ": region features are empty");
  for (std::size_t r = 0; r < regions.size(); ++r) {
    if (regions[r].size() != dv) {
      throw DataError(image_id + ": region " + std::to_string(r) + " has dimension " +
                      std::to_string(regions[r].size()) + ", expected " + std::to_string(dv));
    }
    for (double v : regions[r]) {
      if (!std::isfinite(v)) throw DataError(image_id + ": non-finite region feature");
    }
  }
  const std::size_t de = ocr_dim();
  for (std::size_t i = 0; i < ocr.size(); ++i) {
    const auto& e = ocr[i];
    if (e.token.empty()) throw DataError(image_id + ": empty OCR token");
    if (e.embedding.size() != de || de == 0) {
      throw DataError(image_id + ": OCR embedding " + std::to_string(i) + " has dimension " +
                      std::to_string(e.embedding.size()) + ", expected " + std::to_string(de));
    }
    for (double v : e.embedding) {
      if (!std::isfinite(v)) throw DataError(image_id + ": non-finite OCR embedding");
    }
    if (e.position != regions.size() + i) {
      throw DataError(image_id + ": OCR entry " + std::to_string(i) + " has position " +
                      std::to_string(e.position) + ", expected " + std::to_string(regions.size() + i));
    }
  }
}

std::vector<FeatureBundle> parse_bundles(const std::string& text) {
  std::vector<FeatureBundle> bundles;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("line " + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
    }
    FeatureBundle b = bundle_from_json(j, line_no);
    if (!seen.insert(b.image_id).second) throw DataError(b.image_id + ": duplicate image_id");
    bundles.push_back(std::move(b));
  }
  return bundles;
}

std::vector<FeatureBundle> load_bundles(const std::string& path) { return parse_bundles(read_text(path)); }

std::string serialize_bundles(const std::vector<FeatureBundle>& bundles) {
  std::string out;
  for (const auto& b : bundles) {
    json ocr = json::array();
    for (const auto& e : b.ocr) ocr.push_back({{"token", e.token}, {"embedding", e.embedding}});
    json j = {{"image_id", b.image_id}, {"regions", b.regions}, {"ocr", ocr}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_bundles(const std::string& path, const std::vector<FeatureBundle>& bundles) {
  write_text(path, serialize_bundles(bundles));
}

std::vector<CaptionRecord> parse_captions(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("captions: malformed JSON (") + e.what() + ")");
  }
  if (!j.is_object()) throw DataError("captions: top level must be an object keyed by image_id");
  std::vector<CaptionRecord> records;
  for (const auto& [id, caps] : j.items()) {
    CaptionRecord rec{id, {}};
    if (!caps.is_array() || caps.empty() || caps.size() > 5) {
      throw DataError(id + ": expected 1 to 5 reference captions");
    }
    for (const auto& cap : caps) {
      if (!cap.is_array()) throw DataError(id + ": caption is not a token array");
      TokenList tokens;
      for (const auto& t : cap) {
        if (!t.is_string() || t.get<std::string>().empty()) throw DataError(id + ": empty or non-string token");
        tokens.push_back(t.get<std::string>());
      }
      rec.captions.push_back(std::move(tokens));
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<CaptionRecord> load_captions(const std::string& path) { return parse_captions(read_text(path)); }

std::string serialize_captions(const std::vector<CaptionRecord>& records) {
  json j = json::object();
  for (const auto& r : records) j[r.image_id] = r.captions;
  return j.dump() + "\n";
}

void write_captions(const std::string& path, const std::vector<CaptionRecord>& records) {
  write_text(path, serialize_captions(records));
}

std::vector<double> hash_embed(const std::string& token, std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw ContractError("hash_embed: dim must be >= 1");
  const std::uint64_t base = mix64(fnv1a64(token) ^ mix64(seed));
  std::vector<double> v(dim);
  double norm2 = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    // Box-Muller on two hashed uniforms per coordinate.
    const double u1 = (static_cast<double>(mix64(base + 2 * j) >> 11) + 0.5) * 0x1.0p-53;
    const double u2 = static_cast<double>(mix64(base + 2 * j + 1) >> 11) * 0x1.0p-53;
    v[j] = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    norm2 += v[j] * v[j];
  }
  const double norm = std::sqrt(norm2);
  for (double& x : v) x /= norm;
  return v;
}

FeatureBundle prepare_ocr(const FeatureBundle& bundle) {
  FeatureBundle out;
  out.image_id = bundle.image_id;
  out.regions = bundle.regions;
  for (const auto& e : bundle.ocr) {
    auto token = normalize_ocr_token(e.token);
    if (!token || is_stopword(*token)) continue;
    out.ocr.push_back({std::move(*token), e.embedding, out.regions.size() + out.ocr.size()});
  }
  return out;
}

std::vector<TokenList> ocr_corpus(const std::vector<FeatureBundle>& bundles) {
  std::vector<TokenList> corpus;
  corpus.reserve(bundles.size());
  for (const auto& b : bundles) corpus.push_back(prepare_ocr(b).ocr_tokens());
  return corpus;
}

std::vector<TokenList> captions_without_ocr(const std::vector<CaptionRecord>& captions,
                                            const std::vector<FeatureBundle>& bundles) {
  std::map<std::string, std::set<std::string>> ocr;
  for (const auto& b : bundles) {
    const auto tokens = prepare_ocr(b).ocr_tokens();
    ocr[b.image_id].insert(tokens.begin(), tokens.end());
  }
  std::vector<TokenList> out;
  for (const auto& rec : captions) {
    const auto it = ocr.find(rec.image_id);
    for (const auto& c : rec.captions) {
      if (it == ocr.end()) {
        out.push_back(c);
        continue;
      }
      TokenList kept;
      for (const auto& t : c) {
        if (!it->second.contains(t)) kept.push_back(t);
      }
      out.push_back(std::move(kept));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr const char* kContainers[] = {"bottle", "can", "box", "jar", "bag", "carton"};

// {c} = container, {x} = brand or content word.
constexpr const char* kTemplates[] = {
    "a {c} of {x} on a table",
    "a {c} of {x} sitting on a counter",
    "a person holding a {c} of {x}",
    "a close up photo of a {c} of {x}",
    "the label of a {c} of {x}",
};

// Printed text that is never the product name.
constexpr const char* kDistractors[] = {"500ml", "12oz", "net", "wt", "2019", "organic", "fresh", "new"};
constexpr const char* kJunk[] = {"the", "of", "!!!", "--", "&"};

constexpr std::uint64_t kStructureSeed = 0x5eed0cafeULL;

TokenList fill_template(std::string_view tmpl, const std::string& container, const std::string& x) {
  TokenList out;
  std::istringstream words{std::string(tmpl)};
  std::string w;
  while (words >> w) {
    if (w == "{c}") {
      out.push_back(container);
    } else if (w == "{x}") {
      out.push_back(x);
    } else {
      out.push_back(w);
    }
  }
  return out;
}

std::string surface_form(const std::string& word, Rng& rng) {
  std::string s = word;
  switch (rng.below(4)) {
    case 0:
      break;
    case 1:
      s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
      break;
    case 2:
      std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
      break;
    default:
      s += rng.below(2) ? "," : ".";
      break;
  }
  return s;
}

std::vector<std::vector<double>> cluster_centers(std::size_t n, std::size_t dim, std::uint64_t stream) {
  Rng rng(mix64(kStructureSeed ^ stream));
  std::vector<std::vector<double>> centers(n, std::vector<double>(dim));
  for (auto& c : centers)
    for (double& v : c) v = rng.normal();
  return centers;
}

}  // namespace

std::vector<std::string> SynthConfig::default_content_words() {
  return {"juice", "soup", "cereal", "rice", "coffee", "tea", "milk", "beans"};
}

std::vector<std::string> SynthConfig::default_ocr_lexicon(std::size_t n) {
  std::vector<std::string> words = {"acme", "zorp"};
  std::set<std::string> banned;
  for (const auto& w : default_content_words()) banned.insert(w);
  for (const char* w : kContainers) banned.insert(w);
  for (const char* w : kDistractors) banned.insert(w);
  for (const char* t : kTemplates)
    for (const auto& w : tokenize(t)) banned.insert(w);
  std::set<std::string> used(words.begin(), words.end());
  static constexpr std::string_view consonants = "bdfgklmnprstvz";
  static constexpr std::string_view vowels = "aeiou";
  Rng rng(0x1e41c0ULL);
  while (words.size() < n) {
    std::string w;
    const std::size_t syllables = 2 + rng.below(2);
    for (std::size_t s = 0; s < syllables; ++s) {
      w += consonants[rng.below(consonants.size())];
      w += vowels[rng.below(vowels.size())];
    }
    if (rng.below(2)) w += consonants[rng.below(consonants.size())];
    if (banned.count(w) || is_stopword(w) || !used.insert(w).second) continue;
    words.push_back(w);
  }
  words.resize(n);
  return words;
}

std::vector<std::string> SynthConfig::template_words() const {
  std::set<std::string> words(fixed_vocab_words.begin(), fixed_vocab_words.end());
  for (const char* c : kContainers) words.insert(c);
  for (const char* t : kTemplates) {
    for (const auto& w : tokenize(t)) {
      if (w != "{" && w != "}" && w != "c" && w != "x") words.insert(w);
    }
  }
  return {words.begin(), words.end()};
}

SynthDataset synth_generate(const SynthConfig& config, std::uint64_t seed) {
  if (!(config.copy_rate >= 0.0 && config.copy_rate <= 1.0)) {
    throw ContractError("synth: copy_rate must lie in [0, 1]");
  }
  if (config.fixed_vocab_words.empty()) throw ContractError("synth: fixed_vocab_words is empty");
  if (config.ocr_lexicon.empty()) throw ContractError("synth: ocr_lexicon is empty");
  if (config.n_regions == 0 || config.d_v == 0 || config.d_e == 0) {
    throw ContractError("synth: n_regions, d_v and d_e must be positive");
  }
  if (config.captions_per_image == 0 || config.captions_per_image > std::size(kTemplates)) {
    throw ContractError("synth: captions_per_image must be in [1, 5]");
  }
  const std::vector<std::string> fixed_words = config.template_words();
  std::vector<std::string> brands;
  for (const auto& w : config.ocr_lexicon) {
    if (!std::binary_search(fixed_words.begin(), fixed_words.end(), w)) brands.push_back(w);
  }
  if (brands.empty()) throw ContractError("synth: every ocr_lexicon word is in the fixed vocabulary");

  const std::size_t n_containers = std::size(kContainers);
  const std::size_t n_contents = config.fixed_vocab_words.size();
  const auto container_centers = cluster_centers(n_containers, config.d_v, 1);
  const auto content_centers = cluster_centers(n_contents, config.d_v, 2);

  Rng rng(mix64(seed));
  std::vector<double> zipf_weights(brands.size());
  for (std::size_t r = 0; r < brands.size(); ++r) {
    zipf_weights[r] = 1.0 / std::pow(static_cast<double>(r + 1), config.zipf_exponent);
  }
  std::vector<std::size_t> cycle;
  std::size_t cycle_pos = 0;

  SynthDataset data;
  for (std::size_t img = 0; img < config.n_images; ++img) {
    std::ostringstream id;
    id << "img-" << std::setw(4) << std::setfill('0') << img;

    const std::size_t container = rng.below(n_containers);
    const std::size_t content = rng.below(n_contents);
    std::size_t brand_idx;
    if (config.zipf_exponent > 0.0) {
      brand_idx = rng.categorical(zipf_weights);
    } else {
      if (cycle_pos == cycle.size()) {
        cycle.resize(brands.size());
        for (std::size_t i = 0; i < cycle.size(); ++i) cycle[i] = i;
        rng.shuffle(cycle);
        cycle_pos = 0;
      }
      brand_idx = cycle[cycle_pos++];
    }
    const std::string& brand = brands[brand_idx];
    const bool copies = rng.uniform() < config.copy_rate;

    FeatureBundle b;
    b.image_id = id.str();
    for (std::size_t r = 0; r < config.n_regions; ++r) {
      const auto& center = r % 2 == 0 ? container_centers[container] : content_centers[content];
      std::vector<double> feat(config.d_v);
      for (std::size_t k = 0; k < config.d_v; ++k) feat[k] = center[k] + config.region_noise * rng.normal();
      b.regions.push_back(std::move(feat));
    }

    std::vector<std::string> raw_ocr = {surface_form(brand, rng)};
    for (std::size_t k = 0; k < config.distractors; ++k) {
      raw_ocr.emplace_back(kDistractors[rng.below(std::size(kDistractors))]);
    }
    if (rng.below(2)) raw_ocr.emplace_back(kJunk[rng.below(std::size(kJunk))]);
    rng.shuffle(raw_ocr);
    for (const auto& raw : raw_ocr) {
      const std::string key = normalize_ocr_token(raw).value_or(raw);
      b.ocr.push_back({raw, hash_embed(key, config.d_e, config.embedding_seed), b.regions.size() + b.ocr.size()});
    }

    std::vector<std::size_t> templates(std::size(kTemplates));
    for (std::size_t i = 0; i < templates.size(); ++i) templates[i] = i;
    rng.shuffle(templates);
    CaptionRecord rec{b.image_id, {}};
    const std::string& filler = copies ? brand : config.fixed_vocab_words[content];
    for (std::size_t c = 0; c < config.captions_per_image; ++c) {
      rec.captions.push_back(fill_template(kTemplates[templates[c]], kContainers[container], filler));
    }

    data.bundles.push_back(std::move(b));
    data.captions.push_back(std::move(rec));
    data.brands.push_back(brand);
    data.copies.push_back(copies);
  }
  return data;
}

}  // namespace ocrcap
