#include "cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>

#include "ocrcap/checkpoint.hpp"
#include "ocrcap/decoding.hpp"
#include "ocrcap/digest.hpp"
#include "ocrcap/error.hpp"
#include "ocrcap/features.hpp"
#include "ocrcap/metrics.hpp"
#include "ocrcap/training.hpp"
#include "ocrcap/vocab.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ocrcap::cli {

namespace {

constexpr const char* kToolVersion = "ocrcap 0.1.0";

// Thrown for invalid flag combinations that CLI11 cannot express.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool verbose() {
  const char* v = std::getenv("OCRCAP_VERBOSE");
  return v != nullptr && *v != '\0' && std::string(v) != "0";
}

void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + path.string());
    f << content;
    if (!f) throw DataError("failed writing " + path.string());
  }
  fs::rename(tmp, path);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

json input_digests(const std::vector<fs::path>& files) {
  json j = json::object();
  for (const auto& f : files) j[f.filename().string()] = file_digest(f.string());
  return j;
}

void write_manifest(const fs::path& dir, const std::string& command, const json& config, std::uint64_t seed,
                    const json& inputs, const std::vector<std::string>& artifacts) {
  json m;
  m["tool"] = kToolVersion;
  m["command"] = command;
  m["seed"] = seed;
  m["config"] = config;
  m["inputs"] = inputs;
  m["artifacts"] = artifacts;
  write_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

// synth ---------------------------------------------------------------------

struct SynthArgs {
  std::size_t n_images = 200;
  std::size_t eval_images = 0;
  double copy_rate = 1.0;
  std::uint64_t seed = 1;
  std::string out_dir;
  std::size_t lexicon_size = 40;
  double zipf = 0.0;
  std::size_t distractors = 1;
  std::size_t captions_per_image = 3;
  double region_noise = 0.5;
};

void cmd_synth(const SynthArgs& a, std::ostream& out) {
  SynthConfig cfg;
  cfg.n_images = a.n_images + a.eval_images;
  cfg.copy_rate = a.copy_rate;
  cfg.ocr_lexicon = SynthConfig::default_ocr_lexicon(a.lexicon_size);
  cfg.zipf_exponent = a.zipf;
  cfg.distractors = a.distractors;
  cfg.captions_per_image = a.captions_per_image;
  cfg.region_noise = a.region_noise;
  const fs::path dir(a.out_dir);
  ensure_dir(dir);

  std::vector<std::string> artifacts = {"bundles.jsonl", "captions.json"};
  if (a.eval_images > 0) {
    artifacts.emplace_back("eval_bundles.jsonl");
    artifacts.emplace_back("eval_captions.json");
  }
  json config = {{"n_images", a.n_images},         {"eval_images", a.eval_images},
                 {"copy_rate", a.copy_rate},       {"lexicon_size", a.lexicon_size},
                 {"zipf_exponent", a.zipf},        {"distractors", a.distractors},
                 {"captions_per_image", a.captions_per_image}, {"region_noise", a.region_noise},
                 {"n_regions", cfg.n_regions},     {"d_v", cfg.d_v},
                 {"d_e", cfg.d_e},                 {"embedding_seed", cfg.embedding_seed}};
  write_manifest(dir, "synth", config, a.seed, json::object(), artifacts);

  SynthDataset data = synth_generate(cfg, a.seed);
  const auto split = static_cast<std::ptrdiff_t>(a.n_images);
  std::vector<FeatureBundle> train_b(data.bundles.begin(), data.bundles.begin() + split);
  std::vector<CaptionRecord> train_c(data.captions.begin(), data.captions.begin() + split);
  write_bundles((dir / "bundles.jsonl").string(), train_b);
  write_captions((dir / "captions.json").string(), train_c);
  if (a.eval_images > 0) {
    std::vector<FeatureBundle> eval_b(data.bundles.begin() + split, data.bundles.end());
    std::vector<CaptionRecord> eval_c(data.captions.begin() + split, data.captions.end());
    write_bundles((dir / "eval_bundles.jsonl").string(), eval_b);
    write_captions((dir / "eval_captions.json").string(), eval_c);
  }
  out << "wrote " << a.n_images << " training images";
  if (a.eval_images > 0) out << " and " << a.eval_images << " evaluation images";
  out << " to " << dir.string() << "\n";
}

// build-vocab ---------------------------------------------------------------

struct VocabArgs {
  std::string captions;
  std::string bundles;
  std::size_t threshold = 2;
  std::size_t min_count = 5;
  bool mask_ocr = false;
  std::string out_dir;
};

void cmd_build_vocab(const VocabArgs& a, std::ostream& out) {
  const auto captions = load_captions(a.captions);
  std::vector<FeatureBundle> bundles;
  if (!a.bundles.empty()) bundles = load_bundles(a.bundles);
  if (a.mask_ocr && bundles.empty()) throw UsageError("--mask-ocr needs --ocr-from-bundles");

  std::vector<TokenList> corpus;
  if (a.mask_ocr) {
    corpus = captions_without_ocr(captions, bundles);
  } else {
    for (const auto& rec : captions)
      for (const auto& c : rec.captions) corpus.push_back(c);
  }
  const Vocabulary base = build_fixed_vocab(corpus, a.min_count);
  const ExtendedVocabulary vocab = extend_with_ocr(base, ocr_corpus(bundles), a.threshold);

  const fs::path dir(a.out_dir);
  ensure_dir(dir);
  std::vector<fs::path> inputs = {a.captions};
  if (!a.bundles.empty()) inputs.emplace_back(a.bundles);
  json config = {{"threshold", a.threshold}, {"min_count", a.min_count}, {"mask_ocr", a.mask_ocr}};
  write_manifest(dir, "build-vocab", config, 0, input_digests(inputs), {"vocab.txt", "ocr_vocab.txt"});
  save_vocabulary(dir.string(), vocab);
  out << "fixed vocabulary: " << vocab.fixed_size() << " tokens\n";
  out << "ocr words added: " << vocab.added_count() << "\n";
}

// train ---------------------------------------------------------------------

struct TrainArgs {
  std::string variant = "pointer";
  std::string data_dir;
  std::string vocab_dir;
  std::string preset = "synthetic";
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  std::string out_dir;
  std::optional<double> pointer_bias_init;
};

json train_config_json(const TrainConfig& t, const ModelConfig& m) {
  json j = {{"variant", std::string(to_string(t.variant))},
            {"preset", t.preset},
            {"learning_rate", t.learning_rate},
            {"anneal_factor", t.anneal_factor},
            {"anneal_every", t.anneal_every},
            {"epochs", t.epochs},
            {"batch_size", t.batch_size},
            {"clip_norm", t.clip_norm},
            {"optimizer", {{"name", "adam"}, {"beta1", 0.9}, {"beta2", 0.999}, {"eps", 1e-8}}},
            {"probability_floor", kProbabilityFloor},
            {"model",
             {{"d_model", m.d_model},
              {"d_region", m.d_region},
              {"d_ocr", m.d_ocr},
              {"encoder_layers", m.encoder_layers},
              {"init_range", m.init_range},
              {"recurrent_cell", "gru"}}}};
  if (t.pointer_bias_init) j["pointer_bias_init"] = *t.pointer_bias_init;
  return j;
}

void cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const Variant variant = parse_variant(a.variant);
  if (a.pointer_bias_init && variant != Variant::pointer) {
    throw UsageError("--pointer-bias-init applies to --variant pointer only");
  }
  TrainConfig cfg = a.preset == "paper" ? TrainConfig::paper(variant) : TrainConfig::synthetic(variant);
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.lr) cfg.learning_rate = *a.lr;
  cfg.batch_size = a.batch_size;
  cfg.seed = a.seed;
  cfg.pointer_bias_init = a.pointer_bias_init;

  const fs::path data(a.data_dir), vdir(a.vocab_dir), dir(a.out_dir);
  const fs::path bundles_path = data / "bundles.jsonl", captions_path = data / "captions.json";
  Dataset dataset{load_bundles(bundles_path.string()), load_captions(captions_path.string())};
  const ExtendedVocabulary vocab = load_vocabulary(vdir.string());

  ModelConfig model;
  model.variant = variant;
  model.seed = cfg.seed;
  model.fixed_vocab_size = vocab.fixed_size();
  model.extended_vocab_size = vocab.size();
  if (!dataset.bundles.empty()) {
    model.d_region = dataset.bundles.front().region_dim();
    for (const auto& b : dataset.bundles) {
      if (b.ocr_dim() != 0) {
        model.d_ocr = b.ocr_dim();
        break;
      }
    }
  }

  ensure_dir(dir);
  std::vector<std::string> artifacts;
  for (std::size_t e = 1; e <= cfg.epochs; ++e) artifacts.push_back("checkpoint_epoch_" + std::to_string(e) + ".bin");
  artifacts.emplace_back("model.bin");
  artifacts.emplace_back("train_log.jsonl");
  write_manifest(dir, "train", train_config_json(cfg, model), cfg.seed,
                 input_digests({bundles_path, captions_path, vdir / "vocab.txt", vdir / "ocr_vocab.txt"}), artifacts);

  std::string log_text;
  const bool chatty = verbose();
  const auto on_epoch = [&](const EpochLog& e, const ModelParams& params) {
    json line = {{"epoch", e.epoch + 1}, {"lr", e.lr}, {"mean_loss", e.mean_loss}};
    if (e.mean_p_gen) line["mean_p_gen"] = *e.mean_p_gen;
    log_text += line.dump() + "\n";
    write_atomic(dir / "train_log.jsonl", log_text);
    save_checkpoint((dir / ("checkpoint_epoch_" + std::to_string(e.epoch + 1) + ".bin")).string(), model, params,
                    vocab, e.epoch + 1);
    if (chatty) err << "epoch " << e.epoch + 1 << " lr " << e.lr << " loss " << e.mean_loss << "\n";
  };
  const TrainResult result = train(dataset, vocab, model, cfg, on_epoch);
  save_checkpoint((dir / "model.bin").string(), model, result.params, vocab, cfg.epochs);
  out << "trained " << to_string(variant) << " for " << cfg.epochs << " epochs; final mean loss "
      << result.log.back().mean_loss << "\n";
}

// caption -------------------------------------------------------------------

struct CaptionArgs {
  std::string checkpoint;
  std::string vocab_dir;
  std::string bundles;
  std::string mode = "beam";
  std::size_t beam = 3;
  std::size_t k = 5;
  double temperature = 1.0;
  std::uint64_t seed = 1;
  std::size_t max_len = 20;
  std::string out;
};

json report_json(const DecodeReport& r, bool pointer) {
  json j;
  j["image_id"] = r.image_id;
  j["caption"] = join_tokens(r.tokens);
  if (pointer) j["p_gen_trace"] = r.p_gen_trace;
  j["copied_positions"] = r.copied_positions;
  j["repetition_flag"] = r.repetition_flag;
  j["log_prob"] = r.log_prob;
  j["token_ids"] = r.ids;
  return j;
}

void cmd_caption(const CaptionArgs& a, std::ostream& out) {
  const ExtendedVocabulary vocab = load_vocabulary(a.vocab_dir);
  Checkpoint ck = load_checkpoint(a.checkpoint, vocab);
  const auto bundles = load_bundles(a.bundles);
  const Captioner captioner(ck.config, ck.params, vocab);
  if (a.mode == "topk" && a.k == 0) throw UsageError("--k must be >= 1");

  std::string text;
  std::vector<DecodeReport> reports;
  for (const auto& b : bundles) {
    DecodeReport r = a.mode == "beam"
                         ? beam_search(captioner, b, BeamOptions{a.beam, a.max_len, 1.0})
                         : top_k_sample(captioner, b, SampleOptions{a.k, a.temperature, a.max_len, a.seed});
    text += report_json(r, ck.config.uses_pointer()).dump() + "\n";
    reports.push_back(std::move(r));
  }
  const fs::path path(a.out);
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  write_atomic(path, text);
  out << "captioned " << reports.size() << " images";
  if (!reports.empty()) out << "; repetition rate " << repetition_rate(reports);
  out << "\n";
}

// eval ----------------------------------------------------------------------

std::map<std::string, TokenList> load_candidates(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string text = ss.str();
  std::map<std::string, TokenList> out;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) throw DataError(path + ": empty candidate file");
  // A captions.json-style object: the first caption of each image is the candidate.
  if (text[first] == '{' && path.ends_with(".json")) {
    for (auto& rec : parse_captions(text)) out[rec.image_id] = rec.captions.front();
    return out;
  }
  std::istringstream lines(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      const auto id = j.at("image_id").get<std::string>();
      if (!out.emplace(id, tokenize(j.at("caption").get<std::string>())).second) {
        throw DataError(path + ":" + std::to_string(n) + ": duplicate image " + id);
      }
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

struct EvalArgs {
  std::string captions;
  std::string references;
  std::string out;
};

void cmd_eval(const EvalArgs& a, std::ostream& out) {
  const EvalCorpus corpus = make_corpus(load_candidates(a.captions), load_captions(a.references));
  const MetricScores s = evaluate(corpus);
  const json j = {{"bleu4", s.bleu4}, {"rouge_l", s.rouge_l}, {"cider", s.cider}, {"n_images", s.n_images}};
  if (!a.out.empty()) {
    const fs::path path(a.out);
    if (path.has_parent_path()) ensure_dir(path.parent_path());
    write_atomic(path, j.dump(2) + "\n");
  }
  out << j.dump() << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Captioning with OCR-aware copying", "ocrcap"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic copy-task dataset");
  s->add_option("--n-images", synth.n_images, "Training images")->check(CLI::PositiveNumber);
  s->add_option("--eval-images", synth.eval_images, "Held-out images (eval_*.json[l])");
  s->add_option("--copy-rate", synth.copy_rate, "Probability a caption names the product")->check(CLI::Range(0.0, 1.0));
  s->add_option("--seed", synth.seed);
  s->add_option("--out-dir", synth.out_dir)->required();
  s->add_option("--lexicon-size", synth.lexicon_size, "Number of brand words")->check(CLI::PositiveNumber);
  s->add_option("--zipf", synth.zipf, "Zipf exponent for brand frequencies (0 = uniform)")
      ->check(CLI::Range(0.0, 10.0));
  s->add_option("--distractors", synth.distractors, "Non-brand OCR tokens per image");
  s->add_option("--captions-per-image", synth.captions_per_image)->check(CLI::Range(1, 5));
  s->add_option("--region-noise", synth.region_noise)->check(CLI::NonNegativeNumber);

  VocabArgs voc;
  auto* v = app.add_subcommand("build-vocab", "Build the fixed vocabulary and its OCR extension");
  v->add_option("--captions", voc.captions)->required()->check(CLI::ExistingFile);
  v->add_option("--ocr-from-bundles", voc.bundles, "Bundles whose OCR tokens extend the vocabulary")
      ->check(CLI::ExistingFile);
  v->add_option("--threshold", voc.threshold, "Minimum OCR token frequency")->check(CLI::PositiveNumber);
  v->add_option("--min-count", voc.min_count, "Minimum caption token frequency")->check(CLI::PositiveNumber);
  v->add_flag("--mask-ocr", voc.mask_ocr, "Do not count caption tokens that appear in the image's OCR");
  v->add_option("--out", voc.out_dir, "Output directory")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a captioning model");
  t->add_option("--variant", tr.variant)->check(CLI::IsMember({"baseline", "extended", "pointer"}));
  t->add_option("--data", tr.data_dir, "Directory with bundles.jsonl and captions.json")
      ->required()
      ->check(CLI::ExistingDirectory);
  t->add_option("--vocab", tr.vocab_dir)->required()->check(CLI::ExistingDirectory);
  t->add_option("--preset", tr.preset)->check(CLI::IsMember({"paper", "synthetic"}));
  t->add_option("--epochs", tr.epochs)->check(CLI::PositiveNumber);
  t->add_option("--lr", tr.lr, "Override the preset learning rate")->check(CLI::NonNegativeNumber);
  t->add_option("--batch-size", tr.batch_size)->check(CLI::PositiveNumber);
  t->add_option("--seed", tr.seed);
  t->add_option("--out", tr.out_dir)->required();
  t->add_option("--pointer-bias-init", tr.pointer_bias_init, "Initial p_gen bias (pointer variant)");

  CaptionArgs cap;
  auto* c = app.add_subcommand("caption", "Caption images with a trained model");
  c->add_option("--checkpoint", cap.checkpoint)->required()->check(CLI::ExistingFile);
  c->add_option("--vocab", cap.vocab_dir)->required()->check(CLI::ExistingDirectory);
  c->add_option("--bundles", cap.bundles)->required()->check(CLI::ExistingFile);
  c->add_option("--mode", cap.mode)->check(CLI::IsMember({"beam", "topk"}));
  c->add_option("--beam", cap.beam)->check(CLI::PositiveNumber);
  c->add_option("--k", cap.k)->check(CLI::PositiveNumber);
  c->add_option("--temperature", cap.temperature)->check(CLI::PositiveNumber);
  c->add_option("--seed", cap.seed);
  c->add_option("--max-len", cap.max_len)->check(CLI::PositiveNumber);
  c->add_option("--out", cap.out)->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score captions against references");
  e->add_option("--captions", ev.captions, "caption output (JSONL) or a captions.json")
      ->required()
      ->check(CLI::ExistingFile);
  e->add_option("--references", ev.references)->required()->check(CLI::ExistingFile);
  e->add_option("--out", ev.out);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kSuccess : kUsage;
  }

  try {
    if (s->parsed()) cmd_synth(synth, out);
    if (v->parsed()) cmd_build_vocab(voc, out);
    if (t->parsed()) cmd_train(tr, out, err);
    if (c->parsed()) cmd_caption(cap, out);
    if (e->parsed()) cmd_eval(ev, out);
  } catch (const UsageError& ue) {
    err << "usage error: " << ue.what() << "\n";
    return kUsage;
  } catch (const NumericalError& ne) {
    err << "numerical failure: " << ne.what() << "\n";
    return kNumerical;
  } catch (const Error& de) {
    err << "error: " << de.what() << "\n";
    return kDataError;
  } catch (const fs::filesystem_error& fe) {
    err << "error: " << fe.what() << "\n";
    return kDataError;
  }
  return kSuccess;
}

}  // namespace ocrcap::cli
