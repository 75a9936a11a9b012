#include <benchmark/benchmark.h>

#include "ocrcap/captioner.hpp"
#include "ocrcap/decoding.hpp"
#include "ocrcap/metrics.hpp"
#include "ocrcap/rng.hpp"
#include "ocrcap/training.hpp"

using namespace ocrcap;

namespace {

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c, bool rg = false) {
  std::vector<double> v(r * c);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from({r, c}, std::move(v), rg);
}

// Default-sized pointer model on synthetic data.
struct Fixture {
  SynthDataset data;
  ExtendedVocabulary vocab;
  ModelConfig config;

  Fixture()
      : data(synth_generate(small(), 7)),
        vocab(extend_with_ocr(build_fixed_vocab(captions_without_ocr(data.captions, data.bundles), 2),
                              ocr_corpus(data.bundles), 2)) {
    config.variant = Variant::pointer;
    config.fixed_vocab_size = vocab.fixed_size();
    config.extended_vocab_size = vocab.size();
  }

  static SynthConfig small() {
    SynthConfig c;
    c.n_images = 32;
    return c;
  }

  static const Fixture& get() {
    static const Fixture f;
    return f;
  }
};

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = random_matrix(rng, n, n), b = random_matrix(rng, n, n);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(128);

static void BM_MatmulBackward(benchmark::State& state) {
  Rng rng(2);
  Tensor a = random_matrix(rng, 64, 64, true), b = random_matrix(rng, 64, 64, true);
  for (auto _ : state) {
    sum(matmul(a, b)).backward();
    a.zero_grad();
    b.zero_grad();
  }
}
BENCHMARK(BM_MatmulBackward);

static void BM_DecodeStep(benchmark::State& state) {
  const Fixture& f = Fixture::get();
  const Captioner cap(f.config, ModelParams::initialize(f.config), f.vocab);
  const PreparedImage img = cap.prepare(f.data.bundles.front());
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(cap.step(img, cap.start(), kBos));
}
BENCHMARK(BM_DecodeStep);

static void BM_BeamSearch(benchmark::State& state) {
  const Fixture& f = Fixture::get();
  const Captioner cap(f.config, ModelParams::initialize(f.config), f.vocab);
  BeamOptions o;
  o.beam_size = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(beam_search(cap, f.data.bundles.front(), o));
}
BENCHMARK(BM_BeamSearch)->Arg(1)->Arg(3)->Arg(5)->Unit(benchmark::kMillisecond);

static void BM_TrainingStep(benchmark::State& state) {
  const Fixture& f = Fixture::get();
  const Captioner cap(f.config, ModelParams::initialize(f.config), f.vocab);
  const PreparedImage img = cap.prepare(f.data.bundles.front());
  const auto target = cap.target_ids(f.data.captions.front().captions.front(), img);
  for (auto _ : state) teacher_forced_loss(cap, img, target).loss.backward();
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);

static void BM_Cider(benchmark::State& state) {
  const Fixture& f = Fixture::get();
  EvalCorpus corpus;
  for (const auto& rec : f.data.captions) corpus.items.push_back({rec.image_id, rec.captions.front(), rec.captions});
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(corpus));
}
BENCHMARK(BM_Cider);
BENCHMARK_MAIN();
