#include "ocrcap/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ocrcap/digest.hpp"
#include "ocrcap/error.hpp"
#include "ocrcap/rng.hpp"

namespace ocrcap {

namespace {

struct Hyp {
  std::vector<std::size_t> ids;
  double log_prob = 0.0;
  bool finished = false;
  DecoderState state;
  std::vector<double> p_gen_trace;
  std::vector<std::size_t> copied;
};

double score_of(const Hyp& h, double alpha) {
  const double len = std::max<std::size_t>(1, h.ids.size());
  return h.log_prob / std::pow(len, alpha);
}

bool copied_token(const Captioner& c, const StepOutput& out, std::size_t id) {
  if (!c.config().uses_pointer() || !out.copied.defined()) return false;
  return out.copied.values()[id] > out.generated.values()[id];
}

void record(const Captioner& c, Hyp& h, const StepOutput& out, std::size_t id, double p) {
  if (c.config().uses_pointer()) h.p_gen_trace.push_back(out.p_gen_value);
  if (copied_token(c, out, id)) h.copied.push_back(h.ids.size());
  h.ids.push_back(id);
  h.log_prob += std::log(p);
  h.finished = id == kEos;
}

DecodeReport report_of(const Captioner& c, const std::string& image_id, Hyp h, double alpha) {
  DecodeReport r;
  r.image_id = image_id;
  r.score = score_of(h, alpha);
  r.log_prob = h.log_prob;
  r.finished = h.finished;
  r.p_gen_trace = std::move(h.p_gen_trace);
  r.copied_positions = std::move(h.copied);
  for (std::size_t id : h.ids) {
    if (id != kEos) r.tokens.push_back(c.vocab().token(id));
  }
  r.repetition_flag = has_repetition(h.ids);
  r.ids = std::move(h.ids);
  return r;
}

// Indices of the `n` largest probabilities, ties to the lower id.
std::vector<std::size_t> top_indices(std::span<const double> p, std::size_t n) {
  std::vector<std::size_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  n = std::min(n, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(),
                    [&](std::size_t a, std::size_t b) { return p[a] > p[b] || (p[a] == p[b] && a < b); });
  idx.resize(n);
  return idx;
}

bool better(const Hyp& a, const Hyp& b, double alpha) {
  const double sa = score_of(a, alpha), sb = score_of(b, alpha);
  if (sa != sb) return sa > sb;
  return a.ids < b.ids;
}

std::vector<Hyp> run_beam(const Captioner& c, const PreparedImage& image, std::size_t width, std::size_t max_len) {
  std::vector<Hyp> active(1);
  active[0].state = c.start();
  std::vector<Hyp> done;

  struct Cand {
    std::size_t parent;
    std::size_t id;
    double log_prob;
    double p;
  };

  for (std::size_t t = 0; t < max_len && !active.empty(); ++t) {
    std::vector<StepOutput> outs;
    outs.reserve(active.size());
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < active.size(); ++i) {
      const std::size_t prev = active[i].ids.empty() ? kBos : active[i].ids.back();
      outs.push_back(c.step(image, active[i].state, prev));
      const auto probs = outs.back().dist.probs.values();
      for (std::size_t id : top_indices(probs, width)) {
        if (probs[id] > 0.0) cands.push_back({i, id, active[i].log_prob + std::log(probs[id]), probs[id]});
      }
    }
    std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      const auto& pa = active[a.parent].ids;
      const auto& pb = active[b.parent].ids;
      if (pa != pb) return pa < pb;
      return a.id < b.id;
    });
    if (cands.size() > width) cands.resize(width);

    std::vector<Hyp> next;
    for (const Cand& cand : cands) {
      Hyp h = active[cand.parent];
      record(c, h, outs[cand.parent], cand.id, cand.p);
      h.state = outs[cand.parent].next;
      if (h.finished) {
        done.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    active = std::move(next);
  }
  for (auto& h : active) done.push_back(std::move(h));
  return done;
}

}  // namespace

DecodeReport beam_search(const Captioner& captioner, const FeatureBundle& bundle, const BeamOptions& options) {
  if (options.beam_size == 0) throw ContractError("beam_search: beam size must be >= 1");
  if (options.max_len == 0) throw ContractError("beam_search: max_len must be >= 1");
  NoGradGuard no_grad;
  const PreparedImage image = captioner.prepare(bundle);
  std::vector<Hyp> pool = run_beam(captioner, image, options.beam_size, options.max_len);
  if (options.beam_size > 1) {
    auto greedy = run_beam(captioner, image, 1, options.max_len);
    for (auto& h : greedy) pool.push_back(std::move(h));
  }
  if (pool.empty()) throw NumericalError(bundle.image_id + ": beam search produced no hypothesis");
  std::size_t best = 0;
  for (std::size_t i = 1; i < pool.size(); ++i) {
    if (better(pool[i], pool[best], options.length_penalty)) best = i;
  }
  return report_of(captioner, bundle.image_id, std::move(pool[best]), options.length_penalty);
}

DecodeReport greedy_decode(const Captioner& captioner, const FeatureBundle& bundle, std::size_t max_len) {
  return beam_search(captioner, bundle, BeamOptions{1, max_len, 1.0});
}

DecodeReport top_k_sample(const Captioner& captioner, const FeatureBundle& bundle, const SampleOptions& options) {
  if (options.k == 0) throw ContractError("top_k_sample: k must be >= 1");
  if (!(options.temperature > 0.0) || !std::isfinite(options.temperature)) {
    throw ContractError("top_k_sample: temperature must be positive");
  }
  if (options.max_len == 0) throw ContractError("top_k_sample: max_len must be >= 1");
  NoGradGuard no_grad;
  const PreparedImage image = captioner.prepare(bundle);
  Rng rng(mix64(options.seed ^ fnv1a64(bundle.image_id)));
  Hyp h;
  h.state = captioner.start();
  for (std::size_t t = 0; t < options.max_len && !h.finished; ++t) {
    const std::size_t prev = h.ids.empty() ? kBos : h.ids.back();
    StepOutput out = captioner.step(image, h.state, prev);
    const auto probs = out.dist.probs.values();
    std::vector<std::size_t> top = top_indices(probs, options.k);
    std::erase_if(top, [&](std::size_t id) { return !(probs[id] > 0.0); });
    if (top.empty()) throw NumericalError(bundle.image_id + ": empty sampling support");
    const double log_max = std::log(probs[top.front()]);
    std::vector<double> weights;
    weights.reserve(top.size());
    for (std::size_t id : top) weights.push_back(std::exp((std::log(probs[id]) - log_max) / options.temperature));
    const std::size_t id = top[rng.categorical(weights)];
    record(captioner, h, out, id, probs[id]);
    h.state = std::move(out.next);
  }
  return report_of(captioner, bundle.image_id, std::move(h), 1.0);
}

double sequence_log_prob(const Captioner& captioner, const FeatureBundle& bundle, std::span<const std::size_t> ids) {
  NoGradGuard no_grad;
  const PreparedImage image = captioner.prepare(bundle);
  DecoderState state = captioner.start();
  std::size_t prev = kBos;
  double total = 0.0;
  for (std::size_t id : ids) {
    StepOutput out = captioner.step(image, state, prev);
    if (id >= out.dist.probs.numel()) throw ContractError("sequence_log_prob: id " + std::to_string(id) + " out of range");
    total += std::log(out.dist.probs.values()[id]);
    state = std::move(out.next);
    prev = id;
  }
  return total;
}

bool has_repetition(std::span<const std::size_t> ids, std::size_t run) {
  if (run <= 1) return !ids.empty();
  std::size_t len = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    len = (i > 0 && ids[i] == ids[i - 1]) ? len + 1 : 1;
    if (len >= run) return true;
  }
  return false;
}

double repetition_rate(std::span<const DecodeReport> reports) {
  if (reports.empty()) throw ContractError("repetition_rate: no captions");
  const auto n = std::count_if(reports.begin(), reports.end(), [](const DecodeReport& r) { return r.repetition_flag; });
  return static_cast<double>(n) / static_cast<double>(reports.size());
}

}  // namespace ocrcap
