// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "attnlab/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include <json.hpp>

#include "attnlab/error.hpp"

namespace attnlab {

namespace {

constexpr std::size_t kCarried = std::numeric_limits<std::size_t>::max();

struct LiveBeam {
  std::vector<TokenId> tokens;
  double score = 0.0;
  KvCache cache;
  std::vector<double> logits;
  double vid = 0.0;
};

bool candidate_before(const BeamCandidate& a, const BeamCandidate& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

double ranking_score(const BeamCandidate& c, double length_penalty) {
  if (length_penalty == 0.0) return c.score;
  const double len = static_cast<double>(std::max<std::size_t>(1, c.tokens.size()));
  return c.score / std::pow(len, length_penalty);
}

}  // namespace

void VbsConfig::validate(std::size_t n_layers) const {
  if (vid_layer_lo >= vid_layer_hi || vid_layer_hi >= n_layers) {
    throw DomainError("VbsConfig: VID band [" + std::to_string(vid_layer_lo) + "," +
                      std::to_string(vid_layer_hi) + "] needs lo < hi < " + std::to_string(n_layers));
  }
  if (!(beta >= 0.0 && beta <= 1.0)) throw DomainError("VbsConfig: beta must lie in [0, 1]");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw DomainError("VbsConfig: gamma must be >= 0");
  if (n_beam < 1) throw DomainError("VbsConfig: n_beam must be >= 1");
  if (max_new_tokens < 1) throw DomainError("VbsConfig: max_new_tokens must be >= 1");
  if (!std::isfinite(length_penalty)) throw DomainError("VbsConfig: length_penalty must be finite");
}

double compute_vid(const AttentionTrace& trace, const PromptSpans& spans, LayerBand band) {
  if (band.lo > band.hi || band.hi >= trace.n_layers) {
    throw DomainError("compute_vid: band [" + std::to_string(band.lo) + "," +
                      std::to_string(band.hi) + "] outside " + std::to_string(trace.n_layers) +
                      " traced layers");
  }
  if (trace.n_heads == 0) throw DomainError("compute_vid: trace has no heads");
  const auto& vis = spans.visual;
  double layer_sum = 0.0;
  for (std::size_t l = band.lo; l <= band.hi; ++l) {
    double head_sum = 0.0;
    for (std::size_t h = 0; h < trace.n_heads; ++h) {
      const auto& w = trace.at(l, h).weights;
      if (vis.end > w.size()) throw ShapeError("compute_vid: visual span past trace row");
      double mass = 0.0;
      for (std::size_t i = vis.begin; i < vis.end; ++i) mass += w[i];
      head_sum += mass;
    }
    layer_sum += head_sum / static_cast<double>(trace.n_heads);
  }
  const double vid = layer_sum / static_cast<double>(band.hi - band.lo + 1);
  return std::clamp(vid, 0.0, 1.0);
}

std::vector<double> adjust_logits(std::span<const double> logp, double vid, double beta,
                                  double gamma) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw DomainError("adjust_logits: beta must lie in [0, 1]");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw DomainError("adjust_logits: gamma must be >= 0");
  if (!std::isfinite(vid)) throw DomainError("adjust_logits: non-finite VID");
  const double shift = (1.0 - beta) * gamma * vid;
  std::vector<double> out(logp.size());
  for (std::size_t i = 0; i < logp.size(); ++i) {
    if (!std::isfinite(logp[i])) throw DomainError("adjust_logits: non-finite log-probability");
    out[i] = beta * logp[i] + shift;
  }
  return out;
}

std::vector<TokenId> top_k(std::span<const double> values, std::size_t k) {
  std::vector<TokenId> idx(values.size());
  std::iota(idx.begin(), idx.end(), TokenId{0});
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](TokenId a, TokenId b) {
                      if (values[a] != values[b]) return values[a] > values[b];
                      return a < b;
                    });
  idx.resize(k);
  return idx;
}

DecodeResult greedy_decode(const Weights& weights, const SegmentedSequence& seq,
                           const AttentionHook& hook, std::size_t max_new_tokens,
                           std::optional<TokenId> stop_token, std::optional<LayerBand> vid_band) {
  PrefillResult pre = prefill(weights, seq, hook);
  KvCache cache = std::move(pre.cache);
  StepOutput out = std::move(pre.output);

  DecodeResult result;
  for (std::size_t step = 0; step < max_new_tokens; ++step) {
    const auto logp = log_softmax_row(out.logits);
    const TokenId tok = top_k(out.logits, 1).front();
    result.score += logp[tok];
    StepRecord rec{step, 0, tok, logp[tok], std::nullopt, result.score, false};
    if (vid_band) rec.vid = compute_vid(out.trace, seq.spans, *vid_band);
    if (stop_token && tok == *stop_token) {
      rec.finished = true;
      result.steps.push_back(rec);
      result.stopped = true;
      break;
    }
    result.steps.push_back(rec);
    result.tokens.push_back(tok);
    if (step + 1 < max_new_tokens) out = decode_step(weights, cache, tok, hook);
  }
  return result;
}

std::vector<BeamCandidate> expand_beams(std::span<const BeamView> beams, const VbsConfig& config,
                                        std::size_t per_beam) {
  std::vector<BeamCandidate> out;
  out.reserve(beams.size() * per_beam);
  for (std::size_t b = 0; b < beams.size(); ++b) {
    const BeamView& beam = beams[b];
    const auto logp = log_softmax_row(beam.logits);
    const auto scored =
        config.enabled ? adjust_logits(logp, beam.vid, config.beta, config.gamma) : logp;
    for (TokenId tok : top_k(scored, per_beam)) {
      BeamCandidate c;
      c.tokens.assign(beam.tokens.begin(), beam.tokens.end());
      c.tokens.push_back(tok);
      c.score = beam.score + scored[tok];
      c.log_prob = logp[tok];
      c.parent = b;
      c.finished = config.stop_token && tok == *config.stop_token;
      out.push_back(std::move(c));
    }
  }
  return out;
}

void select_top(std::vector<BeamCandidate>& candidates, std::size_t n) {
  std::stable_sort(candidates.begin(), candidates.end(), candidate_before);
  if (candidates.size() > n) candidates.resize(n);
}

DecodeResult beam_search(const Weights& weights, const SegmentedSequence& seq,
                         const AttentionHook& hook, const VbsConfig& config) {
  config.validate(weights.config.n_layers);
  if (config.n_beam > weights.config.vocab_size) {
    throw DomainError("beam_search: n_beam exceeds vocabulary size");
  }
  const LayerBand band = config.vid_band();

  PrefillResult pre = prefill(weights, seq, hook);
  std::vector<LiveBeam> live;
  live.push_back(LiveBeam{{}, 0.0, std::move(pre.cache), std::move(pre.output.logits),
                          compute_vid(pre.output.trace, seq.spans, band)});

  std::vector<BeamCandidate> finished;
  DecodeResult result;

  for (std::size_t step = 0; step < config.max_new_tokens && !live.empty(); ++step) {
    std::vector<BeamView> views;
    views.reserve(live.size());
    for (const auto& b : live) views.push_back(BeamView{b.tokens, b.score, b.logits, b.vid});

    std::vector<BeamCandidate> pool = expand_beams(views, config, config.n_beam);
    for (const auto& f : finished) {
      pool.push_back(f);
      pool.back().parent = kCarried;
    }
    select_top(pool, config.n_beam);

    const bool last_step = step + 1 == config.max_new_tokens;
    std::vector<LiveBeam> next;
    for (std::size_t rank = 0; rank < pool.size(); ++rank) {
      BeamCandidate& c = pool[rank];
      if (c.parent == kCarried) continue;
      const LiveBeam& parent = live[c.parent];
      result.steps.push_back(StepRecord{step, rank, c.tokens.back(), c.log_prob, parent.vid,
                                        c.score, c.finished});
      if (c.finished) {
        finished.push_back(c);
        continue;
      }
      next.push_back(LiveBeam{std::move(c.tokens), c.score, parent.cache, {}, 0.0});
    }
    if (!last_step && !next.empty()) {
      std::vector<KvCache*> caches;
      std::vector<TokenId> tokens;
      for (auto& child : next) {
        caches.push_back(&child.cache);
        tokens.push_back(child.tokens.back());
      }
      auto outs = decode_steps(weights, caches, tokens, hook);
      for (std::size_t i = 0; i < next.size(); ++i) {
        next[i].logits = std::move(outs[i].logits);
        next[i].vid = compute_vid(outs[i].trace, seq.spans, band);
      }
    }
    live = std::move(next);
  }

  const BeamCandidate* best = nullptr;
  std::vector<BeamCandidate> live_final;
  const auto better = [&](const BeamCandidate& a, const BeamCandidate& b) {
    const double sa = ranking_score(a, config.length_penalty);
    const double sb = ranking_score(b, config.length_penalty);
    if (sa != sb) return sa > sb;
    return a.tokens < b.tokens;
  };
  if (!finished.empty()) {
    best = &*std::min_element(finished.begin(), finished.end(), better);
  } else {
    for (auto& b : live) live_final.push_back(BeamCandidate{b.tokens, b.score, 0.0, 0, false});
    if (!live_final.empty()) best = &*std::min_element(live_final.begin(), live_final.end(), better);
  }
  if (best) {
    result.tokens = best->tokens;
    result.score = best->score;
    result.stopped = best->finished;
    if (result.stopped) result.tokens.pop_back();
  }
  return result;
}

void write_step_records(std::ostream& out, std::span<const StepRecord> steps,
                        std::optional<std::size_t> scene) {
  for (const auto& s : steps) {
    nlohmann::ordered_json j;
    if (scene) j["scene"] = *scene;
    j["step"] = s.step;
    j["beam"] = s.beam;
    j["token"] = s.token;
    j["log_prob"] = s.log_prob;
    j["vid"] = s.vid ? nlohmann::ordered_json(*s.vid) : nlohmann::ordered_json(nullptr);
    j["score"] = s.score;
    j["finished"] = s.finished;
    out << j.dump() << '\n';
  }
}

}  // namespace attnlab
