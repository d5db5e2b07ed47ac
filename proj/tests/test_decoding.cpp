// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "attnlab/decoding.hpp"
#include "attnlab/error.hpp"
#include "support/generators.hpp"
#include "support/reference_forward.hpp"

namespace attnlab {
namespace {

using testing::Gen;

ModelConfig toy(std::uint64_t seed = 0) {
  ModelConfig c;
  c.n_layers = 4;
  c.n_heads = 2;
  c.d_model = 16;
  c.d_head = 8;
  c.vocab_size = 12;
  c.max_seq_len = 128;
  c.seed = seed;
  return c;
}

AttentionTrace uniform_trace(std::size_t layers, std::size_t heads, std::size_t n) {
  AttentionTrace t;
  t.n_layers = layers;
  t.n_heads = heads;
  t.heads.resize(layers * heads);
  for (auto& h : t.heads) h.weights.assign(n, 1.0 / static_cast<double>(n));
  return t;
}

// Visual span [0, 2) of a 4-position row with the given visual mass.
void set_mass(HeadTrace& h, double mass) { h.weights = {mass / 2, mass / 2, (1 - mass) / 2, (1 - mass) / 2}; }

TEST(Vid, Saturation) {
  auto t = uniform_trace(4, 3, 4);
  for (auto& h : t.heads) set_mass(h, 1.0);
  EXPECT_EQ(compute_vid(t, {{0, 2}, {2, 4}}, {1, 3}), 1.0);
}

TEST(Vid, UniformAttention) {
  const auto t = uniform_trace(4, 4, 12);
  EXPECT_NEAR(compute_vid(t, {{1, 4}, {4, 12}}, {1, 3}), 0.25, 1e-12);
}

TEST(Vid, TwoLayerBandIsAMean) {
  auto t = uniform_trace(4, 2, 4);
  for (std::size_t h = 0; h < 2; ++h) {
    set_mass(t.at(1, h), 0.3);
    set_mass(t.at(2, h), 0.5);
  }
  EXPECT_NEAR(compute_vid(t, {{0, 2}, {2, 4}}, {1, 2}), 0.4, 1e-12);
}

TEST(Vid, HeadsAreAveraged) {
  auto t = uniform_trace(2, 2, 4);
  set_mass(t.at(0, 0), 0.2);
  set_mass(t.at(0, 1), 0.6);
  set_mass(t.at(1, 0), 0.2);
  set_mass(t.at(1, 1), 0.6);
  EXPECT_NEAR(compute_vid(t, {{0, 2}, {2, 4}}, {0, 1}), 0.4, 1e-12);
}

TEST(Vid, RejectsBandOutsideTrace) {
  const auto t = uniform_trace(4, 2, 4);
  EXPECT_THROW(compute_vid(t, {{0, 2}, {2, 4}}, {2, 4}), DomainError);
  EXPECT_THROW(compute_vid(t, {{0, 2}, {2, 4}}, {3, 2}), DomainError);
}

TEST(Vid, BoundedOnModelTraces) {
  const Weights w = init_model(toy(1));
  Gen g(1);
  for (int t = 0; t < 50; ++t) {
    const auto seq = g.prompt(w.config.vocab_size);
    const auto pre = prefill(w, seq);
    const std::size_t lo = g.size(0, 2);
    const double v = compute_vid(pre.output.trace, seq.spans, {lo, g.size(lo + 1, 3)});
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(AdjustLogits, Examples) {
  const std::vector<double> lp{-1.0, -2.5, -0.1};
  EXPECT_EQ(adjust_logits(lp, 0.7, 1.0, 0.3), lp);
  const auto g0 = adjust_logits(lp, 0.7, 0.5, 0.0);
  for (std::size_t i = 0; i < lp.size(); ++i) EXPECT_EQ(g0[i], 0.5 * lp[i]);
  EXPECT_NEAR(adjust_logits(std::vector<double>{-1.0}, 0.5, 0.4, 0.15)[0], -0.355, 1e-12);
}

TEST(AdjustLogits, RejectsBadInput) {
  const std::vector<double> lp{-1.0};
  EXPECT_THROW(adjust_logits(lp, 0.5, 1.5, 0.1), DomainError);
  EXPECT_THROW(adjust_logits(lp, 0.5, 0.5, -0.1), DomainError);
  EXPECT_THROW(adjust_logits(std::vector<double>{-INFINITY}, 0.5, 0.5, 0.1), DomainError);
  EXPECT_THROW(adjust_logits(lp, NAN, 0.5, 0.1), DomainError);
}

TEST(AdjustLogits, PreservesWithinBeamOrder) {
  Gen g(2);
  for (int t = 0; t < 100; ++t) {
    const auto logp = log_softmax_row(g.reals(32, -8, 8));
    const auto adj = adjust_logits(logp, g.real(0, 1), g.real(0.01, 1), g.real(0, 2));
    EXPECT_EQ(top_k(logp, logp.size()), top_k(adj, adj.size()));
  }
}

TEST(TopK, TiesGoToLowerIndex) {
  const std::vector<double> v{1, 3, 3, 2, 3};
  EXPECT_EQ(top_k(v, 2), (std::vector<TokenId>{1, 2}));
  EXPECT_EQ(top_k(v, 10).size(), 5u);
}

TEST(VbsConfig, Validation) {
  VbsConfig c;
  EXPECT_NO_THROW(c.validate(4));
  c.vid_layer_lo = c.vid_layer_hi = 2;
  EXPECT_THROW(c.validate(4), DomainError);
  c = VbsConfig{};
  c.vid_layer_hi = 4;
  EXPECT_THROW(c.validate(4), DomainError);
  c = VbsConfig{};
  c.n_beam = 0;
  EXPECT_THROW(c.validate(4), DomainError);
}

TEST(Greedy, ConstantLogitsPickTokenZero) {
  Weights w = init_model(toy());
  w.unembedding = Matrix(w.config.d_model, w.config.vocab_size, 0.0);
  const auto seq = Gen(3).prompt(w.config.vocab_size);
  const auto r = greedy_decode(w, seq, {}, 5, std::nullopt);
  EXPECT_EQ(r.tokens, std::vector<TokenId>(5, 0));
  EXPECT_FALSE(r.stopped);
}

TEST(Greedy, ImmediateStopGivesEmptyContinuation) {
  const Weights w = init_model(toy(4));
  const auto seq = Gen(4).prompt(w.config.vocab_size);
  const TokenId first = top_k(prefill(w, seq).output.logits, 1).front();
  const auto r = greedy_decode(w, seq, {}, 5, first);
  EXPECT_TRUE(r.tokens.empty());
  EXPECT_TRUE(r.stopped);
  ASSERT_EQ(r.steps.size(), 1u);
  EXPECT_TRUE(r.steps[0].finished);
}

TEST(Greedy, DeterministicAndMatchesReference) {
  const Weights w = init_model(toy(5));
  Gen g(5);
  for (int t = 0; t < 5; ++t) {
    const auto seq = g.prompt(w.config.vocab_size);
    const auto r = greedy_decode(w, seq, {}, 8, std::nullopt, LayerBand{1, 3});
    EXPECT_EQ(r, greedy_decode(w, seq, {}, 8, std::nullopt, LayerBand{1, 3}));
    auto tokens = seq.tokens;
    for (TokenId tok : r.tokens) {
      EXPECT_EQ(tok, top_k(testing::reference_forward(w, tokens).logits, 1).front());
      tokens.push_back(tok);
    }
  }
}

TEST(ExpandBeams, SteeringTowardsVisualBeam) {
  // Identical logits and equal cumulative scores; only VID differs.
  const std::vector<double> logits{0.2, 1.5, -0.3, 0.9};
  const std::vector<TokenId> ta{3}, tb{2};
  const BeamView beams[] = {{tb, -1.0, logits, 0.1}, {ta, -1.0, logits, 0.9}};
  VbsConfig cfg;
  cfg.beta = 0.4;
  cfg.gamma = 0.15;
  auto cands = expand_beams(beams, cfg, 2);
  select_top(cands, 1);
  ASSERT_EQ(cands.size(), 1u);
  EXPECT_EQ(cands[0].parent, 1u);
  EXPECT_EQ(cands[0].tokens, (std::vector<TokenId>{3, 1}));
  const double lp = log_softmax_row(logits)[1];
  EXPECT_DOUBLE_EQ(cands[0].score, -1.0 + 0.4 * lp + 0.6 * 0.15 * 0.9);
  EXPECT_DOUBLE_EQ(cands[0].log_prob, lp);
}

TEST(ExpandBeams, CrossBeamMonotonicity) {
  Gen g(6);
  for (int t = 0; t < 100; ++t) {
    const auto logits = g.reals(8, -3, 3);
    const double lo = g.real(0, 0.99);
    const double hi = g.real(lo + 0.001, 1.0);
    const std::vector<TokenId> a{0}, b{1};
    const BeamView beams[] = {{a, -2.0, logits, lo}, {b, -2.0, logits, hi}};
    VbsConfig cfg;
    cfg.beta = g.real(0, 0.99);
    cfg.gamma = g.real(0.01, 1);
    const auto cands = expand_beams(beams, cfg, 8);
    for (std::size_t k = 0; k < 8; ++k) EXPECT_GT(cands[8 + k].score, cands[k].score);
  }
}

TEST(SelectTop, TiesBreakLexicographically) {
  std::vector<BeamCandidate> c{{{2, 1}, -1.0, 0, 0, false},
                               {{1, 5}, -1.0, 0, 0, false},
                               {{1, 4}, -0.5, 0, 0, false},
                               {{0, 9}, -2.0, 0, 0, false}};
  select_top(c, 3);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[0].tokens, (std::vector<TokenId>{1, 4}));
  EXPECT_EQ(c[1].tokens, (std::vector<TokenId>{1, 5}));
  EXPECT_EQ(c[2].tokens, (std::vector<TokenId>{2, 1}));
}

// Uncached beam search: every hypothesis is re-run from scratch through the
// reference forward pass.
std::vector<TokenId> reference_beam(const Weights& w, const SegmentedSequence& seq,
                                    const VbsConfig& cfg) {
  struct Hyp {
    std::vector<TokenId> tokens;
    double score;
  };
  auto vid_of = [&](const testing::ReferenceOutput& out) {
    double total = 0.0;
    for (std::size_t l = cfg.vid_layer_lo; l <= cfg.vid_layer_hi; ++l) {
      double layer = 0.0;
      for (std::size_t h = 0; h < w.config.n_heads; ++h) {
        const auto& row = out.last_weights[l * w.config.n_heads + h];
        for (std::size_t i = seq.spans.visual.begin; i < seq.spans.visual.end; ++i) layer += row[i];
      }
      total += layer / static_cast<double>(w.config.n_heads);
    }
    return total / static_cast<double>(cfg.vid_layer_hi - cfg.vid_layer_lo + 1);
  };
  std::vector<Hyp> live{{{}, 0.0}};
  for (std::size_t step = 0; step < cfg.max_new_tokens; ++step) {
    std::vector<Hyp> pool;
    for (const auto& h : live) {
      auto toks = seq.tokens;
      toks.insert(toks.end(), h.tokens.begin(), h.tokens.end());
      const auto out = testing::reference_forward(w, toks);
      const auto lp = log_softmax_row(out.logits);
      const double shift = cfg.enabled ? (1 - cfg.beta) * cfg.gamma * vid_of(out) : 0.0;
      const double scale = cfg.enabled ? cfg.beta : 1.0;
      for (TokenId t = 0; t < lp.size(); ++t) {
        auto next = h.tokens;
        next.push_back(t);
        pool.push_back({next, h.score + scale * lp[t] + shift});
      }
    }
    std::stable_sort(pool.begin(), pool.end(), [](const Hyp& a, const Hyp& b) {
      return a.score != b.score ? a.score > b.score : a.tokens < b.tokens;
    });
    pool.resize(cfg.n_beam);
    live = pool;
  }
  return live.front().tokens;
}

TEST(BeamSearch, MatchesUncachedReference) {
  Gen g(7);
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const Weights w = init_model(toy(seed + 20));
    const auto seq = g.prompt(w.config.vocab_size);
    VbsConfig cfg;
    cfg.n_beam = 3;
    cfg.max_new_tokens = 4;
    cfg.enabled = seed % 2 == 0;
    cfg.beta = 0.2;
    cfg.gamma = 3.0;
    EXPECT_EQ(beam_search(w, seq, {}, cfg).tokens, reference_beam(w, seq, cfg)) << "seed " << seed;
  }
}

TEST(BeamSearch, WidthOneIsGreedy) {
  Gen g(8);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Weights w = init_model(toy(seed));
    const auto seq = g.prompt(w.config.vocab_size);
    VbsConfig cfg;
    cfg.n_beam = 1;
    cfg.max_new_tokens = 10;
    cfg.stop_token = 11;
    const auto greedy = greedy_decode(w, seq, {}, 10, 11);
    cfg.enabled = false;
    EXPECT_EQ(beam_search(w, seq, {}, cfg).tokens, greedy.tokens);
    cfg.enabled = true;
    EXPECT_EQ(beam_search(w, seq, {}, cfg).tokens, greedy.tokens);
  }
}

TEST(BeamSearch, BetaOneIsVanilla) {
  Gen g(9);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Weights w = init_model(toy(seed));
    const auto seq = g.prompt(w.config.vocab_size);
    VbsConfig cfg;
    cfg.max_new_tokens = 8;
    cfg.stop_token = 11;
    cfg.beta = 1.0;
    cfg.gamma = 5.0;
    VbsConfig vanilla = cfg;
    vanilla.enabled = false;
    EXPECT_EQ(beam_search(w, seq, {}, cfg).tokens, beam_search(w, seq, {}, vanilla).tokens);
  }
}

TEST(BeamSearch, DeterministicWithBoundedLength) {
  const Weights w = init_model(toy(10));
  const auto seq = Gen(10).prompt(w.config.vocab_size);
  VbsConfig cfg;
  cfg.max_new_tokens = 6;
  cfg.stop_token = 4;
  const auto a = beam_search(w, seq, {}, cfg);
  EXPECT_EQ(a, beam_search(w, seq, {}, cfg));
  EXPECT_LE(a.tokens.size(), 6u);
  for (TokenId t : a.tokens) EXPECT_NE(t, 4u);
}

TEST(BeamSearch, VanillaScoresNeverIncrease) {
  const Weights w = init_model(toy(11));
  const auto seq = Gen(11).prompt(w.config.vocab_size);
  VbsConfig cfg;
  cfg.enabled = false;
  cfg.max_new_tokens = 6;
  const auto r = beam_search(w, seq, {}, cfg);
  for (const auto& s : r.steps) EXPECT_LE(s.log_prob, 0.0);
  EXPECT_LE(r.score, 0.0);
}

TEST(BeamSearch, RejectsOversizedBeam) {
  const Weights w = init_model(toy());
  VbsConfig cfg;
  cfg.n_beam = 13;
  EXPECT_THROW(beam_search(w, Gen(0).prompt(12), {}, cfg), DomainError);
}

TEST(StepRecords, OneJsonObjectPerLine) {
  const std::vector<StepRecord> steps{{0, 1, 7, -0.5, 0.25, -0.3, false},
                                      {1, 0, 2, -1.0, std::nullopt, -1.3, true}};
  std::ostringstream out;
  write_step_records(out, steps, 4);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  const auto a = nlohmann::json::parse(line);
  EXPECT_EQ(a["scene"], 4);
  EXPECT_EQ(a["token"], 7);
  EXPECT_EQ(a["vid"], 0.25);
  std::getline(in, line);
  const auto b = nlohmann::json::parse(line);
  EXPECT_TRUE(b["vid"].is_null());
  EXPECT_EQ(b["finished"], true);
}

}  // namespace
}  // namespace attnlab
