// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "attnlab/model.hpp"

namespace attnlab {

/// Inclusive layer range.
struct LayerBand {
  std::size_t lo = 0;
  std::size_t hi = 0;

  friend bool operator==(const LayerBand&, const LayerBand&) = default;
};

/// Visual beam search settings. Visual interaction degree (VID) is the attention mass the
/// active token puts on visual positions, averaged over heads and then over the layers
/// [vid_layer_lo, vid_layer_hi]. With `enabled`, each beam's next-token log-probabilities
/// become beta * logp + (1 - beta) * gamma * VID.
struct VbsConfig {
  std::size_t vid_layer_lo = 1;
  std::size_t vid_layer_hi = 3;
  double beta = 0.4;
  double gamma = 0.15;
  std::size_t n_beam = 5;
  std::size_t max_new_tokens = 512;
  bool enabled = true;
  std::optional<TokenId> stop_token;
  /// Final ranking divides scores by length^length_penalty. 0 disables it.
  double length_penalty = 0.0;

  LayerBand vid_band() const noexcept { return {vid_layer_lo, vid_layer_hi}; }

  /// vid_layer_lo < vid_layer_hi < n_layers, beta in [0, 1], gamma >= 0, n_beam >= 1,
  /// max_new_tokens >= 1.
  void validate(std::size_t n_layers) const;
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t beam = 0;
  TokenId token = 0;
  double log_prob = 0.0;  // unadjusted log-probability of `token`
  std::optional<double> vid;
  double score = 0.0;  // cumulative (adjusted) score after this step
  bool finished = false;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct DecodeResult {
  std::vector<TokenId> tokens;  // never includes the stop token
  double score = 0.0;
  bool stopped = false;  // ended on the stop token rather than the budget
  std::vector<StepRecord> steps;

  friend bool operator==(const DecodeResult&, const DecodeResult&) = default;
};

/// Mean over layers in `band` of the per-layer head-mean visual attention mass of the
/// active token. Always in [0, 1].
double compute_vid(const AttentionTrace& trace, const PromptSpans& spans, LayerBand band);

/// beta * logp + (1 - beta) * gamma * vid on every entry.
std::vector<double> adjust_logits(std::span<const double> logp, double vid, double beta,
                                  double gamma);

/// Indices of the k largest values; ties go to the lower index.
std::vector<TokenId> top_k(std::span<const double> values, std::size_t k);

DecodeResult greedy_decode(const Weights& weights, const SegmentedSequence& seq,
                           const AttentionHook& hook, std::size_t max_new_tokens,
                           std::optional<TokenId> stop_token,
                           std::optional<LayerBand> vid_band = std::nullopt);

// ---------------------------------------------------------------------------
// Beam search building blocks, exposed so selection can be checked in isolation.

/// What one live beam contributes to a step's expansion.
struct BeamView {
  std::span<const TokenId> tokens;
  double score = 0.0;
  std::span<const double> logits;  // raw next-token logits
  double vid = 0.0;                // VID of the beam's last processed token
};

struct BeamCandidate {
  std::vector<TokenId> tokens;  // parent tokens plus the new token
  double score = 0.0;
  double log_prob = 0.0;  // unadjusted
  std::size_t parent = 0;
  bool finished = false;
};

/// Expands every beam by its top `per_beam` adjusted tokens.
std::vector<BeamCandidate> expand_beams(std::span<const BeamView> beams, const VbsConfig& config,
                                        std::size_t per_beam);

/// Sorts by score (descending), ties by token sequence (lexicographic ascending), and keeps
/// the first n.
void select_top(std::vector<BeamCandidate>& candidates, std::size_t n);

DecodeResult beam_search(const Weights& weights, const SegmentedSequence& seq,
                         const AttentionHook& hook, const VbsConfig& config);

/// One JSON object per line: [scene,] step, beam, token, log_prob, vid, score, finished.
void write_step_records(std::ostream& out, std::span<const StepRecord> steps,
                        std::optional<std::size_t> scene = std::nullopt);

}  // namespace attnlab
