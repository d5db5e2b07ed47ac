// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

// Attention refocusing.
//
// At prefill, the visual->instruction and instruction->visual cross-attention blocks of
// every head are multiplied into per-head correlation matrices
//
//   W_v = C_vi * C_iv   (l_v x l_v)      W_i = C_iv * C_vi   (l_i x l_i)
//
// and stored. At each decode step the active token's pre-softmax score row is split into
// its visual segment a_v and instruction segment a_i, reweighted as R = a * W_hat, and
// replaced by R + alpha * a. Entries outside the two segments are left alone.

#pragma once

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "attnlab/model.hpp"
#include "attnlab/numerics.hpp"

namespace attnlab {

enum class WeightNormalization {
  raw,          // W used as is
  row_softmax,  // each row of W softmaxed, used transposed so every R entry is a convex mix of a
};

std::string_view to_string(WeightNormalization n);
WeightNormalization parse_normalization(std::string_view s);

struct RefocusConfig {
  std::size_t layer_lo = 1;
  std::size_t layer_hi = 2;  // inclusive
  double alpha = 0.4;
  WeightNormalization normalization = WeightNormalization::row_softmax;
  bool enabled = true;

  /// Requires layer_lo <= layer_hi < n_layers and a finite alpha > 0.
  void validate(std::size_t n_layers) const;
};

struct CrossBlocks {
  Matrix visual_to_instruction;  // C_vi, l_v x l_i
  Matrix instruction_to_visual;  // C_iv, l_i x l_v
};

struct Correlation {
  Matrix visual;       // W_v, l_v x l_v
  Matrix instruction;  // W_i, l_i x l_i

  friend bool operator==(const Correlation&, const Correlation&) = default;
};

/// Slices the two off-diagonal blocks out of a full (unmasked) prompt score matrix.
CrossBlocks extract_cross_blocks(const Matrix& scores, const PromptSpans& spans);

Correlation compute_correlation(const Matrix& visual_to_instruction,
                                const Matrix& instruction_to_visual);

/// Correlation matrices for every head of every layer in a band. Immutable once built.
class CorrelationPack {
 public:
  /// `heads` is layer-major over [layer_lo, layer_lo + heads.size() / n_heads).
  CorrelationPack(std::size_t layer_lo, std::size_t n_heads, PromptSpans spans,
                  std::vector<Correlation> heads);

  std::size_t layer_lo() const noexcept { return layer_lo_; }
  std::size_t layer_hi() const noexcept { return layer_lo_ + n_layers_ - 1; }
  std::size_t n_heads() const noexcept { return n_heads_; }
  std::size_t size() const noexcept { return heads_.size(); }
  const PromptSpans& spans() const noexcept { return spans_; }

  bool covers(std::size_t layer) const noexcept {
    return layer >= layer_lo_ && layer < layer_lo_ + n_layers_;
  }
  const Correlation& at(std::size_t layer, std::size_t head) const;

  /// One record per (layer, head): layer, head, W_v, W_i (u64 / f64 little-endian).
  void dump(std::ostream& out) const;
  static CorrelationPack load(std::istream& in);

  friend bool operator==(const CorrelationPack&, const CorrelationPack&) = default;

 private:
  std::size_t layer_lo_;
  std::size_t n_layers_;
  std::size_t n_heads_;
  PromptSpans spans_;
  std::vector<Correlation> heads_;
};

/// Builds W_v / W_i for every head in the configured band from prefill projections.
/// Both cross blocks carry the 1/sqrt(d_head) factor of the score matrix.
CorrelationPack build_pack(const PromptProjections& projections, const RefocusConfig& config);

/// The matrix actually multiplied in reweight: W itself, or W_hat(i, j) = softmax(row j of W)_i.
Matrix effective_weights(const Matrix& w, WeightNormalization normalization);

/// R = a * W_hat, with W_hat = W (raw) or the transpose of row-softmaxed W.
std::vector<double> reweight(std::span<const double> a, const Matrix& w,
                             WeightNormalization normalization);

/// r + alpha * a, elementwise.
std::vector<double> refocus_row(std::span<const double> a, std::span<const double> r, double alpha);

/// Hook for decode_step/prefill that refocuses the active row in layers of the band.
/// A disabled config yields a hook that never touches the row.
AttentionHook make_refocus_hook(std::shared_ptr<const CorrelationPack> pack,
                                const RefocusConfig& config);

}  // namespace attnlab
