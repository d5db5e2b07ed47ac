// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "attnlab/numerics.hpp"

namespace attnlab {

using TokenId = std::uint32_t;

struct ModelConfig {
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t d_model = 64;
  std::size_t d_head = 16;
  std::size_t vocab_size = 96;
  std::size_t max_seq_len = 2048;
  std::uint64_t seed = 0;

  std::size_t d_ff() const noexcept { return 4 * d_model; }

  /// Throws DomainError unless d_model == n_heads * d_head, vocab_size >= 2,
  /// n_layers >= 1, n_heads >= 1 and max_seq_len >= 1.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LayerWeights {
  Matrix attn_norm;        // 1 x d_model gains
  std::vector<Matrix> wq;  // per head, d_model x d_head
  std::vector<Matrix> wk;
  std::vector<Matrix> wv;
  Matrix wo;  // d_model x d_model
  Matrix ffn_norm;
  Matrix w_up;    // d_model x d_ff
  Matrix w_down;  // d_ff x d_model

  friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

/// Parameters of the toy decoder. Immutable once built; share freely across sessions.
struct Weights {
  ModelConfig config;
  Matrix token_embedding;     // vocab_size x d_model
  Matrix position_embedding;  // max_seq_len x d_model
  std::vector<LayerWeights> layers;
  Matrix final_norm;   // 1 x d_model
  Matrix unembedding;  // d_model x vocab_size

  friend bool operator==(const Weights&, const Weights&) = default;
};

/// Deterministic uniform initialization scaled by 1/sqrt(fan_in), drawn from a
/// mt19937_64 stream seeded with config.seed, so equal configs give bit-identical weights.
Weights init_model(const ModelConfig& config);

/// Flat little-endian binary format: magic, version, config fields (u64 each),
/// then every matrix in declaration order as row-major f64.
void save_weights(const Weights& weights, std::ostream& out);
Weights load_weights(std::istream& in);

// ---------------------------------------------------------------------------
// Sequences

/// Half-open index range [begin, end).
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - begin; }
  bool contains(std::size_t i) const noexcept { return i >= begin && i < end; }

  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

struct PromptSpans {
  TokenSpan visual;
  TokenSpan instruction;

  friend bool operator==(const PromptSpans&, const PromptSpans&) = default;
};

/// Token ids with the visual and instruction segments marked. Positions before the
/// visual span or between segments are allowed and never refocused.
struct SegmentedSequence {
  std::vector<TokenId> tokens;
  PromptSpans spans;
  std::size_t generated_from = 0;

  /// prefix ++ visual ++ instruction, with spans set accordingly.
  static SegmentedSequence make(std::span<const TokenId> prefix, std::span<const TokenId> visual,
                                std::span<const TokenId> instruction);

  /// Spans non-empty, ordered visual before instruction, disjoint and inside the prompt.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Cache and traces

/// Per-layer, per-head key/value rows. Rows are append-only. Prompt rows written by
/// prefill are shared between copies, so forking a cache per beam only copies the tail.
class KvCache {
 public:
  KvCache() = default;

  std::size_t length() const noexcept { return length_; }
  bool empty() const noexcept { return length_ == 0; }
  std::size_t n_layers() const noexcept { return n_layers_; }
  std::size_t n_heads() const noexcept { return n_heads_; }
  std::size_t d_head() const noexcept { return d_head_; }
  const PromptSpans& spans() const noexcept { return spans_; }

  std::span<const double> key(std::size_t layer, std::size_t head, std::size_t pos) const;
  std::span<const double> value(std::size_t layer, std::size_t head, std::size_t pos) const;

 private:
  friend struct CacheAccess;

  struct HeadRows {
    std::vector<double> keys;
    std::vector<double> values;
  };

  std::span<const double> row(std::vector<double> HeadRows::*field, std::size_t layer,
                              std::size_t head, std::size_t pos) const;

  std::size_t n_layers_ = 0;
  std::size_t n_heads_ = 0;
  std::size_t d_head_ = 0;
  PromptSpans spans_;
  std::shared_ptr<const std::vector<HeadRows>> frozen_;
  std::size_t frozen_len_ = 0;
  std::vector<HeadRows> tail_;
  std::size_t length_ = 0;
};

/// Last-position attention rows of one head. raw_scores is what the layer computed,
/// scores is what entered the softmax after any hook, weights is the softmax output.
struct HeadTrace {
  std::vector<double> raw_scores;
  std::vector<double> scores;
  std::vector<double> weights;
};

struct AttentionTrace {
  std::size_t n_layers = 0;
  std::size_t n_heads = 0;
  std::vector<HeadTrace> heads;  // layer-major

  const HeadTrace& at(std::size_t layer, std::size_t head) const;
  HeadTrace& at(std::size_t layer, std::size_t head);
};

struct StepOutput {
  std::vector<double> logits;
  AttentionTrace trace;
};

// ---------------------------------------------------------------------------
// Intervention hook

struct HookContext {
  std::size_t layer;
  std::size_t head;
  std::size_t position;  // index of the active (last) token
  const PromptSpans& spans;
};

/// Called once per layer and head with the active token's pre-softmax score row
/// (length position + 1). May rewrite entries in place; softmax follows.
using AttentionHook = std::function<void(const HookContext&, std::span<double> scores)>;

// ---------------------------------------------------------------------------
// Forward passes

/// Q * K^T / sqrt(d_head).
Matrix attention_scores(const Matrix& q_rows, const Matrix& k_rows, std::size_t d_head);

struct HeadProjection {
  Matrix q;  // prompt_len x d_head
  Matrix k;
};

struct HeadBlocks {
  Matrix q_visual;
  Matrix k_visual;
  Matrix q_instruction;
  Matrix k_instruction;
};

/// Per-layer, per-head query and key rows of every prompt position, as seen by prefill.
struct PromptProjections {
  std::size_t n_layers = 0;
  std::size_t n_heads = 0;
  std::size_t d_head = 0;
  PromptSpans spans;
  std::vector<HeadProjection> heads;  // layer-major

  const HeadProjection& at(std::size_t layer, std::size_t head) const;

  /// Q/K rows restricted to the visual and instruction spans.
  HeadBlocks blocks(std::size_t layer, std::size_t head) const;

  /// Full causal-free prompt score matrix of one head (Q K^T / sqrt(d)).
  Matrix scores(std::size_t layer, std::size_t head) const;
};

struct PrefillResult {
  StepOutput output;
  KvCache cache;
  PromptProjections projections;
};

/// Processes the whole sequence in one batched pass with causal masking. The hook, if
/// any, sees only the final position's row, which is the row that produces the logits
/// for the first generated token.
PrefillResult prefill(const Weights& weights, const SegmentedSequence& seq,
                      const AttentionHook& hook = {});

/// Appends one token to the cache and returns next-token logits plus the trace.
StepOutput decode_step(const Weights& weights, KvCache& cache, TokenId token,
                       const AttentionHook& hook = {});

/// decode_step for several independent caches at once (one token each). Results match
/// calling decode_step on each cache in turn, bit for bit; the weights are streamed once
/// per batch rather than once per cache. No cache is modified if any of them fails.
std::vector<StepOutput> decode_steps(const Weights& weights, std::span<KvCache* const> caches,
                                     std::span<const TokenId> tokens,
                                     const AttentionHook& hook = {});

}  // namespace attnlab
