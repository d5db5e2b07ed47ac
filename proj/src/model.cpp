// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "attnlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "attnlab/error.hpp"
#include "kernels.hpp"

namespace attnlab {

namespace {

constexpr double kNormEps = 1e-5;

// Uniform in [-1, 1) built from raw engine bits so the stream is identical on every
// standard library (std::uniform_real_distribution is not).
double symmetric_unit(std::mt19937_64& rng) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return 2.0 * u - 1.0;
}

Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double stddev) {
  // Uniform on [-a, a] has variance a^2 / 3.
  const double a = std::sqrt(3.0) * stddev;
  Matrix m(rows, cols);
  for (double& x : m.data()) x = a * symmetric_unit(rng);
  return m;
}

double inv_sqrt(std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); }

void rms_norm_into(std::span<const double> x, const Matrix& gain, std::span<double> out) {
  double ss = 0.0;
  for (double v : x) ss += v * v;
  const double scale = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + kNormEps);
  auto g = gain.row(0);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * scale * g[i];
}

double gelu(double x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2 / pi)
  return 0.5 * x * (1.0 + std::tanh(kC * (x + 0.044715 * x * x * x)));
}

void accumulate_vec_mat(std::span<const double> x, const Matrix& m, std::span<double> out) {
  detail::axpy_rows(x.data(), x.size(), m.data().data(), m.cols(), out.data());
}

std::vector<double> unembed(const Weights& w, std::span<const double> x) {
  std::vector<double> h(x.size());
  rms_norm_into(x, w.final_norm, h);
  std::vector<double> logits(w.config.vocab_size, 0.0);
  accumulate_vec_mat(h, w.unembedding, logits);
  for (double v : logits) {
    if (!std::isfinite(v)) throw DomainError("forward: non-finite logit");
  }
  return logits;
}

void check_token(const ModelConfig& cfg, TokenId t) {
  if (t >= cfg.vocab_size) {
    throw DomainError("token id " + std::to_string(t) + " outside vocabulary of " +
                      std::to_string(cfg.vocab_size));
  }
}

AttentionTrace empty_trace(const ModelConfig& cfg) {
  AttentionTrace t;
  t.n_layers = cfg.n_layers;
  t.n_heads = cfg.n_heads;
  t.heads.resize(cfg.n_layers * cfg.n_heads);
  return t;
}

// Applies the hook (if any) to the last-token row and records the trace entry.
// Returns the softmax weights.
const std::vector<double>& finish_row(std::vector<double> raw, const AttentionHook& hook,
                                      const HookContext& ctx, HeadTrace& trace) {
  trace.scores = raw;
  if (hook) {
    hook(ctx, std::span<double>(trace.scores));
    if (trace.scores.size() != raw.size()) throw ShapeError("attention hook changed row length");
  }
  trace.raw_scores = std::move(raw);
  trace.weights = softmax_row(trace.scores);
  return trace.weights;
}

}  // namespace

// Grants the forward passes write access to the cache internals.
struct CacheAccess {
  static KvCache make(const ModelConfig& cfg, const PromptSpans& spans) {
    KvCache c;
    c.n_layers_ = cfg.n_layers;
    c.n_heads_ = cfg.n_heads;
    c.d_head_ = cfg.d_head;
    c.spans_ = spans;
    c.tail_.resize(cfg.n_layers * cfg.n_heads);
    return c;
  }

  static void append(KvCache& c, std::size_t layer, std::size_t head, std::span<const double> k,
                     std::span<const double> v) {
    auto& rows = c.tail_[layer * c.n_heads_ + head];
    rows.keys.insert(rows.keys.end(), k.begin(), k.end());
    rows.values.insert(rows.values.end(), v.begin(), v.end());
  }

  static void advance(KvCache& c, std::size_t n) { c.length_ += n; }

  // Row `pos` of one head's keys or values without the bounds checks of KvCache::key.
  struct HeadView {
    const double* frozen;
    const double* tail;
    std::size_t frozen_len;
    std::size_t d_head;

    const double* operator[](std::size_t pos) const {
      return pos < frozen_len ? frozen + pos * d_head : tail + (pos - frozen_len) * d_head;
    }
  };

  static HeadView view(const KvCache& c, std::vector<double> KvCache::HeadRows::*field,
                       std::size_t layer, std::size_t head) {
    const std::size_t idx = layer * c.n_heads_ + head;
    const double* frozen = c.frozen_ ? ((*c.frozen_)[idx].*field).data() : nullptr;
    return {frozen, (c.tail_[idx].*field).data(), c.frozen_len_, c.d_head_};
  }

  static HeadView keys(const KvCache& c, std::size_t layer, std::size_t head) {
    return view(c, &KvCache::HeadRows::keys, layer, head);
  }
  static HeadView values(const KvCache& c, std::size_t layer, std::size_t head) {
    return view(c, &KvCache::HeadRows::values, layer, head);
  }

  // Moves the tail into shared storage so later copies do not duplicate it.
  static void freeze(KvCache& c) {
    if (c.frozen_) throw Error("KvCache: already frozen");
    c.frozen_ = std::make_shared<const std::vector<KvCache::HeadRows>>(std::move(c.tail_));
    c.frozen_len_ = c.length_;
    c.tail_.assign(c.n_layers_ * c.n_heads_, {});
  }
};

// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
  if (n_layers < 1) throw DomainError("ModelConfig: n_layers must be >= 1");
  if (n_heads < 1) throw DomainError("ModelConfig: n_heads must be >= 1");
  if (d_head < 1) throw DomainError("ModelConfig: d_head must be >= 1");
  if (d_model != n_heads * d_head) {
    throw DomainError("ModelConfig: d_model " + std::to_string(d_model) + " != n_heads " +
                      std::to_string(n_heads) + " x d_head " + std::to_string(d_head));
  }
  if (vocab_size < 2) throw DomainError("ModelConfig: vocab_size must be >= 2");
  if (max_seq_len < 1) throw DomainError("ModelConfig: max_seq_len must be >= 1");
}

Weights init_model(const ModelConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  const std::size_t d = config.d_model;
  const std::size_t ff = config.d_ff();

  Matrix token_embedding = random_matrix(rng, config.vocab_size, d, 1.0);
  Matrix position_embedding = random_matrix(rng, config.max_seq_len, d, 0.5);

  std::vector<LayerWeights> layers;
  layers.reserve(config.n_layers);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    Matrix attn_norm(1, d, 1.0);
    std::vector<Matrix> wq, wk, wv;
    for (std::size_t h = 0; h < config.n_heads; ++h) wq.push_back(random_matrix(rng, d, config.d_head, inv_sqrt(d)));
    for (std::size_t h = 0; h < config.n_heads; ++h) wk.push_back(random_matrix(rng, d, config.d_head, inv_sqrt(d)));
    for (std::size_t h = 0; h < config.n_heads; ++h) wv.push_back(random_matrix(rng, d, config.d_head, inv_sqrt(d)));
    Matrix wo = random_matrix(rng, d, d, inv_sqrt(d));
    Matrix ffn_norm(1, d, 1.0);
    Matrix w_up = random_matrix(rng, d, ff, inv_sqrt(d));
    Matrix w_down = random_matrix(rng, ff, d, inv_sqrt(ff));
    layers.push_back(LayerWeights{std::move(attn_norm), std::move(wq), std::move(wk), std::move(wv),
                                  std::move(wo), std::move(ffn_norm), std::move(w_up),
                                  std::move(w_down)});
  }
  Matrix final_norm(1, d, 1.0);
  Matrix unembedding = random_matrix(rng, d, config.vocab_size, inv_sqrt(d));

  return Weights{config, std::move(token_embedding), std::move(position_embedding),
                 std::move(layers), std::move(final_norm), std::move(unembedding)};
}

// ---------------------------------------------------------------------------

SegmentedSequence SegmentedSequence::make(std::span<const TokenId> prefix,
                                          std::span<const TokenId> visual,
                                          std::span<const TokenId> instruction) {
  SegmentedSequence s;
  s.tokens.reserve(prefix.size() + visual.size() + instruction.size());
  s.tokens.insert(s.tokens.end(), prefix.begin(), prefix.end());
  s.tokens.insert(s.tokens.end(), visual.begin(), visual.end());
  s.tokens.insert(s.tokens.end(), instruction.begin(), instruction.end());
  s.spans.visual = {prefix.size(), prefix.size() + visual.size()};
  s.spans.instruction = {s.spans.visual.end, s.spans.visual.end + instruction.size()};
  s.generated_from = s.tokens.size();
  s.validate();
  return s;
}

void SegmentedSequence::validate() const {
  const auto& v = spans.visual;
  const auto& i = spans.instruction;
  if (v.begin >= v.end) throw DomainError("SegmentedSequence: empty visual span");
  if (i.begin >= i.end) throw DomainError("SegmentedSequence: empty instruction span");
  if (v.end > i.begin) throw DomainError("SegmentedSequence: visual span must precede instruction span");
  if (i.end > generated_from) throw DomainError("SegmentedSequence: spans extend past the prompt");
  if (generated_from > tokens.size()) throw DomainError("SegmentedSequence: generated_from past end");
}

// ---------------------------------------------------------------------------

std::span<const double> KvCache::row(std::vector<double> HeadRows::*field, std::size_t layer,
                                     std::size_t head, std::size_t pos) const {
  if (layer >= n_layers_ || head >= n_heads_ || pos >= length_) {
    throw ShapeError("KvCache: index (" + std::to_string(layer) + "," + std::to_string(head) + "," +
                     std::to_string(pos) + ") out of range");
  }
  const std::size_t idx = layer * n_heads_ + head;
  if (pos < frozen_len_) return {((*frozen_)[idx].*field).data() + pos * d_head_, d_head_};
  return {(tail_[idx].*field).data() + (pos - frozen_len_) * d_head_, d_head_};
}

std::span<const double> KvCache::key(std::size_t layer, std::size_t head, std::size_t pos) const {
  return row(&HeadRows::keys, layer, head, pos);
}

std::span<const double> KvCache::value(std::size_t layer, std::size_t head, std::size_t pos) const {
  return row(&HeadRows::values, layer, head, pos);
}

const HeadTrace& AttentionTrace::at(std::size_t layer, std::size_t head) const {
  if (layer >= n_layers || head >= n_heads) throw ShapeError("AttentionTrace: index out of range");
  return heads[layer * n_heads + head];
}

HeadTrace& AttentionTrace::at(std::size_t layer, std::size_t head) {
  if (layer >= n_layers || head >= n_heads) throw ShapeError("AttentionTrace: index out of range");
  return heads[layer * n_heads + head];
}

const HeadProjection& PromptProjections::at(std::size_t layer, std::size_t head) const {
  if (layer >= n_layers || head >= n_heads) throw ShapeError("PromptProjections: index out of range");
  return heads[layer * n_heads + head];
}

HeadBlocks PromptProjections::blocks(std::size_t layer, std::size_t head) const {
  const auto& p = at(layer, head);
  const auto& v = spans.visual;
  const auto& i = spans.instruction;
  return HeadBlocks{p.q.block(v.begin, v.end, 0, d_head), p.k.block(v.begin, v.end, 0, d_head),
                    p.q.block(i.begin, i.end, 0, d_head), p.k.block(i.begin, i.end, 0, d_head)};
}

Matrix PromptProjections::scores(std::size_t layer, std::size_t head) const {
  const auto& p = at(layer, head);
  return attention_scores(p.q, p.k, d_head);
}

// ---------------------------------------------------------------------------

Matrix attention_scores(const Matrix& q_rows, const Matrix& k_rows, std::size_t d_head) {
  if (q_rows.cols() != d_head || k_rows.cols() != d_head) {
    throw ShapeError("attention_scores: Q " + q_rows.shape() + " and K " + k_rows.shape() +
                     " must both have d_head=" + std::to_string(d_head) + " columns");
  }
  Matrix s = matmul_transposed(q_rows, k_rows);
  const double scale = inv_sqrt(d_head);
  for (double& x : s.data()) x *= scale;
  return s;
}

PrefillResult prefill(const Weights& weights, const SegmentedSequence& seq,
                      const AttentionHook& hook) {
  const ModelConfig& cfg = weights.config;
  seq.validate();
  const std::size_t n = seq.tokens.size();
  if (n > cfg.max_seq_len) {
    throw DomainError("prefill: sequence length " + std::to_string(n) + " exceeds max_seq_len " +
                      std::to_string(cfg.max_seq_len));
  }
  const std::size_t d = cfg.d_model;
  const std::size_t dh = cfg.d_head;

  Matrix x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    check_token(cfg, seq.tokens[i]);
    auto dst = x.row(i);
    auto te = weights.token_embedding.row(seq.tokens[i]);
    auto pe = weights.position_embedding.row(i);
    for (std::size_t j = 0; j < d; ++j) dst[j] = te[j] + pe[j];
  }

  PrefillResult result{StepOutput{{}, empty_trace(cfg)}, CacheAccess::make(cfg, seq.spans),
                       PromptProjections{cfg.n_layers, cfg.n_heads, dh, seq.spans, {}}};
  result.projections.heads.reserve(cfg.n_layers * cfg.n_heads);

  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const LayerWeights& lw = weights.layers[l];
    Matrix h(n, d);
    for (std::size_t i = 0; i < n; ++i) rms_norm_into(x.row(i), lw.attn_norm, h.row(i));

    Matrix concat(n, d);
    for (std::size_t hd = 0; hd < cfg.n_heads; ++hd) {
      Matrix q = matmul(h, lw.wq[hd]);
      Matrix k = matmul(h, lw.wk[hd]);
      Matrix v = matmul(h, lw.wv[hd]);
      Matrix s = attention_scores(q, k, dh);

      for (std::size_t i = 0; i < n; ++i) {
        CacheAccess::append(result.cache, l, hd, k.row(i), v.row(i));
        auto visible = s.row(i).first(i + 1);
        std::vector<double> probs;
        if (i + 1 == n) {
          const HookContext ctx{l, hd, i, seq.spans};
          probs = finish_row({visible.begin(), visible.end()}, hook, ctx,
                             result.output.trace.at(l, hd));
        } else {
          probs = softmax_row(visible);
        }
        auto out = concat.row(i).subspan(hd * dh, dh);
        for (std::size_t j = 0; j <= i; ++j) {
          auto vj = v.row(j);
          for (std::size_t c = 0; c < dh; ++c) out[c] += probs[j] * vj[c];
        }
      }
      result.projections.heads.push_back(HeadProjection{std::move(q), std::move(k)});
    }

    detail::gemm_acc(concat.data().data(), n, d, d, lw.wo.data().data(), d, x.data().data(), d);
    for (std::size_t i = 0; i < n; ++i) rms_norm_into(x.row(i), lw.ffn_norm, h.row(i));
    Matrix up = matmul(h, lw.w_up);
    for (double& u : up.data()) u = gelu(u);
    detail::gemm_acc(up.data().data(), n, up.cols(), up.cols(), lw.w_down.data().data(), d,
                     x.data().data(), d);
  }

  CacheAccess::advance(result.cache, n);
  CacheAccess::freeze(result.cache);
  result.output.logits = unembed(weights, x.row(n - 1));
  return result;
}

StepOutput decode_step(const Weights& weights, KvCache& cache, TokenId token,
                       const AttentionHook& hook) {
  KvCache* caches[] = {&cache};
  const TokenId tokens[] = {token};
  return std::move(decode_steps(weights, caches, tokens, hook).front());
}

std::vector<StepOutput> decode_steps(const Weights& weights, std::span<KvCache* const> caches,
                                     std::span<const TokenId> tokens, const AttentionHook& hook) {
  const ModelConfig& cfg = weights.config;
  if (caches.size() != tokens.size()) {
    throw ShapeError("decode_steps: " + std::to_string(caches.size()) + " caches for " +
                     std::to_string(tokens.size()) + " tokens");
  }
  const std::size_t nb = caches.size();
  for (std::size_t b = 0; b < nb; ++b) {
    const KvCache& cache = *caches[b];
    if (cache.empty()) throw DomainError("decode_step: cache is empty; run prefill first");
    if (cache.n_layers() != cfg.n_layers || cache.n_heads() != cfg.n_heads ||
        cache.d_head() != cfg.d_head) {
      throw ShapeError("decode_step: cache geometry does not match the model");
    }
    check_token(cfg, tokens[b]);
    if (cache.length() + 1 > cfg.max_seq_len) {
      throw DomainError("decode_step: max_seq_len " + std::to_string(cfg.max_seq_len) + " exceeded");
    }
    for (std::size_t o = 0; o < b; ++o) {
      if (caches[o] == caches[b]) throw DomainError("decode_steps: the same cache appears twice");
    }
  }
  std::vector<StepOutput> outs;
  if (nb == 0) return outs;

  const std::size_t d = cfg.d_model;
  const std::size_t dh = cfg.d_head;
  const std::size_t ff = cfg.d_ff();
  const double scale = inv_sqrt(dh);

  Matrix x(nb, d);
  for (std::size_t b = 0; b < nb; ++b) {
    auto dst = x.row(b);
    auto te = weights.token_embedding.row(tokens[b]);
    auto pe = weights.position_embedding.row(caches[b]->length());
    for (std::size_t j = 0; j < d; ++j) dst[j] = te[j] + pe[j];
    outs.push_back(StepOutput{{}, empty_trace(cfg)});
  }

  Matrix h(nb, d), concat(nb, d), up(nb, ff);
  Matrix q(nb, dh);
  // New rows are committed only once the whole step has succeeded.
  const std::size_t nlh = cfg.n_layers * cfg.n_heads;
  std::vector<Matrix> new_keys(nlh, Matrix(nb, dh));
  std::vector<Matrix> new_values(new_keys);

  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const LayerWeights& lw = weights.layers[l];
    for (std::size_t b = 0; b < nb; ++b) rms_norm_into(x.row(b), lw.attn_norm, h.row(b));
    std::fill(concat.data().begin(), concat.data().end(), 0.0);

    for (std::size_t hd = 0; hd < cfg.n_heads; ++hd) {
      Matrix& k = new_keys[l * cfg.n_heads + hd];
      Matrix& v = new_values[l * cfg.n_heads + hd];
      std::fill(q.data().begin(), q.data().end(), 0.0);
      detail::gemm_acc(h.data().data(), nb, d, d, lw.wq[hd].data().data(), dh, q.data().data(), dh);
      detail::gemm_acc(h.data().data(), nb, d, d, lw.wk[hd].data().data(), dh, k.data().data(), dh);
      detail::gemm_acc(h.data().data(), nb, d, d, lw.wv[hd].data().data(), dh, v.data().data(), dh);

      for (std::size_t b = 0; b < nb; ++b) {
        const KvCache& cache = *caches[b];
        const std::size_t pos = cache.length();
        const double* qb = q.row(b).data();
        const double* kb = k.row(b).data();
        const double* vb = v.row(b).data();
        const auto keys = CacheAccess::keys(cache, l, hd);
        const auto values = CacheAccess::values(cache, l, hd);
        std::vector<double> raw(pos + 1);
        for (std::size_t j = 0; j < pos; ++j) raw[j] = detail::dot(qb, keys[j], dh) * scale;
        raw[pos] = detail::dot(qb, kb, dh) * scale;

        const HookContext ctx{l, hd, pos, cache.spans()};
        const auto& probs = finish_row(std::move(raw), hook, ctx, outs[b].trace.at(l, hd));
        auto dst = concat.row(b).subspan(hd * dh, dh);
        for (std::size_t j = 0; j < pos; ++j) {
          const double* vj = values[j];
          for (std::size_t c = 0; c < dh; ++c) dst[c] += probs[j] * vj[c];
        }
        for (std::size_t c = 0; c < dh; ++c) dst[c] += probs[pos] * vb[c];
      }
    }

    detail::gemm_acc(concat.data().data(), nb, d, d, lw.wo.data().data(), d, x.data().data(), d);
    for (std::size_t b = 0; b < nb; ++b) rms_norm_into(x.row(b), lw.ffn_norm, h.row(b));
    std::fill(up.data().begin(), up.data().end(), 0.0);
    detail::gemm_acc(h.data().data(), nb, d, d, lw.w_up.data().data(), ff, up.data().data(), ff);
    for (double& u : up.data()) u = gelu(u);
    detail::gemm_acc(up.data().data(), nb, ff, ff, lw.w_down.data().data(), d, x.data().data(), d);
  }

  for (std::size_t b = 0; b < nb; ++b) rms_norm_into(x.row(b), weights.final_norm, h.row(b));
  const std::size_t nv = cfg.vocab_size;
  Matrix logits(nb, nv);
  detail::gemm_acc(h.data().data(), nb, d, d, weights.unembedding.data().data(), nv,
                   logits.data().data(), nv);
  for (double v : logits.data()) {
    if (!std::isfinite(v)) throw DomainError("forward: non-finite logit");
  }

  for (std::size_t b = 0; b < nb; ++b) {
    auto row = logits.row(b);
    outs[b].logits.assign(row.begin(), row.end());
    for (std::size_t i = 0; i < nlh; ++i) {
      CacheAccess::append(*caches[b], i / cfg.n_heads, i % cfg.n_heads, new_keys[i].row(b),
                          new_values[i].row(b));
    }
    CacheAccess::advance(*caches[b], 1);
  }
  return outs;
}

}  // namespace attnlab
