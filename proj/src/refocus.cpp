// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "attnlab/refocus.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "attnlab/error.hpp"
#include "binary_io.hpp"

namespace attnlab {

namespace {

constexpr std::uint64_t kPackMagic = 0x314b435052424c41ULL;  // "ALBRPCK1"

std::string span_str(const TokenSpan& s) {
  return "[" + std::to_string(s.begin) + "," + std::to_string(s.end) + ")";
}

// w_hat is already normalized.
void write_segment(std::span<double> row, const TokenSpan& span, const Matrix& w_hat, double alpha) {
  auto a = row.subspan(span.begin, span.size());
  const auto r = vec_mat(a, w_hat);
  const auto refocused = refocus_row(a, r, alpha);
  std::copy(refocused.begin(), refocused.end(), a.begin());
}

}  // namespace

std::string_view to_string(WeightNormalization n) {
  switch (n) {
    case WeightNormalization::raw:
      return "raw";
    case WeightNormalization::row_softmax:
      return "row_softmax";
  }
  return "?";
}

WeightNormalization parse_normalization(std::string_view s) {
  if (s == "raw") return WeightNormalization::raw;
  if (s == "row_softmax") return WeightNormalization::row_softmax;
  throw DomainError("unknown normalization '" + std::string(s) + "' (expected raw|row_softmax)");
}

void RefocusConfig::validate(std::size_t n_layers) const {
  if (layer_lo > layer_hi || layer_hi >= n_layers) {
    throw DomainError("RefocusConfig: layer band [" + std::to_string(layer_lo) + "," +
                      std::to_string(layer_hi) + "] outside model depth " + std::to_string(n_layers));
  }
  if (!std::isfinite(alpha) || alpha <= 0.0) {
    throw DomainError("RefocusConfig: alpha must be > 0, got " + std::to_string(alpha));
  }
}

CrossBlocks extract_cross_blocks(const Matrix& scores, const PromptSpans& spans) {
  const auto& v = spans.visual;
  const auto& i = spans.instruction;
  if (v.size() == 0 || i.size() == 0 || v.end > i.begin) {
    throw DomainError("extract_cross_blocks: spans " + span_str(v) + " " + span_str(i) +
                      " must be non-empty and ordered");
  }
  if (i.end > scores.rows() || i.end > scores.cols()) {
    throw ShapeError("extract_cross_blocks: spans " + span_str(v) + " " + span_str(i) +
                     " outside score matrix " + scores.shape());
  }
  return CrossBlocks{scores.block(v.begin, v.end, i.begin, i.end),
                     scores.block(i.begin, i.end, v.begin, v.end)};
}

Correlation compute_correlation(const Matrix& c_vi, const Matrix& c_iv) {
  if (c_vi.rows() != c_iv.cols() || c_vi.cols() != c_iv.rows()) {
    throw ShapeError("compute_correlation: blocks " + c_vi.shape() + " and " + c_iv.shape() +
                     " are not transposed shapes");
  }
  return Correlation{matmul(c_vi, c_iv), matmul(c_iv, c_vi)};
}

// ---------------------------------------------------------------------------

CorrelationPack::CorrelationPack(std::size_t layer_lo, std::size_t n_heads, PromptSpans spans,
                                 std::vector<Correlation> heads)
    : layer_lo_(layer_lo), n_layers_(0), n_heads_(n_heads), spans_(spans), heads_(std::move(heads)) {
  if (n_heads_ == 0 || heads_.empty() || heads_.size() % n_heads_ != 0) {
    throw ShapeError("CorrelationPack: " + std::to_string(heads_.size()) +
                     " entries is not a whole number of layers of " + std::to_string(n_heads_) +
                     " heads");
  }
  n_layers_ = heads_.size() / n_heads_;
  const std::size_t lv = spans_.visual.size();
  const std::size_t li = spans_.instruction.size();
  for (const auto& c : heads_) {
    if (c.visual.rows() != lv || c.visual.cols() != lv || c.instruction.rows() != li ||
        c.instruction.cols() != li) {
      throw ShapeError("CorrelationPack: W shapes " + c.visual.shape() + "/" +
                       c.instruction.shape() + " do not match span lengths " +
                       std::to_string(lv) + "/" + std::to_string(li));
    }
  }
}

const Correlation& CorrelationPack::at(std::size_t layer, std::size_t head) const {
  if (!covers(layer) || head >= n_heads_) {
    throw ShapeError("CorrelationPack: (" + std::to_string(layer) + "," + std::to_string(head) +
                     ") not in pack");
  }
  return heads_[(layer - layer_lo_) * n_heads_ + head];
}

void CorrelationPack::dump(std::ostream& out) const {
  using namespace detail;
  write_u64(out, kPackMagic);
  write_u64(out, layer_lo_);
  write_u64(out, n_layers_);
  write_u64(out, n_heads_);
  for (auto v : {spans_.visual.begin, spans_.visual.end, spans_.instruction.begin,
                 spans_.instruction.end}) {
    write_u64(out, v);
  }
  for (std::size_t l = 0; l < n_layers_; ++l) {
    for (std::size_t h = 0; h < n_heads_; ++h) {
      const auto& c = heads_[l * n_heads_ + h];
      write_u64(out, layer_lo_ + l);
      write_u64(out, h);
      write_matrix(out, c.visual);
      write_matrix(out, c.instruction);
    }
  }
  if (!out) throw Error("CorrelationPack::dump: write failed");
}

CorrelationPack CorrelationPack::load(std::istream& in) {
  using namespace detail;
  if (read_u64(in) != kPackMagic) throw FormatError("CorrelationPack::load: bad magic");
  const auto layer_lo = read_u64(in);
  const auto n_layers = read_u64(in);
  const auto n_heads = read_u64(in);
  PromptSpans spans;
  spans.visual.begin = read_u64(in);
  spans.visual.end = read_u64(in);
  spans.instruction.begin = read_u64(in);
  spans.instruction.end = read_u64(in);
  if (n_layers == 0 || n_heads == 0 || n_layers > 4096 || n_heads > 4096) {
    throw FormatError("CorrelationPack::load: implausible geometry");
  }
  std::vector<Correlation> heads;
  for (std::uint64_t l = 0; l < n_layers; ++l) {
    for (std::uint64_t h = 0; h < n_heads; ++h) {
      if (read_u64(in) != layer_lo + l || read_u64(in) != h) {
        throw FormatError("CorrelationPack::load: records out of order");
      }
      Matrix wv = read_matrix(in);
      Matrix wi = read_matrix(in);
      heads.push_back(Correlation{std::move(wv), std::move(wi)});
    }
  }
  try {
    return CorrelationPack(layer_lo, n_heads, spans, std::move(heads));
  } catch (const ShapeError& e) {
    throw FormatError(std::string("CorrelationPack::load: ") + e.what());
  }
}

CorrelationPack build_pack(const PromptProjections& projections, const RefocusConfig& config) {
  config.validate(projections.n_layers);
  std::vector<Correlation> heads;
  heads.reserve((config.layer_hi - config.layer_lo + 1) * projections.n_heads);
  for (std::size_t l = config.layer_lo; l <= config.layer_hi; ++l) {
    for (std::size_t h = 0; h < projections.n_heads; ++h) {
      const HeadBlocks b = projections.blocks(l, h);
      const Matrix c_vi = attention_scores(b.q_visual, b.k_instruction, projections.d_head);
      const Matrix c_iv = attention_scores(b.q_instruction, b.k_visual, projections.d_head);
      heads.push_back(compute_correlation(c_vi, c_iv));
    }
  }
  return CorrelationPack(config.layer_lo, projections.n_heads, projections.spans, std::move(heads));
}

Matrix effective_weights(const Matrix& w, WeightNormalization normalization) {
  if (w.rows() != w.cols()) throw ShapeError("effective_weights: W " + w.shape() + " is not square");
  if (normalization == WeightNormalization::raw) return w;
  // W_hat(i, j) = softmax(W_j,:)_i, so every column of W_hat sums to one.
  Matrix out(w.rows(), w.cols());
  for (std::size_t j = 0; j < w.rows(); ++j) {
    const auto p = softmax_row(w.row(j));
    for (std::size_t i = 0; i < p.size(); ++i) out(i, j) = p[i];
  }
  return out;
}

std::vector<double> reweight(std::span<const double> a, const Matrix& w,
                             WeightNormalization normalization) {
  if (w.rows() != w.cols() || w.rows() != a.size()) {
    throw ShapeError("reweight: segment of length " + std::to_string(a.size()) +
                     " against W " + w.shape());
  }
  return vec_mat(a, effective_weights(w, normalization));
}

std::vector<double> refocus_row(std::span<const double> a, std::span<const double> r, double alpha) {
  if (a.size() != r.size()) {
    throw ShapeError("refocus_row: lengths " + std::to_string(a.size()) + " and " +
                     std::to_string(r.size()) + " differ");
  }
  if (!std::isfinite(alpha) || alpha <= 0.0) throw DomainError("refocus_row: alpha must be > 0");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = r[i] + alpha * a[i];
  return out;
}

AttentionHook make_refocus_hook(std::shared_ptr<const CorrelationPack> pack,
                                const RefocusConfig& config) {
  if (!config.enabled) {
    return [](const HookContext&, std::span<double>) {};
  }
  if (!pack) throw DomainError("make_refocus_hook: enabled refocusing needs a correlation pack");
  if (config.layer_lo < pack->layer_lo() || config.layer_hi > pack->layer_hi()) {
    throw DomainError("make_refocus_hook: band [" + std::to_string(config.layer_lo) + "," +
                      std::to_string(config.layer_hi) + "] not covered by pack");
  }
  if (!std::isfinite(config.alpha) || config.alpha <= 0.0) {
    throw DomainError("make_refocus_hook: alpha must be > 0");
  }
  // Normalized matrices are computed once here rather than on every decode step.
  auto normalized = std::make_shared<std::vector<Correlation>>();
  for (std::size_t l = config.layer_lo; l <= config.layer_hi; ++l) {
    for (std::size_t h = 0; h < pack->n_heads(); ++h) {
      const Correlation& c = pack->at(l, h);
      normalized->push_back(Correlation{effective_weights(c.visual, config.normalization),
                                        effective_weights(c.instruction, config.normalization)});
    }
  }
  return [pack = std::move(pack), normalized = std::move(normalized), config](
             const HookContext& ctx, std::span<double> row) {
    if (ctx.layer < config.layer_lo || ctx.layer > config.layer_hi) return;
    if (ctx.spans != pack->spans()) {
      throw DomainError("refocus hook: sequence spans " + span_str(ctx.spans.visual) +
                        span_str(ctx.spans.instruction) + " differ from pack spans " +
                        span_str(pack->spans().visual) + span_str(pack->spans().instruction));
    }
    if (ctx.head >= pack->n_heads()) throw ShapeError("refocus hook: head index outside pack");
    const Correlation& c = (*normalized)[(ctx.layer - config.layer_lo) * pack->n_heads() + ctx.head];
    write_segment(row, ctx.spans.visual, c.visual, config.alpha);
    write_segment(row, ctx.spans.instruction, c.instruction, config.alpha);
  };
}

}  // namespace attnlab
