// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "support/reference_forward.hpp"

#include <cmath>

namespace attnlab::testing {

namespace {

using Rows = std::vector<std::vector<double>>;

std::vector<double> rms(const std::vector<double>& x, const Matrix& gain) {
  double ss = 0.0;
  for (double v : x) ss += v * v;
  const double s = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + 1e-5);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * s * gain(0, i);
  return out;
}

std::vector<double> times(const std::vector<double>& x, const Matrix& m) {
  std::vector<double> out(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out[j] += x[i] * m(i, j);
  }
  return out;
}

std::vector<double> softmax(const std::vector<double>& s) {
  double hi = s[0];
  for (double v : s) hi = std::max(hi, v);
  std::vector<double> e(s.size());
  double z = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) z += e[i] = std::exp(s[i] - hi);
  for (double& v : e) v /= z;
  return e;
}

double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x)));
}

}  // namespace

ReferenceOutput reference_forward(const Weights& w, const std::vector<TokenId>& tokens,
                                  const PromptSpans& spans, const AttentionHook& hook) {
  const auto& cfg = w.config;
  const std::size_t n = tokens.size();
  const std::size_t dh = cfg.d_head;
  ReferenceOutput out;
  out.last_weights.resize(cfg.n_layers * cfg.n_heads);

  Rows x(n, std::vector<double>(cfg.d_model));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < cfg.d_model; ++j) {
      x[i][j] = w.token_embedding(tokens[i], j) + w.position_embedding(i, j);
    }
  }

  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const auto& lw = w.layers[l];
    Rows h(n);
    for (std::size_t i = 0; i < n; ++i) h[i] = rms(x[i], lw.attn_norm);
    Rows attn(n, std::vector<double>(cfg.d_model, 0.0));
    for (std::size_t hd = 0; hd < cfg.n_heads; ++hd) {
      Rows q(n), k(n), v(n);
      for (std::size_t i = 0; i < n; ++i) {
        q[i] = times(h[i], lw.wq[hd]);
        k[i] = times(h[i], lw.wk[hd]);
        v[i] = times(h[i], lw.wv[hd]);
      }
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> s(i + 1);
        for (std::size_t j = 0; j <= i; ++j) {
          double dot = 0.0;
          for (std::size_t c = 0; c < dh; ++c) dot += q[i][c] * k[j][c];
          s[j] = dot / std::sqrt(static_cast<double>(dh));
        }
        if (hook && i + 1 == n) hook(HookContext{l, hd, i, spans}, std::span<double>(s));
        const auto p = softmax(s);
        if (i + 1 == n) out.last_weights[l * cfg.n_heads + hd] = p;
        for (std::size_t j = 0; j <= i; ++j) {
          for (std::size_t c = 0; c < dh; ++c) attn[i][hd * dh + c] += p[j] * v[j][c];
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto proj = times(attn[i], lw.wo);
      for (std::size_t j = 0; j < cfg.d_model; ++j) x[i][j] += proj[j];
      auto up = times(rms(x[i], lw.ffn_norm), lw.w_up);
      for (double& u : up) u = gelu(u);
      const auto down = times(up, lw.w_down);
      for (std::size_t j = 0; j < cfg.d_model; ++j) x[i][j] += down[j];
    }
  }
  out.logits = times(rms(x[n - 1], w.final_norm), w.unembedding);
  return out;
}

}  // namespace attnlab::testing
