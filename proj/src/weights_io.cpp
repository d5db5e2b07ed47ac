// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <istream>
#include <ostream>

#include "attnlab/error.hpp"
#include "attnlab/model.hpp"
#include "binary_io.hpp"

namespace attnlab {

namespace {

constexpr std::uint64_t kWeightsMagic = 0x31544757424c5441ULL;  // "ATLBWGT1"
constexpr std::uint64_t kWeightsVersion = 1;

}  // namespace

void save_weights(const Weights& w, std::ostream& out) {
  using namespace detail;
  const ModelConfig& c = w.config;
  write_u64(out, kWeightsMagic);
  write_u64(out, kWeightsVersion);
  for (std::uint64_t field : {std::uint64_t{c.n_layers}, std::uint64_t{c.n_heads},
                              std::uint64_t{c.d_model}, std::uint64_t{c.d_head},
                              std::uint64_t{c.vocab_size}, std::uint64_t{c.max_seq_len}, c.seed}) {
    write_u64(out, field);
  }
  write_matrix(out, w.token_embedding);
  write_matrix(out, w.position_embedding);
  for (const auto& l : w.layers) {
    write_matrix(out, l.attn_norm);
    for (const auto& m : l.wq) write_matrix(out, m);
    for (const auto& m : l.wk) write_matrix(out, m);
    for (const auto& m : l.wv) write_matrix(out, m);
    write_matrix(out, l.wo);
    write_matrix(out, l.ffn_norm);
    write_matrix(out, l.w_up);
    write_matrix(out, l.w_down);
  }
  write_matrix(out, w.final_norm);
  write_matrix(out, w.unembedding);
  if (!out) throw Error("save_weights: write failed");
}

Weights load_weights(std::istream& in) {
  using namespace detail;
  if (read_u64(in) != kWeightsMagic) throw FormatError("load_weights: bad magic");
  if (const auto v = read_u64(in); v != kWeightsVersion) {
    throw FormatError("load_weights: unsupported version " + std::to_string(v));
  }
  ModelConfig c;
  c.n_layers = read_u64(in);
  c.n_heads = read_u64(in);
  c.d_model = read_u64(in);
  c.d_head = read_u64(in);
  c.vocab_size = read_u64(in);
  c.max_seq_len = read_u64(in);
  c.seed = read_u64(in);
  try {
    c.validate();
  } catch (const DomainError& e) {
    throw FormatError(std::string("load_weights: ") + e.what());
  }
  const std::size_t d = c.d_model;

  Matrix token_embedding = read_matrix(in, c.vocab_size, d);
  Matrix position_embedding = read_matrix(in, c.max_seq_len, d);
  std::vector<LayerWeights> layers;
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    Matrix attn_norm = read_matrix(in, 1, d);
    std::vector<Matrix> wq, wk, wv;
    for (std::size_t h = 0; h < c.n_heads; ++h) wq.push_back(read_matrix(in, d, c.d_head));
    for (std::size_t h = 0; h < c.n_heads; ++h) wk.push_back(read_matrix(in, d, c.d_head));
    for (std::size_t h = 0; h < c.n_heads; ++h) wv.push_back(read_matrix(in, d, c.d_head));
    Matrix wo = read_matrix(in, d, d);
    Matrix ffn_norm = read_matrix(in, 1, d);
    Matrix w_up = read_matrix(in, d, c.d_ff());
    Matrix w_down = read_matrix(in, c.d_ff(), d);
    layers.push_back(LayerWeights{std::move(attn_norm), std::move(wq), std::move(wk), std::move(wv),
                                  std::move(wo), std::move(ffn_norm), std::move(w_up),
                                  std::move(w_down)});
  }
  Matrix final_norm = read_matrix(in, 1, d);
  Matrix unembedding = read_matrix(in, d, c.vocab_size);
  return Weights{c, std::move(token_embedding), std::move(position_embedding), std::move(layers),
                 std::move(final_norm), std::move(unembedding)};
}

}  // namespace attnlab
