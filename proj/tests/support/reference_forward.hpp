// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

// Straight-line, cache-free forward pass used as an oracle for the library's batched
// prefill and incremental decode. Every position is recomputed from scratch.

#pragma once

#include <vector>

#include "attnlab/model.hpp"

namespace attnlab::testing {

struct ReferenceOutput {
  std::vector<double> logits;                       // next-token logits after the last token
  std::vector<std::vector<double>> last_weights;    // [layer * n_heads + head], last-row softmax
};

/// Runs the whole token sequence. `hook`, when given, is applied to the last row only,
/// with `spans` passed through in the context.
ReferenceOutput reference_forward(const Weights& weights, const std::vector<TokenId>& tokens,
                                  const PromptSpans& spans = {}, const AttentionHook& hook = {});

}  // namespace attnlab::testing
