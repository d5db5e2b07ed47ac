// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "attnlab/harness.hpp"

namespace attnlab::detail {

// Everything about a scene that does not depend on alpha: the scene itself, the
// (possibly two-pass) prompt and the correlation pack of its vanilla prefill.
struct PreparedScene {
  SyntheticScene scene;
  std::optional<TwoPassPrompt> prompt;
  std::shared_ptr<const CorrelationPack> pack;
  std::optional<std::string> error;
};

std::vector<PreparedScene> prepare_scenes(const ExperimentConfig& config, const Weights& weights,
                                          bool with_pack);

// run_experiment over scenes prepared with a config that differs from `config` at most in
// refocus.alpha. With `prepared` null the scenes are prepared on the fly.
ExperimentResult run_prepared(const ExperimentConfig& config, const Weights& weights,
                              const CaptionSource& caption_source,
                              const std::vector<PreparedScene>* prepared);

}  // namespace attnlab::detail
