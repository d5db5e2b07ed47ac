// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attnlab/decoding.hpp"
#include "attnlab/metrics.hpp"
#include "attnlab/model.hpp"
#include "attnlab/refocus.hpp"

namespace attnlab {

// ---------------------------------------------------------------------------
// Synthetic world

/// Token layout of the synthetic world:
///   [0, n_objects)                       object tokens (canonical id == token id)
///   [n_objects, n_objects+n_background)  background tokens
///   bos, stop                            control tokens
///   describe_instruction                 fixed "describe this image" instruction
struct Vocabulary {
  std::size_t n_objects = 64;
  std::size_t n_background = 16;
  TokenId bos = 80;
  TokenId stop = 81;
  std::vector<TokenId> describe_instruction{82, 83, 84, 85, 86, 87};

  std::vector<TokenId> object_tokens() const;
  std::vector<TokenId> background_tokens() const;
  ObjectLexicon lexicon() const;

  /// Every id fits in the model vocabulary and the reserved ranges do not collide.
  void validate(std::size_t vocab_size) const;
};

struct SyntheticScene {
  std::size_t scene_id = 0;
  std::vector<TokenId> visual_tokens;  // row-major grid
  ObjectSet present_objects;
  std::size_t rows = 0;
  std::size_t cols = 0;

  friend bool operator==(const SyntheticScene&, const SyntheticScene&) = default;
};

/// Places n_objects distinct object tokens at distinct grid cells and fills the rest
/// with background tokens. Fully determined by the arguments.
SyntheticScene gen_scene(std::uint64_t seed, std::size_t n_objects, std::size_t rows,
                         std::size_t cols, std::span<const TokenId> object_vocab,
                         std::span<const TokenId> background_vocab, const ObjectLexicon& lexicon);

/// Seed of scene `index` in a dataset drawn with `dataset_seed`.
std::uint64_t scene_seed(std::uint64_t dataset_seed, std::size_t index);

// ---------------------------------------------------------------------------
// Experiment configuration

enum class DecodeMode { greedy, beam, visual_beam };

std::string_view to_string(DecodeMode m);
DecodeMode parse_decode_mode(std::string_view s);

struct DatasetConfig {
  std::size_t scenes = 50;
  std::uint64_t seed = 1;
  std::size_t objects_per_scene = 6;
  std::size_t grid_rows = 8;
  std::size_t grid_cols = 8;
};

/// Rescales an inclusive layer band from a reference depth to `depth` by rounding.
LayerBand scale_band(LayerBand reference, std::size_t reference_depth, std::size_t depth);

struct ExperimentConfig {
  ModelConfig model;
  RefocusConfig refocus;
  VbsConfig vbs;
  DecodeMode mode = DecodeMode::visual_beam;
  bool two_pass = true;
  std::size_t description_max_tokens = 64;
  DatasetConfig dataset;
  Vocabulary vocab;
  std::vector<TokenId> instruction{88, 89, 90};
  std::size_t threads = 0;  // 0: one per hardware thread

  /// Desk-scale defaults: 4x4x64 model, 50 scenes of 8x8, 64 new tokens, and the
  /// reference settings (alpha 0.4, beta 0.4, gamma 0.15, 5 beams) with both layer bands
  /// rescaled from a 32-layer reference to the toy depth.
  static ExperimentConfig defaults();

  void validate() const;
};

/// `key = value` lines, '#' comments. Duplicate keys are errors.
using ConfigMap = std::map<std::string, std::string, std::less<>>;
ConfigMap parse_config_text(std::istream& in);

/// Applies recognised keys onto `config`; unknown keys raise FormatError. Keys prefixed
/// with `sweep.` are ignored here.
void apply_config(ExperimentConfig& config, const ConfigMap& values);

/// Canonical text form; parse_config_text + apply_config on it reproduces the config.
std::string to_config_text(const ExperimentConfig& config);

/// Parses "LO:HI".
LayerBand parse_band(std::string_view s);

// ---------------------------------------------------------------------------
// Pipeline

/// [bos] ++ visual ++ instruction.
SegmentedSequence build_prompt(const Vocabulary& vocab, std::span<const TokenId> visual,
                               std::span<const TokenId> instruction);

struct DecodeSettings {
  DecodeMode mode = DecodeMode::greedy;
  VbsConfig vbs;  // n_beam, band, beta, gamma, stop token; max_new_tokens is the budget
};

/// Decodes with the requested mode.
DecodeResult run_decoder(const Weights& weights, const SegmentedSequence& seq,
                         const AttentionHook& hook, const DecodeSettings& settings);

struct TwoPassPrompt {
  SegmentedSequence sequence;
  std::vector<TokenId> description;  // empty when two-pass is off
};

/// With `enabled`, first describes the scene using the fixed describe instruction, then
/// returns [bos, visual, description ++ instruction] with the instruction span covering
/// the whole concatenation. Otherwise returns the plain prompt.
TwoPassPrompt two_pass_prompt(const Weights& weights, const SyntheticScene& scene,
                              std::span<const TokenId> instruction, const Vocabulary& vocab,
                              const DecodeSettings& settings, bool enabled);

struct SceneOutcome {
  std::size_t scene_id = 0;
  std::vector<TokenId> description;
  std::vector<TokenId> caption;
  CaptionRecord record;
  DecodeResult decode;
  std::optional<std::string> error;
};

struct ExperimentResult {
  MetricsReport report;
  std::vector<SceneOutcome> scenes;  // ordered by scene_id
  std::size_t failures = 0;
};

/// Replaces the decoder for a scene; used to close the loop with known captions.
using CaptionSource =
    std::function<std::vector<TokenId>(const SyntheticScene&, const SegmentedSequence&)>;

ExperimentResult run_experiment(const ExperimentConfig& config);
ExperimentResult run_experiment(const ExperimentConfig& config, const Weights& weights,
                                const CaptionSource& caption_source = {});

/// Report document: config echo, metrics and failure count.
std::string experiment_report_json(const ExperimentConfig& config, const ExperimentResult& result);
/// One JSON line per scene, followed by that scene's step records.
void write_diagnostics(std::ostream& out, const ExperimentResult& result);

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepParameter { alpha, beta, gamma };

std::string_view to_string(SweepParameter p);
SweepParameter parse_sweep_parameter(std::string_view s);

struct SweepSpec {
  SweepParameter parameter = SweepParameter::alpha;
  std::vector<double> values;
  ExperimentConfig base = ExperimentConfig::defaults();

  /// Non-empty; every value finite and inside the parameter's domain.
  void validate() const;

  /// Base config from the file's plain keys plus `sweep.parameter` and `sweep.values`.
  static SweepSpec from_config(const ConfigMap& values);
};

struct SweepRow {
  double value = 0.0;
  MetricsReport report;
};

struct SweepResult {
  SweepParameter parameter = SweepParameter::alpha;
  std::vector<SweepRow> rows;  // ascending by value
  std::vector<std::pair<double, std::string>> failures;
};

/// Sets the swept parameter on a copy of `base`.
ExperimentConfig with_parameter(const ExperimentConfig& base, SweepParameter p, double value);

SweepResult sweep(const SweepSpec& spec);

/// Header `<parameter>,chair_s,chair_i,f1`, one row per successful value.
std::string sweep_csv(const SweepResult& result);

}  // namespace attnlab
