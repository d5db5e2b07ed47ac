// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <atomic>
#include <memory>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "attnlab/error.hpp"
#include "attnlab/harness.hpp"
#include "experiment_internal.hpp"

namespace attnlab {

namespace {

DecodeSettings decode_settings(const ExperimentConfig& config, std::size_t budget) {
  DecodeSettings s{config.mode, config.vbs};
  s.vbs.max_new_tokens = budget;
  s.vbs.stop_token = config.vocab.stop;
  return s;
}

std::size_t worker_count(const ExperimentConfig& config, std::size_t n) {
  const std::size_t workers = config.threads ? config.threads : std::thread::hardware_concurrency();
  return std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
}

// Calls fn(i) for every i in [0, n). Each worker claims the next index, so fn must only
// touch state owned by its index.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, const Fn& fn) {
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) fn(i);
  };
  if (workers <= 1) {
    work();
    return;
  }
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
}

detail::PreparedScene prepare_scene(const ExperimentConfig& config, const Weights& weights,
                                    std::size_t index, const ObjectLexicon& lexicon,
                                    bool with_pack) {
  detail::PreparedScene p;
  const auto objects = config.vocab.object_tokens();
  const auto background = config.vocab.background_tokens();
  p.scene = gen_scene(scene_seed(config.dataset.seed, index), config.dataset.objects_per_scene,
                      config.dataset.grid_rows, config.dataset.grid_cols, objects, background,
                      lexicon);
  try {
    p.prompt = two_pass_prompt(weights, p.scene, config.instruction, config.vocab,
                               decode_settings(config, config.description_max_tokens),
                               config.two_pass);
    if (with_pack && config.refocus.enabled) {
      const PrefillResult vanilla = prefill(weights, p.prompt->sequence);
      p.pack = std::make_shared<const CorrelationPack>(build_pack(vanilla.projections, config.refocus));
    }
  } catch (const Error& e) {
    p.prompt.reset();
    p.error = e.what();
  }
  return p;
}

SceneOutcome finish_scene(const ExperimentConfig& config, const Weights& weights,
                          std::size_t index, const detail::PreparedScene& p,
                          const CaptionSource& caption_source, const ObjectLexicon& lexicon) {
  SceneOutcome out;
  out.scene_id = index;
  out.record.ground_truth = p.scene.present_objects;
  if (p.error) {
    out.error = p.error;
    return out;
  }
  try {
    out.description = p.prompt->description;
    const SegmentedSequence& seq = p.prompt->sequence;
    if (caption_source) {
      out.caption = caption_source(p.scene, seq);
    } else {
      AttentionHook hook;
      if (config.refocus.enabled) hook = make_refocus_hook(p.pack, config.refocus);
      out.decode = run_decoder(weights, seq, hook, decode_settings(config, config.vbs.max_new_tokens));
      out.caption = out.decode.tokens;
    }
    out.record.mentioned = extract_objects(out.caption, lexicon);
  } catch (const Error& e) {
    out.error = e.what();
  }
  return out;
}

nlohmann::ordered_json token_array(const std::vector<TokenId>& v) {
  auto j = nlohmann::ordered_json::array();
  for (TokenId t : v) j.push_back(t);
  return j;
}

nlohmann::ordered_json object_array(const ObjectSet& s) {
  auto j = nlohmann::ordered_json::array();
  for (ObjectId o : s) j.push_back(o);
  return j;
}

}  // namespace

SegmentedSequence build_prompt(const Vocabulary& vocab, std::span<const TokenId> visual,
                               std::span<const TokenId> instruction) {
  const TokenId prefix[] = {vocab.bos};
  return SegmentedSequence::make(prefix, visual, instruction);
}

DecodeResult run_decoder(const Weights& weights, const SegmentedSequence& seq,
                         const AttentionHook& hook, const DecodeSettings& settings) {
  switch (settings.mode) {
    case DecodeMode::greedy:
      return greedy_decode(weights, seq, hook, settings.vbs.max_new_tokens, settings.vbs.stop_token,
                           settings.vbs.vid_band());
    case DecodeMode::beam: {
      VbsConfig vanilla = settings.vbs;
      vanilla.enabled = false;
      return beam_search(weights, seq, hook, vanilla);
    }
    case DecodeMode::visual_beam: {
      if (!settings.vbs.enabled) throw DomainError("run_decoder: vbs mode with visual beam search disabled");
      return beam_search(weights, seq, hook, settings.vbs);
    }
  }
  throw DomainError("run_decoder: unknown mode");
}

TwoPassPrompt two_pass_prompt(const Weights& weights, const SyntheticScene& scene,
                              std::span<const TokenId> instruction, const Vocabulary& vocab,
                              const DecodeSettings& settings, bool enabled) {
  if (!enabled) return {build_prompt(vocab, scene.visual_tokens, instruction), {}};
  const SegmentedSequence describe = build_prompt(vocab, scene.visual_tokens, vocab.describe_instruction);
  DecodeResult pass1 = run_decoder(weights, describe, {}, settings);
  std::vector<TokenId> combined = pass1.tokens;
  combined.insert(combined.end(), instruction.begin(), instruction.end());
  return {build_prompt(vocab, scene.visual_tokens, combined), std::move(pass1.tokens)};
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const Weights weights = init_model(config.model);
  return run_experiment(config, weights);
}

ExperimentResult run_experiment(const ExperimentConfig& config, const Weights& weights,
                                const CaptionSource& caption_source) {
  return detail::run_prepared(config, weights, caption_source, nullptr);
}

namespace detail {

std::vector<PreparedScene> prepare_scenes(const ExperimentConfig& config, const Weights& weights,
                                          bool with_pack) {
  const ObjectLexicon lexicon = config.vocab.lexicon();
  const std::size_t n = config.dataset.scenes;
  std::vector<PreparedScene> out(n);
  parallel_for(n, worker_count(config, n), [&](std::size_t i) {
    out[i] = prepare_scene(config, weights, i, lexicon, with_pack);
  });
  return out;
}

ExperimentResult run_prepared(const ExperimentConfig& config, const Weights& weights,
                              const CaptionSource& caption_source,
                              const std::vector<PreparedScene>* prepared) {
  config.validate();
  if (!(weights.config == config.model)) {
    throw DomainError("run_experiment: weights were built for a different model config");
  }
  const ObjectLexicon lexicon = config.vocab.lexicon();
  const std::size_t n = config.dataset.scenes;
  if (prepared && prepared->size() != n) throw ShapeError("run_prepared: scene count mismatch");

  ExperimentResult result;
  result.scenes.resize(n);
  parallel_for(n, worker_count(config, n), [&](std::size_t i) {
    if (prepared) {
      result.scenes[i] = finish_scene(config, weights, i, (*prepared)[i], caption_source, lexicon);
    } else {
      const PreparedScene p = prepare_scene(config, weights, i, lexicon, !caption_source);
      result.scenes[i] = finish_scene(config, weights, i, p, caption_source, lexicon);
    }
  });

  std::vector<CaptionRecord> records;
  for (const auto& s : result.scenes) {
    if (s.error) ++result.failures;
    else records.push_back(s.record);
  }
  if (records.empty()) {
    throw Error("run_experiment: all " + std::to_string(n) + " scenes failed; first error: " +
                result.scenes.front().error.value_or("?"));
  }
  result.report = make_report(records);
  return result;
}

}  // namespace detail

std::string experiment_report_json(const ExperimentConfig& config, const ExperimentResult& result) {
  nlohmann::ordered_json j;
  j["config"] = to_config_text(config);
  const auto& r = result.report;
  j["metrics"] = {{"chair_s", r.chair_s},     {"chair_i", r.chair_i}, {"f1", r.object_f1},
                  {"precision", r.precision}, {"recall", r.recall}};
  j["counts"] = {{"captions", r.captions},
                 {"captions_with_hallucination", r.captions_with_hallucination},
                 {"mentioned", r.mentioned},
                 {"hallucinated", r.hallucinated},
                 {"true_mentions", r.true_mentions},
                 {"ground_truth", r.ground_truth}};
  j["failed_scenes"] = result.failures;
  return j.dump(2) + "\n";
}

void write_diagnostics(std::ostream& out, const ExperimentResult& result) {
  for (const auto& s : result.scenes) {
    nlohmann::ordered_json j;
    j["scene"] = s.scene_id;
    j["description"] = token_array(s.description);
    j["caption"] = token_array(s.caption);
    j["mentioned"] = object_array(s.record.mentioned);
    j["ground_truth"] = object_array(s.record.ground_truth);
    j["hallucinated"] = object_array(s.record.hallucinated());
    j["error"] = s.error ? nlohmann::ordered_json(*s.error) : nlohmann::ordered_json(nullptr);
    out << j.dump() << '\n';
    write_step_records(out, s.decode.steps, s.scene_id);
  }
}

}  // namespace attnlab
