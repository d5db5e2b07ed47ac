// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

// attnlab command line: generate / run / sweep / eval-chair / eval-binary.

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "attnlab/error.hpp"
#include "attnlab/harness.hpp"
#include "attnlab/metrics.hpp"

namespace {

using namespace attnlab;

struct Overrides {
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<double> gamma;
  std::optional<std::string> ar_layers;
  std::optional<std::string> vid_layers;
  std::optional<std::size_t> n_beam;
  std::optional<std::size_t> max_new_tokens;
  std::optional<std::string> mode;
  bool two_pass = false;
  bool no_two_pass = false;
  bool no_refocus = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> config_file;
};

void add_override_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config_file, "Key-value config file");
  cmd->add_option("--alpha", o.alpha, "Refocusing balance factor (> 0)");
  cmd->add_option("--beta", o.beta, "Logit mix weight in [0, 1]");
  cmd->add_option("--gamma", o.gamma, "VID scaling coefficient (>= 0)");
  cmd->add_option("--ar-layers", o.ar_layers, "Refocusing layer band LO:HI");
  cmd->add_option("--vid-layers", o.vid_layers, "VID layer band LO:HI");
  cmd->add_option("--n-beam", o.n_beam, "Beam width (default 5)");
  cmd->add_option("--max-new-tokens", o.max_new_tokens, "Generation budget");
  cmd->add_option("--mode", o.mode, "greedy|beam|vbs")->check(CLI::IsMember({"greedy", "beam", "vbs"}));
  cmd->add_flag("--two-pass", o.two_pass, "Describe the scene first and prepend the description");
  cmd->add_flag("--no-two-pass", o.no_two_pass, "Use the instruction alone");
  cmd->add_flag("--no-refocus", o.no_refocus, "Disable attention refocusing");
  cmd->add_option("--seed", o.seed, "Model weight seed");
}

ConfigMap read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file '" + path + "'");
  return parse_config_text(in);
}

void apply_overrides(ExperimentConfig& c, const Overrides& o) {
  ConfigMap m;
  if (o.alpha) m["alpha"] = std::to_string(*o.alpha);
  if (o.beta) m["beta"] = std::to_string(*o.beta);
  if (o.gamma) m["gamma"] = std::to_string(*o.gamma);
  if (o.ar_layers) m["ar_layers"] = *o.ar_layers;
  if (o.vid_layers) m["vid_layers"] = *o.vid_layers;
  if (o.n_beam) m["n_beam"] = std::to_string(*o.n_beam);
  if (o.max_new_tokens) m["max_new_tokens"] = std::to_string(*o.max_new_tokens);
  if (o.mode) m["mode"] = *o.mode;
  if (o.two_pass) m["two_pass"] = "true";
  if (o.no_two_pass) m["two_pass"] = "false";
  if (o.no_refocus) m["refocus"] = "false";
  if (o.seed) m["seed"] = std::to_string(*o.seed);
  apply_config(c, m);
  // Exact values for reals; std::to_string rounds to 6 places.
  if (o.alpha) c.refocus.alpha = *o.alpha;
  if (o.beta) c.vbs.beta = *o.beta;
  if (o.gamma) c.vbs.gamma = *o.gamma;
}

ExperimentConfig resolve_config(const Overrides& o) {
  ExperimentConfig c = ExperimentConfig::defaults();
  if (o.config_file) apply_config(c, read_config(*o.config_file));
  apply_overrides(c, o);
  c.validate();
  return c;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
}

Weights weights_for(const ExperimentConfig& c, const std::optional<std::string>& path) {
  if (!path) return init_model(c.model);
  std::ifstream in(*path, std::ios::binary);
  if (!in) throw Error("cannot open weights file '" + *path + "'");
  Weights w = load_weights(in);
  if (!(w.config == c.model)) throw Error("weights file does not match the configured model");
  return w;
}

int cmd_generate(const Overrides& o, std::size_t scene_index, const std::optional<std::string>& load,
                 const std::optional<std::string>& save, const std::optional<std::string>& pack_out) {
  ExperimentConfig c = resolve_config(o);
  const Weights weights = weights_for(c, load);
  if (save) {
    std::ofstream out(*save, std::ios::binary);
    if (!out) throw Error("cannot write '" + *save + "'");
    save_weights(weights, out);
  }

  const auto lexicon = c.vocab.lexicon();
  const auto objects = c.vocab.object_tokens();
  const auto background = c.vocab.background_tokens();
  const SyntheticScene scene =
      gen_scene(scene_seed(c.dataset.seed, scene_index), c.dataset.objects_per_scene,
                c.dataset.grid_rows, c.dataset.grid_cols, objects, background, lexicon);

  DecodeSettings settings{c.mode, c.vbs};
  settings.vbs.stop_token = c.vocab.stop;
  DecodeSettings describe = settings;
  describe.vbs.max_new_tokens = c.description_max_tokens;
  const TwoPassPrompt prompt = two_pass_prompt(weights, scene, c.instruction, c.vocab, describe, c.two_pass);

  AttentionHook hook;
  if (c.refocus.enabled) {
    const PrefillResult vanilla = prefill(weights, prompt.sequence);
    auto pack = std::make_shared<const CorrelationPack>(build_pack(vanilla.projections, c.refocus));
    if (pack_out) {
      std::ofstream out(*pack_out, std::ios::binary);
      if (!out) throw Error("cannot write '" + *pack_out + "'");
      pack->dump(out);
    }
    hook = make_refocus_hook(pack, c.refocus);
  }
  const DecodeResult result = run_decoder(weights, prompt.sequence, hook, settings);

  std::cout << "scene " << scene_index << " objects:";
  for (ObjectId obj : scene.present_objects) std::cout << ' ' << obj;
  std::cout << "\ndescription:";
  for (TokenId t : prompt.description) std::cout << ' ' << t;
  std::cout << "\ntokens:";
  for (TokenId t : result.tokens) std::cout << ' ' << t;
  std::cout << '\n';
  const CaptionRecord record{extract_objects(result.tokens, lexicon), scene.present_objects};
  std::cout << "mentioned " << record.mentioned.size() << ", hallucinated "
            << record.hallucinated().size() << '\n';
  write_step_records(std::cout, result.steps);
  return 0;
}

int cmd_run(const Overrides& o, const std::string& out_prefix) {
  const ExperimentConfig c = resolve_config(o);
  const ExperimentResult result = run_experiment(c);
  write_file(out_prefix + ".report.json", experiment_report_json(c, result));
  write_file(out_prefix + ".csv", report_csv_header() + "\n" + report_csv_row(result.report) + "\n");
  std::ostringstream diag;
  write_diagnostics(diag, result);
  write_file(out_prefix + ".diagnostics.jsonl", diag.str());
  std::cout << report_csv_header() << '\n' << report_csv_row(result.report) << '\n';
  if (result.failures) std::cerr << result.failures << " scene(s) failed; see diagnostics\n";
  return 0;
}

int cmd_sweep(const std::string& spec_file, const Overrides& o, const std::string& out) {
  SweepSpec spec = SweepSpec::from_config(read_config(spec_file));
  apply_overrides(spec.base, o);
  const SweepResult result = sweep(spec);
  const std::string csv = sweep_csv(result);
  if (out.empty()) std::cout << csv;
  else write_file(out, csv);
  for (const auto& [value, err] : result.failures) {
    std::cerr << "value " << value << " failed: " << err << '\n';
  }
  return result.rows.empty() ? 1 : 0;
}

int cmd_eval_chair(const std::string& records_file, const std::optional<std::string>& lexicon_file,
                   const std::string& csv_out) {
  ObjectLexicon lexicon = Vocabulary{}.lexicon();
  if (lexicon_file) {
    std::ifstream in(*lexicon_file);
    if (!in) throw Error("cannot open lexicon '" + *lexicon_file + "'");
    lexicon = read_lexicon(in);
  }
  std::ifstream in(records_file);
  if (!in) throw Error("cannot open records '" + records_file + "'");
  const auto records = read_caption_records(in, lexicon);
  const MetricsReport report = make_report(records);
  std::cout << report_json(report);
  if (!csv_out.empty()) write_file(csv_out, report_csv_header() + "\n" + report_csv_row(report) + "\n");
  return 0;
}

int cmd_eval_binary(const std::string& records_file) {
  std::ifstream in(records_file);
  if (!in) throw Error("cannot open records '" + records_file + "'");
  std::cout << binary_json(binary_eval(read_binary_records(in)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attnlab: attention refocusing and visual beam search on a toy multimodal decoder"};
  app.require_subcommand(1);

  Overrides gen_o, run_o, sweep_o;
  std::size_t scene_index = 0;
  std::optional<std::string> load_weights_path, save_weights_path, pack_path;
  auto* gen = app.add_subcommand("generate", "Decode one synthetic scene and print tokens + diagnostics");
  add_override_flags(gen, gen_o);
  gen_o.max_new_tokens = 512;
  gen->add_option("--scene", scene_index, "Scene index within the dataset");
  gen->add_option("--load-weights", load_weights_path, "Read weights from a binary file");
  gen->add_option("--save-weights", save_weights_path, "Write weights to a binary file");
  gen->add_option("--dump-pack", pack_path, "Write the correlation pack to a binary file");

  std::string run_prefix = "attnlab_run";
  auto* run = app.add_subcommand("run", "Run a full experiment");
  add_override_flags(run, run_o);
  run->add_option("-o,--out", run_prefix, "Output prefix for .report.json/.csv/.diagnostics.jsonl");

  std::string sweep_file, sweep_out;
  auto* sw = app.add_subcommand("sweep", "Run a hyperparameter sweep from a spec file");
  sw->add_option("spec", sweep_file, "Sweep spec file (config keys + sweep.parameter/sweep.values)")->required();
  add_override_flags(sw, sweep_o);
  sw->add_option("-o,--out", sweep_out, "CSV output path (stdout when omitted)");

  std::string chair_file, chair_csv;
  std::optional<std::string> lexicon_file;
  auto* chair = app.add_subcommand("eval-chair", "CHAIR_S / CHAIR_I / F1 over a caption record file");
  chair->add_option("records", chair_file, "Line-delimited JSON caption records")->required();
  chair->add_option("--lexicon", lexicon_file, "JSON token->object lexicon (default: object tokens 0-63)");
  chair->add_option("--csv", chair_csv, "Also write a CSV row here");

  std::string binary_file;
  auto* binary = app.add_subcommand("eval-binary", "Accuracy / F1 over yes-no records");
  binary->add_option("records", binary_file, "Line-delimited JSON yes/no records")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_generate(gen_o, scene_index, load_weights_path, save_weights_path, pack_path);
    if (*run) return cmd_run(run_o, run_prefix);
    if (*sw) return cmd_sweep(sweep_file, sweep_o, sweep_out);
    if (*chair) return cmd_eval_chair(chair_file, lexicon_file, chair_csv);
    if (*binary) return cmd_eval_binary(binary_file);
  } catch (const attnlab::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
