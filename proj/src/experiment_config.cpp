// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <charconv>
#include <cmath>
#include <istream>
#include <sstream>
#include <string>

#include "attnlab/error.hpp"
#include "attnlab/harness.hpp"
#include "text_format.hpp"

namespace attnlab {

namespace {

// Layer bands of the 32-layer reference configuration.
constexpr LayerBand kReferenceRefocusBand{5, 18};
constexpr LayerBand kReferenceVidBand{5, 26};
constexpr std::size_t kReferenceDepth = 32;

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
    throw FormatError("config: '" + std::string(key) + "' expects an unsigned integer, got '" +
                      std::string(v) + "'");
  }
  return out;
}

double parse_real(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw FormatError("config: '" + std::string(key) + "' expects a finite real, got '" +
                      std::string(v) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw FormatError("config: '" + std::string(key) + "' expects a boolean, got '" + std::string(v) + "'");
}

template <typename T, typename Fn>
std::vector<T> parse_list(std::string_view key, std::string_view v, Fn&& parse_one) {
  std::vector<T> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    const auto item = trim(v.substr(0, comma));
    if (item.empty()) throw FormatError("config: empty item in list '" + std::string(key) + "'");
    out.push_back(parse_one(key, item));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

std::string join_tokens(const std::vector<TokenId>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

std::string band_str(LayerBand b) { return std::to_string(b.lo) + ":" + std::to_string(b.hi); }

}  // namespace

std::string_view to_string(DecodeMode m) {
  switch (m) {
    case DecodeMode::greedy:
      return "greedy";
    case DecodeMode::beam:
      return "beam";
    case DecodeMode::visual_beam:
      return "vbs";
  }
  return "?";
}

DecodeMode parse_decode_mode(std::string_view s) {
  if (s == "greedy") return DecodeMode::greedy;
  if (s == "beam") return DecodeMode::beam;
  if (s == "vbs" || s == "visual_beam") return DecodeMode::visual_beam;
  throw FormatError("unknown decode mode '" + std::string(s) + "' (expected greedy|beam|vbs)");
}

LayerBand scale_band(LayerBand reference, std::size_t reference_depth, std::size_t depth) {
  if (reference_depth == 0 || depth == 0) throw DomainError("scale_band: zero depth");
  const auto scale = [&](std::size_t layer) {
    const double x = static_cast<double>(layer) * static_cast<double>(depth) /
                     static_cast<double>(reference_depth);
    return std::min(static_cast<std::size_t>(std::lround(x)), depth - 1);
  };
  LayerBand out{scale(reference.lo), scale(reference.hi)};
  if (out.hi < out.lo) out.hi = out.lo;
  return out;
}

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  const LayerBand ar = scale_band(kReferenceRefocusBand, kReferenceDepth, c.model.n_layers);
  const LayerBand vid = scale_band(kReferenceVidBand, kReferenceDepth, c.model.n_layers);
  c.refocus.layer_lo = ar.lo;
  c.refocus.layer_hi = ar.hi;
  c.refocus.alpha = 0.4;
  c.vbs.vid_layer_lo = vid.lo;
  c.vbs.vid_layer_hi = vid.hi;
  c.vbs.beta = 0.4;
  c.vbs.gamma = 0.15;
  c.vbs.n_beam = 5;
  c.vbs.max_new_tokens = 64;
  c.vbs.enabled = true;
  c.vbs.stop_token = c.vocab.stop;
  c.description_max_tokens = 64;
  return c;
}

void ExperimentConfig::validate() const {
  model.validate();
  vocab.validate(model.vocab_size);
  if (refocus.enabled) refocus.validate(model.n_layers);
  vbs.validate(model.n_layers);
  if (mode == DecodeMode::visual_beam && !vbs.enabled) {
    throw DomainError("ExperimentConfig: decode mode vbs requires visual beam search enabled");
  }
  if (instruction.empty()) throw DomainError("ExperimentConfig: empty instruction");
  for (TokenId t : instruction) {
    if (t >= model.vocab_size) throw DomainError("ExperimentConfig: instruction token outside vocabulary");
  }
  if (two_pass && description_max_tokens == 0) {
    throw DomainError("ExperimentConfig: two-pass prompting needs description_max_tokens >= 1");
  }
  if (dataset.scenes == 0) throw DomainError("ExperimentConfig: dataset needs at least one scene");
  const std::size_t longest = 1 + dataset.grid_rows * dataset.grid_cols +
                              (two_pass ? description_max_tokens : 0) + instruction.size() +
                              vbs.max_new_tokens;
  if (longest > model.max_seq_len) {
    throw DomainError("ExperimentConfig: prompts plus generation may reach " +
                      std::to_string(longest) + " positions, above max_seq_len " +
                      std::to_string(model.max_seq_len));
  }
}

LayerBand parse_band(std::string_view s) {
  const auto colon = s.find(':');
  if (colon == std::string_view::npos) {
    throw FormatError("layer band '" + std::string(s) + "' must look like LO:HI");
  }
  LayerBand b{parse_u64("band", trim(s.substr(0, colon))), parse_u64("band", trim(s.substr(colon + 1)))};
  if (b.lo > b.hi) throw FormatError("layer band '" + std::string(s) + "' has LO > HI");
  return b;
}

ConfigMap parse_config_text(std::istream& in) {
  ConfigMap out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view v = line;
    if (const auto hash = v.find('#'); hash != std::string_view::npos) v = v.substr(0, hash);
    v = trim(v);
    if (v.empty()) continue;
    const auto eq = v.find('=');
    if (eq == std::string_view::npos) {
      throw FormatError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const auto key = trim(v.substr(0, eq));
    const auto value = trim(v.substr(eq + 1));
    if (key.empty()) throw FormatError("config line " + std::to_string(lineno) + ": empty key");
    if (!out.emplace(std::string(key), std::string(value)).second) {
      throw FormatError("config line " + std::to_string(lineno) + ": duplicate key '" +
                        std::string(key) + "'");
    }
  }
  return out;
}

void apply_config(ExperimentConfig& c, const ConfigMap& values) {
  for (const auto& [key, v] : values) {
    if (key.starts_with("sweep.")) continue;
    if (key == "model.layers") c.model.n_layers = parse_u64(key, v);
    else if (key == "model.heads") c.model.n_heads = parse_u64(key, v);
    else if (key == "model.d_model") c.model.d_model = parse_u64(key, v);
    else if (key == "model.vocab") c.model.vocab_size = parse_u64(key, v);
    else if (key == "model.max_seq_len") c.model.max_seq_len = parse_u64(key, v);
    else if (key == "seed") c.model.seed = parse_u64(key, v);
    else if (key == "mode") c.mode = parse_decode_mode(v);
    else if (key == "two_pass") c.two_pass = parse_bool(key, v);
    else if (key == "description_max_tokens") c.description_max_tokens = parse_u64(key, v);
    else if (key == "refocus") c.refocus.enabled = parse_bool(key, v);
    else if (key == "alpha") c.refocus.alpha = parse_real(key, v);
    else if (key == "ar_layers") {
      const auto b = parse_band(v);
      c.refocus.layer_lo = b.lo;
      c.refocus.layer_hi = b.hi;
    } else if (key == "normalization") c.refocus.normalization = parse_normalization(v);
    else if (key == "vid_layers") {
      const auto b = parse_band(v);
      c.vbs.vid_layer_lo = b.lo;
      c.vbs.vid_layer_hi = b.hi;
    } else if (key == "beta") c.vbs.beta = parse_real(key, v);
    else if (key == "gamma") c.vbs.gamma = parse_real(key, v);
    else if (key == "n_beam") c.vbs.n_beam = parse_u64(key, v);
    else if (key == "max_new_tokens") c.vbs.max_new_tokens = parse_u64(key, v);
    else if (key == "length_penalty") c.vbs.length_penalty = parse_real(key, v);
    else if (key == "scenes") c.dataset.scenes = parse_u64(key, v);
    else if (key == "dataset_seed") c.dataset.seed = parse_u64(key, v);
    else if (key == "objects_per_scene") c.dataset.objects_per_scene = parse_u64(key, v);
    else if (key == "grid") {
      const auto x = v.find('x');
      if (x == std::string::npos) throw FormatError("config: grid must look like ROWSxCOLS");
      c.dataset.grid_rows = parse_u64(key, trim(std::string_view(v).substr(0, x)));
      c.dataset.grid_cols = parse_u64(key, trim(std::string_view(v).substr(x + 1)));
    } else if (key == "instruction") {
      c.instruction = parse_list<TokenId>(key, v, [](std::string_view k, std::string_view s) {
        return static_cast<TokenId>(parse_u64(k, s));
      });
    } else if (key == "threads") c.threads = parse_u64(key, v);
    else throw FormatError("config: unknown key '" + key + "'");
  }
  if (c.model.n_heads == 0 || c.model.d_model % c.model.n_heads != 0) {
    throw FormatError("config: model.d_model must be a multiple of model.heads");
  }
  c.model.d_head = c.model.d_model / c.model.n_heads;
  c.vbs.enabled = c.mode == DecodeMode::visual_beam;
}

std::string to_config_text(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "model.layers = " << c.model.n_layers << '\n'
     << "model.heads = " << c.model.n_heads << '\n'
     << "model.d_model = " << c.model.d_model << '\n'
     << "model.vocab = " << c.model.vocab_size << '\n'
     << "model.max_seq_len = " << c.model.max_seq_len << '\n'
     << "seed = " << c.model.seed << '\n'
     << "mode = " << to_string(c.mode) << '\n'
     << "two_pass = " << (c.two_pass ? "true" : "false") << '\n'
     << "description_max_tokens = " << c.description_max_tokens << '\n'
     << "refocus = " << (c.refocus.enabled ? "true" : "false") << '\n'
     << "alpha = " << format_real(c.refocus.alpha) << '\n'
     << "ar_layers = " << band_str({c.refocus.layer_lo, c.refocus.layer_hi}) << '\n'
     << "normalization = " << to_string(c.refocus.normalization) << '\n'
     << "vid_layers = " << band_str(c.vbs.vid_band()) << '\n'
     << "beta = " << format_real(c.vbs.beta) << '\n'
     << "gamma = " << format_real(c.vbs.gamma) << '\n'
     << "n_beam = " << c.vbs.n_beam << '\n'
     << "max_new_tokens = " << c.vbs.max_new_tokens << '\n'
     << "length_penalty = " << format_real(c.vbs.length_penalty) << '\n'
     << "scenes = " << c.dataset.scenes << '\n'
     << "dataset_seed = " << c.dataset.seed << '\n'
     << "objects_per_scene = " << c.dataset.objects_per_scene << '\n'
     << "grid = " << c.dataset.grid_rows << 'x' << c.dataset.grid_cols << '\n'
     << "instruction = " << join_tokens(c.instruction) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------

std::string_view to_string(SweepParameter p) {
  switch (p) {
    case SweepParameter::alpha:
      return "alpha";
    case SweepParameter::beta:
      return "beta";
    case SweepParameter::gamma:
      return "gamma";
  }
  return "?";
}

SweepParameter parse_sweep_parameter(std::string_view s) {
  if (s == "alpha") return SweepParameter::alpha;
  if (s == "beta") return SweepParameter::beta;
  if (s == "gamma") return SweepParameter::gamma;
  throw FormatError("unknown sweep parameter '" + std::string(s) + "' (expected alpha|beta|gamma)");
}

void SweepSpec::validate() const {
  if (values.empty()) throw DomainError("SweepSpec: empty value list");
  for (double v : values) {
    if (!std::isfinite(v)) throw DomainError("SweepSpec: non-finite value");
    const bool ok = parameter == SweepParameter::alpha  ? v > 0.0
                    : parameter == SweepParameter::beta ? (v >= 0.0 && v <= 1.0)
                                                        : v >= 0.0;
    if (!ok) {
      throw DomainError("SweepSpec: value " + format_real(v) + " outside the domain of " +
                        std::string(to_string(parameter)));
    }
  }
}

SweepSpec SweepSpec::from_config(const ConfigMap& values) {
  SweepSpec spec;
  spec.base = ExperimentConfig::defaults();
  apply_config(spec.base, values);
  const auto p = values.find("sweep.parameter");
  const auto v = values.find("sweep.values");
  if (p == values.end() || v == values.end()) {
    throw FormatError("sweep spec needs sweep.parameter and sweep.values");
  }
  for (const auto& [key, _] : values) {
    if (key.starts_with("sweep.") && key != "sweep.parameter" && key != "sweep.values") {
      throw FormatError("config: unknown key '" + key + "'");
    }
  }
  spec.parameter = parse_sweep_parameter(p->second);
  spec.values = parse_list<double>("sweep.values", v->second, parse_real);
  return spec;
}

}  // namespace attnlab
