// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <optional>
#include <sstream>

#include "attnlab/error.hpp"
#include "attnlab/harness.hpp"
#include "experiment_internal.hpp"
#include "text_format.hpp"

namespace attnlab {

ExperimentConfig with_parameter(const ExperimentConfig& base, SweepParameter p, double value) {
  ExperimentConfig c = base;
  switch (p) {
    case SweepParameter::alpha:
      c.refocus.alpha = value;
      break;
    case SweepParameter::beta:
      c.vbs.beta = value;
      break;
    case SweepParameter::gamma:
      c.vbs.gamma = value;
      break;
  }
  return c;
}

SweepResult sweep(const SweepSpec& spec) {
  spec.validate();
  spec.base.validate();
  const Weights weights = init_model(spec.base.model);

  std::vector<double> values = spec.values;
  std::sort(values.begin(), values.end());

  // Prompts and correlation packs do not depend on alpha, so an alpha sweep builds them once.
  std::optional<std::vector<detail::PreparedScene>> prepared;
  if (spec.parameter == SweepParameter::alpha) {
    prepared = detail::prepare_scenes(spec.base, weights, true);
  }

  SweepResult result;
  result.parameter = spec.parameter;
  for (double v : values) {
    try {
      const ExperimentConfig cfg = with_parameter(spec.base, spec.parameter, v);
      const auto* shared = prepared ? &*prepared : nullptr;
      result.rows.push_back(SweepRow{v, detail::run_prepared(cfg, weights, {}, shared).report});
    } catch (const Error& e) {
      result.failures.emplace_back(v, e.what());
    }
  }
  return result;
}

std::string sweep_csv(const SweepResult& result) {
  std::ostringstream os;
  os << to_string(result.parameter) << ",chair_s,chair_i,f1\n";
  for (const auto& row : result.rows) {
    os << format_real(row.value) << ',' << format_real(row.report.chair_s) << ','
       << format_real(row.report.chair_i) << ',' << format_real(row.report.object_f1) << '\n';
  }
  return os.str();
}

}  // namespace attnlab
