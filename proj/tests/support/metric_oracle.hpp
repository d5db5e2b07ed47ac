// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

// Brute-force recount of the caption and yes/no metrics. Records are scanned object id
// by object id over a small universe instead of through set algebra.

#pragma once

#include <cstddef>
#include <vector>

#include "attnlab/metrics.hpp"
#include "support/generators.hpp"

namespace attnlab::testing {

struct OracleScores {
  double chair_i = 0.0;
  double chair_s = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  double binary_f1 = 0.0;
};

inline double oracle_ratio(std::size_t n, std::size_t d) {
  return d == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(d);
}

inline double oracle_harmonic(double p, double r) {
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

inline OracleScores recount(const std::vector<CaptionRecord>& captions,
                            const std::vector<BinaryRecord>& answers, ObjectId universe) {
  std::size_t mentioned = 0, hallucinated = 0, truthful = 0, gt = 0, bad_captions = 0;
  for (const auto& r : captions) {
    bool bad = false;
    for (ObjectId o = 0; o < universe; ++o) {
      const bool m = r.mentioned.count(o) > 0;
      const bool g = r.ground_truth.count(o) > 0;
      mentioned += m;
      gt += g;
      if (m && g) ++truthful;
      if (m && !g) {
        ++hallucinated;
        bad = true;
      }
    }
    bad_captions += bad;
  }
  std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
  for (const auto& a : answers) {
    const bool p = a.predicted == Answer::yes;
    const bool l = a.label == Answer::yes;
    correct += p == l;
    tp += p && l;
    fp += p && !l;
    fn += !p && l;
  }
  OracleScores s;
  s.chair_i = oracle_ratio(hallucinated, mentioned);
  s.chair_s = oracle_ratio(bad_captions, captions.size());
  s.f1 = oracle_harmonic(oracle_ratio(truthful, mentioned), oracle_ratio(truthful, gt));
  s.accuracy = oracle_ratio(correct, answers.size());
  s.binary_f1 = oracle_harmonic(oracle_ratio(tp, tp + fp), oracle_ratio(tp, tp + fn));
  return s;
}

inline std::vector<CaptionRecord> random_captions(Gen& g, ObjectId universe) {
  std::vector<CaptionRecord> out(g.size(1, 8));
  for (auto& r : out) {
    for (ObjectId o = 0; o < universe; ++o) {
      if (g.size(0, 3) == 0) r.mentioned.insert(o);
      if (g.size(0, 2) == 0) r.ground_truth.insert(o);
    }
  }
  return out;
}

inline std::vector<BinaryRecord> random_answers(Gen& g) {
  std::vector<BinaryRecord> out(g.size(1, 12));
  for (auto& r : out) {
    r.predicted = g.coin() ? Answer::yes : Answer::no;
    r.label = g.coin() ? Answer::yes : Answer::no;
  }
  return out;
}

}  // namespace attnlab::testing
