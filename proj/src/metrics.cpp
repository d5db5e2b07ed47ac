// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "attnlab/metrics.hpp"

#include <algorithm>
#include <iterator>

#include "attnlab/error.hpp"

namespace attnlab {

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace

ObjectSet CaptionRecord::hallucinated() const {
  ObjectSet out;
  std::set_difference(mentioned.begin(), mentioned.end(), ground_truth.begin(), ground_truth.end(),
                      std::inserter(out, out.end()));
  return out;
}

std::size_t CaptionRecord::true_mentions() const {
  return static_cast<std::size_t>(std::count_if(
      mentioned.begin(), mentioned.end(), [&](ObjectId o) { return ground_truth.contains(o); }));
}

ObjectSet extract_objects(std::span<const TokenId> caption, const ObjectLexicon& lexicon) {
  ObjectSet out;
  for (TokenId t : caption) {
    if (auto it = lexicon.find(t); it != lexicon.end()) out.insert(it->second);
  }
  return out;
}

double chair_i(std::span<const CaptionRecord> records) {
  std::size_t hallucinated = 0;
  std::size_t mentioned = 0;
  for (const auto& r : records) {
    mentioned += r.mentioned.size();
    hallucinated += r.mentioned.size() - r.true_mentions();
  }
  return ratio(hallucinated, mentioned);
}

double chair_s(std::span<const CaptionRecord> records) {
  if (records.empty()) throw DomainError("chair_s: no caption records");
  const auto bad = std::count_if(records.begin(), records.end(), [](const CaptionRecord& r) {
    return r.true_mentions() != r.mentioned.size();
  });
  return ratio(static_cast<std::size_t>(bad), records.size());
}

double object_f1(std::span<const CaptionRecord> records) {
  std::size_t tp = 0, mentioned = 0, gt = 0;
  for (const auto& r : records) {
    tp += r.true_mentions();
    mentioned += r.mentioned.size();
    gt += r.ground_truth.size();
  }
  return harmonic(ratio(tp, mentioned), ratio(tp, gt));
}

BinaryScores binary_eval(std::span<const BinaryRecord> records) {
  if (records.empty()) throw DomainError("binary_eval: no records");
  BinaryScores s;
  for (const auto& r : records) {
    const bool pred = r.predicted == Answer::yes;
    const bool label = r.label == Answer::yes;
    if (pred && label) ++s.true_positive;
    else if (pred) ++s.false_positive;
    else if (label) ++s.false_negative;
    else ++s.true_negative;
  }
  s.accuracy = ratio(s.true_positive + s.true_negative, records.size());
  s.f1 = harmonic(ratio(s.true_positive, s.true_positive + s.false_positive),
                  ratio(s.true_positive, s.true_positive + s.false_negative));
  return s;
}

MetricsReport make_report(std::span<const CaptionRecord> records) {
  if (records.empty()) throw DomainError("make_report: no caption records");
  MetricsReport m;
  m.captions = records.size();
  for (const auto& r : records) {
    const std::size_t tp = r.true_mentions();
    m.mentioned += r.mentioned.size();
    m.true_mentions += tp;
    m.hallucinated += r.mentioned.size() - tp;
    m.ground_truth += r.ground_truth.size();
    if (tp != r.mentioned.size()) ++m.captions_with_hallucination;
  }
  m.chair_i = ratio(m.hallucinated, m.mentioned);
  m.chair_s = ratio(m.captions_with_hallucination, m.captions);
  m.precision = ratio(m.true_mentions, m.mentioned);
  m.recall = ratio(m.true_mentions, m.ground_truth);
  m.object_f1 = harmonic(m.precision, m.recall);
  return m;
}

}  // namespace attnlab
