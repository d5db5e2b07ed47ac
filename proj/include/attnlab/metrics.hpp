// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

// Object hallucination metrics over generated captions, pooled across records:
//
//   CHAIR_I = |hallucinated mentions| / |mentions|
//   CHAIR_S = |captions with a hallucination| / |captions|
//   F1      = harmonic mean of mention precision and ground-truth recall
//
// plus accuracy / F1 ("yes" class) for yes-no object probing.

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "attnlab/model.hpp"

namespace attnlab {

using ObjectId = std::uint32_t;
using ObjectSet = std::set<ObjectId>;
using ObjectLexicon = std::map<TokenId, ObjectId>;

struct CaptionRecord {
  ObjectSet mentioned;
  ObjectSet ground_truth;

  ObjectSet hallucinated() const;
  std::size_t true_mentions() const;
};

/// Canonical ids of every caption token found in the lexicon. Other tokens are ignored.
ObjectSet extract_objects(std::span<const TokenId> caption, const ObjectLexicon& lexicon);

/// 0 when nothing is mentioned.
double chair_i(std::span<const CaptionRecord> records);
/// Throws DomainError on an empty record list.
double chair_s(std::span<const CaptionRecord> records);
/// 0 when precision + recall is 0.
double object_f1(std::span<const CaptionRecord> records);

enum class Answer { no, yes };

struct BinaryRecord {
  Answer predicted;
  Answer label;
};

struct BinaryScores {
  double accuracy = 0.0;
  double f1 = 0.0;
  std::size_t true_positive = 0;
  std::size_t false_positive = 0;
  std::size_t false_negative = 0;
  std::size_t true_negative = 0;
};

/// Throws DomainError on an empty record list.
BinaryScores binary_eval(std::span<const BinaryRecord> records);

struct MetricsReport {
  double chair_i = 0.0;
  double chair_s = 0.0;
  double object_f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t captions = 0;
  std::size_t captions_with_hallucination = 0;
  std::size_t mentioned = 0;
  std::size_t hallucinated = 0;
  std::size_t true_mentions = 0;
  std::size_t ground_truth = 0;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// All caption metrics in one pass; requires at least one record.
MetricsReport make_report(std::span<const CaptionRecord> records);

// ---------------------------------------------------------------------------
// Files

/// A line-delimited JSON caption file: {"caption": [token ids], "ground_truth": [object ids]}.
/// Blank lines are skipped.
std::vector<CaptionRecord> read_caption_records(std::istream& in, const ObjectLexicon& lexicon);

/// {"predicted": "yes"|"no", "label": "yes"|"no"} per line.
std::vector<BinaryRecord> read_binary_records(std::istream& in);

/// JSON object {"<token id>": object id, ...}.
ObjectLexicon read_lexicon(std::istream& in);

std::string report_json(const MetricsReport& report);
std::string binary_json(const BinaryScores& scores);
std::string report_csv_header();
std::string report_csv_row(const MetricsReport& report);

}  // namespace attnlab
