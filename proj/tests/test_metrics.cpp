// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "attnlab/error.hpp"
#include "attnlab/metrics.hpp"
#include "support/generators.hpp"
#include "support/metric_oracle.hpp"

namespace attnlab {
namespace {

using testing::Gen;

CaptionRecord rec(ObjectSet mentioned, ObjectSet truth) { return {std::move(mentioned), std::move(truth)}; }

BinaryRecord yn(bool predicted, bool label) {
  return {predicted ? Answer::yes : Answer::no, label ? Answer::yes : Answer::no};
}

TEST(ExtractObjects, Basics) {
  const ObjectLexicon lex{{10, 1}, {11, 2}, {12, 1}};
  EXPECT_TRUE(extract_objects(std::vector<TokenId>{3, 4}, lex).empty());
  EXPECT_EQ(extract_objects(std::vector<TokenId>{10, 5, 10}, lex), (ObjectSet{1}));
  EXPECT_EQ(extract_objects(std::vector<TokenId>{10, 12}, lex), (ObjectSet{1}));
  EXPECT_EQ(extract_objects(std::vector<TokenId>{11, 12}, lex), (ObjectSet{1, 2}));
}

TEST(CaptionRecord, HallucinatedIsDifference) {
  const auto r = rec({1, 2, 3}, {2, 4});
  EXPECT_EQ(r.hallucinated(), (ObjectSet{1, 3}));
  EXPECT_EQ(r.true_mentions(), 1u);
}

TEST(ChairI, Fixtures) {
  EXPECT_EQ(chair_i(std::vector{rec({1, 2}, {1, 2, 3})}), 0.0);
  EXPECT_EQ(chair_i(std::vector{rec({5, 6}, {1})}), 1.0);
  // 2 hallucinated of 5 mentioned, pooled across captions.
  EXPECT_EQ(chair_i(std::vector{rec({1, 2, 9}, {1, 2}), rec({3, 8}, {3})}), 0.4);
  EXPECT_EQ(chair_i(std::vector{rec({}, {1})}), 0.0);
  EXPECT_EQ(chair_i(std::vector<CaptionRecord>{}), 0.0);
}

TEST(ChairS, Fixtures) {
  EXPECT_EQ(chair_s(std::vector{rec({1}, {1}), rec({}, {2})}), 0.0);
  EXPECT_EQ(chair_s(std::vector{rec({1}, {1}), rec({2}, {2}), rec({3}, {3}), rec({4, 7}, {4})}), 0.25);
  EXPECT_EQ(chair_s(std::vector{rec({9}, {1}), rec({8}, {2})}), 1.0);
  EXPECT_THROW(chair_s(std::vector<CaptionRecord>{}), DomainError);
}

TEST(ObjectF1, Fixtures) {
  EXPECT_EQ(object_f1(std::vector{rec({1, 2}, {1, 2}), rec({3}, {3})}), 1.0);
  EXPECT_EQ(object_f1(std::vector{rec({1}, {2})}), 0.0);
  // precision 2/4, recall 2/2
  EXPECT_NEAR(object_f1(std::vector{rec({1, 2, 7, 8}, {1, 2})}), 2.0 / 3.0, 1e-12);
}

TEST(BinaryEval, Fixtures) {
  const auto all = binary_eval(std::vector{yn(true, true), yn(false, false)});
  EXPECT_EQ(all.accuracy, 1.0);
  EXPECT_EQ(all.f1, 1.0);
  const auto none = binary_eval(std::vector{yn(false, true), yn(false, true)});
  EXPECT_EQ(none.accuracy, 0.0);
  EXPECT_EQ(none.f1, 0.0);
  const auto mixed = binary_eval(
      std::vector{yn(true, true), yn(true, true), yn(true, false), yn(false, true), yn(false, false)});
  EXPECT_NEAR(mixed.accuracy, 0.6, 1e-12);
  EXPECT_NEAR(mixed.f1, 2.0 / 3.0, 1e-12);
  EXPECT_EQ(mixed.true_positive, 2u);
  EXPECT_EQ(mixed.false_positive, 1u);
  EXPECT_EQ(mixed.false_negative, 1u);
  EXPECT_EQ(mixed.true_negative, 1u);
  EXPECT_THROW(binary_eval(std::vector<BinaryRecord>{}), DomainError);
}

TEST(Properties, MatchBruteForceRecount) {
  Gen g(1);
  for (int t = 0; t < 200; ++t) {
    const auto captions = testing::random_captions(g, 6);
    const auto answers = testing::random_answers(g);
    const auto want = testing::recount(captions, answers, 6);
    EXPECT_EQ(chair_i(captions), want.chair_i);
    EXPECT_EQ(chair_s(captions), want.chair_s);
    EXPECT_EQ(object_f1(captions), want.f1);
    const auto b = binary_eval(answers);
    EXPECT_EQ(b.accuracy, want.accuracy);
    EXPECT_EQ(b.f1, want.binary_f1);
    const auto report = make_report(captions);
    EXPECT_EQ(report.chair_i, want.chair_i);
    EXPECT_EQ(report.chair_s, want.chair_s);
    EXPECT_EQ(report.object_f1, want.f1);
  }
}

TEST(Properties, PermutationInvariance) {
  Gen g(2);
  for (int t = 0; t < 50; ++t) {
    auto captions = testing::random_captions(g, 5);
    const double ci = chair_i(captions);
    const double cs = chair_s(captions);
    std::reverse(captions.begin(), captions.end());
    std::rotate(captions.begin(), captions.begin() + static_cast<std::ptrdiff_t>(g.size(0, captions.size() - 1)),
                captions.end());
    EXPECT_EQ(chair_i(captions), ci);
    EXPECT_EQ(chair_s(captions), cs);
  }
}

TEST(Properties, EmptyMentionRecord) {
  Gen g(3);
  for (int t = 0; t < 50; ++t) {
    auto captions = testing::random_captions(g, 5);
    const auto before = make_report(captions);
    captions.push_back(rec({}, {1, 2}));
    const auto after = make_report(captions);
    EXPECT_EQ(after.mentioned, before.mentioned);
    EXPECT_EQ(after.hallucinated, before.hallucinated);
    EXPECT_EQ(after.chair_i, before.chair_i);
    EXPECT_EQ(after.captions, before.captions + 1);
    EXPECT_EQ(after.captions_with_hallucination, before.captions_with_hallucination);
  }
}

TEST(Properties, F1IsOneOnlyForExactCaptions) {
  Gen g(4);
  for (int t = 0; t < 100; ++t) {
    auto captions = testing::random_captions(g, 4);
    bool exact = true;
    bool any_truth = false;
    for (auto& r : captions) {
      if (g.coin()) r.mentioned = r.ground_truth;
      exact = exact && r.mentioned == r.ground_truth;
      any_truth = any_truth || !r.ground_truth.empty();
    }
    if (!any_truth) continue;
    EXPECT_EQ(object_f1(captions) == 1.0, exact);
  }
}

TEST(Files, ReadCaptionRecords) {
  std::istringstream in(
      "{\"caption\": [10, 4, 12], \"ground_truth\": [1]}\n"
      "\n"
      "{\"caption\": [], \"ground_truth\": [2, 3]}\n");
  const ObjectLexicon lex{{10, 1}, {12, 7}};
  const auto r = read_caption_records(in, lex);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].mentioned, (ObjectSet{1, 7}));
  EXPECT_EQ(r[0].ground_truth, (ObjectSet{1}));
  EXPECT_TRUE(r[1].mentioned.empty());
}

TEST(Files, MalformedLinesReportLineNumber) {
  std::istringstream in("{\"caption\": [1], \"ground_truth\": []}\n{\"caption\": [1]}\n");
  try {
    read_caption_records(in, {});
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Files, BinaryRecordsAndLexicon) {
  std::istringstream in("{\"predicted\": \"yes\", \"label\": \"no\"}\n{\"predicted\": \"no\", \"label\": \"no\"}\n");
  const auto b = read_binary_records(in);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b[0].predicted, Answer::yes);
  EXPECT_EQ(b[0].label, Answer::no);

  std::istringstream bad("{\"predicted\": \"maybe\", \"label\": \"no\"}\n");
  EXPECT_THROW(read_binary_records(bad), Error);

  std::istringstream lex("{\"3\": 1, \"4\": 1}");
  EXPECT_EQ(read_lexicon(lex), (ObjectLexicon{{3, 1}, {4, 1}}));
  std::istringstream bad_lex("{\"x3\": 1}");
  EXPECT_THROW(read_lexicon(bad_lex), FormatError);
}

TEST(Files, ReportOutputs) {
  const auto r = make_report(std::vector{rec({1, 2}, {1}), rec({3}, {3})});
  const auto j = nlohmann::json::parse(report_json(r));
  EXPECT_EQ(j["chair_s"], 0.5);
  EXPECT_EQ(j["counts"]["hallucinated"], 1);
  const std::string row = report_csv_row(r);
  const std::string header = report_csv_header();
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), std::count(header.begin(), header.end(), ','));
  EXPECT_EQ(row.substr(0, 4), "0.5,");
}

}  // namespace
}  // namespace attnlab
