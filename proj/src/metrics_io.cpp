// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <istream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "attnlab/error.hpp"
#include "attnlab/metrics.hpp"
#include "text_format.hpp"

namespace attnlab {

namespace {

using nlohmann::json;

template <typename Fn>
void for_each_json_line(std::istream& in, const char* what, Fn&& fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw FormatError(std::string(what) + " line " + std::to_string(lineno) + ": " + e.what());
    } catch (const DomainError& e) {
      throw FormatError(std::string(what) + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

Answer parse_answer(const json& j) {
  const auto s = j.get<std::string>();
  if (s == "yes") return Answer::yes;
  if (s == "no") return Answer::no;
  throw DomainError("answer must be \"yes\" or \"no\", got \"" + s + "\"");
}

}  // namespace

std::vector<CaptionRecord> read_caption_records(std::istream& in, const ObjectLexicon& lexicon) {
  std::vector<CaptionRecord> out;
  for_each_json_line(in, "caption records", [&](const json& j) {
    const auto caption = j.at("caption").get<std::vector<TokenId>>();
    const auto truth = j.at("ground_truth").get<std::vector<ObjectId>>();
    out.push_back(CaptionRecord{extract_objects(caption, lexicon), ObjectSet(truth.begin(), truth.end())});
  });
  return out;
}

std::vector<BinaryRecord> read_binary_records(std::istream& in) {
  std::vector<BinaryRecord> out;
  for_each_json_line(in, "binary records", [&](const json& j) {
    out.push_back(BinaryRecord{parse_answer(j.at("predicted")), parse_answer(j.at("label"))});
  });
  return out;
}

ObjectLexicon read_lexicon(std::istream& in) {
  ObjectLexicon lex;
  try {
    const json j = json::parse(in);
    for (const auto& [key, value] : j.items()) {
      std::size_t used = 0;
      const unsigned long token = std::stoul(key, &used);
      if (used != key.size()) throw FormatError("lexicon key '" + key + "' is not a token id");
      lex.emplace(static_cast<TokenId>(token), value.get<ObjectId>());
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("lexicon: ") + e.what());
  } catch (const std::logic_error& e) {
    throw FormatError(std::string("lexicon: bad token id: ") + e.what());
  }
  return lex;
}

std::string report_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["chair_s"] = r.chair_s;
  j["chair_i"] = r.chair_i;
  j["f1"] = r.object_f1;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["counts"] = {{"captions", r.captions},
                 {"captions_with_hallucination", r.captions_with_hallucination},
                 {"mentioned", r.mentioned},
                 {"hallucinated", r.hallucinated},
                 {"true_mentions", r.true_mentions},
                 {"ground_truth", r.ground_truth}};
  return j.dump(2) + "\n";
}

std::string binary_json(const BinaryScores& s) {
  nlohmann::ordered_json j;
  j["accuracy"] = s.accuracy;
  j["f1"] = s.f1;
  j["counts"] = {{"tp", s.true_positive}, {"fp", s.false_positive}, {"fn", s.false_negative},
                 {"tn", s.true_negative}};
  return j.dump(2) + "\n";
}

std::string report_csv_header() {
  return "chair_s,chair_i,f1,precision,recall,captions,captions_with_hallucination,mentioned,"
         "hallucinated";
}

std::string report_csv_row(const MetricsReport& r) {
  std::ostringstream os;
  os << format_real(r.chair_s) << ',' << format_real(r.chair_i) << ',' << format_real(r.object_f1)
     << ',' << format_real(r.precision) << ',' << format_real(r.recall) << ',' << r.captions << ','
     << r.captions_with_hallucination << ',' << r.mentioned << ',' << r.hallucinated;
  return os.str();
}

}  // namespace attnlab
