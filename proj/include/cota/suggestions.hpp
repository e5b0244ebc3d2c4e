#pragma once

// Ranked suggestion lists and the JSON-lines prediction dump format shared
// by the v1/v2 models, the evaluation harness and the serving workflow.

#include <algorithm>
#include <string>
#include <vector>

#include "cota/common.hpp"
#include "cota/config.hpp"

namespace cota {

struct ScoredClass {
  std::string class_id;
  double score = 0.0;

  bool operator==(const ScoredClass&) const = default;
};

// Descending score, ties broken by class id ascending, length <= top_k.
using RankedSuggestions = std::vector<ScoredClass>;

inline void sort_suggestions(RankedSuggestions& suggestions, int top_k) {
  std::sort(suggestions.begin(), suggestions.end(),
            [](const ScoredClass& a, const ScoredClass& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.class_id < b.class_id;
            });
  if (top_k >= 0 && int(suggestions.size()) > top_k)
    suggestions.resize(std::size_t(top_k));
}

struct PredictionRecord {
  std::string ticket_id;
  std::string task;  // "contact_type" or "reply_template"
  RankedSuggestions suggestions;
};

inline std::string to_dump_line(const PredictionRecord& record) {
  config::json suggestions = config::json::array();
  for (const auto& s : record.suggestions)
    suggestions.push_back(config::json::array({s.class_id, s.score}));
  config::json j = {{"ticket_id", record.ticket_id},
                    {"task", record.task},
                    {"suggestions", suggestions}};
  return j.dump();
}

inline std::string to_dump(const std::vector<PredictionRecord>& records) {
  std::string out;
  for (const auto& record : records) {
    out += to_dump_line(record);
    out += '\n';
  }
  return out;
}

// Extra fields on a line (audit logs append chosen values) are ignored.
inline std::vector<PredictionRecord> parse_dump(const std::string& content) {
  std::vector<PredictionRecord> records;
  int line_no = 0;
  for (const auto& line : split_string(content, '\n')) {
    ++line_no;
    if (trim(line).empty()) continue;
    config::json j;
    try {
      j = config::json::parse(line);
    } catch (const config::json::exception& e) {
      throw DataError("prediction dump line " + std::to_string(line_no) + ": " + e.what());
    }
    const std::string ctx = "prediction dump line " + std::to_string(line_no);
    PredictionRecord record;
    record.ticket_id = config::get_as<std::string>(j, "ticket_id", ctx);
    record.task = config::get_as<std::string>(j, "task", ctx);
    for (const auto& pair : config::require(j, "suggestions", ctx)) {
      if (!pair.is_array() || pair.size() != 2)
        throw DataError(ctx + ": suggestion entries must be [class, score]");
      record.suggestions.push_back(
          ScoredClass{pair[0].get<std::string>(), pair[1].get<double>()});
    }
    records.push_back(std::move(record));
  }
  return records;
}

}  // namespace cota
