#pragma once

// Offline metrics: accuracy, Hits@k, combined accuracy, parent-credit
// accuracy for tree outputs, per-class precision/recall/F1 against class
// frequency, and a paired-bootstrap run comparison.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cota/common.hpp"
#include "cota/config.hpp"
#include "cota/corpus.hpp"
#include "cota/suggestions.hpp"

namespace cota::eval {

using corpus::ContactTypeTree;

namespace detail {

inline std::vector<std::string> dedup_ranked(const RankedSuggestions& ranked) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& s : ranked)
    if (seen.insert(s.class_id).second) out.push_back(s.class_id);
  return out;
}

}  // namespace detail

inline double accuracy(const std::vector<RankedSuggestions>& predictions,
                       const std::vector<std::string>& truths) {
  if (predictions.size() != truths.size())
    throw DataError("accuracy: prediction and truth counts differ");
  if (predictions.empty()) throw DataError("accuracy: empty evaluation set");
  int correct = 0;
  for (std::size_t i = 0; i < truths.size(); ++i)
    if (!predictions[i].empty() && predictions[i][0].class_id == truths[i]) ++correct;
  return double(correct) / double(truths.size());
}

// Duplicate predictions are removed before counting.
inline double hits_at_k(const std::vector<RankedSuggestions>& predictions,
                        const std::vector<std::string>& truths, int k) {
  if (predictions.size() != truths.size())
    throw DataError("hits_at_k: prediction and truth counts differ");
  if (predictions.empty()) throw DataError("hits_at_k: empty evaluation set");
  if (k < 1) throw UsageError("hits_at_k: k must be >= 1");
  int hits = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const auto ranked = detail::dedup_ranked(predictions[i]);
    for (int r = 0; r < k && r < int(ranked.size()); ++r) {
      if (ranked[std::size_t(r)] == truths[i]) {
        ++hits;
        break;
      }
    }
  }
  return double(hits) / double(truths.size());
}

// Fraction of tickets whose rank-1 predictions are simultaneously correct
// on both tasks.
inline double combined_accuracy(const std::vector<RankedSuggestions>& pred_a,
                                const std::vector<std::string>& truth_a,
                                const std::vector<RankedSuggestions>& pred_b,
                                const std::vector<std::string>& truth_b) {
  if (pred_a.size() != truth_a.size() || pred_b.size() != truth_b.size() ||
      pred_a.size() != pred_b.size())
    throw DataError("combined_accuracy: misaligned inputs");
  if (pred_a.empty()) throw DataError("combined_accuracy: empty evaluation set");
  int correct = 0;
  for (std::size_t i = 0; i < pred_a.size(); ++i) {
    const bool a = !pred_a[i].empty() && pred_a[i][0].class_id == truth_a[i];
    const bool b = !pred_b[i].empty() && pred_b[i][0].class_id == truth_b[i];
    if (a && b) ++correct;
  }
  return double(correct) / double(pred_a.size());
}

// A prediction counts when it equals the truth or the truth's parent; a
// root truth admits only the exact match.
inline double accuracy_plus_parent(const std::vector<RankedSuggestions>& predictions,
                                   const std::vector<std::string>& truths,
                                   const ContactTypeTree& tree) {
  if (predictions.size() != truths.size())
    throw DataError("accuracy_plus_parent: prediction and truth counts differ");
  if (predictions.empty()) throw DataError("accuracy_plus_parent: empty evaluation set");
  int correct = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (predictions[i].empty()) continue;
    const std::string& predicted = predictions[i][0].class_id;
    if (!tree.contains(truths[i]))
      throw DataError("accuracy_plus_parent: truth not in tree: " + truths[i]);
    if (predicted == truths[i]) {
      ++correct;
      continue;
    }
    auto parent = tree.parent.find(truths[i]);
    if (parent != tree.parent.end() && predicted == parent->second) ++correct;
  }
  return double(correct) / double(truths.size());
}

struct ClassMetrics {
  std::string class_id;
  int frequency = 0;  // occurrences in the truth set
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Rank-1 confusion summary per class, sorted by descending truth frequency
// (ties by class id). Never-predicted classes carry F1 = 0.
inline std::vector<ClassMetrics> per_class_f1_vs_frequency(
    const std::vector<RankedSuggestions>& predictions,
    const std::vector<std::string>& truths) {
  if (predictions.size() != truths.size())
    throw DataError("per_class_f1: prediction and truth counts differ");
  if (predictions.empty()) throw DataError("per_class_f1: empty evaluation set");
  std::map<std::string, int> truth_count, predicted_count, true_positive;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    ++truth_count[truths[i]];
    if (predictions[i].empty()) continue;
    const std::string& predicted = predictions[i][0].class_id;
    ++predicted_count[predicted];
    if (predicted == truths[i]) ++true_positive[predicted];
  }
  std::set<std::string> classes;
  for (const auto& [c, _] : truth_count) classes.insert(c);
  for (const auto& [c, _] : predicted_count) classes.insert(c);
  std::vector<ClassMetrics> table;
  for (const auto& c : classes) {
    ClassMetrics m;
    m.class_id = c;
    m.frequency = truth_count.count(c) ? truth_count.at(c) : 0;
    const int tp = true_positive.count(c) ? true_positive.at(c) : 0;
    const int predicted = predicted_count.count(c) ? predicted_count.at(c) : 0;
    m.precision = predicted > 0 ? double(tp) / double(predicted) : 0.0;
    m.recall = m.frequency > 0 ? double(tp) / double(m.frequency) : 0.0;
    m.f1 = (m.precision + m.recall) > 0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    table.push_back(std::move(m));
  }
  std::sort(table.begin(), table.end(), [](const ClassMetrics& a, const ClassMetrics& b) {
    if (a.frequency != b.frequency) return a.frequency > b.frequency;
    return a.class_id < b.class_id;
  });
  return table;
}

// Plot-ready delimited table.
inline std::string class_table_to_text(const std::vector<ClassMetrics>& table) {
  std::string out = "class\tfrequency\tprecision\trecall\tf1\n";
  for (const auto& m : table) {
    out += m.class_id;
    out += '\t';
    out += std::to_string(m.frequency);
    out += '\t';
    out += format_double(m.precision);
    out += '\t';
    out += format_double(m.recall);
    out += '\t';
    out += format_double(m.f1);
    out += '\n';
  }
  return out;
}

// --- Report ---------------------------------------------------------------------

struct EvalReport {
  int k = 3;
  std::map<std::string, double> accuracy;
  std::map<std::string, double> hits_at_k;
  std::map<std::string, double> accuracy_plus_parent;  // tree tasks only
  double combined = -1.0;  // -1 when fewer than two tasks
  std::map<std::string, std::vector<ClassMetrics>> per_class;
};

struct TaskPredictions {
  std::vector<RankedSuggestions> predictions;
  std::vector<std::string> truths;
};

inline EvalReport build_report(const std::map<std::string, TaskPredictions>& tasks,
                               const ContactTypeTree* tree, int k) {
  EvalReport report;
  report.k = k;
  for (const auto& [task, data] : tasks) {
    report.accuracy[task] = accuracy(data.predictions, data.truths);
    report.hits_at_k[task] = hits_at_k(data.predictions, data.truths, k);
    report.per_class[task] = per_class_f1_vs_frequency(data.predictions, data.truths);
    if (tree && task == "contact_type")
      report.accuracy_plus_parent[task] =
          accuracy_plus_parent(data.predictions, data.truths, *tree);
  }
  if (tasks.count("contact_type") && tasks.count("reply_template")) {
    const auto& a = tasks.at("contact_type");
    const auto& b = tasks.at("reply_template");
    report.combined =
        combined_accuracy(a.predictions, a.truths, b.predictions, b.truths);
  }
  return report;
}

inline config::json report_to_json(const EvalReport& report) {
  config::json j = {{"k", report.k},
                    {"accuracy", report.accuracy},
                    {"hits_at_k", report.hits_at_k},
                    {"accuracy_plus_parent", report.accuracy_plus_parent}};
  if (report.combined >= 0) j["combined_accuracy"] = report.combined;
  config::json per_class = config::json::object();
  for (const auto& [task, table] : report.per_class) {
    config::json rows = config::json::array();
    for (const auto& m : table)
      rows.push_back({{"class", m.class_id},
                      {"frequency", m.frequency},
                      {"precision", m.precision},
                      {"recall", m.recall},
                      {"f1", m.f1}});
    per_class[task] = rows;
  }
  j["per_class"] = per_class;
  return j;
}

inline std::string report_to_text(const EvalReport& report) {
  std::string out;
  out += "metric";
  for (const auto& [task, _] : report.accuracy) out += "\t" + task;
  out += '\n';
  auto row = [&](const std::string& name, const std::map<std::string, double>& values) {
    out += name;
    for (const auto& [task, _] : report.accuracy) {
      out += '\t';
      out += values.count(task) ? format_double(values.at(task)) : "-";
    }
    out += '\n';
  };
  row("accuracy", report.accuracy);
  row("hits_at_" + std::to_string(report.k), report.hits_at_k);
  row("accuracy_plus_parent", report.accuracy_plus_parent);
  if (report.combined >= 0) {
    out += "combined_accuracy\t";
    out += format_double(report.combined);
    out += '\n';
  }
  return out;
}

// --- Run comparison ----------------------------------------------------------------

struct RunComparison {
  double delta = 0.0;            // mean(a) - mean(b) on the observed data
  double p_one_sided = 1.0;      // P(resampled delta <= 0)
  double p_two_sided = 1.0;
};

// Paired bootstrap over per-example correctness indicators.
inline RunComparison compare_runs(const std::vector<bool>& correct_a,
                                  const std::vector<bool>& correct_b,
                                  int resamples = 10000, std::uint64_t seed = 0) {
  if (correct_a.size() != correct_b.size())
    throw DataError("compare_runs: mismatched evaluation sets");
  if (correct_a.empty()) throw DataError("compare_runs: empty evaluation set");
  const std::size_t n = correct_a.size();
  RunComparison result;
  double sum_a = 0, sum_b = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sum_a += correct_a[i] ? 1 : 0;
    sum_b += correct_b[i] ? 1 : 0;
  }
  result.delta = (sum_a - sum_b) / double(n);

  Rng rng(seed);
  int non_positive = 0, non_negative = 0;
  for (int r = 0; r < resamples; ++r) {
    std::int64_t diff = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t pick = std::size_t(rng.uniform_int(0, std::int64_t(n) - 1));
      diff += int(correct_a[pick]) - int(correct_b[pick]);
    }
    if (diff <= 0) ++non_positive;
    if (diff >= 0) ++non_negative;
  }
  result.p_one_sided = double(non_positive) / double(resamples);
  result.p_two_sided =
      std::min(1.0, 2.0 * std::min(result.p_one_sided,
                                   double(non_negative) / double(resamples)));
  return result;
}

}  // namespace cota::eval
