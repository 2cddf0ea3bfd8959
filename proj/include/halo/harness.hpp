#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "halo/datasets.hpp"
#include "halo/error.hpp"

namespace halo {

struct ItemResult {
  std::string id;
  std::string predicted;
  bool correct = false;
  double runtime_s = 0.0;
  std::string stratum;
  std::string error;  // set when the engine failed on this item

  bool operator==(const ItemResult&) const = default;
};

struct EvalReport {
  std::vector<ItemResult> per_item;
  std::string metric_name;
  double metric_value = 0.0;
  std::map<std::string, double> per_stratum;
};

/// 100 * correct / total rounded half-up to one decimal, in exact integer arithmetic.
inline double percent_one_decimal(std::size_t correct, std::size_t total) {
  if (total == 0) throw Error(Errc::Validation, "percentage of zero items");
  const auto tenths = (2000 * static_cast<unsigned long long>(correct) + total) / (2 * static_cast<unsigned long long>(total));
  return static_cast<double>(tenths) / 10.0;
}

inline std::string metric_name_for(TaskKind kind) { return kind == TaskKind::Code ? "pass@1" : "accuracy"; }

/// What the grader sees: the last fenced block for code, the last boxed value for math.
inline std::string answer_for_grading(TaskKind kind, const std::string& final_answer) {
  switch (kind) {
    case TaskKind::Code:
      return normalize_answer(final_answer, TaskKind::Code);
    case TaskKind::Math:
      if (auto boxed = extract_boxed(final_answer)) return *boxed;
      return final_answer;
    case TaskKind::Choice:
      return final_answer;
  }
  return final_answer;
}

/// Aggregates graded rows; the result does not depend on row order.
inline EvalReport compute_metric(std::vector<ItemResult> rows, std::string metric_name) {
  if (rows.empty()) throw Error(Errc::Validation, "no rows to score");
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  EvalReport report;
  report.metric_name = std::move(metric_name);
  std::map<std::string, std::pair<std::size_t, std::size_t>> strata;  // correct, total
  std::size_t correct = 0;
  for (const auto& r : rows) {
    correct += r.correct;
    auto& s = strata[r.stratum];
    s.first += r.correct;
    ++s.second;
  }
  report.metric_value = percent_one_decimal(correct, rows.size());
  for (const auto& [name, counts] : strata) report.per_stratum[name] = percent_one_decimal(counts.first, counts.second);
  report.per_item = std::move(rows);
  return report;
}

struct BenchOptions {
  int parallelism = 4;
};

/// Solves and grades every item with at most `parallelism` items in flight.
/// `solve` returns the predicted answer; `grade` decides correctness. An
/// exception from either marks the item incorrect with the error recorded.
template <class Solve, class Grade>
EvalReport run_bench(const std::vector<BenchmarkItem>& items, Solve&& solve, Grade&& grade,
                     const BenchOptions& options = {}) {
  if (items.empty()) throw Error(Errc::Validation, "no benchmark items");
  std::vector<ItemResult> rows(items.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < items.size(); i = next++) {
      const auto& item = items[i];
      auto& row = rows[i];
      row.id = item.id;
      row.stratum = item.stratum;
      auto start = std::chrono::steady_clock::now();
      try {
        row.predicted = solve(item);
        row.correct = grade(item, row.predicted);
      } catch (const std::exception& e) {
        row.correct = false;
        row.error = e.what();
      }
      row.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
  };
  const int n = std::max(1, std::min<int>(options.parallelism, static_cast<int>(items.size())));
  std::vector<std::jthread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();
  return compute_metric(std::move(rows), metric_name_for(items.front().kind));
}

inline nlohmann::json to_json(const EvalReport& report) {
  auto items = nlohmann::json::array();
  for (const auto& r : report.per_item) {
    nlohmann::json row{{"id", r.id},           {"predicted", r.predicted}, {"correct", r.correct},
                       {"runtime_s", r.runtime_s}, {"stratum", r.stratum}};
    if (!r.error.empty()) row["error"] = r.error;
    items.push_back(std::move(row));
  }
  return {{"metric_name", report.metric_name},
          {"metric_value", report.metric_value},
          {"per_stratum", report.per_stratum},
          {"per_item", items}};
}

inline std::string render_table(const EvalReport& report) {
  std::size_t width = 7;
  for (const auto& [name, v] : report.per_stratum) width = std::max(width, name.size());
  std::string out;
  char buf[512];
  std::snprintf(buf, sizeof buf, "%-*s  %8s\n", static_cast<int>(width), "stratum", report.metric_name.c_str());
  out += buf;
  for (const auto& [name, v] : report.per_stratum) {
    std::snprintf(buf, sizeof buf, "%-*s  %8.1f\n", static_cast<int>(width), name.c_str(), v);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "%-*s  %8.1f  (%zu items)\n", static_cast<int>(width), "overall",
                report.metric_value, report.per_item.size());
  out += buf;
  return out;
}

}  // namespace halo
