#pragma once

// Loaders for the three benchmark layouts:
//  - code:   JSON lines of {task_id, prompt, test, entry_point}
//  - choice: a directory of per-subject CSV tables (question, A, B, C, D, answer)
//  - math:   a directory tree of per-problem JSON {problem, level, type, solution}

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "halo/core.hpp"
#include "halo/grading.hpp"

namespace halo {

struct BenchmarkItem {
  std::string id;
  TaskKind kind = TaskKind::Math;
  std::string prompt;
  std::string reference;  // gold answer, or unit-test source for code items
  std::string stratum;
  std::string entry_point;  // code items only

  void validate() const {
    auto bad = [&](const std::string& why) { throw Error(Errc::Dataset, "item '" + id + "': " + why); };
    if (id.empty()) bad("empty id");
    if (text::trim(prompt).empty()) bad("empty prompt");
    switch (kind) {
      case TaskKind::Code:
        if (text::trim(reference).empty()) bad("code item without test source");
        if (entry_point.empty()) bad("code item without entry point");
        break;
      case TaskKind::Choice: {
        auto g = normalize_answer(reference, TaskKind::Choice);
        if (g.size() != 1 || g[0] < 'a' || g[0] > 'd') bad("choice gold must be a letter a-d");
        break;
      }
      case TaskKind::Math:
        if (text::trim(reference).empty()) bad("math item without gold answer");
        break;
    }
  }

  bool operator==(const BenchmarkItem&) const = default;
};

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Dataset, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

/// RFC 4180 rows: quoted fields may hold commas, doubled quotes and newlines.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view data) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool row_has_content = false;
  for (std::size_t i = 0; i < data.size(); ++i) {
    char c = data[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < data.size() && data[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        row_has_content = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        row_has_content = true;
        break;
      case '\r':
        break;
      case '\n':
        if (row_has_content || !field.empty()) {
          row.push_back(std::move(field));
          rows.push_back(std::move(row));
        }
        field.clear();
        row.clear();
        row_has_content = false;
        break;
      default:
        field.push_back(c);
        row_has_content = true;
    }
  }
  if (quoted) throw Error(Errc::Dataset, "unterminated quoted CSV field");
  if (row_has_content || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string code_prompt(const std::string& signature) {
  return "Complete the following Python function. Return the full function in one fenced python code block.\n\n"
         "```python\n" +
         signature + "\n```";
}

inline std::vector<BenchmarkItem> load_code_benchmark(const std::filesystem::path& jsonl) {
  std::vector<BenchmarkItem> items;
  std::istringstream in(detail::read_file(jsonl));
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    if (text::trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw Error(Errc::Dataset, jsonl.string() + ":" + std::to_string(line_no) + ": not a JSON object");
    }
    BenchmarkItem item;
    try {
      item.id = j.at("task_id").get<std::string>();
      item.prompt = code_prompt(j.at("prompt").get<std::string>());
      item.reference = j.at("test").get<std::string>();
      item.entry_point = j.at("entry_point").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::Dataset, jsonl.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    item.kind = TaskKind::Code;
    item.stratum = "code";
    item.validate();
    items.push_back(std::move(item));
  }
  return items;
}

inline std::string choice_prompt(const std::vector<std::string>& row) {
  return row[0] + "\n(A) " + row[1] + "\n(B) " + row[2] + "\n(C) " + row[3] + "\n(D) " + row[4] +
         "\n\nAnswer with the letter of the correct option only.";
}

/// Every `*.csv` in `dir`; the subject (stratum) is the file stem without a `_test`/`_dev`/`_val` suffix.
inline std::vector<BenchmarkItem> load_choice_benchmark(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(Errc::Dataset, "no CSV tables in " + dir.string());
  std::vector<BenchmarkItem> items;
  for (const auto& file : files) {
    std::string subject = file.stem().string();
    for (std::string_view suffix : {"_test", "_dev", "_val"}) {
      if (text::ends_with(subject, suffix)) subject.resize(subject.size() - suffix.size());
    }
    auto rows = parse_csv(detail::read_file(file));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      auto& row = rows[r];
      if (r == 0 && row.size() >= 6 && text::lower(row[0]) == "question") continue;
      if (row.size() < 6) {
        throw Error(Errc::Dataset, file.string() + ": row " + std::to_string(r + 1) + " has " +
                                       std::to_string(row.size()) + " columns, expected 6");
      }
      BenchmarkItem item;
      item.id = subject + "/" + std::to_string(r);
      item.kind = TaskKind::Choice;
      item.prompt = choice_prompt(row);
      item.reference = text::lower(text::trim(row[5]));
      item.stratum = subject;
      item.validate();
      items.push_back(std::move(item));
    }
  }
  return items;
}

/// Every `*.json` under `dir`; stratum is "<type>/<level>", gold is the last boxed expression.
inline std::vector<BenchmarkItem> load_math_benchmark(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(Errc::Dataset, "no JSON problems under " + dir.string());
  std::vector<BenchmarkItem> items;
  for (const auto& file : files) {
    auto j = nlohmann::json::parse(detail::read_file(file), nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(Errc::Dataset, file.string() + ": not a JSON object");
    BenchmarkItem item;
    try {
      item.id = std::filesystem::relative(file, dir).generic_string();
      item.prompt = j.at("problem").get<std::string>() +
                    "\n\nGive the final answer inside \\boxed{}.";
      auto gold = extract_boxed(j.at("solution").get<std::string>());
      if (!gold) throw Error(Errc::Dataset, file.string() + ": solution has no boxed answer");
      item.reference = *gold;
      item.stratum = j.at("type").get<std::string>() + "/" + j.at("level").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::Dataset, file.string() + ": " + e.what());
    }
    item.kind = TaskKind::Math;
    item.validate();
    items.push_back(std::move(item));
  }
  return items;
}

inline void to_json(nlohmann::json& j, const BenchmarkItem& item) {
  j = nlohmann::json{{"id", item.id},           {"kind", item.kind},
                     {"prompt", item.prompt},   {"reference", item.reference},
                     {"stratum", item.stratum}, {"entry_point", item.entry_point}};
}

}  // namespace halo
