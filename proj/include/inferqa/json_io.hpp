#pragma once

// JSON mappings for the corpus record types. Keys are emitted in sorted
// order (nlohmann::json's default object), which keeps files byte-stable.

#include "inferqa/corpus.hpp"
#include "json.hpp"

#include <string>

namespace inferqa {

using json = nlohmann::json;

void to_json(json& j, const Hint& h);
void from_json(const json& j, Hint& h);
void to_json(json& j, const Question& q);
void from_json(const json& j, Question& q);
void to_json(json& j, const Passage& p);
void from_json(const json& j, Passage& p);
void to_json(json& j, const ModelAnswer& a);
void from_json(const json& j, ModelAnswer& a);
void to_json(json& j, const RelevanceJudgment& r);
void from_json(const json& j, RelevanceJudgment& r);

/// Parses one JSON object per non-blank line, reporting "file:line: ..." on
/// failure through CorpusError. Optionally records each record's line.
template <typename T>
std::vector<T> parse_jsonl(std::string_view content, std::string_view file_label,
                           std::vector<std::size_t>* line_numbers = nullptr) {
  std::vector<T> records;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    auto end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    auto line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      records.push_back(json::parse(line).get<T>());
      if (line_numbers != nullptr) line_numbers->push_back(line_no);
    } catch (const std::exception& e) {
      throw CorpusError(std::string(file_label) + ":" + std::to_string(line_no) +
                        ": malformed record: " + e.what());
    }
  }
  return records;
}

std::string dump_jsonl(std::span<const json> records);

}  // namespace inferqa
