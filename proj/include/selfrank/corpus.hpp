#ifndef SELFRANK_CORPUS_HPP_
#define SELFRANK_CORPUS_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "selfrank/errors.hpp"

namespace selfrank {

enum class Split { train, dev, test };

std::string to_string(Split s);
Split split_from_string(std::string_view s);

// One question/reference-answer record of a dataset file.
struct QARecord {
  std::string id;
  std::string question;
  std::string reference_answer;
  Split split = Split::train;

  bool operator==(const QARecord&) const = default;
};

// Reads a JSONL dataset with keys {id, question, answer, split}. Records come
// back in file order; duplicate ids and malformed lines are errors that name
// the offending line number.
std::vector<QARecord> load_dataset(const std::filesystem::path& path);

// Replaces the single "<Q>" placeholder with the question, verbatim.
// Zero or multiple placeholders are a template error.
std::string apply_prompt(std::string_view prompt_template, std::string_view question);

// Pipeline stage identifiers, in execution order.
const std::vector<std::string>& stage_names();
bool is_stage_name(std::string_view name);

inline constexpr int kStageSchemaVersion = 1;

namespace detail {

void check_stage_name(const std::string& stage);
std::ofstream open_artifact_for_write(const std::filesystem::path& path);
// Reads the artifact header line and verifies stage/schema. Returns the seed.
std::uint64_t read_artifact_header(std::ifstream& in, const std::filesystem::path& path,
                                   const std::string& expected_stage);

}  // namespace detail

// Writes one stage artifact: a header line {"stage", "schema_version", "seed"}
// followed by one JSON object per record. Record types provide to_json/from_json
// (nlohmann ADL). Round trip is bit-exact on the canonical form.
template <typename Record>
std::filesystem::path save_stage(const std::filesystem::path& path, const std::string& stage,
                                 std::uint64_t seed, const std::vector<Record>& records) {
  detail::check_stage_name(stage);
  std::ofstream out = detail::open_artifact_for_write(path);
  nlohmann::json header{{"stage", stage}, {"schema_version", kStageSchemaVersion}, {"seed", seed}};
  out << header.dump() << '\n';
  for (const Record& r : records) {
    nlohmann::json j = r;
    out << j.dump() << '\n';
  }
  out.flush();
  if (!out) throw IoError("failed writing artifact: " + path.string());
  return path;
}

template <typename Record>
std::vector<Record> load_stage(const std::filesystem::path& path, const std::string& stage) {
  detail::check_stage_name(stage);
  std::ifstream in(path);
  if (!in) throw IoError("cannot open artifact: " + path.string());
  detail::read_artifact_header(in, path, stage);
  std::vector<Record> records;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      records.push_back(j.get<Record>());
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("artifact " + path.string() + " line " + std::to_string(line_no) +
                        ": " + e.what());
    }
  }
  return records;
}

}  // namespace selfrank

#endif  // SELFRANK_CORPUS_HPP_
