#include "selfrank/corpus.hpp"

#include <unordered_map>

namespace selfrank {

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "dev") return Split::dev;
  if (s == "test") return Split::test;
  throw ParseError("unknown split value: " + std::string(s));
}

namespace {

std::string trimmed(std::string_view s) {
  const char* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::vector<QARecord> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset: " + path.string());
  std::vector<QARecord> records;
  std::unordered_map<std::string, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trimmed(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("dataset " + path.string() + " line " + std::to_string(line_no) +
                       ": " + e.what());
    }
    QARecord rec;
    try {
      rec.id = j.at("id").get<std::string>();
      rec.question = j.at("question").get<std::string>();
      rec.reference_answer = j.at("answer").get<std::string>();
      rec.split = split_from_string(j.at("split").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("dataset " + path.string() + " line " + std::to_string(line_no) +
                       ": " + e.what());
    }
    if (trimmed(rec.question).empty()) {
      throw ValidationError("dataset " + path.string() + " line " + std::to_string(line_no) +
                            ": question is empty");
    }
    auto [it, inserted] = seen.emplace(rec.id, line_no);
    if (!inserted) {
      throw ValidationError("dataset " + path.string() + " line " + std::to_string(line_no) +
                            ": duplicate id \"" + rec.id + "\" (first seen on line " +
                            std::to_string(it->second) + ")");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::string apply_prompt(std::string_view prompt_template, std::string_view question) {
  constexpr std::string_view kPlaceholder = "<Q>";
  const auto first = prompt_template.find(kPlaceholder);
  if (first == std::string_view::npos) {
    throw ValidationError("prompt template has no <Q> placeholder");
  }
  if (prompt_template.find(kPlaceholder, first + 1) != std::string_view::npos) {
    throw ValidationError("prompt template has multiple <Q> placeholders");
  }
  std::string out;
  out.reserve(prompt_template.size() + question.size());
  out.append(prompt_template.substr(0, first));
  out.append(question);
  out.append(prompt_template.substr(first + kPlaceholder.size()));
  return out;
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> kNames = {"sft",  "generate", "rank",
                                                  "cluster", "pair", "train-reward",
                                                  "ppo",  "eval",     "project"};
  return kNames;
}

bool is_stage_name(std::string_view name) {
  for (const auto& s : stage_names()) {
    if (s == name) return true;
  }
  return false;
}

namespace detail {

void check_stage_name(const std::string& stage) {
  if (!is_stage_name(stage)) throw ValidationError("unknown stage name: " + stage);
}

std::ofstream open_artifact_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write artifact: " + path.string());
  return out;
}

std::uint64_t read_artifact_header(std::ifstream& in, const std::filesystem::path& path,
                                   const std::string& expected_stage) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("artifact has no header: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("artifact " + path.string() + " header: " + e.what());
  }
  if (!j.contains("stage") || !j.contains("schema_version") || !j.contains("seed")) {
    throw SchemaError("artifact " + path.string() + " header is missing fields");
  }
  const std::string stage = j.at("stage").get<std::string>();
  if (stage != expected_stage) {
    throw SchemaError("artifact " + path.string() + " was written by stage \"" + stage +
                      "\", expected \"" + expected_stage + "\"");
  }
  const int version = j.at("schema_version").get<int>();
  if (version != kStageSchemaVersion) {
    throw SchemaError("artifact " + path.string() + " has schema_version " +
                      std::to_string(version) + ", expected " +
                      std::to_string(kStageSchemaVersion));
  }
  return j.at("seed").get<std::uint64_t>();
}

}  // namespace detail

}  // namespace selfrank
