#include "selfrank/embedding.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "selfrank/random.hpp"

namespace selfrank {

std::optional<int> EmbeddingMatrix::index_of(std::string_view id) const {
  for (int i = 0; i < static_cast<int>(row_ids.size()); ++i) {
    if (row_ids[i] == id) return i;
  }
  return std::nullopt;
}

const double* EmbeddingMatrix::row_for(std::string_view id) const {
  const auto idx = index_of(id);
  if (!idx) throw ValidationError("unknown embedding id: " + std::string(id));
  return rows.row(*idx);
}

double cosine_similarity(const double* u, const double* v, int n) {
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (int i = 0; i < n; ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu <= 0.0 || nv <= 0.0) throw DomainError("cosine similarity of a zero-norm vector");
  double c = dot / (std::sqrt(nu) * std::sqrt(nv));
  if (c > 1.0) c = 1.0;
  if (c < -1.0) c = -1.0;
  return c;
}

double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v) {
  if (u.size() != v.size()) throw DomainError("cosine similarity dimension mismatch");
  if (u.empty()) throw DomainError("cosine similarity of an empty vector");
  return cosine_similarity(u.data(), v.data(), static_cast<int>(u.size()));
}

EmbeddingVector hash_embed(std::string_view text, int dim) {
  if (dim < 2) throw DomainError("embedding dimension must be at least 2");
  EmbeddingVector out(static_cast<std::size_t>(dim), 0.0);
  // Normalize before extracting trigrams: lowercase, punctuation to spaces,
  // runs of whitespace collapsed. Texts that differ only in case or
  // punctuation land on (nearly) the same vector.
  std::string cleaned;
  cleaned.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isspace(c) || std::ispunct(c)) {
      pending_space = !cleaned.empty();
      continue;
    }
    if (pending_space) {
      cleaned.push_back(' ');
      pending_space = false;
    }
    cleaned.push_back(static_cast<char>(std::tolower(c)));
  }
  const std::string padded = " " + cleaned + " ";
  bool any = false;
  if (padded.size() >= 3 && !cleaned.empty()) {
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
      const std::uint64_t h = fnv1a64(std::string_view(padded).substr(i, 3));
      const std::size_t bucket = static_cast<std::size_t>(h & 0xffffffffull) % dim;
      const double sign = (h >> 32) & 1 ? -1.0 : 1.0;
      out[bucket] += sign;
      any = true;
    }
  }
  if (!any) {
    log_warning("hash_embed: text has no trigrams; using a fixed basis vector");
    out[0] = 1.0;
    return out;
  }
  double norm = 0.0;
  for (double x : out) norm += x * x;
  if (norm <= 0.0) {
    // Signed counts cancelled exactly; fall back like the empty case.
    log_warning("hash_embed: signed trigram counts cancelled; using a fixed basis vector");
    out.assign(static_cast<std::size_t>(dim), 0.0);
    out[0] = 1.0;
    return out;
  }
  norm = std::sqrt(norm);
  for (double& x : out) x /= norm;
  return out;
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("embedding file has no header: " + path.string());
  int dim = 0;
  try {
    dim = nlohmann::json::parse(line).at("dim").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("embedding file " + path.string() + " header: " + e.what());
  }
  if (dim < 2) throw SchemaError("embedding file " + path.string() + " declares dim < 2");

  std::vector<std::string> ids;
  std::unordered_map<std::string, std::size_t> seen;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      const auto id = j.at("id").get<std::string>();
      const auto vec = j.at("vec").get<std::vector<double>>();
      if (static_cast<int>(vec.size()) != dim) {
        throw SchemaError("embedding file " + path.string() + " line " +
                          std::to_string(line_no) + ": row \"" + id + "\" has dimension " +
                          std::to_string(vec.size()) + ", expected " + std::to_string(dim));
      }
      const auto [it, inserted] = seen.emplace(id, line_no);
      if (!inserted) {
        throw ValidationError("embedding file " + path.string() + " line " +
                              std::to_string(line_no) + ": duplicate id \"" + id +
                              "\" (first seen on line " + std::to_string(it->second) + ")");
      }
      ids.push_back(id);
      values.insert(values.end(), vec.begin(), vec.end());
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("embedding file " + path.string() + " line " + std::to_string(line_no) +
                        ": " + e.what());
    }
  }
  EmbeddingMatrix m;
  m.row_ids = std::move(ids);
  m.rows = Mat(static_cast<int>(m.row_ids.size()), dim);
  m.rows.v = std::move(values);
  return m;
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write embedding file: " + path.string());
  out << nlohmann::json{{"dim", m.dim()}}.dump() << '\n';
  for (int i = 0; i < m.size(); ++i) {
    nlohmann::json j{{"id", m.row_ids[i]},
                     {"vec", std::vector<double>(m.rows.row(i), m.rows.row(i) + m.dim())}};
    out << j.dump() << '\n';
  }
  out.flush();
  if (!out) throw IoError("failed writing embedding file: " + path.string());
}

}  // namespace selfrank
