#ifndef SELFRANK_EMBEDDING_HPP_
#define SELFRANK_EMBEDDING_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "selfrank/errors.hpp"
#include "selfrank/linalg.hpp"

namespace selfrank {

using EmbeddingVector = std::vector<double>;

// Fixed-dimension embedding rows keyed by answer (or question) id.
struct EmbeddingMatrix {
  std::vector<std::string> row_ids;
  Mat rows;  // n x D

  int size() const { return rows.rows; }
  int dim() const { return rows.cols; }

  std::optional<int> index_of(std::string_view id) const;
  // Throws if the id is absent.
  const double* row_for(std::string_view id) const;
};

// u.v / (|u||v|), clamped into [-1, 1]. Zero-norm input is a domain error.
double cosine_similarity(const double* u, const double* v, int n);
double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v);

// Deterministic signed feature-hash embedding of character trigrams, L2
// normalized. The text is first normalized (lowercased, punctuation mapped
// to spaces, whitespace runs collapsed) and then padded with one space on
// each side, so single words still produce boundary trigrams and texts that
// differ only in case or punctuation embed identically. A text with no
// trigrams after normalization embeds as the first basis vector (with a
// warning).
EmbeddingVector hash_embed(std::string_view text, int dim = 256);

// File format: JSONL, header {"dim": D}, then {"id": str, "vec": [f, ...]}.
EmbeddingMatrix load_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m);

}  // namespace selfrank

#endif  // SELFRANK_EMBEDDING_HPP_
