#ifndef SELFRANK_TEXTRANK_HPP_
#define SELFRANK_TEXTRANK_HPP_

#include <string>
#include <utility>
#include <vector>

#include "selfrank/embedding.hpp"
#include "selfrank/errors.hpp"
#include "selfrank/linalg.hpp"

namespace selfrank {

// Complete undirected similarity graph over answers: symmetric, zero
// diagonal, nonnegative weights.
struct SimilarityGraph {
  int n = 0;
  Mat weights;  // n x n
};

// weights[i][j] = max(cosine(row_i, row_j), 0) for i != j. Entries below
// min_similarity are dropped to 0 (the default cutoff of 0 keeps every
// nonnegative edge).
SimilarityGraph build_graph(const EmbeddingMatrix& embeddings, double min_similarity = 0.0);

// Damped weighted ranking iteration, all nodes starting at 1:
//   W(i) <- (1 - d) + d * sum_j S(i,j) / rowsum(j) * W(j)
// stopping when the largest absolute change drops below tol or after
// max_iter rounds. A node whose row sum is zero contributes nothing and
// settles at 1 - d.
std::vector<double> textrank(const SimilarityGraph& graph, double d = 0.85, double tol = 1e-6,
                             int max_iter = 1000);

struct RankedAnswer {
  std::string answer_id;
  std::string text;
  double weight = 0.0;
};
// Sorted by weight descending, ties by ascending answer id.
using RankedAnswerList = std::vector<RankedAnswer>;

RankedAnswerList rank_answers(const std::vector<std::pair<std::string, std::string>>& answers,
                              const EmbeddingMatrix& embeddings, double d = 0.85,
                              double tol = 1e-6, int max_iter = 1000,
                              double min_similarity = 0.0);

}  // namespace selfrank

#endif  // SELFRANK_TEXTRANK_HPP_
