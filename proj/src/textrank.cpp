#include "selfrank/textrank.hpp"

#include <algorithm>
#include <cmath>

namespace selfrank {

SimilarityGraph build_graph(const EmbeddingMatrix& embeddings, double min_similarity) {
  const int n = embeddings.size();
  if (n < 1) throw ValidationError("cannot build a similarity graph with no rows");
  const int d = embeddings.dim();
  for (int i = 0; i < n; ++i) {
    double norm = 0.0;
    const double* row = embeddings.rows.row(i);
    for (int c = 0; c < d; ++c) norm += row[c] * row[c];
    if (norm <= 0.0) {
      throw DomainError("zero-norm embedding for answer id: " + embeddings.row_ids[i]);
    }
  }
  SimilarityGraph g;
  g.n = n;
  g.weights = Mat(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double cos = cosine_similarity(embeddings.rows.row(i), embeddings.rows.row(j), d);
      const double w = cos >= min_similarity ? std::max(cos, 0.0) : 0.0;
      g.weights.at(i, j) = w;
      g.weights.at(j, i) = w;
    }
  }
  return g;
}

std::vector<double> textrank(const SimilarityGraph& graph, double d, double tol, int max_iter) {
  if (!(d > 0.0) || d >= 1.0) throw DomainError("damping factor must lie in (0, 1)");
  if (tol <= 0.0) throw DomainError("tolerance must be positive");
  if (max_iter < 1) throw DomainError("max_iter must be positive");
  const int n = graph.n;
  if (n < 1) throw ValidationError("empty graph");
  if (graph.weights.rows != n || graph.weights.cols != n) {
    throw ValidationError("graph weight matrix shape does not match node count");
  }

  std::vector<double> row_sum(static_cast<std::size_t>(n), 0.0);
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    const double* row = graph.weights.row(j);
    for (int k = 0; k < n; ++k) {
      if (row[k] < 0.0) throw ValidationError("negative edge weight in similarity graph");
      s += row[k];
    }
    row_sum[static_cast<std::size_t>(j)] = s;
  }

  std::vector<double> w(static_cast<std::size_t>(n), 1.0);
  std::vector<double> next(static_cast<std::size_t>(n), 0.0);
  for (int iter = 0; iter < max_iter; ++iter) {
    // Jacobi update: contributions are scattered from each node j to its
    // neighbors, normalized by j's total outgoing similarity.
    std::fill(next.begin(), next.end(), 1.0 - d);
    for (int j = 0; j < n; ++j) {
      const double rs = row_sum[static_cast<std::size_t>(j)];
      if (rs <= 0.0) continue;
      const double share = d * w[static_cast<std::size_t>(j)] / rs;
      const double* row = graph.weights.row(j);
      for (int i = 0; i < n; ++i) {
        if (row[i] > 0.0) next[static_cast<std::size_t>(i)] += share * row[i];
      }
    }
    double delta = 0.0;
    for (int i = 0; i < n; ++i) {
      delta = std::max(delta,
                       std::abs(next[static_cast<std::size_t>(i)] - w[static_cast<std::size_t>(i)]));
    }
    w.swap(next);
    if (delta < tol) break;
  }
  return w;
}

RankedAnswerList rank_answers(const std::vector<std::pair<std::string, std::string>>& answers,
                              const EmbeddingMatrix& embeddings, double d, double tol,
                              int max_iter, double min_similarity) {
  if (answers.empty()) throw ValidationError("no answers to rank");
  // Align embedding rows to the answer list order.
  EmbeddingMatrix aligned;
  aligned.row_ids.reserve(answers.size());
  aligned.rows = Mat(static_cast<int>(answers.size()), embeddings.dim());
  for (std::size_t i = 0; i < answers.size(); ++i) {
    const double* row = embeddings.row_for(answers[i].first);
    std::copy(row, row + embeddings.dim(), aligned.rows.row(static_cast<int>(i)));
    aligned.row_ids.push_back(answers[i].first);
  }

  const SimilarityGraph graph = build_graph(aligned, min_similarity);
  const std::vector<double> weights = textrank(graph, d, tol, max_iter);

  RankedAnswerList ranked;
  ranked.reserve(answers.size());
  for (std::size_t i = 0; i < answers.size(); ++i) {
    ranked.push_back({answers[i].first, answers[i].second, weights[i]});
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedAnswer& a, const RankedAnswer& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    return a.answer_id < b.answer_id;
  });
  return ranked;
}

}  // namespace selfrank
