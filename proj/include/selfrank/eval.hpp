#ifndef SELFRANK_EVAL_HPP_
#define SELFRANK_EVAL_HPP_

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "selfrank/embedding.hpp"
#include "selfrank/errors.hpp"
#include "selfrank/linalg.hpp"
#include "selfrank/random.hpp"

namespace selfrank {

// Geometric mean of modified 1..4-gram precisions (add-one smoothing on the
// n >= 2 counts) times the brevity penalty exp(1 - r/c) when the candidate
// is shorter than the closest reference. Zero unigram overlap scores 0.
double bleu4(const std::vector<std::string>& candidate,
             const std::vector<std::vector<std::string>>& references);

// min(precision, recall) over the pooled clipped 1..4-gram overlap.
double gleu(const std::vector<std::string>& candidate, const std::vector<std::string>& reference);

// Exact-match unigram alignment (greedy, preferring runs that continue the
// previous match), harmonic mean weighted toward precision (alpha = 0.9),
// chunk penalty 0.5 * (chunks/matches)^3.
double meteor_exact(const std::vector<std::string>& candidate,
                    const std::vector<std::string>& reference);

// Lowercase + strip ASCII punctuation + collapse whitespace.
std::string normalize_answer(std::string_view text);

int exact_match(std::string_view candidate, std::string_view reference);

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};
// Token multiset overlap on normalized texts. Two empty texts count as a
// perfect match; one empty text scores zero.
PRF token_prf(std::string_view candidate, std::string_view reference);

// Chance-corrected agreement between two equal-length label sequences.
double cohen_kappa(const std::vector<std::string>& labels_a,
                   const std::vector<std::string>& labels_b);

// Monte Carlo probability that a uniform random permutation of k items
// reproduces a fixed reference order; converges to 1/k!.
double random_rank_match_probability(int k, int trials, RngStream& rng);

struct Projection {
  Mat points;  // n x 2
  std::array<double, 2> explained_variance{0.0, 0.0};  // fractions, descending
};

// Column-centered top-2 singular-vector projection with per-component
// explained-variance fractions. All-identical rows project to zeros.
Projection project_2d(const EmbeddingMatrix& embeddings);

struct MetricSummary {
  double mean = 0.0;
  double ci95 = 0.0;  // half-width, normal approximation
  int n = 0;
};

// Mean and 1.96 * sd / sqrt(n) half-width; a single sample gets half-width 0
// and a warning.
MetricSummary eval_report(const std::vector<double>& values);

}  // namespace selfrank

#endif  // SELFRANK_EVAL_HPP_
