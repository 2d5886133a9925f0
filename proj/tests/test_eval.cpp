#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "selfrank/errors.hpp"
#include "selfrank/eval.hpp"
#include "selfrank/random.hpp"

using namespace selfrank;

namespace {

using Tokens = std::vector<std::string>;

Tokens rename(const Tokens& tokens, const std::map<std::string, std::string>& table) {
  Tokens out;
  for (const std::string& t : tokens) out.push_back(table.at(t));
  return out;
}

}  // namespace

TEST_CASE("a perfect candidate of length four or more scores full marks") {
  const Tokens text = {"alpha", "beta", "gamma", "delta"};
  CHECK(bleu4(text, {text}) == 1.0);
  CHECK(gleu(text, text) == 1.0);
  CHECK(exact_match("alpha beta gamma delta", "alpha beta gamma delta") == 1);
  const PRF prf = token_prf("alpha beta gamma delta", "alpha beta gamma delta");
  CHECK(prf.precision == 1.0);
  CHECK(prf.recall == 1.0);
  CHECK(prf.f1 == 1.0);
}

TEST_CASE("disjoint texts score zero on every overlap metric") {
  const Tokens a = {"one", "two", "three"};
  const Tokens b = {"four", "five", "six"};
  CHECK(bleu4(a, {b}) == 0.0);
  CHECK(gleu(a, b) == 0.0);
  CHECK(meteor_exact(a, b) == 0.0);
  CHECK(exact_match("one two three", "four five six") == 0);
  const PRF prf = token_prf("one two three", "four five six");
  CHECK(prf.precision == 0.0);
  CHECK(prf.recall == 0.0);
  CHECK(prf.f1 == 0.0);
}

TEST_CASE("a shorter prefix candidate pays exactly the brevity penalty") {
  // "the cat sat" vs "the cat sat down": every clipped precision is 1 after
  // smoothing (3/3 unigrams, then (2+1)/(2+1), (1+1)/(1+1), (0+1)/(0+1)),
  // so the score is the brevity penalty exp(1 - 4/3) alone.
  const Tokens cand = {"the", "cat", "sat"};
  const Tokens ref = {"the", "cat", "sat", "down"};
  CHECK(bleu4(cand, {ref}) == doctest::Approx(std::exp(-1.0 / 3.0)).epsilon(1e-12));
}

TEST_CASE("repeated candidate tokens are clipped to the reference counts") {
  // "the the the cat" vs "the cat": unigrams 2/4, bigrams (1+1)/(3+1),
  // trigrams (0+1)/(2+1), 4-grams (0+1)/(1+1); no brevity penalty since the
  // candidate is longer. Product 1/24, geometric mean (1/24)^(1/4).
  const Tokens cand = {"the", "the", "the", "cat"};
  const Tokens ref = {"the", "cat"};
  CHECK(bleu4(cand, {ref}) == doctest::Approx(std::pow(1.0 / 24.0, 0.25)).epsilon(1e-12));
}

TEST_CASE("multiple references contribute their best per-gram counts") {
  // Unigrams: "a" from the first reference, "b" from the second -> 2/2.
  // Bigram "a b" appears in neither -> (0+1)/(1+1); higher orders are empty.
  // Closest reference length is 2, so no brevity penalty.
  const Tokens cand = {"a", "b"};
  const std::vector<Tokens> refs = {{"a", "x"}, {"b", "y", "c"}};
  CHECK(bleu4(cand, refs) == doctest::Approx(std::pow(0.5, 0.25)).epsilon(1e-12));
}

TEST_CASE("an empty candidate scores zero and no references is an error") {
  CHECK(bleu4({}, {{"a"}}) == 0.0);
  CHECK_THROWS_AS(bleu4({"a"}, {}), ValidationError);
}

TEST_CASE("renaming tokens consistently never changes the ngram scores") {
  const std::map<std::string, std::string> table = {
      {"the", "k9"}, {"cat", "k7"}, {"sat", "k5"}, {"down", "k3"}};
  const Tokens cand = {"the", "cat", "sat"};
  const Tokens ref = {"the", "cat", "sat", "down"};
  CHECK(bleu4(cand, {ref}) == bleu4(rename(cand, table), {rename(ref, table)}));
  CHECK(gleu(cand, ref) == gleu(rename(cand, table), rename(ref, table)));
}

TEST_CASE("the pooled ngram fluency score is the smaller of precision and recall") {
  // Pooled 1..4-gram counts for "the cat sat" vs "the cat sat down":
  // candidate total 3+2+1 = 6, reference total 4+3+2+1 = 10, overlap 6.
  // Precision 1, recall 0.6.
  CHECK(gleu({"the", "cat", "sat"}, {"the", "cat", "sat", "down"}) == 0.6);

  // "a b a" vs "a c b a": overlap = two "a" + one "b" + bigram "b a" = 4,
  // candidate total 6, reference total 10, so min(4/6, 4/10) = 0.4.
  CHECK(gleu({"a", "b", "a"}, {"a", "c", "b", "a"}) == 0.4);

  CHECK_THROWS_AS(gleu({}, {"a"}), ValidationError);
  CHECK_THROWS_AS(gleu({"a"}, {}), ValidationError);
}

TEST_CASE("identical single tokens score one half under the chunk penalty") {
  // One match in one chunk: F = 1, penalty = 0.5 * (1/1)^3.
  CHECK(meteor_exact({"same"}, {"same"}) == 0.5);
}

TEST_CASE("identical ten-token texts lose only a thousandth of a half") {
  Tokens text;
  for (int i = 0; i < 10; ++i) text.push_back("w" + std::to_string(i));
  // Ten matches in one chunk: penalty = 0.5 * (1/10)^3 = 0.0005.
  CHECK(meteor_exact(text, text) == doctest::Approx(0.9995).epsilon(1e-12));
}

TEST_CASE("swapping the halves of a sentence doubles the chunk count") {
  // "c d a b" aligns to "a b c d" as two runs, so the fragmentation is 2/4
  // and the penalty 0.5 * 0.125 with perfect precision and recall.
  CHECK(meteor_exact({"c", "d", "a", "b"}, {"a", "b", "c", "d"}) ==
        doctest::Approx(0.9375).epsilon(1e-12));
}

TEST_CASE("surplus duplicate tokens reduce precision but not the match count") {
  // "a a" vs "a": one match, precision 1/2, recall 1, F = 0.5/0.55 = 10/11,
  // one chunk of one match so the penalty halves it to 5/11.
  CHECK(meteor_exact({"a", "a"}, {"a"}) == doctest::Approx(5.0 / 11.0).epsilon(1e-9));
  CHECK_THROWS_AS(meteor_exact({}, {"a"}), ValidationError);
}

TEST_CASE("answer normalization lowercases and strips punctuation") {
  CHECK(normalize_answer("The  Cat,  sat!") == "the cat sat");
  CHECK(normalize_answer("Hello-World") == "helloworld");
  CHECK(normalize_answer("  padded   out  ") == "padded out");
  CHECK(normalize_answer("?!...") == "");
  CHECK(normalize_answer("") == "");
}

TEST_CASE("exact match compares normalized text") {
  CHECK(exact_match("The cat.", "the cat") == 1);
  CHECK(exact_match("the  CAT", "The Cat!") == 1);
  CHECK(exact_match("the cat", "the cats") == 0);
}

TEST_CASE("token overlap splits the difference between neighbors") {
  const PRF prf = token_prf("a b", "b c");
  CHECK(prf.precision == 0.5);
  CHECK(prf.recall == 0.5);
  CHECK(prf.f1 == 0.5);
}

TEST_CASE("token overlap respects multiset counts") {
  // "a a b" vs "a b b": one "a" and one "b" overlap.
  const PRF prf = token_prf("a a b", "a b b");
  CHECK(prf.precision == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(prf.recall == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(prf.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("texts that normalize to nothing count as matching only each other") {
  const PRF both_empty = token_prf("?!", "...");
  CHECK(both_empty.precision == 1.0);
  CHECK(both_empty.recall == 1.0);
  CHECK(both_empty.f1 == 1.0);
  const PRF one_empty = token_prf("?!", "word");
  CHECK(one_empty.precision == 0.0);
  CHECK(one_empty.recall == 0.0);
  CHECK(one_empty.f1 == 0.0);
}

TEST_CASE("perfect agreement with varied labels earns the full coefficient") {
  const std::vector<std::string> labels = {"x", "y", "x", "z", "y", "x"};
  CHECK(cohen_kappa(labels, labels) == 1.0);
}

TEST_CASE("the agreement coefficient matches hand arithmetic on a two-by-two table") {
  // Confusion counts (20, 5; 10, 15): observed agreement 0.7, chance
  // agreement 0.5*0.6 + 0.5*0.4 = 0.5, coefficient 0.2/0.5.
  std::vector<std::string> a, b;
  auto add = [&](int count, const char* la, const char* lb) {
    for (int i = 0; i < count; ++i) {
      a.push_back(la);
      b.push_back(lb);
    }
  };
  add(20, "x", "x");
  add(5, "x", "y");
  add(10, "y", "x");
  add(15, "y", "y");
  CHECK(cohen_kappa(a, b) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(cohen_kappa(a, b) == cohen_kappa(b, a));
}

TEST_CASE("total disagreement on two balanced labels hits minus one") {
  CHECK(cohen_kappa({"x", "y"}, {"y", "x"}) == -1.0);
}

TEST_CASE("independent random labelings agree only at chance level") {
  const std::vector<std::string> names = {"a", "b", "c", "d"};
  std::vector<std::string> a, b;
  RngStream rng(derive_seed(99, "eval", "kappa"));
  for (int i = 0; i < 100000; ++i) {
    a.push_back(names[rng.next_index(names.size())]);
    b.push_back(names[rng.next_index(names.size())]);
  }
  CHECK(std::abs(cohen_kappa(a, b)) < 0.02);
}

TEST_CASE("raters who both always answer the same label agree perfectly") {
  CHECK(cohen_kappa({"x", "x", "x"}, {"x", "x", "x"}) == 1.0);
}

TEST_CASE("the agreement coefficient rejects mismatched or empty inputs") {
  CHECK_THROWS_AS(cohen_kappa({"x"}, {"x", "y"}), ValidationError);
  CHECK_THROWS_AS(cohen_kappa({}, {}), ValidationError);
}

TEST_CASE("a single item always matches its own ordering") {
  RngStream rng(1);
  CHECK(random_rank_match_probability(1, 100, rng) == 1.0);
}

TEST_CASE("random orderings of four items match about one in twenty-four times") {
  RngStream rng(derive_seed(99, "eval", "rank4"));
  const double estimate = random_rank_match_probability(4, 100000, rng);
  CHECK(estimate >= 0.039);
  CHECK(estimate <= 0.045);
  CHECK(std::abs(estimate - 1.0 / 24.0) < 0.003);
}

TEST_CASE("random orderings of three items match about one in six times") {
  RngStream rng(derive_seed(99, "eval", "rank3"));
  const double estimate = random_rank_match_probability(3, 100000, rng);
  CHECK(std::abs(estimate - 1.0 / 6.0) < 0.005);
}

TEST_CASE("the rank match estimator rejects degenerate arguments") {
  RngStream rng(1);
  CHECK_THROWS_AS(random_rank_match_probability(0, 100, rng), ValidationError);
  CHECK_THROWS_AS(random_rank_match_probability(3, 0, rng), ValidationError);
}

namespace {

using Vec = std::vector<double>;
using Rows = std::vector<Vec>;

EmbeddingMatrix matrix_from_rows(const Rows& rows) {
  EmbeddingMatrix m;
  m.rows = Mat(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    m.row_ids.push_back("p" + std::to_string(i));
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m.rows.at(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
    }
  }
  return m;
}

// Centers the rows, then finds the top two eigenvectors of the sample
// covariance by long power iteration with deflation. Completely independent
// of the production code path.
struct CovarianceOracle {
  Rows projections;       // n rows of 2
  double fraction1 = 0.0;
  double fraction2 = 0.0;
};

CovarianceOracle covariance_oracle(Rows rows) {
  const std::size_t n = rows.size();
  const std::size_t d = rows[0].size();
  Vec mean(d, 0.0);
  for (const Vec& r : rows) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += r[j] / static_cast<double>(n);
  }
  for (Vec& r : rows) {
    for (std::size_t j = 0; j < d; ++j) r[j] -= mean[j];
  }

  Rows cov(d, Vec(d, 0.0));
  for (const Vec& r : rows) {
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) cov[i][j] += r[i] * r[j];
    }
  }
  double trace = 0.0;
  for (std::size_t i = 0; i < d; ++i) trace += cov[i][i];

  auto top_eigen = [&](const Rows& m, Vec& vec_out) {
    Vec v(d, 1.0 / std::sqrt(static_cast<double>(d)));
    double lambda = 0.0;
    for (int iter = 0; iter < 20000; ++iter) {
      Vec next(d, 0.0);
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) next[i] += m[i][j] * v[j];
      }
      double norm = 0.0;
      for (double x : next) norm += x * x;
      norm = std::sqrt(norm);
      for (double& x : next) x /= norm;
      lambda = norm;
      v = next;
    }
    vec_out = v;
    return lambda;
  };

  Vec v1, v2;
  const double l1 = top_eigen(cov, v1);
  Rows deflated = cov;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) deflated[i][j] -= l1 * v1[i] * v1[j];
  }
  const double l2 = top_eigen(deflated, v2);

  CovarianceOracle out;
  out.fraction1 = l1 / trace;
  out.fraction2 = l2 / trace;
  for (const Vec& r : rows) {
    double p1 = 0.0, p2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      p1 += r[j] * v1[j];
      p2 += r[j] * v2[j];
    }
    out.projections.push_back({p1, p2});
  }
  return out;
}

}  // namespace

TEST_CASE("the planar projection matches a covariance eigenvector oracle up to sign") {
  const Rows rows = {{2.0, 0.5, -1.0},
                     {-1.5, 1.0, 0.3},
                     {0.7, -2.0, 1.2},
                     {1.1, 0.4, -0.6},
                     {-0.9, 1.6, 2.2}};
  const Projection proj = project_2d(matrix_from_rows(rows));
  const CovarianceOracle oracle = covariance_oracle(rows);

  CHECK(proj.explained_variance[0] == doctest::Approx(oracle.fraction1).epsilon(1e-9));
  CHECK(proj.explained_variance[1] == doctest::Approx(oracle.fraction2).epsilon(1e-9));
  CHECK(proj.explained_variance[0] >= proj.explained_variance[1]);
  CHECK(proj.explained_variance[0] + proj.explained_variance[1] <= 1.0 + 1e-12);

  for (int axis = 0; axis < 2; ++axis) {
    double dot = 0.0;
    for (int i = 0; i < 5; ++i) {
      dot += proj.points.at(i, axis) * oracle.projections[static_cast<std::size_t>(i)]
                                                         [static_cast<std::size_t>(axis)];
    }
    const double sign = dot >= 0.0 ? 1.0 : -1.0;
    for (int i = 0; i < 5; ++i) {
      CHECK(proj.points.at(i, axis) ==
            doctest::Approx(sign * oracle.projections[static_cast<std::size_t>(i)]
                                                     [static_cast<std::size_t>(axis)])
                .epsilon(1e-9));
    }
  }
}

TEST_CASE("collinear points leave nothing for the second axis") {
  Rows rows;
  for (int i = 0; i < 6; ++i) {
    const double t = static_cast<double>(i);
    rows.push_back({1.0 + 2.0 * t, -0.5 * t, 3.0 * t});
  }
  const Projection proj = project_2d(matrix_from_rows(rows));
  CHECK(proj.explained_variance[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(proj.explained_variance[1] < 1e-9);
  for (int i = 0; i < 6; ++i) CHECK(std::abs(proj.points.at(i, 1)) < 1e-7);
}

TEST_CASE("identical points project to the origin with zero explained variance") {
  const Projection proj = project_2d(matrix_from_rows({{1.0, 2.0, 3.0},
                                                       {1.0, 2.0, 3.0},
                                                       {1.0, 2.0, 3.0}}));
  CHECK(proj.explained_variance[0] == 0.0);
  CHECK(proj.explained_variance[1] == 0.0);
  for (int i = 0; i < 3; ++i) {
    CHECK(proj.points.at(i, 0) == 0.0);
    CHECK(proj.points.at(i, 1) == 0.0);
  }
}

TEST_CASE("rotating the input only flips projection signs at most") {
  const Rows rows = {{2.0, 0.5, -1.0},
                     {-1.5, 1.0, 0.3},
                     {0.7, -2.0, 1.2},
                     {1.1, 0.4, -0.6},
                     {-0.9, 1.6, 2.2}};
  // A fixed rotation: Givens in the (0,1) plane followed by one in (1,2).
  const double c1 = std::cos(0.7), s1 = std::sin(0.7);
  const double c2 = std::cos(-1.1), s2 = std::sin(-1.1);
  Rows rotated;
  for (const Vec& r : rows) {
    Vec v = r;
    const double a0 = c1 * v[0] - s1 * v[1];
    const double a1 = s1 * v[0] + c1 * v[1];
    v[0] = a0;
    v[1] = a1;
    const double b1 = c2 * v[1] - s2 * v[2];
    const double b2 = s2 * v[1] + c2 * v[2];
    v[1] = b1;
    v[2] = b2;
    rotated.push_back(v);
  }

  const Projection before = project_2d(matrix_from_rows(rows));
  const Projection after = project_2d(matrix_from_rows(rotated));
  CHECK(after.explained_variance[0] == doctest::Approx(before.explained_variance[0]).epsilon(1e-9));
  CHECK(after.explained_variance[1] == doctest::Approx(before.explained_variance[1]).epsilon(1e-9));
  for (int axis = 0; axis < 2; ++axis) {
    double dot = 0.0;
    for (int i = 0; i < 5; ++i) dot += before.points.at(i, axis) * after.points.at(i, axis);
    const double sign = dot >= 0.0 ? 1.0 : -1.0;
    for (int i = 0; i < 5; ++i) {
      CHECK(after.points.at(i, axis) ==
            doctest::Approx(sign * before.points.at(i, axis)).epsilon(1e-9));
    }
  }
}

TEST_CASE("the projection rejects inputs that are too small") {
  CHECK_THROWS_AS(project_2d(matrix_from_rows({{1.0, 2.0}})), DomainError);
  CHECK_THROWS_AS(project_2d(matrix_from_rows({{1.0}, {2.0}})), DomainError);
}

TEST_CASE("metric summaries report the normal-approximation interval") {
  // Fifty zeros and fifty ones: mean one half, sample sd sqrt(25/99),
  // half-width 1.96 * sd / 10.
  std::vector<double> values(50, 0.0);
  values.insert(values.end(), 50, 1.0);
  const MetricSummary s = eval_report(values);
  CHECK(s.n == 100);
  CHECK(s.mean == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.ci95 == doctest::Approx(1.96 * std::sqrt(25.0 / 99.0) / 10.0).epsilon(1e-12));
}

TEST_CASE("identical samples have a zero-width interval") {
  const MetricSummary s = eval_report({0.75, 0.75, 0.75, 0.75});
  CHECK(s.mean == 0.75);
  CHECK(s.ci95 == 0.0);
  CHECK(s.n == 4);
}

TEST_CASE("a single sample is reported without an interval") {
  const MetricSummary s = eval_report({0.3});
  CHECK(s.mean == 0.3);
  CHECK(s.ci95 == 0.0);
  CHECK(s.n == 1);
}

TEST_CASE("summarizing no samples is an error") {
  CHECK_THROWS_AS(eval_report({}), ValidationError);
}
