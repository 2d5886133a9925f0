#include "selfrank/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace selfrank {

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, int> ngram_counts(const std::vector<std::string>& tokens, int n) {
  std::map<Ngram, int> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[Ngram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                   tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

// Clipped overlap: sum over candidate n-grams of min(count_cand, count_ref).
int clipped_overlap(const std::map<Ngram, int>& cand, const std::map<Ngram, int>& ref) {
  int total = 0;
  for (const auto& [gram, count] : cand) {
    const auto it = ref.find(gram);
    if (it != ref.end()) total += std::min(count, it->second);
  }
  return total;
}

}  // namespace

double bleu4(const std::vector<std::string>& candidate,
             const std::vector<std::vector<std::string>>& references) {
  if (references.empty()) throw ValidationError("bleu4 needs at least one reference");
  if (candidate.empty()) {
    log_warning("bleu4: empty candidate scores 0");
    return 0.0;
  }
  const int c = static_cast<int>(candidate.size());

  // Reference length closest to the candidate's (ties toward the shorter).
  int r = static_cast<int>(references[0].size());
  for (const auto& ref : references) {
    const int len = static_cast<int>(ref.size());
    const int d_new = std::abs(len - c), d_old = std::abs(r - c);
    if (d_new < d_old || (d_new == d_old && len < r)) r = len;
  }

  double log_sum = 0.0;
  for (int n = 1; n <= 4; ++n) {
    const std::map<Ngram, int> cand = ngram_counts(candidate, n);
    int total = 0;
    for (const auto& [gram, count] : cand) {
      (void)gram;
      total += count;
    }
    // Clip against the per-gram maximum across references.
    std::map<Ngram, int> best_ref;
    for (const auto& ref : references) {
      for (const auto& [gram, count] : ngram_counts(ref, n)) {
        auto [it, inserted] = best_ref.emplace(gram, count);
        if (!inserted) it->second = std::max(it->second, count);
      }
    }
    const int matched = clipped_overlap(cand, best_ref);
    double p;
    if (n == 1) {
      if (matched == 0) return 0.0;
      p = static_cast<double>(matched) / static_cast<double>(total);
    } else {
      p = static_cast<double>(matched + 1) / static_cast<double>(total + 1);
    }
    log_sum += std::log(p);
  }
  double score = std::exp(log_sum / 4.0);
  if (c < r) score *= std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
  return std::clamp(score, 0.0, 1.0);
}

double gleu(const std::vector<std::string>& candidate, const std::vector<std::string>& reference) {
  if (candidate.empty() || reference.empty()) {
    throw ValidationError("gleu needs nonempty candidate and reference");
  }
  int overlap = 0, cand_total = 0, ref_total = 0;
  for (int n = 1; n <= 4; ++n) {
    const auto cand = ngram_counts(candidate, n);
    const auto ref = ngram_counts(reference, n);
    overlap += clipped_overlap(cand, ref);
    for (const auto& [gram, count] : cand) {
      (void)gram;
      cand_total += count;
    }
    for (const auto& [gram, count] : ref) {
      (void)gram;
      ref_total += count;
    }
  }
  if (cand_total == 0 || ref_total == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(cand_total);
  const double r = static_cast<double>(overlap) / static_cast<double>(ref_total);
  return std::min(p, r);
}

double meteor_exact(const std::vector<std::string>& candidate,
                    const std::vector<std::string>& reference) {
  if (candidate.empty() || reference.empty()) {
    throw ValidationError("meteor needs nonempty candidate and reference");
  }
  // Greedy exact alignment over candidate positions. Every token matches as
  // often as the two multisets allow; picking the reference position that
  // continues the previous match keeps the chunk count low.
  std::vector<int> match_ref(candidate.size(), -1);
  std::vector<bool> used(reference.size(), false);
  int prev_ref = -2;
  int matches = 0;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    int pick = -1;
    const int cont = prev_ref + 1;
    if (cont >= 0 && cont < static_cast<int>(reference.size()) &&
        !used[static_cast<std::size_t>(cont)] &&
        reference[static_cast<std::size_t>(cont)] == candidate[i]) {
      pick = cont;
    } else {
      for (std::size_t j = 0; j < reference.size(); ++j) {
        if (!used[j] && reference[j] == candidate[i]) {
          pick = static_cast<int>(j);
          break;
        }
      }
    }
    if (pick >= 0) {
      used[static_cast<std::size_t>(pick)] = true;
      match_ref[i] = pick;
      ++matches;
      prev_ref = pick;
    } else {
      prev_ref = -2;  // a gap always breaks the run
    }
  }
  if (matches == 0) return 0.0;

  int chunks = 0;
  int last_ref = -2;
  bool in_run = false;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    if (match_ref[i] < 0) {
      in_run = false;
      continue;
    }
    if (!in_run || match_ref[i] != last_ref + 1) ++chunks;
    in_run = true;
    last_ref = match_ref[i];
  }

  const double p = static_cast<double>(matches) / static_cast<double>(candidate.size());
  const double r = static_cast<double>(matches) / static_cast<double>(reference.size());
  const double alpha = 0.9;
  const double f_mean = p * r / (alpha * p + (1.0 - alpha) * r);
  const double frag = static_cast<double>(chunks) / static_cast<double>(matches);
  const double penalty = 0.5 * frag * frag * frag;
  return f_mean * (1.0 - penalty);
}

std::string normalize_answer(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (std::ispunct(c)) continue;
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

int exact_match(std::string_view candidate, std::string_view reference) {
  return normalize_answer(candidate) == normalize_answer(reference) ? 1 : 0;
}

namespace {

std::vector<std::string> normalized_tokens(std::string_view text) {
  const std::string norm = normalize_answer(text);
  std::vector<std::string> out;
  std::string cur;
  for (char c : norm) {
    if (c == ' ') {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

PRF token_prf(std::string_view candidate, std::string_view reference) {
  const auto cand = normalized_tokens(candidate);
  const auto ref = normalized_tokens(reference);
  if (cand.empty() && ref.empty()) return {1.0, 1.0, 1.0};
  if (cand.empty() || ref.empty()) return {0.0, 0.0, 0.0};
  std::map<std::string, int> counts;
  for (const auto& t : ref) ++counts[t];
  int overlap = 0;
  for (const auto& t : cand) {
    const auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  PRF out;
  out.precision = static_cast<double>(overlap) / static_cast<double>(cand.size());
  out.recall = static_cast<double>(overlap) / static_cast<double>(ref.size());
  out.f1 = (out.precision + out.recall) > 0.0
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

double cohen_kappa(const std::vector<std::string>& labels_a,
                   const std::vector<std::string>& labels_b) {
  if (labels_a.size() != labels_b.size()) {
    throw ValidationError("label sequences differ in length");
  }
  if (labels_a.empty()) throw ValidationError("label sequences are empty");
  const double n = static_cast<double>(labels_a.size());
  std::map<std::string, int> freq_a, freq_b;
  int agree = 0;
  for (std::size_t i = 0; i < labels_a.size(); ++i) {
    ++freq_a[labels_a[i]];
    ++freq_b[labels_b[i]];
    if (labels_a[i] == labels_b[i]) ++agree;
  }
  const double p_o = static_cast<double>(agree) / n;
  double p_e = 0.0;
  for (const auto& [label, count] : freq_a) {
    const auto it = freq_b.find(label);
    if (it != freq_b.end()) {
      p_e += (static_cast<double>(count) / n) * (static_cast<double>(it->second) / n);
    }
  }
  if (1.0 - p_e < 1e-15) return 1.0;  // both raters degenerate on one label
  return (p_o - p_e) / (1.0 - p_e);
}

double random_rank_match_probability(int k, int trials, RngStream& rng) {
  if (k < 1) throw ValidationError("k must be positive");
  if (trials < 1) throw ValidationError("trials must be positive");
  std::vector<int> perm(static_cast<std::size_t>(k));
  int hits = 0;
  for (int t = 0; t < trials; ++t) {
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i) {
      const std::size_t j = rng.next_index(i);
      std::swap(perm[i - 1], perm[j]);
    }
    bool identity = true;
    for (int i = 0; i < k; ++i) {
      if (perm[static_cast<std::size_t>(i)] != i) {
        identity = false;
        break;
      }
    }
    if (identity) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(trials);
}

Projection project_2d(const EmbeddingMatrix& embeddings) {
  const int n = embeddings.size();
  const int d = embeddings.dim();
  if (n < 2) throw DomainError("projection needs at least two rows");
  if (d < 2) throw DomainError("projection needs at least two dimensions");

  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) x(i, j) = embeddings.rows.at(i, j);
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;

  Projection out;
  out.points = Mat(n, 2);
  const double total_sq = x.squaredNorm();
  if (total_sq <= 0.0) return out;  // identical rows: zero projection

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const Eigen::MatrixXd proj = x * svd.matrixV().leftCols(2);
  for (int i = 0; i < n; ++i) {
    out.points.at(i, 0) = proj(i, 0);
    out.points.at(i, 1) = sv.size() > 1 ? proj(i, 1) : 0.0;
  }
  double total = 0.0;
  for (int i = 0; i < sv.size(); ++i) total += sv(i) * sv(i);
  out.explained_variance[0] = sv(0) * sv(0) / total;
  out.explained_variance[1] = sv.size() > 1 ? sv(1) * sv(1) / total : 0.0;
  return out;
}

MetricSummary eval_report(const std::vector<double>& values) {
  if (values.empty()) throw ValidationError("no metric values to summarize");
  MetricSummary s;
  s.n = static_cast<int>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
  if (s.n == 1) {
    log_warning("eval_report: single sample; confidence half-width is 0");
    s.ci95 = 0.0;
    return s;
  }
  double ss = 0.0;
  for (double v : values) {
    const double dev = v - s.mean;
    ss += dev * dev;
  }
  const double sd = std::sqrt(ss / static_cast<double>(s.n - 1));
  s.ci95 = 1.96 * sd / std::sqrt(static_cast<double>(s.n));
  return s;
}

}  // namespace selfrank
