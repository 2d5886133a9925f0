#include "selfrank/isodata.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace selfrank {

int ClusterResult::cluster_of(const std::string& id) const {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == id) return assignment[i];
  }
  throw ValidationError("id not present in cluster result: " + id);
}

std::unordered_map<std::string, int> ClusterResult::assignments() const {
  std::unordered_map<std::string, int> m;
  for (std::size_t i = 0; i < ids.size(); ++i) m.emplace(ids[i], assignment[i]);
  return m;
}

namespace {

using Point = std::vector<double>;

double sq_dist(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

struct Working {
  std::vector<Point> pts;        // L2-normalized rows
  std::vector<int> assign;       // point -> cluster
  std::vector<Point> centroids;  // cluster -> mean

  int n() const { return static_cast<int>(pts.size()); }
  int count() const { return static_cast<int>(centroids.size()); }

  std::vector<std::vector<int>> members() const {
    std::vector<std::vector<int>> m(static_cast<std::size_t>(count()));
    for (int i = 0; i < n(); ++i) m[static_cast<std::size_t>(assign[i])].push_back(i);
    return m;
  }

  int nearest_centroid(const Point& p) const {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < count(); ++c) {
      const double d = sq_dist(p, centroids[static_cast<std::size_t>(c)]);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    return best;
  }

  std::vector<int> nearest_assignment() const {
    std::vector<int> a(static_cast<std::size_t>(n()));
    for (int i = 0; i < n(); ++i) a[static_cast<std::size_t>(i)] = nearest_centroid(pts[i]);
    return a;
  }

  // Removes clusters with no members; returns true when any was dropped.
  bool drop_empty() {
    const auto mem = members();
    std::vector<int> remap(mem.size(), -1);
    std::vector<Point> kept;
    int next = 0;
    for (std::size_t c = 0; c < mem.size(); ++c) {
      if (mem[c].empty()) continue;
      remap[c] = next++;
      kept.push_back(centroids[c]);
    }
    if (next == count()) return false;
    centroids = std::move(kept);
    for (int& a : assign) a = remap[static_cast<std::size_t>(a)];
    return true;
  }

  void recompute_means() {
    const auto mem = members();
    for (std::size_t c = 0; c < mem.size(); ++c) {
      if (mem[c].empty()) continue;
      Point mean(pts[0].size(), 0.0);
      for (int i : mem[c]) {
        for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += pts[static_cast<std::size_t>(i)][d];
      }
      for (double& x : mean) x /= static_cast<double>(mem[c].size());
      centroids[c] = std::move(mean);
    }
  }

  void recompute_mean_of(int c) {
    Point mean(pts[0].size(), 0.0);
    int cnt = 0;
    for (int i = 0; i < n(); ++i) {
      if (assign[static_cast<std::size_t>(i)] != c) continue;
      for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += pts[static_cast<std::size_t>(i)][d];
      ++cnt;
    }
    if (cnt == 0) return;
    for (double& x : mean) x /= static_cast<double>(cnt);
    centroids[static_cast<std::size_t>(c)] = std::move(mean);
  }

  void remove_cluster(int c) {
    centroids.erase(centroids.begin() + c);
    for (int& a : assign) {
      if (a > c) --a;
    }
  }

  // Merges every undersized cluster (smallest first) into its nearest
  // neighbor by centroid distance. Returns true when any merge happened.
  bool merge_undersized(int min_size) {
    bool merged = false;
    while (count() > 1) {
      const auto mem = members();
      int smallest = -1;
      for (std::size_t c = 0; c < mem.size(); ++c) {
        if (static_cast<int>(mem[c].size()) >= min_size) continue;
        if (smallest < 0 || mem[c].size() < mem[static_cast<std::size_t>(smallest)].size()) {
          smallest = static_cast<int>(c);
        }
      }
      if (smallest < 0) break;
      int target = -1;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < count(); ++c) {
        if (c == smallest) continue;
        const double d = sq_dist(centroids[static_cast<std::size_t>(c)],
                                 centroids[static_cast<std::size_t>(smallest)]);
        if (d < best_d) {
          best_d = d;
          target = c;
        }
      }
      for (int i : mem[static_cast<std::size_t>(smallest)]) {
        assign[static_cast<std::size_t>(i)] = target;
      }
      remove_cluster(smallest);
      recompute_mean_of(target > smallest ? target - 1 : target);
      merged = true;
    }
    return merged;
  }

  // One split sweep: any cluster that is oversized or spread beyond the
  // variance threshold detaches its farthest member as a fresh centroid.
  bool split_pass(int max_size, double variance_threshold) {
    bool split = false;
    const int snapshot = count();
    for (int c = 0; c < snapshot; ++c) {
      std::vector<int> mem;
      for (int i = 0; i < n(); ++i) {
        if (assign[static_cast<std::size_t>(i)] == c) mem.push_back(i);
      }
      if (mem.size() < 2) continue;
      double msd = 0.0;
      for (int i : mem) {
        msd += sq_dist(pts[static_cast<std::size_t>(i)], centroids[static_cast<std::size_t>(c)]);
      }
      msd /= static_cast<double>(mem.size());
      if (static_cast<int>(mem.size()) <= max_size && msd <= variance_threshold) continue;
      int farthest = mem[0];
      double far_d = -1.0;
      for (int i : mem) {
        const double d =
            sq_dist(pts[static_cast<std::size_t>(i)], centroids[static_cast<std::size_t>(c)]);
        if (d > far_d) {
          far_d = d;
          farthest = i;
        }
      }
      assign[static_cast<std::size_t>(farthest)] = count();
      centroids.push_back(pts[static_cast<std::size_t>(farthest)]);
      recompute_mean_of(c);
      split = true;
    }
    return split;
  }
};

}  // namespace

ClusterResult isodata(const EmbeddingMatrix& embeddings, const IsodataConfig& config,
                      RngStream& rng) {
  const int n = embeddings.size();
  if (n < 1) throw ValidationError("cannot cluster an empty embedding matrix");
  if (config.k_init < 1 || config.min_cluster_size < 1 ||
      config.min_cluster_size > config.max_cluster_size || config.variance_threshold <= 0.0 ||
      config.max_rounds < 1) {
    throw ValidationError("invalid clustering configuration");
  }
  const int dim = embeddings.dim();

  Working w;
  w.pts.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double* row = embeddings.rows.row(i);
    Point p(row, row + dim);
    double norm = 0.0;
    for (double x : p) norm += x * x;
    if (norm <= 0.0) {
      throw DomainError("zero-norm embedding for answer id: " + embeddings.row_ids[i]);
    }
    norm = std::sqrt(norm);
    for (double& x : p) x /= norm;
    w.pts[static_cast<std::size_t>(i)] = std::move(p);
  }

  // Distinct points only, so coincident answers never seed two centroids.
  std::vector<int> distinct;
  for (int i = 0; i < n; ++i) {
    bool dup = false;
    for (int j : distinct) {
      if (w.pts[static_cast<std::size_t>(i)] == w.pts[static_cast<std::size_t>(j)]) {
        dup = true;
        break;
      }
    }
    if (!dup) distinct.push_back(i);
  }

  // Farthest-point seeding: random first pick, then repeatedly the point
  // with the largest distance to its closest chosen centroid.
  const int k_eff = std::min<int>(config.k_init, static_cast<int>(distinct.size()));
  std::vector<int> seeds;
  seeds.push_back(distinct[rng.next_index(distinct.size())]);
  while (static_cast<int>(seeds.size()) < k_eff) {
    int best = -1;
    double best_d = -1.0;
    for (int i : distinct) {
      double nearest = std::numeric_limits<double>::infinity();
      for (int s : seeds) {
        nearest = std::min(nearest, sq_dist(w.pts[static_cast<std::size_t>(i)],
                                            w.pts[static_cast<std::size_t>(s)]));
      }
      if (nearest > best_d) {
        best_d = nearest;
        best = i;
      }
    }
    seeds.push_back(best);
  }
  for (int s : seeds) w.centroids.push_back(w.pts[static_cast<std::size_t>(s)]);
  w.assign.assign(static_cast<std::size_t>(n), 0);

  for (int round = 0; round < config.max_rounds; ++round) {
    w.assign = w.nearest_assignment();
    w.drop_empty();
    w.recompute_means();
    bool changed = w.merge_undersized(config.min_cluster_size);
    changed = w.split_pass(config.max_cluster_size, config.variance_threshold) || changed;
    if (!changed) break;
  }

  // Stabilization: plain assignment/update to a fixed point, then re-merge
  // anything the split phase left undersized. Each merge lowers the cluster
  // count, so this settles after at most the current count of sweeps.
  for (int outer = 0; outer <= n; ++outer) {
    for (int inner = 0; inner < 200; ++inner) {
      const std::vector<int> na = w.nearest_assignment();
      const bool same = na == w.assign;
      w.assign = na;
      const bool dropped = w.drop_empty();
      w.recompute_means();
      if (same && !dropped) break;
    }
    if (!w.merge_undersized(config.min_cluster_size)) break;
  }

  ClusterResult result;
  result.ids = embeddings.row_ids;
  result.assignment = w.assign;
  result.centroids = w.centroids;
  for (int i = 0; i < n; ++i) {
    const double d = std::sqrt(sq_dist(w.pts[static_cast<std::size_t>(i)],
                                       w.centroids[static_cast<std::size_t>(w.assign[i])]));
    result.centroid_distance.emplace(result.ids[static_cast<std::size_t>(i)], d);
  }
  result.representative_ids.assign(static_cast<std::size_t>(w.count()), std::string());
  for (int c = 0; c < w.count(); ++c) {
    int best = -1;
    for (int i = 0; i < n; ++i) {
      if (w.assign[static_cast<std::size_t>(i)] != c) continue;
      if (best < 0) {
        best = i;
        continue;
      }
      const double di = result.centroid_distance.at(result.ids[static_cast<std::size_t>(i)]);
      const double db = result.centroid_distance.at(result.ids[static_cast<std::size_t>(best)]);
      if (di < db || (di == db && result.ids[static_cast<std::size_t>(i)] <
                                      result.ids[static_cast<std::size_t>(best)])) {
        best = i;
      }
    }
    result.representative_ids[static_cast<std::size_t>(c)] =
        result.ids[static_cast<std::size_t>(best)];
  }
  return result;
}

RankedAnswerList select_representatives(const RankedAnswerList& ranked,
                                        const ClusterResult& clusters,
                                        RepresentativePolicy policy) {
  if (ranked.size() != clusters.ids.size()) {
    throw ValidationError("ranked answers and cluster assignments cover different ids");
  }
  std::unordered_map<std::string, const RankedAnswer*> by_id;
  for (const RankedAnswer& r : ranked) by_id.emplace(r.answer_id, &r);
  const auto assignments = clusters.assignments();
  for (const auto& [id, cluster] : assignments) {
    (void)cluster;
    if (!by_id.count(id)) {
      throw ValidationError("cluster id missing from the ranked list: " + id);
    }
  }

  RankedAnswerList out;
  for (int c = 0; c < clusters.cluster_count(); ++c) {
    const RankedAnswer* best = nullptr;
    double best_dist = 0.0;
    for (std::size_t i = 0; i < clusters.ids.size(); ++i) {
      if (clusters.assignment[i] != c) continue;
      const RankedAnswer* cand = by_id.at(clusters.ids[i]);
      const double dist = clusters.centroid_distance.at(clusters.ids[i]);
      if (!best) {
        best = cand;
        best_dist = dist;
        continue;
      }
      bool better = false;
      if (policy == RepresentativePolicy::medoid) {
        if (dist != best_dist) {
          better = dist < best_dist;
        } else if (cand->weight != best->weight) {
          better = cand->weight > best->weight;
        } else {
          better = cand->answer_id < best->answer_id;
        }
      } else {
        if (cand->weight != best->weight) {
          better = cand->weight > best->weight;
        } else {
          better = cand->answer_id < best->answer_id;
        }
      }
      if (better) {
        best = cand;
        best_dist = dist;
      }
    }
    if (best) out.push_back(*best);
  }
  std::sort(out.begin(), out.end(), [](const RankedAnswer& a, const RankedAnswer& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    return a.answer_id < b.answer_id;
  });
  return out;
}

}  // namespace selfrank
