#ifndef SELFRANK_ISODATA_HPP_
#define SELFRANK_ISODATA_HPP_

#include <string>
#include <unordered_map>
#include <vector>

#include "selfrank/embedding.hpp"
#include "selfrank/errors.hpp"
#include "selfrank/random.hpp"
#include "selfrank/textrank.hpp"

namespace selfrank {

struct IsodataConfig {
  int k_init = 4;
  int min_cluster_size = 2;
  int max_cluster_size = 8;
  double variance_threshold = 0.05;  // mean squared distance to the centroid
  int max_rounds = 50;
};

struct ClusterResult {
  std::vector<std::string> ids;  // row order of the clustered matrix
  std::vector<int> assignment;   // parallel to ids
  std::vector<std::vector<double>> centroids;
  std::vector<std::string> representative_ids;  // one per cluster (medoids)
  std::unordered_map<std::string, double> centroid_distance;  // id -> own-centroid distance

  int cluster_count() const { return static_cast<int>(centroids.size()); }
  int cluster_of(const std::string& id) const;
  std::unordered_map<std::string, int> assignments() const;
};

// Adaptive clustering: nearest-centroid assignment rounds interleaved with
// merging undersized clusters into their nearest neighbor and splitting
// clusters that are oversized or too spread (detaching the farthest member
// as a new centroid). Distances are Euclidean on L2-normalized copies of the
// rows. After the merge/split rounds settle (or max_rounds passes), a
// stabilization sweep reruns plain assignment/update to a fixed point and
// re-merges any leftover undersized clusters, so the returned assignment is
// always nearest-centroid and only a lone remaining cluster may be small.
ClusterResult isodata(const EmbeddingMatrix& embeddings, const IsodataConfig& config,
                      RngStream& rng);

enum class RepresentativePolicy { medoid, top_weight };

// One answer per cluster: the medoid (closest member to the centroid; ties by
// higher ranking weight, then ascending id) or, alternatively, the member
// with the highest ranking weight. Kept answers retain their original weights
// and come back sorted by weight.
RankedAnswerList select_representatives(const RankedAnswerList& ranked,
                                        const ClusterResult& clusters,
                                        RepresentativePolicy policy = RepresentativePolicy::medoid);

}  // namespace selfrank

#endif  // SELFRANK_ISODATA_HPP_
