#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spurnet/matrix.hpp"

namespace spurnet {

struct ClusterModel {
  std::size_t k = 0;
  Matrix centroids;             // k x d
  std::vector<int> assignments; // n
  double inertia = 0.0;         // sum of squared distances to assigned centroid
  std::vector<double> inertia_history;  // one entry per Lloyd iteration
};

/// k-means++ seeding followed by Lloyd iterations until the largest centroid
/// shift drops below tol or max_iter is reached. Empty clusters are re-seeded
/// to the point farthest from its assigned centroid. Deterministic per seed.
ClusterModel kmeans(const Matrix& points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iter = 300, double tol = 1e-6);

/// Per-cluster dominance labels plus the index sets and minority sets used to
/// build the mask-training subset. A cluster is dominant for class i when at
/// least `threshold` of its members carry label i; otherwise neutral. Empty
/// clusters are neutral with a warning.
struct ClusterSummary {
  std::size_t k = 0;
  int num_classes = 0;
  double threshold = 0.9;
  std::vector<int> assignments;                    // copied from the model
  std::vector<int> cluster_class;                  // per cluster: dominant class or -1
  std::vector<std::vector<int>> dominant_sets;     // I_i per class
  std::vector<int> neutral_set;                    // I_N
  std::vector<std::vector<std::size_t>> minority;  // m_i per class (sample indices)
  std::vector<std::string> warnings;
};

ClusterSummary label_clusters(const ClusterModel& model, const std::vector<int>& class_labels,
                              int num_classes, double threshold = 0.9);

/// m_i = samples with label i assigned to a cluster dominated by another
/// class (not i-dominant, not neutral).
std::vector<std::vector<std::size_t>> minority_sets(const ClusterSummary& summary,
                                                    const std::vector<int>& class_labels);

struct PurityResult {
  std::vector<double> per_cluster;  // majority fraction per cluster (1.0 for empty)
  double overall = 0.0;
};

/// Majority-label purity. Ties break toward the smaller label index.
PurityResult purity(const std::vector<int>& assignments, const std::vector<int>& labels,
                    std::size_t k);

}  // namespace spurnet
