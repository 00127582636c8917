#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "spurnet/dataset.hpp"
#include "spurnet/network.hpp"

namespace spurnet {

struct GroupCell {
  int y = 0;
  int a = 0;
  std::size_t count = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

struct GroupTable {
  std::string attribute;
  std::string split;
  std::vector<GroupCell> cells;  // ordered by (y, a)
  std::size_t total = 0;
  std::size_t total_correct = 0;
  double avg = 0.0;
};

GroupTable group_accuracy(const DenseNetwork& net, const LabeledDataset& ds,
                          const std::string& attribute);

/// Minimum accuracy over non-empty groups; empty groups are skipped with a
/// warning record.
double wga(const GroupTable& table, std::vector<std::string>* warnings = nullptr);

/// Accuracy of the group with the fewest training samples (ties to the
/// lexicographically smallest (y, a)).
double mga(const GroupTable& table,
           const std::map<std::pair<int, int>, std::size_t>& train_group_counts);

std::map<std::pair<int, int>, std::size_t> group_counts(const LabeledDataset& ds,
                                                        const std::string& attribute);

/// Accuracy on an exactly balanced subsample: min-group-count members drawn
/// deterministically (seeded) from every (y, a) group.
double unbiased_accuracy(const DenseNetwork& net, const LabeledDataset& ds,
                         const std::string& attribute, std::uint64_t seed);

double uag(double avg, double ua);

/// Fraction of samples whose prediction changes under the counterfactual
/// attribute transform.
double spurious_flip_rate(const DenseNetwork& net, const LabeledDataset& ds,
                          const Intervention& intervention);

struct RasterBounds {
  double xmin = -2, xmax = 3, ymin = -2, ymax = 2;
};

/// Row-major grid of argmax predictions over the box; 2-D input models only.
std::vector<int> decision_boundary_raster(const DenseNetwork& net, const RasterBounds& bounds,
                                          std::size_t resolution);

/// Centered projection onto the top principal directions. Sign convention:
/// the largest-magnitude loading of each direction is positive.
Matrix pca_project(const Matrix& embeddings, std::size_t dims = 2);

struct AttributeMetrics {
  double wga = 0.0;
  double mga = 0.0;
  double ua = 0.0;
  double uag = 0.0;
};

struct MetricsReport {
  double avg = 0.0;
  std::map<std::string, AttributeMetrics> per_attribute;
  double keep_ratio = 1.0;  // 1.0 for dense models
  std::vector<std::string> warnings;
};

/// AVG on the given split plus WGA/MGA/UA/UAG per attribute. Training group
/// counts come from the train split; the UA subsample is seeded.
MetricsReport evaluate_model(const DenseNetwork& net, const LabeledDataset& test,
                             const LabeledDataset& train, std::uint64_t seed);

}  // namespace spurnet
