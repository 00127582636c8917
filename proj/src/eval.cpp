#include "spurnet/eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "spurnet/error.hpp"
#include "spurnet/rng.hpp"

namespace spurnet {

GroupTable group_accuracy(const DenseNetwork& net, const LabeledDataset& ds,
                          const std::string& attribute) {
  const auto* attr = ds.attribute(attribute);
  if (!attr) throw ValueError("group_accuracy: unknown attribute '" + attribute + "'");
  auto preds = predict(net, ds.inputs);

  std::map<std::pair<int, int>, GroupCell> cells;
  std::size_t total_correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto key = std::make_pair(ds.labels[i], (*attr)[i]);
    auto& cell = cells[key];
    cell.y = key.first;
    cell.a = key.second;
    ++cell.count;
    if (preds[i] == ds.labels[i]) {
      ++cell.correct;
      ++total_correct;
    }
  }
  GroupTable table;
  table.attribute = attribute;
  table.split = ds.split;
  table.total = ds.size();
  table.total_correct = total_correct;
  table.avg = ds.size() ? static_cast<double>(total_correct) / static_cast<double>(ds.size()) : 0.0;
  for (auto& [key, cell] : cells) {
    cell.accuracy = cell.count ? static_cast<double>(cell.correct) / static_cast<double>(cell.count)
                               : 0.0;
    table.cells.push_back(cell);
  }
  return table;
}

double wga(const GroupTable& table, std::vector<std::string>* warnings) {
  double worst = std::numeric_limits<double>::max();
  bool any = false;
  for (const auto& cell : table.cells) {
    if (cell.count == 0) {
      if (warnings)
        warnings->push_back("group (y=" + std::to_string(cell.y) + ", a=" +
                            std::to_string(cell.a) + ") empty; excluded from WGA");
      continue;
    }
    worst = std::min(worst, cell.accuracy);
    any = true;
  }
  if (!any) throw ValueError("wga: no non-empty group");
  return worst;
}

double mga(const GroupTable& table,
           const std::map<std::pair<int, int>, std::size_t>& train_group_counts) {
  if (train_group_counts.empty()) throw ValueError("mga: no training group counts");
  std::pair<int, int> smallest;
  std::size_t best = std::numeric_limits<std::size_t>::max();
  for (const auto& [key, count] : train_group_counts) {
    if (count < best) {
      best = count;
      smallest = key;
    }
  }
  for (const auto& cell : table.cells)
    if (std::make_pair(cell.y, cell.a) == smallest) return cell.accuracy;
  throw ValueError("mga: minority group (y=" + std::to_string(smallest.first) +
                   ", a=" + std::to_string(smallest.second) + ") absent from the table");
}

std::map<std::pair<int, int>, std::size_t> group_counts(const LabeledDataset& ds,
                                                        const std::string& attribute) {
  const auto* attr = ds.attribute(attribute);
  if (!attr) throw ValueError("group_counts: unknown attribute '" + attribute + "'");
  std::map<std::pair<int, int>, std::size_t> counts;
  for (std::size_t i = 0; i < ds.size(); ++i) ++counts[{ds.labels[i], (*attr)[i]}];
  return counts;
}

double unbiased_accuracy(const DenseNetwork& net, const LabeledDataset& ds,
                         const std::string& attribute, std::uint64_t seed) {
  const auto* attr = ds.attribute(attribute);
  if (!attr) throw ValueError("unbiased_accuracy: unknown attribute '" + attribute + "'");
  std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < ds.size(); ++i) groups[{ds.labels[i], (*attr)[i]}].push_back(i);
  std::size_t min_count = std::numeric_limits<std::size_t>::max();
  for (const auto& [key, members] : groups) {
    if (members.empty())
      throw ValueError("unbiased_accuracy: group (y=" + std::to_string(key.first) +
                       ", a=" + std::to_string(key.second) + ") is empty");
    min_count = std::min(min_count, members.size());
  }
  Rng rng(seed, streams::kEval);
  std::vector<std::size_t> sample;
  for (auto& [key, members] : groups) {
    auto pick = rng.sample_without_replacement(members.size(), min_count);
    for (auto s : pick) sample.push_back(members[s]);
  }
  auto balanced = ds.subset(sample);
  return accuracy(net, balanced.inputs, balanced.labels);
}

double uag(double avg, double ua) { return avg - ua; }

double spurious_flip_rate(const DenseNetwork& net, const LabeledDataset& ds,
                          const Intervention& intervention) {
  const auto* attr = ds.attribute(intervention.attribute);
  if (!attr)
    throw ValueError("spurious_flip_rate: attribute '" + intervention.attribute +
                     "' not present in the dataset");
  auto base = predict(net, ds.inputs);
  Matrix flipped = ds.inputs;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    int a = (*attr)[i];
    intervention.apply(flipped.row(i), ds.labels[i], a);
  }
  auto counter = predict(net, flipped);
  std::size_t flips = 0;
  for (std::size_t i = 0; i < base.size(); ++i) flips += base[i] != counter[i];
  return ds.size() ? static_cast<double>(flips) / static_cast<double>(ds.size()) : 0.0;
}

std::vector<int> decision_boundary_raster(const DenseNetwork& net, const RasterBounds& bounds,
                                          std::size_t resolution) {
  if (net.input_dim() != 2)
    throw ValueError("decision_boundary_raster: model input must be 2-D");
  if (resolution < 2) throw ValueError("decision_boundary_raster: resolution too small");
  Matrix grid(resolution * resolution, 2);
  for (std::size_t r = 0; r < resolution; ++r) {
    double y = bounds.ymin + (bounds.ymax - bounds.ymin) * static_cast<double>(r) /
                                 static_cast<double>(resolution - 1);
    for (std::size_t c = 0; c < resolution; ++c) {
      double x = bounds.xmin + (bounds.xmax - bounds.xmin) * static_cast<double>(c) /
                                   static_cast<double>(resolution - 1);
      grid(r * resolution + c, 0) = x;
      grid(r * resolution + c, 1) = y;
    }
  }
  return predict(net, grid);
}

Matrix pca_project(const Matrix& embeddings, std::size_t dims) {
  const std::size_t n = embeddings.rows, d = embeddings.cols;
  if (n < dims) throw ValueError("pca_project: need at least `dims` rows");
  dims = std::min(dims, d);

  using EMat = Eigen::MatrixXd;
  EMat x(n, d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) x(static_cast<long>(r), static_cast<long>(c)) =
        embeddings(r, c);
  Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  EMat cov = (x.transpose() * x) / static_cast<double>(n > 1 ? n - 1 : 1);
  Eigen::SelfAdjointEigenSolver<EMat> es(cov);
  if (es.info() != Eigen::Success) throw Error("pca_project: eigen decomposition failed");

  Matrix out(n, dims);
  for (std::size_t j = 0; j < dims; ++j) {
    // eigenvalues ascend; take from the top
    Eigen::VectorXd v = es.eigenvectors().col(static_cast<long>(d - 1 - j));
    long argmax = 0;
    for (long i = 1; i < v.size(); ++i)
      if (std::fabs(v(i)) > std::fabs(v(argmax))) argmax = i;
    if (v(argmax) < 0) v = -v;
    Eigen::VectorXd proj = x * v;
    for (std::size_t r = 0; r < n; ++r) out(r, j) = proj(static_cast<long>(r));
  }
  return out;
}

MetricsReport evaluate_model(const DenseNetwork& net, const LabeledDataset& test,
                             const LabeledDataset& train, std::uint64_t seed) {
  MetricsReport report;
  report.avg = accuracy(net, test.inputs, test.labels);
  for (const auto& name : test.attribute_names()) {
    GroupTable table = group_accuracy(net, test, name);
    AttributeMetrics m;
    m.wga = wga(table, &report.warnings);
    m.mga = mga(table, group_counts(train, name));
    m.ua = unbiased_accuracy(net, test, name, seed);
    m.uag = uag(report.avg, m.ua);
    report.per_attribute[name] = m;
  }
  return report;
}

}  // namespace spurnet
