#include "spurnet/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "spurnet/error.hpp"
#include "spurnet/rng.hpp"

namespace spurnet {

namespace {

double sq_dist(const Matrix& a, std::size_t ra, const Matrix& b, std::size_t rb) {
  double s = 0.0;
  const double* pa = a.data.data() + ra * a.cols;
  const double* pb = b.data.data() + rb * b.cols;
  for (std::size_t c = 0; c < a.cols; ++c) {
    double d = pa[c] - pb[c];
    s += d * d;
  }
  return s;
}

}  // namespace

ClusterModel kmeans(const Matrix& points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iter, double tol) {
  const std::size_t n = points.rows, d = points.cols;
  if (k < 1) throw ValueError("kmeans: k must be at least 1");
  if (k > n) throw ValueError("kmeans: k exceeds the number of points");

  Rng rng(seed, streams::kCluster);
  ClusterModel model;
  model.k = k;
  model.centroids = Matrix(k, d);

  // k-means++ seeding
  std::vector<std::size_t> chosen;
  chosen.push_back(rng.below(n));
  std::vector<double> dist2(n, std::numeric_limits<double>::max());
  while (chosen.size() < k) {
    for (std::size_t i = 0; i < n; ++i)
      dist2[i] = std::min(dist2[i], sq_dist(points, i, points, chosen.back()));
    double total = 0.0;
    for (double v : dist2) total += v;
    std::size_t next;
    if (total <= 0.0) {
      next = rng.below(n);  // all remaining points coincide with a centroid
    } else {
      double r = rng.uniform() * total;
      double acc = 0.0;
      next = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += dist2[i];
        if (acc >= r) {
          next = i;
          break;
        }
      }
    }
    chosen.push_back(next);
  }
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t c = 0; c < d; ++c) model.centroids(j, c) = points(chosen[j], c);

  model.assignments.assign(n, 0);
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    // assign
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::max();
      int arg = 0;
      for (std::size_t j = 0; j < k; ++j) {
        double dd = sq_dist(points, i, model.centroids, j);
        if (dd < best) {
          best = dd;
          arg = static_cast<int>(j);
        }
      }
      model.assignments[i] = arg;
      inertia += best;
    }
    model.inertia = inertia;
    model.inertia_history.push_back(inertia);

    // update
    Matrix next(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t j = static_cast<std::size_t>(model.assignments[i]);
      ++counts[j];
      for (std::size_t c = 0; c < d; ++c) next(j, c) += points(i, c);
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] == 0) {
        // re-seed to the point farthest from its assigned centroid
        double worst = -1.0;
        std::size_t far = 0;
        for (std::size_t i = 0; i < n; ++i) {
          double dd = sq_dist(points, i, model.centroids,
                              static_cast<std::size_t>(model.assignments[i]));
          if (dd > worst) {
            worst = dd;
            far = i;
          }
        }
        for (std::size_t c = 0; c < d; ++c) next(j, c) = points(far, c);
        model.assignments[far] = static_cast<int>(j);
      } else {
        for (std::size_t c = 0; c < d; ++c) next(j, c) /= static_cast<double>(counts[j]);
      }
    }

    double max_shift = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      max_shift = std::max(max_shift, std::sqrt(sq_dist(next, j, model.centroids, j)));
    model.centroids = std::move(next);
    if (max_shift < tol) break;
  }

  // final assignment/inertia against the converged centroids
  double inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::max();
    int arg = 0;
    for (std::size_t j = 0; j < k; ++j) {
      double dd = sq_dist(points, i, model.centroids, j);
      if (dd < best) {
        best = dd;
        arg = static_cast<int>(j);
      }
    }
    model.assignments[i] = arg;
    inertia += best;
  }
  model.inertia = inertia;
  model.inertia_history.push_back(inertia);
  return model;
}

ClusterSummary label_clusters(const ClusterModel& model, const std::vector<int>& class_labels,
                              int num_classes, double threshold) {
  if (model.assignments.size() != class_labels.size())
    throw ValueError("label_clusters: assignments and labels differ in length");
  ClusterSummary s;
  s.k = model.k;
  s.num_classes = num_classes;
  s.threshold = threshold;
  s.assignments = model.assignments;
  s.cluster_class.assign(model.k, -1);
  s.dominant_sets.assign(num_classes, {});

  std::vector<std::vector<std::size_t>> counts(model.k,
                                               std::vector<std::size_t>(num_classes, 0));
  std::vector<std::size_t> sizes(model.k, 0);
  for (std::size_t i = 0; i < class_labels.size(); ++i) {
    ++counts[static_cast<std::size_t>(model.assignments[i])]
            [static_cast<std::size_t>(class_labels[i])];
    ++sizes[static_cast<std::size_t>(model.assignments[i])];
  }
  for (std::size_t j = 0; j < model.k; ++j) {
    if (sizes[j] == 0) {
      s.warnings.push_back("cluster " + std::to_string(j) + " is empty; treated as neutral");
      s.neutral_set.push_back(static_cast<int>(j));
      continue;
    }
    int dominant = -1;
    for (int i = 0; i < num_classes; ++i) {
      double frac = static_cast<double>(counts[j][static_cast<std::size_t>(i)]) /
                    static_cast<double>(sizes[j]);
      if (frac >= threshold) {
        dominant = i;
        break;  // threshold > 0.5 makes the dominant class unique
      }
    }
    s.cluster_class[j] = dominant;
    if (dominant >= 0)
      s.dominant_sets[static_cast<std::size_t>(dominant)].push_back(static_cast<int>(j));
    else
      s.neutral_set.push_back(static_cast<int>(j));
  }
  s.minority = minority_sets(s, class_labels);
  return s;
}

std::vector<std::vector<std::size_t>> minority_sets(const ClusterSummary& summary,
                                                    const std::vector<int>& class_labels) {
  if (summary.assignments.size() != class_labels.size())
    throw ValueError("minority_sets: assignments and labels differ in length");
  std::vector<std::vector<std::size_t>> m(summary.num_classes);
  for (std::size_t i = 0; i < class_labels.size(); ++i) {
    int cluster = summary.assignments[i];
    int owner = summary.cluster_class[static_cast<std::size_t>(cluster)];
    int y = class_labels[i];
    if (owner != -1 && owner != y) m[static_cast<std::size_t>(y)].push_back(i);
  }
  return m;
}

PurityResult purity(const std::vector<int>& assignments, const std::vector<int>& labels,
                    std::size_t k) {
  if (assignments.size() != labels.size())
    throw ValueError("purity: assignments and labels differ in length");
  int max_label = -1;
  for (int l : labels) max_label = std::max(max_label, l);
  const std::size_t L = static_cast<std::size_t>(max_label + 1);

  std::vector<std::vector<std::size_t>> counts(k, std::vector<std::size_t>(L, 0));
  std::vector<std::size_t> sizes(k, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ++counts[static_cast<std::size_t>(assignments[i])][static_cast<std::size_t>(labels[i])];
    ++sizes[static_cast<std::size_t>(assignments[i])];
  }
  PurityResult out;
  out.per_cluster.assign(k, 1.0);
  std::size_t matched = 0;
  for (std::size_t j = 0; j < k; ++j) {
    if (sizes[j] == 0) continue;
    std::size_t best = 0;  // ties resolve to the smaller label index
    for (std::size_t l = 1; l < L; ++l)
      if (counts[j][l] > counts[j][best]) best = l;
    out.per_cluster[j] =
        static_cast<double>(counts[j][best]) / static_cast<double>(sizes[j]);
    matched += counts[j][best];
  }
  out.overall = labels.empty() ? 0.0
                               : static_cast<double>(matched) / static_cast<double>(labels.size());
  return out;
}

}  // namespace spurnet
