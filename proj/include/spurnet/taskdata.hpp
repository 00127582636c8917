#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spurnet/clustering.hpp"
#include "spurnet/dataset.hpp"
#include "spurnet/rng.hpp"
#include "spurnet/tensor.hpp"

namespace spurnet {

enum class Provenance { kMinority, kClusterSampled };

/// Class-balanced mask-training subset: every minority-set member plus
/// uniform per-cluster draws, exactly p members per class.
struct TaskDataset {
  std::vector<std::size_t> indices;     // into the parent dataset
  std::vector<Provenance> provenance;   // aligned with indices
  std::size_t per_class = 0;

  std::size_t size() const { return indices.size(); }
};

/// p derived from a target fraction of the parent set, per class.
std::size_t derive_per_class(std::size_t n, int num_classes, double fraction);

/// For each class: all of m_i, then floor((p-|m_i|)/E) draws from each of the
/// E eligible clusters (own-dominant plus neutral); the remainder goes one
/// each to the largest eligible clusters (by available class members, ties to
/// the smaller cluster index); shortfalls redistribute round-robin.
TaskDataset build_task_dataset(const LabeledDataset& ds, const ClusterSummary& summary,
                               std::size_t p, Rng& rng);

enum class BatchVariant {
  kDefault,      // positives: same class, different cluster; negatives: same cluster
  kNegAblation,  // negatives restricted to same cluster AND different class
  kSupCon        // clusters ignored: positives same class, negatives different class
};

BatchVariant batch_variant_from_name(const std::string& name);
std::string batch_variant_name(BatchVariant v);

struct ContrastiveBatch {
  std::vector<std::size_t> anchors;
  std::vector<std::vector<std::size_t>> positives;  // per anchor
  std::vector<std::vector<std::size_t>> negatives;  // per anchor
  double tau_c = 0.1;
  std::vector<std::string> warnings;
};

/// A anchors from distinct non-empty clusters (A clamped to their number),
/// each with up to P positives and N negatives drawn uniformly without
/// replacement from the variant's pools, restricted to `candidates`. Anchors
/// whose positive pool is empty are redrawn up to 10 times, then skipped
/// with a warning.
ContrastiveBatch sample_contrastive_batch(const std::vector<int>& labels,
                                          const std::vector<int>& cluster_ids,
                                          const std::vector<std::size_t>& candidates, Rng& rng,
                                          std::size_t A, std::size_t P, std::size_t N,
                                          double tau_c,
                                          BatchVariant variant = BatchVariant::kDefault);

/// l_con for one anchor: -sum_i log( exp(z.zp_i/tau) / (sum_P exp(z.zp/tau)
/// + sum_N exp(z.zn/tau)) ), log-sum-exp stabilized. Inputs are expected to
/// be unit vectors already. P=0 contributes zero with a warning.
Tensor contrastive_loss(const Tensor& z, const std::vector<Tensor>& z_pos,
                        const std::vector<Tensor>& z_neg, double tau_c,
                        std::vector<std::string>* warnings = nullptr);

/// Sum of per-anchor losses over the batch; embeddings row i corresponds to
/// dataset index i and is L2-normalized internally.
Tensor batch_contrastive_loss(const ContrastiveBatch& batch, const Tensor& embeddings,
                              double tau_c);

}  // namespace spurnet
