#include "spurnet/taskdata.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "spurnet/error.hpp"

namespace spurnet {

std::size_t derive_per_class(std::size_t n, int num_classes, double fraction) {
  if (num_classes <= 0) throw ValueError("derive_per_class: no classes");
  if (fraction <= 0.0 || fraction > 1.0) throw ValueError("derive_per_class: fraction outside (0,1]");
  return static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(n) / static_cast<double>(num_classes)));
}

TaskDataset build_task_dataset(const LabeledDataset& ds, const ClusterSummary& summary,
                               std::size_t p, Rng& rng) {
  if (summary.assignments.size() != ds.size())
    throw ValueError("build_task_dataset: cluster summary does not match dataset");
  const int C = summary.num_classes;

  TaskDataset task;
  task.per_class = p;

  for (int cls = 0; cls < C; ++cls) {
    const auto& minority = summary.minority[static_cast<std::size_t>(cls)];
    std::size_t total_class = 0;
    for (int y : ds.labels) total_class += y == cls;
    if (p > total_class)
      throw ValueError("build_task_dataset: p exceeds available samples of class " +
                       std::to_string(cls));
    if (p < minority.size())
      throw ValueError("build_task_dataset: p smaller than the minority set of class " +
                       std::to_string(cls) + " (minority sets cannot be truncated)");

    for (auto i : minority) {
      task.indices.push_back(i);
      task.provenance.push_back(Provenance::kMinority);
    }

    // eligible clusters: own-dominant plus neutral, ordered by cluster index
    std::vector<int> eligible = summary.dominant_sets[static_cast<std::size_t>(cls)];
    eligible.insert(eligible.end(), summary.neutral_set.begin(), summary.neutral_set.end());
    std::sort(eligible.begin(), eligible.end());

    std::size_t need = p - minority.size();
    if (need == 0) continue;
    if (eligible.empty())
      throw ValueError("build_task_dataset: class " + std::to_string(cls) +
                       " has no eligible cluster to draw from");

    // per-cluster pools of class members, shuffled once so prefix draws are
    // uniform without replacement
    std::map<int, std::vector<std::size_t>> pools;
    for (int j : eligible) pools[j] = {};
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.labels[i] != cls) continue;
      auto it = pools.find(summary.assignments[i]);
      if (it != pools.end()) it->second.push_back(i);
    }
    for (int j : eligible) rng.shuffle(pools[j]);

    const std::size_t E = eligible.size();
    std::size_t base = need / E;
    std::size_t rem = need % E;

    std::vector<std::size_t> quota(E, base);
    if (rem > 0) {
      // the `rem` largest eligible clusters by available class members get one
      // extra; ties break toward the smaller cluster index
      std::vector<std::size_t> order(E);
      for (std::size_t e = 0; e < E; ++e) order[e] = e;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        std::size_t sa = pools[eligible[a]].size(), sb = pools[eligible[b]].size();
        if (sa != sb) return sa > sb;
        return eligible[a] < eligible[b];
      });
      for (std::size_t e = 0; e < rem; ++e) ++quota[order[e]];
    }

    std::vector<std::size_t> taken(E, 0);
    std::size_t drawn = 0;
    for (std::size_t e = 0; e < E; ++e) {
      taken[e] = std::min(quota[e], pools[eligible[e]].size());
      drawn += taken[e];
    }
    // shortfall redistributed round-robin over clusters with spare members
    while (drawn < need) {
      bool progress = false;
      for (std::size_t e = 0; e < E && drawn < need; ++e) {
        if (taken[e] < pools[eligible[e]].size()) {
          ++taken[e];
          ++drawn;
          progress = true;
        }
      }
      if (!progress)
        throw ValueError("build_task_dataset: not enough class " + std::to_string(cls) +
                         " samples in eligible clusters");
    }
    for (std::size_t e = 0; e < E; ++e)
      for (std::size_t t = 0; t < taken[e]; ++t) {
        task.indices.push_back(pools[eligible[e]][t]);
        task.provenance.push_back(Provenance::kClusterSampled);
      }
  }
  return task;
}

BatchVariant batch_variant_from_name(const std::string& name) {
  if (name == "default") return BatchVariant::kDefault;
  if (name == "neg_ablation") return BatchVariant::kNegAblation;
  if (name == "supcon") return BatchVariant::kSupCon;
  throw ConfigError("unknown contrastive batch variant: " + name);
}

std::string batch_variant_name(BatchVariant v) {
  switch (v) {
    case BatchVariant::kDefault: return "default";
    case BatchVariant::kNegAblation: return "neg_ablation";
    case BatchVariant::kSupCon: return "supcon";
  }
  throw ValueError("bad batch variant");
}

ContrastiveBatch sample_contrastive_batch(const std::vector<int>& labels,
                                          const std::vector<int>& cluster_ids,
                                          const std::vector<std::size_t>& candidates, Rng& rng,
                                          std::size_t A, std::size_t P, std::size_t N,
                                          double tau_c, BatchVariant variant) {
  if (labels.size() != cluster_ids.size())
    throw ValueError("sample_contrastive_batch: labels and cluster ids differ in length");
  if (candidates.empty()) throw ValueError("sample_contrastive_batch: no candidates");

  ContrastiveBatch batch;
  batch.tau_c = tau_c;

  // members per non-empty cluster within the candidate set, in cluster order
  std::map<int, std::vector<std::size_t>> members;
  for (auto i : candidates) members[cluster_ids[i]].push_back(i);
  std::vector<int> clusters;
  for (const auto& [c, m] : members) clusters.push_back(c);
  if (clusters.empty()) throw ValueError("sample_contrastive_batch: all clusters empty");

  std::size_t n_anchor = std::min(A, clusters.size());
  auto picks = rng.sample_without_replacement(clusters.size(), n_anchor);

  for (auto pick : picks) {
    int cluster = clusters[pick];
    const auto& pool = members[cluster];
    bool placed = false;
    for (int attempt = 0; attempt < 10 && !placed; ++attempt) {
      std::size_t anchor = pool[rng.below(pool.size())];
      int ya = labels[anchor];
      int ca = cluster_ids[anchor];

      std::vector<std::size_t> pos_pool, neg_pool;
      for (auto j : candidates) {
        switch (variant) {
          case BatchVariant::kDefault:
            if (labels[j] == ya && cluster_ids[j] != ca) pos_pool.push_back(j);
            if (cluster_ids[j] == ca && j != anchor) neg_pool.push_back(j);
            break;
          case BatchVariant::kNegAblation:
            if (labels[j] == ya && cluster_ids[j] != ca) pos_pool.push_back(j);
            if (cluster_ids[j] == ca && labels[j] != ya) neg_pool.push_back(j);
            break;
          case BatchVariant::kSupCon:
            if (labels[j] == ya && j != anchor) pos_pool.push_back(j);
            if (labels[j] != ya) neg_pool.push_back(j);
            break;
        }
      }
      if (pos_pool.empty()) continue;  // redraw the anchor

      auto draw = [&rng](std::vector<std::size_t>& from, std::size_t count) {
        count = std::min(count, from.size());
        auto sel = rng.sample_without_replacement(from.size(), count);
        std::vector<std::size_t> out;
        out.reserve(count);
        for (auto s : sel) out.push_back(from[s]);
        return out;
      };
      if (neg_pool.empty())
        batch.warnings.push_back("anchor " + std::to_string(anchor) +
                                 ": empty negative pool (cluster " + std::to_string(ca) + ")");
      batch.anchors.push_back(anchor);
      batch.positives.push_back(draw(pos_pool, P));
      batch.negatives.push_back(draw(neg_pool, N));
      placed = true;
    }
    if (!placed)
      batch.warnings.push_back("cluster " + std::to_string(cluster) +
                               ": no anchor with a non-empty positive pool; skipped");
  }
  return batch;
}

namespace {

// P*logsumexp(all sims) - sum(positive sims), sims already divided by tau
Tensor anchor_loss_core(const Tensor& z_row, const Tensor& pos_mat, const Tensor& neg_mat,
                        std::size_t n_pos, std::size_t n_neg, double tau_c) {
  Tensor sims_p = scale(matmul_nt(z_row, pos_mat), 1.0 / tau_c);  // [1,P]
  Tensor all = sims_p;
  if (n_neg > 0) {
    Tensor sims_n = scale(matmul_nt(z_row, neg_mat), 1.0 / tau_c);
    all = hcat(sims_p, sims_n);
  }
  Tensor lse = logsumexp(all);
  return sub(scale(lse, static_cast<double>(n_pos)), sum(sims_p));
}

}  // namespace

Tensor contrastive_loss(const Tensor& z, const std::vector<Tensor>& z_pos,
                        const std::vector<Tensor>& z_neg, double tau_c,
                        std::vector<std::string>* warnings) {
  if (tau_c <= 0.0) throw ValueError("contrastive_loss: tau_c must be positive");
  if (z_pos.empty()) {
    if (warnings) warnings->push_back("contrastive_loss: no positives; anchor contributes 0");
    return Tensor::scalar(0.0);
  }
  const std::size_t d = z.numel();
  for (const auto& t : z_pos)
    if (t.numel() != d) throw ShapeError("contrastive_loss: positive width differs from anchor");
  for (const auto& t : z_neg)
    if (t.numel() != d) throw ShapeError("contrastive_loss: negative width differs from anchor");

  Tensor z_row = reshape(z, {1, d});
  Tensor pos_mat = stack_rows(z_pos);
  Tensor neg_mat = z_neg.empty() ? Tensor() : stack_rows(z_neg);
  return anchor_loss_core(z_row, pos_mat, neg_mat, z_pos.size(), z_neg.size(), tau_c);
}

Tensor batch_contrastive_loss(const ContrastiveBatch& batch, const Tensor& embeddings,
                              double tau_c) {
  if (tau_c <= 0.0) throw ValueError("batch_contrastive_loss: tau_c must be positive");
  Tensor total;
  for (std::size_t a = 0; a < batch.anchors.size(); ++a) {
    if (batch.positives[a].empty()) continue;  // contributes nothing
    Tensor z_row = l2_normalize(gather_rows(embeddings, {batch.anchors[a]}));
    Tensor pos_mat = l2_normalize(gather_rows(embeddings, batch.positives[a]));
    Tensor neg_mat = batch.negatives[a].empty()
                         ? Tensor()
                         : l2_normalize(gather_rows(embeddings, batch.negatives[a]));
    Tensor term = anchor_loss_core(z_row, pos_mat, neg_mat, batch.positives[a].size(),
                                   batch.negatives[a].size(), tau_c);
    total = total.defined() ? add(total, term) : term;
  }
  return total.defined() ? total : Tensor::scalar(0.0);
}

}  // namespace spurnet
