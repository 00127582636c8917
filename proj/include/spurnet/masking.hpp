#pragma once

#include <cstdint>
#include <vector>

#include "spurnet/network.hpp"
#include "spurnet/rng.hpp"
#include "spurnet/tensor.hpp"

namespace spurnet {

enum class MaskMode { kSampled, kDeterministic, kFrozenBinary };
enum class SparsityPenalty { kLogits, kSigmoid };

/// Per-weight keep logits for a subset of layers, plus the gate schedule.
struct MaskSet {
  std::vector<std::size_t> masked_layers;  // indices into the base network
  std::vector<Tensor> logits;              // one trainable tensor per masked layer
  double tau_g = 1.0;                      // gumbel temperature
  double gamma = 0.5;                      // binarization threshold
  MaskMode mode = MaskMode::kSampled;
  SparsityPenalty penalty = SparsityPenalty::kLogits;
  std::vector<std::vector<double>> frozen;  // binary gates, filled by freeze()

  std::size_t total_gates() const;
};

/// Every logit set to `init`; hidden layers masked, the classifier only when
/// requested. Biases are never masked.
MaskSet init_logits(const DenseNetwork& net, double init = 0.9, bool include_classifier = false,
                    double tau_g = 1.0, double gamma = 0.5);

/// s_i = sigmoid((pi_i - log(log U1 / log U2)) / tau_g), U uniform on (0,1)
/// clamped away from {0,1} by 1e-12. Differentiable in the logits; the noise
/// is a constant of the graph.
Tensor gumbel_sigmoid_sample(const Tensor& logits, double tau_g, Rng& rng);

/// Hard gate: forward exactly 1{s > gamma}, backward identity in s.
Tensor binarize(const Tensor& s, double gamma);

/// Base network with frozen weights plus the trainable mask. The base layer
/// data is copied into constant leaves at construction, so mask training
/// cannot touch it.
struct MaskedModel {
  DenseNetwork base;
  MaskSet masks;
  std::uint64_t rng_seed = 0;
  Rng noise_rng{0, streams::kMaskNoise};
  std::vector<Tensor> frozen_weights;  // constants, one per base layer
  std::vector<Tensor> frozen_biases;
};

MaskedModel make_masked_model(const DenseNetwork& base, MaskSet masks, std::uint64_t seed);

/// One gate tensor per base layer (unmasked layers get an all-ones constant).
/// Sampled mode draws fresh gumbel noise from the model rng.
std::vector<Tensor> sample_gates(MaskedModel& model);
std::vector<Tensor> deterministic_gates(const MaskedModel& model);
std::vector<Tensor> frozen_gates(const MaskedModel& model);

/// Forward with effective weights w ⊙ m. Gates come from the current mode;
/// gradients reach the logits only.
ForwardResult masked_forward(MaskedModel& model, const Tensor& x);

/// Forward reusing explicit gates (one noise draw shared by several passes
/// within a training step).
ForwardResult masked_forward_with_gates(const MaskedModel& model, const Tensor& x,
                                        const std::vector<Tensor>& gates);

/// alpha-weighted regularizer body: sum over logits (or their sigmoids).
Tensor sparsity_penalty(const MaskSet& masks);

/// Fraction of gates equal to 1. Deterministic or frozen mode only.
double keep_ratio(const MaskSet& masks, double tau_g);
double keep_ratio(const MaskedModel& model);

/// Threshold deterministic gates at gamma and store the binary mask.
void freeze(MaskSet& masks, double tau_g);

/// Keep exactly round(keep * total) gates: the ones with the largest
/// deterministic gate values (ties broken by flat index).
void freeze_with_keep_ratio(MaskSet& masks, double keep, double tau_g);

/// W' = W ⊙ m as a plain network. Pruned weights are exactly zero.
DenseNetwork finalize_subnetwork(const MaskedModel& model);

/// Clamp every logit into [-c, c] in place (applied after optimizer steps).
void clamp_logits(MaskSet& masks, double c);

}  // namespace spurnet
