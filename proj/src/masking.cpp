#include "spurnet/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace spurnet {

namespace {

double sigmoid_scalar(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

bool is_masked(const MaskSet& m, std::size_t layer, std::size_t* slot) {
  for (std::size_t i = 0; i < m.masked_layers.size(); ++i)
    if (m.masked_layers[i] == layer) {
      *slot = i;
      return true;
    }
  return false;
}

// deterministic gate values sigma(pi / tau) for one layer
std::vector<double> det_gate_values(const Tensor& logits, double tau_g) {
  std::vector<double> s(logits.numel());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = sigmoid_scalar(logits.value()[i] / tau_g);
  return s;
}

}  // namespace

std::size_t MaskSet::total_gates() const {
  std::size_t n = 0;
  for (const auto& t : logits) n += t.numel();
  return n;
}

MaskSet init_logits(const DenseNetwork& net, double init, bool include_classifier, double tau_g,
                    double gamma) {
  if (net.num_layers() == 0) throw ValueError("init_logits: empty network");
  MaskSet m;
  m.tau_g = tau_g;
  m.gamma = gamma;
  std::size_t last = net.num_layers() - 1;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    if (l == last && !include_classifier && net.num_layers() > 1) continue;
    const auto& w = net.layers()[l].weight;
    m.masked_layers.push_back(l);
    m.logits.push_back(Tensor::param(w.shape(), std::vector<double>(w.numel(), init)));
  }
  if (m.masked_layers.empty()) throw ValueError("init_logits: no maskable layer");
  return m;
}

Tensor gumbel_sigmoid_sample(const Tensor& logits, double tau_g, Rng& rng) {
  if (tau_g <= 0.0) throw ValueError("gumbel_sigmoid_sample: tau_g must be positive");
  std::vector<double> noise(logits.numel());
  for (auto& v : noise) {
    double u1 = std::clamp(rng.uniform(), 1e-12, 1.0 - 1e-12);
    double u2 = std::clamp(rng.uniform(), 1e-12, 1.0 - 1e-12);
    v = std::log(std::log(u1) / std::log(u2));
  }
  Tensor noise_c = Tensor::constant(logits.shape(), std::move(noise));
  return sigmoid(scale(sub(logits, noise_c), 1.0 / tau_g));
}

Tensor binarize(const Tensor& s, double gamma) { return straight_through_threshold(s, gamma); }

MaskedModel make_masked_model(const DenseNetwork& base, MaskSet masks, std::uint64_t seed) {
  for (std::size_t i = 0; i < masks.masked_layers.size(); ++i) {
    std::size_t l = masks.masked_layers[i];
    if (l >= base.num_layers()) throw ValueError("make_masked_model: masked layer out of range");
    if (masks.logits[i].shape() != base.layers()[l].weight.shape())
      throw ShapeError("make_masked_model: logit shape does not match layer weights");
  }
  MaskedModel m;
  m.base = base.clone();
  m.masks = std::move(masks);
  m.rng_seed = seed;
  m.noise_rng = Rng(seed, streams::kMaskNoise);
  for (const auto& l : m.base.layers()) {
    m.frozen_weights.push_back(Tensor::constant(l.weight.shape(), l.weight.value()));
    m.frozen_biases.push_back(Tensor::constant(l.bias.shape(), l.bias.value()));
  }
  return m;
}

std::vector<Tensor> sample_gates(MaskedModel& model) {
  std::vector<Tensor> gates(model.base.num_layers());
  for (std::size_t l = 0; l < gates.size(); ++l) {
    std::size_t slot;
    if (is_masked(model.masks, l, &slot)) {
      Tensor s = gumbel_sigmoid_sample(model.masks.logits[slot], model.masks.tau_g,
                                       model.noise_rng);
      gates[l] = binarize(s, model.masks.gamma);
    } else {
      gates[l] = Tensor::full(model.base.layers()[l].weight.shape(), 1.0);
    }
  }
  return gates;
}

std::vector<Tensor> deterministic_gates(const MaskedModel& model) {
  std::vector<Tensor> gates(model.base.num_layers());
  for (std::size_t l = 0; l < gates.size(); ++l) {
    std::size_t slot;
    if (is_masked(model.masks, l, &slot)) {
      Tensor s = sigmoid(scale(model.masks.logits[slot], 1.0 / model.masks.tau_g));
      gates[l] = binarize(s, model.masks.gamma);
    } else {
      gates[l] = Tensor::full(model.base.layers()[l].weight.shape(), 1.0);
    }
  }
  return gates;
}

std::vector<Tensor> frozen_gates(const MaskedModel& model) {
  if (model.masks.mode != MaskMode::kFrozenBinary || model.masks.frozen.empty())
    throw ValueError("frozen_gates: mask is not frozen");
  std::vector<Tensor> gates(model.base.num_layers());
  for (std::size_t l = 0; l < gates.size(); ++l) {
    std::size_t slot;
    if (is_masked(model.masks, l, &slot)) {
      gates[l] = Tensor::constant(model.masks.logits[slot].shape(), model.masks.frozen[slot]);
    } else {
      gates[l] = Tensor::full(model.base.layers()[l].weight.shape(), 1.0);
    }
  }
  return gates;
}

ForwardResult masked_forward(MaskedModel& model, const Tensor& x) {
  std::vector<Tensor> gates;
  switch (model.masks.mode) {
    case MaskMode::kSampled: gates = sample_gates(model); break;
    case MaskMode::kDeterministic: gates = deterministic_gates(model); break;
    case MaskMode::kFrozenBinary: gates = frozen_gates(model); break;
  }
  return masked_forward_with_gates(model, x, gates);
}

ForwardResult masked_forward_with_gates(const MaskedModel& model, const Tensor& x,
                                        const std::vector<Tensor>& gates) {
  if (gates.size() != model.base.num_layers())
    throw ShapeError("masked_forward: one gate tensor per layer required");
  std::vector<Tensor> ws, bs;
  std::vector<Activation> acts;
  for (std::size_t l = 0; l < model.base.num_layers(); ++l) {
    ws.push_back(mul(model.frozen_weights[l], gates[l]));
    bs.push_back(model.frozen_biases[l]);
    acts.push_back(model.base.layers()[l].activation);
  }
  return forward_layers(ws, bs, acts, model.base.embedding_index(), x);
}

Tensor sparsity_penalty(const MaskSet& masks) {
  Tensor total;
  for (const auto& pi : masks.logits) {
    Tensor term = masks.penalty == SparsityPenalty::kLogits ? sum(pi) : sum(sigmoid(pi));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

double keep_ratio(const MaskSet& masks, double tau_g) {
  std::size_t total = masks.total_gates();
  if (total == 0) throw ValueError("keep_ratio: no gates");
  std::size_t open = 0;
  if (masks.mode == MaskMode::kFrozenBinary) {
    for (const auto& layer : masks.frozen)
      for (double g : layer) open += g == 1.0;
  } else if (masks.mode == MaskMode::kDeterministic) {
    for (const auto& pi : masks.logits)
      for (double s : det_gate_values(pi, tau_g)) open += s > masks.gamma;
  } else {
    throw ValueError("keep_ratio: undefined in sampled mode (gates are stochastic)");
  }
  return static_cast<double>(open) / static_cast<double>(total);
}

double keep_ratio(const MaskedModel& model) { return keep_ratio(model.masks, model.masks.tau_g); }

void freeze(MaskSet& masks, double tau_g) {
  masks.frozen.clear();
  for (const auto& pi : masks.logits) {
    auto s = det_gate_values(pi, tau_g);
    std::vector<double> m(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) m[i] = s[i] > masks.gamma ? 1.0 : 0.0;
    masks.frozen.push_back(std::move(m));
  }
  masks.mode = MaskMode::kFrozenBinary;
}

void freeze_with_keep_ratio(MaskSet& masks, double keep, double tau_g) {
  if (keep < 0.0 || keep > 1.0) throw ValueError("freeze_with_keep_ratio: keep outside [0,1]");
  std::size_t total = masks.total_gates();
  std::vector<std::pair<double, std::size_t>> flat;  // (gate value, flat index)
  flat.reserve(total);
  std::size_t offset = 0;
  for (const auto& pi : masks.logits) {
    for (double s : det_gate_values(pi, tau_g)) flat.emplace_back(s, offset++);
  }
  std::size_t k = static_cast<std::size_t>(std::llround(keep * static_cast<double>(total)));
  k = std::min(k, total);
  std::stable_sort(flat.begin(), flat.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<char> open(total, 0);
  for (std::size_t i = 0; i < k; ++i) open[flat[i].second] = 1;
  masks.frozen.clear();
  offset = 0;
  for (const auto& pi : masks.logits) {
    std::vector<double> m(pi.numel());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = open[offset++] ? 1.0 : 0.0;
    masks.frozen.push_back(std::move(m));
  }
  masks.mode = MaskMode::kFrozenBinary;
}

DenseNetwork finalize_subnetwork(const MaskedModel& model) {
  if (model.masks.mode != MaskMode::kFrozenBinary)
    throw ValueError("finalize_subnetwork: mask must be frozen binary");
  for (const auto& layer : model.masks.frozen)
    for (double g : layer)
      if (g != 0.0 && g != 1.0) throw ValueError("finalize_subnetwork: non-binary gate");
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l < model.base.num_layers(); ++l) {
    const auto& src = model.base.layers()[l];
    std::vector<double> w = src.weight.value();
    std::size_t slot;
    if (is_masked(model.masks, l, &slot)) {
      const auto& m = model.masks.frozen[slot];
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = m[i] == 1.0 ? w[i] : 0.0;
    }
    DenseLayer out;
    out.weight = Tensor::param(src.weight.shape(), std::move(w));
    out.bias = Tensor::param(src.bias.shape(), src.bias.value());
    out.activation = src.activation;
    layers.push_back(std::move(out));
  }
  return DenseNetwork(std::move(layers), model.base.embedding_index());
}

void clamp_logits(MaskSet& masks, double c) {
  for (auto& pi : masks.logits)
    for (auto& v : pi.mutable_value()) v = std::clamp(v, -c, c);
}

}  // namespace spurnet
