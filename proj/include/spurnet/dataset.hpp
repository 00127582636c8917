#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spurnet/matrix.hpp"
#include "spurnet/rng.hpp"

namespace spurnet {

/// Inputs with class labels plus evaluation-only attribute labels. Group ids
/// are always derived as (y, a) pairs, never stored. Training code receives
/// inputs and class labels only; attributes exist for evaluation.
struct LabeledDataset {
  Matrix inputs;  // n x d
  std::vector<int> labels;
  std::vector<std::pair<std::string, std::vector<int>>> attributes;  // ordered
  std::vector<int> cluster_ids;  // empty until clustering assigns them
  std::string split = "train";
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  const std::vector<int>* attribute(const std::string& name) const;
  std::vector<std::string> attribute_names() const;
  LabeledDataset subset(const std::vector<std::size_t>& idx) const;
};

struct SpuriousMoonsConfig {
  std::size_t n = 2000;
  double noise = 0.1;
  double rho = 0.95;        // probability the x1 displacement is applied
  double spur_shift = 1.5;  // x1 displacement magnitude
  std::uint64_t seed = 1;
};

/// Interleaving two-moons with a class-aligned x1 displacement applied with
/// probability rho. The binary attribute "x1_aligned" records whether the
/// displacement was applied.
LabeledDataset gen_two_moons(const SpuriousMoonsConfig& cfg);

enum class MarkerKind { kCornerPatch, kBottomBand, kTopBand, kRightEdge };

MarkerKind marker_kind_from_name(const std::string& name);
std::string marker_kind_name(MarkerKind k);

struct AttributeSpec {
  std::string name;
  double rho = 0.95;  // probability the marker state equals the class label
  MarkerKind kind = MarkerKind::kCornerPatch;
  double hi = 1.0;  // marker intensity for state 1
  double lo = 0.0;  // marker intensity for state 0
};

struct SyntheticImageConfig {
  std::size_t grid = 12;
  int classes = 2;
  std::size_t per_class = 500;
  double core_contrast = 0.5;
  double background = 0.1;
  double pixel_noise = 0.2;
  double label_noise = 0.0;
  std::vector<AttributeSpec> attributes;
  std::uint64_t seed = 1;
};

/// Flat grid images: a class-determined stripe pattern plus one localized
/// marker per attribute, each independently aligned with the class with
/// probability rho_a. Marker pixels are rendered noise-free so the
/// counterfactual swap is exact. Pixels clamped to [0,1].
LabeledDataset gen_synthetic_images(const SyntheticImageConfig& cfg);

/// Pixel indices a marker occupies (used for validation and interventions).
std::vector<std::size_t> marker_region(MarkerKind kind, std::size_t grid);

struct SplitResult {
  LabeledDataset train, val, test;
};

/// Deterministic shuffled split. When balanced_test_attribute is set, the
/// test split is subsampled to equal per-(y,a) counts for that attribute.
SplitResult split(const LabeledDataset& ds, std::array<double, 3> fractions, std::uint64_t seed,
                  const std::string& balanced_test_attribute = "");

/// CSV round-trip at 17 significant digits: header x_0..x_{d-1}, y, then one
/// column per attribute (plus "cluster" when assignments exist).
void save_dataset(const LabeledDataset& ds, const std::string& path);
LabeledDataset load_dataset(const std::string& path);

/// Counterfactual transform for one attribute: toggles the rendered marker
/// (images) or the x1 displacement (moons) in place and flips the attribute
/// value. Applying it twice restores the original sample. Evaluation-only.
struct Intervention {
  std::string attribute;
  std::function<void(std::span<double> row, int y, int& a)> apply;
};

Intervention moons_intervention(double spur_shift);
Intervention image_intervention(const SyntheticImageConfig& cfg, const std::string& attribute);

}  // namespace spurnet
