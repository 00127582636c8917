#include "spurnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "spurnet/error.hpp"

namespace spurnet {

namespace {
constexpr double kPi = 3.14159265358979323846;

// Moons coordinates and the displacement live on a 2^-26 grid, so adding and
// removing the shift are exact and the counterfactual toggle is an exact
// involution.
constexpr double kGrid = 67108864.0;  // 2^26
double quantize(double v) { return std::nearbyint(v * kGrid) / kGrid; }

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

const std::vector<int>* LabeledDataset::attribute(const std::string& name) const {
  for (const auto& [n, vals] : attributes)
    if (n == name) return &vals;
  return nullptr;
}

std::vector<std::string> LabeledDataset::attribute_names() const {
  std::vector<std::string> out;
  for (const auto& [n, vals] : attributes) out.push_back(n);
  return out;
}

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& idx) const {
  LabeledDataset out;
  out.inputs = inputs.gather_rows(idx);
  out.labels.reserve(idx.size());
  for (auto i : idx) out.labels.push_back(labels[i]);
  for (const auto& [name, vals] : attributes) {
    std::vector<int> sub;
    sub.reserve(idx.size());
    for (auto i : idx) sub.push_back(vals[i]);
    out.attributes.emplace_back(name, std::move(sub));
  }
  if (!cluster_ids.empty()) {
    out.cluster_ids.reserve(idx.size());
    for (auto i : idx) out.cluster_ids.push_back(cluster_ids[i]);
  }
  out.split = split;
  out.num_classes = num_classes;
  return out;
}

LabeledDataset gen_two_moons(const SpuriousMoonsConfig& cfg) {
  if (cfg.rho < 0.0 || cfg.rho > 1.0) throw ValueError("gen_two_moons: rho outside [0,1]");
  if (cfg.n < 4) throw ValueError("gen_two_moons: n must be at least 4");
  Rng rng(cfg.seed, streams::kData);
  const std::size_t n0 = (cfg.n + 1) / 2;
  LabeledDataset ds;
  ds.inputs = Matrix(cfg.n, 2);
  ds.labels.resize(cfg.n);
  ds.num_classes = 2;
  std::vector<int> aligned(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    int y = i < n0 ? 0 : 1;
    double t = rng.uniform(0.0, kPi);
    double x1, x2;
    if (y == 0) {
      x1 = std::cos(t);
      x2 = std::sin(t);
    } else {
      x1 = 1.0 - std::cos(t);
      x2 = 0.5 - std::sin(t);
    }
    x1 = quantize(x1 + cfg.noise * rng.normal());
    x2 = quantize(x2 + cfg.noise * rng.normal());
    bool shift = rng.bernoulli(cfg.rho);
    if (shift) x1 += (y == 1 ? quantize(cfg.spur_shift) : -quantize(cfg.spur_shift));
    ds.inputs(i, 0) = x1;
    ds.inputs(i, 1) = x2;
    ds.labels[i] = y;
    aligned[i] = shift ? 1 : 0;
  }
  ds.attributes.emplace_back("x1_aligned", std::move(aligned));
  return ds;
}

MarkerKind marker_kind_from_name(const std::string& name) {
  if (name == "corner") return MarkerKind::kCornerPatch;
  if (name == "bottom") return MarkerKind::kBottomBand;
  if (name == "top") return MarkerKind::kTopBand;
  if (name == "right") return MarkerKind::kRightEdge;
  throw ConfigError("unknown marker kind: " + name);
}

std::string marker_kind_name(MarkerKind k) {
  switch (k) {
    case MarkerKind::kCornerPatch: return "corner";
    case MarkerKind::kBottomBand: return "bottom";
    case MarkerKind::kTopBand: return "top";
    case MarkerKind::kRightEdge: return "right";
  }
  throw ValueError("bad marker kind");
}

std::vector<std::size_t> marker_region(MarkerKind kind, std::size_t g) {
  std::vector<std::size_t> px;
  switch (kind) {
    case MarkerKind::kCornerPatch:
      for (std::size_t r = 0; r < 2 && r < g; ++r)
        for (std::size_t c = 0; c < 2 && c < g; ++c) px.push_back(r * g + c);
      break;
    case MarkerKind::kBottomBand:
      for (std::size_t c = 0; c < g; ++c) px.push_back((g - 1) * g + c);
      break;
    case MarkerKind::kTopBand:
      // skip the corner-patch columns so the default combinations stay disjoint
      for (std::size_t c = 2; c < g; ++c) px.push_back(c);
      break;
    case MarkerKind::kRightEdge:
      for (std::size_t r = 1; r + 1 < g; ++r) px.push_back(r * g + (g - 1));
      break;
  }
  return px;
}

namespace {

// class-determined stripe template over the interior of the grid
double core_pixel(int cls, std::size_t r, std::size_t c, std::size_t g, double contrast,
                  double background) {
  const std::size_t lo = 2, hi = g - 2;
  if (r < lo || r >= hi || c < lo || c >= hi) return background;
  bool on = false;
  switch (cls % 4) {
    case 0: on = (r >= c ? r - c : c - r) <= 1; break;                     // main diagonal
    case 1: on = (r + c >= g - 2 && r + c <= g); break;                    // anti-diagonal
    case 2: on = (r >= g / 2 - 1 && r <= g / 2); break;                    // horizontal bar
    case 3: on = (c >= g / 2 - 1 && c <= g / 2); break;                    // vertical bar
  }
  return on ? background + contrast : background;
}

}  // namespace

LabeledDataset gen_synthetic_images(const SyntheticImageConfig& cfg) {
  if (cfg.classes < 2 || cfg.classes > 4) throw ConfigError("gen_synthetic_images: classes in [2,4]");
  if (cfg.grid < 6) throw ConfigError("gen_synthetic_images: grid too small");
  for (const auto& a : cfg.attributes)
    if (a.rho < 0.0 || a.rho > 1.0) throw ConfigError("gen_synthetic_images: rho outside [0,1]");

  // attribute regions must be pairwise disjoint
  std::vector<char> used(cfg.grid * cfg.grid, 0);
  for (const auto& a : cfg.attributes) {
    for (std::size_t p : marker_region(a.kind, cfg.grid)) {
      if (used[p])
        throw ConfigError("gen_synthetic_images: overlapping attribute regions at attribute '" +
                          a.name + "'");
      used[p] = 1;
    }
  }

  Rng rng(cfg.seed, streams::kData);
  const std::size_t n = cfg.per_class * static_cast<std::size_t>(cfg.classes);
  const std::size_t d = cfg.grid * cfg.grid;
  LabeledDataset ds;
  ds.inputs = Matrix(n, d);
  ds.labels.resize(n);
  ds.num_classes = cfg.classes;
  std::vector<std::vector<int>> attr_vals(cfg.attributes.size(), std::vector<int>(n));

  for (std::size_t i = 0; i < n; ++i) {
    int y = static_cast<int>(i / cfg.per_class);
    auto row = ds.inputs.row(i);
    for (std::size_t r = 0; r < cfg.grid; ++r)
      for (std::size_t c = 0; c < cfg.grid; ++c) {
        double v = core_pixel(y, r, c, cfg.grid, cfg.core_contrast, cfg.background) +
                   cfg.pixel_noise * rng.normal();
        row[r * cfg.grid + c] = std::clamp(v, 0.0, 1.0);
      }
    for (std::size_t a = 0; a < cfg.attributes.size(); ++a) {
      const auto& spec = cfg.attributes[a];
      bool align = rng.bernoulli(spec.rho);
      int state = align ? (y % 2) : 1 - (y % 2);
      double intensity = state == 1 ? spec.hi : spec.lo;
      for (std::size_t p : marker_region(spec.kind, cfg.grid)) row[p] = intensity;
      attr_vals[a][i] = state;
    }
    if (cfg.label_noise > 0.0 && rng.bernoulli(cfg.label_noise))
      y = (y + 1) % cfg.classes;
    ds.labels[i] = y;
  }
  for (std::size_t a = 0; a < cfg.attributes.size(); ++a)
    ds.attributes.emplace_back(cfg.attributes[a].name, std::move(attr_vals[a]));
  return ds;
}

SplitResult split(const LabeledDataset& ds, std::array<double, 3> fractions, std::uint64_t seed,
                  const std::string& balanced_test_attribute) {
  double total = fractions[0] + fractions[1] + fractions[2];
  if (std::fabs(total - 1.0) > 1e-9) throw ValueError("split: fractions must sum to 1");
  Rng rng(seed, streams::kSplit);
  auto perm = rng.permutation(ds.size());
  std::size_t n_train = static_cast<std::size_t>(std::floor(fractions[0] * ds.size()));
  std::size_t n_val = static_cast<std::size_t>(std::floor(fractions[1] * ds.size()));
  std::size_t n_test = static_cast<std::size_t>(std::floor(fractions[2] * ds.size()));
  n_train += ds.size() - (n_train + n_val + n_test);  // leftover goes to train

  std::vector<std::size_t> train_idx(perm.begin(), perm.begin() + n_train);
  std::vector<std::size_t> val_idx(perm.begin() + n_train, perm.begin() + n_train + n_val);
  std::vector<std::size_t> test_idx(perm.begin() + n_train + n_val, perm.end());

  if (!balanced_test_attribute.empty()) {
    const auto* attr = ds.attribute(balanced_test_attribute);
    if (!attr) throw ValueError("split: unknown attribute '" + balanced_test_attribute + "'");
    std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
    for (auto i : test_idx) groups[{ds.labels[i], (*attr)[i]}].push_back(i);
    // every (y, a) combination present in the full dataset must be non-empty
    std::map<std::pair<int, int>, bool> expected;
    for (std::size_t i = 0; i < ds.size(); ++i) expected[{ds.labels[i], (*attr)[i]}] = true;
    std::size_t min_count = ds.size();
    for (const auto& [g, present] : expected) {
      auto it = groups.find(g);
      if (it == groups.end() || it->second.empty())
        throw ValueError("split: balanced test group (y=" + std::to_string(g.first) +
                         ", a=" + std::to_string(g.second) + ") is empty");
      min_count = std::min(min_count, it->second.size());
    }
    std::vector<std::size_t> balanced;
    for (auto& [g, members] : groups) {
      members.resize(min_count);
      balanced.insert(balanced.end(), members.begin(), members.end());
    }
    test_idx = std::move(balanced);
  }

  SplitResult out{ds.subset(train_idx), ds.subset(val_idx), ds.subset(test_idx)};
  out.train.split = "train";
  out.val.split = "val";
  out.test.split = "test";
  return out;
}

void save_dataset(const LabeledDataset& ds, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("save_dataset: cannot open " + path);
  const std::size_t d = ds.inputs.cols;
  for (std::size_t c = 0; c < d; ++c) f << "x_" << c << ",";
  f << "y";
  for (const auto& [name, vals] : ds.attributes) f << "," << name;
  if (!ds.cluster_ids.empty()) f << ",cluster";
  f << "\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t c = 0; c < d; ++c) f << format_g17(ds.inputs(i, c)) << ",";
    f << ds.labels[i];
    for (const auto& [name, vals] : ds.attributes) f << "," << vals[i];
    if (!ds.cluster_ids.empty()) f << "," << ds.cluster_ids[i];
    f << "\n";
  }
  if (!f) throw IoError("save_dataset: write failed for " + path);
}

LabeledDataset load_dataset(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("load_dataset: cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw IoError("load_dataset: empty file " + path);

  auto split_csv = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
      if (ch == ',') {
        out.push_back(cur);
        cur.clear();
      } else if (ch != '\r') {
        cur.push_back(ch);
      }
    }
    out.push_back(cur);
    return out;
  };

  auto header = split_csv(line);
  std::size_t d = 0;
  while (d < header.size() && header[d] == "x_" + std::to_string(d)) ++d;
  if (d == 0 || d >= header.size() || header[d] != "y")
    throw IoError("load_dataset: malformed header in " + path + " (line 1)");
  std::vector<std::string> attr_names;
  bool has_cluster = false;
  for (std::size_t c = d + 1; c < header.size(); ++c) {
    if (header[c] == "cluster" && c + 1 == header.size()) {
      has_cluster = true;
    } else if (header[c].empty() || header[c] == "cluster") {
      throw IoError("load_dataset: malformed header in " + path + " (line 1)");
    } else {
      attr_names.push_back(header[c]);
    }
  }

  LabeledDataset ds;
  std::vector<double> data;
  std::vector<std::vector<int>> attr_vals(attr_names.size());
  std::size_t line_no = 1;
  int max_label = -1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_csv(line);
    if (fields.size() != header.size())
      throw IoError("load_dataset: wrong field count in " + path + " (line " +
                    std::to_string(line_no) + ")");
    try {
      for (std::size_t c = 0; c < d; ++c) data.push_back(std::stod(fields[c]));
      int y = std::stoi(fields[d]);
      ds.labels.push_back(y);
      max_label = std::max(max_label, y);
      for (std::size_t a = 0; a < attr_names.size(); ++a)
        attr_vals[a].push_back(std::stoi(fields[d + 1 + a]));
      if (has_cluster) ds.cluster_ids.push_back(std::stoi(fields.back()));
    } catch (const std::exception&) {
      throw IoError("load_dataset: bad value in " + path + " (line " + std::to_string(line_no) +
                    ")");
    }
  }
  ds.inputs = Matrix(ds.labels.size(), d, std::move(data));
  for (std::size_t a = 0; a < attr_names.size(); ++a)
    ds.attributes.emplace_back(attr_names[a], std::move(attr_vals[a]));
  ds.num_classes = max_label + 1;
  return ds;
}

Intervention moons_intervention(double spur_shift) {
  Intervention iv;
  iv.attribute = "x1_aligned";
  double shift_q = quantize(spur_shift);
  iv.apply = [shift_q](std::span<double> row, int y, int& a) {
    double dir = y == 1 ? shift_q : -shift_q;
    if (a == 1) {
      row[0] -= dir;
      a = 0;
    } else {
      row[0] += dir;
      a = 1;
    }
  };
  return iv;
}

Intervention image_intervention(const SyntheticImageConfig& cfg, const std::string& attribute) {
  for (const auto& spec : cfg.attributes) {
    if (spec.name != attribute) continue;
    auto region = marker_region(spec.kind, cfg.grid);
    double hi = spec.hi, lo = spec.lo;
    Intervention iv;
    iv.attribute = attribute;
    iv.apply = [region, hi, lo](std::span<double> row, int /*y*/, int& a) {
      a = 1 - a;
      double intensity = a == 1 ? hi : lo;
      for (std::size_t p : region) row[p] = intensity;
    };
    return iv;
  }
  throw ValueError("image_intervention: attribute '" + attribute + "' has no registered marker");
}

}  // namespace spurnet
