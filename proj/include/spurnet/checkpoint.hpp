#pragma once

#include <cstdint>
#include <string>

#include "spurnet/eval.hpp"
#include "spurnet/masking.hpp"
#include "spurnet/network.hpp"

namespace spurnet {

/// Versioned JSON checkpoints. Doubles are serialized with shortest
/// round-trip rendering, so save/load is bit-exact.
void save_network(const DenseNetwork& net, const std::string& path);
DenseNetwork load_network(const std::string& path);

void save_mask(const MaskSet& masks, const std::string& path);
MaskSet load_mask(const std::string& path);

void save_metrics(const MetricsReport& report, const std::string& path);

void save_group_table(const GroupTable& table, const std::string& path);

/// FNV-1a over the raw bytes of every parameter, in layer order.
std::uint64_t hash_network(const DenseNetwork& net);

}  // namespace spurnet
