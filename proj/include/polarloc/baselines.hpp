#pragma once

#include <vector>

#include "polarloc/data.hpp"

// Hand-crafted rotation-tolerant descriptors used as non-learned baselines.
namespace ploc {

struct ScanContextSpec {
  std::size_t sectors = 64;
  std::size_t rings = 16;
};

/// Sector x ring block means of a polar scan, row-major (one row per sector).
struct ScanContextDescriptor {
  std::size_t sectors = 0;
  std::size_t rings = 0;
  std::vector<float> matrix;
};

struct RingKeyDescriptor {
  std::vector<float> values;
};

/// Block-average the scan into spec.sectors x spec.rings cells. Both must
/// divide the scan's extents.
ScanContextDescriptor scancontext(const PolarScan& scan, const ScanContextSpec& spec = {});

/// Per-ring mean intensity over the whole circle. The angular sum is taken
/// in sorted order, so any cyclic roll of the scan gives identical bits.
RingKeyDescriptor ring_key(const PolarScan& scan, std::size_t rings = ScanContextSpec{}.rings);

/// Smallest mean per-sector cosine distance over all cyclic sector shifts.
/// A zero sector against a non-zero one counts as distance 1, two zero sectors
/// as 0. In [0, 1] for non-negative inputs.
double scancontext_distance(const ScanContextDescriptor& a, const ScanContextDescriptor& b);

/// Euclidean distance between ring keys.
double ringkey_distance(const RingKeyDescriptor& a, const RingKeyDescriptor& b);

}  // namespace ploc
