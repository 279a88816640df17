#include "polarloc/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "polarloc/error.hpp"

namespace ploc {

ScanContextDescriptor scancontext(const PolarScan& scan, const ScanContextSpec& spec) {
  expects(spec.sectors >= 1 && spec.rings >= 1, "scancontext: grid must be non-empty");
  expects(scan.angular_bins % spec.sectors == 0 && scan.radial_bins % spec.rings == 0,
          "scancontext: grid " + std::to_string(spec.sectors) + "x" + std::to_string(spec.rings) +
              " does not divide scan extents " + std::to_string(scan.angular_bins) + "x" +
              std::to_string(scan.radial_bins));
  const std::size_t bh = scan.angular_bins / spec.sectors, bw = scan.radial_bins / spec.rings;
  ScanContextDescriptor d{spec.sectors, spec.rings, std::vector<float>(spec.sectors * spec.rings)};
  for (std::size_t s = 0; s < spec.sectors; ++s) {
    for (std::size_t r = 0; r < spec.rings; ++r) {
      double acc = 0;
      for (std::size_t a = s * bh; a < (s + 1) * bh; ++a)
        for (std::size_t c = r * bw; c < (r + 1) * bw; ++c) acc += scan.at(a, c);
      d.matrix[s * spec.rings + r] = static_cast<float>(acc / static_cast<double>(bh * bw));
    }
  }
  return d;
}

RingKeyDescriptor ring_key(const PolarScan& scan, std::size_t rings) {
  expects(rings >= 1 && scan.radial_bins % rings == 0,
          "ring_key: " + std::to_string(rings) + " rings do not divide " + std::to_string(scan.radial_bins) +
              " radial bins");
  const std::size_t bw = scan.radial_bins / rings, A = scan.angular_bins;
  RingKeyDescriptor key{std::vector<float>(rings)};
  std::vector<double> column(A);
  for (std::size_t r = 0; r < rings; ++r) {
    for (std::size_t a = 0; a < A; ++a) {
      double acc = 0;
      for (std::size_t c = r * bw; c < (r + 1) * bw; ++c) acc += scan.at(a, c);
      column[a] = acc / static_cast<double>(bw);
    }
    std::sort(column.begin(), column.end());
    double total = 0;
    for (double v : column) total += v;
    key.values[r] = static_cast<float>(total / static_cast<double>(A));
  }
  return key;
}

double scancontext_distance(const ScanContextDescriptor& a, const ScanContextDescriptor& b) {
  expects(a.sectors == b.sectors && a.rings == b.rings && a.matrix.size() == b.matrix.size(),
          "scancontext_distance: descriptor shapes differ");
  const std::size_t S = a.sectors, R = a.rings;
  std::vector<double> norm_a(S), norm_b(S);
  for (std::size_t s = 0; s < S; ++s) {
    double na = 0, nb = 0;
    for (std::size_t r = 0; r < R; ++r) {
      na += static_cast<double>(a.matrix[s * R + r]) * a.matrix[s * R + r];
      nb += static_cast<double>(b.matrix[s * R + r]) * b.matrix[s * R + r];
    }
    norm_a[s] = std::sqrt(na);
    norm_b[s] = std::sqrt(nb);
  }
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t shift = 0; shift < S; ++shift) {
    double total = 0;
    for (std::size_t s = 0; s < S; ++s) {
      const std::size_t t = (s + shift) % S;
      const bool za = norm_a[s] == 0, zb = norm_b[t] == 0;
      if (za || zb) {
        total += (za && zb) ? 0.0 : 1.0;
        continue;
      }
      double dot = 0;
      for (std::size_t r = 0; r < R; ++r) dot += static_cast<double>(a.matrix[s * R + r]) * b.matrix[t * R + r];
      total += 1.0 - dot / (norm_a[s] * norm_b[t]);
    }
    best = std::min(best, total / static_cast<double>(S));
  }
  return best;
}

double ringkey_distance(const RingKeyDescriptor& a, const RingKeyDescriptor& b) {
  expects(a.values.size() == b.values.size(), "ringkey_distance: length mismatch");
  double acc = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = static_cast<double>(a.values[i]) - b.values[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace ploc
