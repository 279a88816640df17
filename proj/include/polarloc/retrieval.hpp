#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "polarloc/data.hpp"

namespace ploc {

/// A geotagged global descriptor.
struct IndexEntry {
  std::string scan_id;
  Pose pose;
  std::vector<float> descriptor;
};

/// Immutable database of geotagged descriptors searched by exact Euclidean
/// distance. Entry order is the tie-break order.
class DescriptorIndex {
 public:
  DescriptorIndex(std::vector<IndexEntry> entries, std::string method);

  std::size_t size() const { return entries_.size(); }
  std::size_t dimension() const { return dimension_; }
  const std::string& method() const { return method_; }
  const IndexEntry& entry(std::size_t i) const { return entries_.at(i); }
  const std::vector<IndexEntry>& entries() const { return entries_; }

 private:
  std::vector<IndexEntry> entries_;
  std::string method_;
  std::size_t dimension_ = 0;
};

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;

  bool operator==(const Neighbor&) const = default;
};

/// Exact k nearest entries, ascending distance, ties by entry order. Returns
/// min(k, size) results.
std::vector<Neighbor> knn(const DescriptorIndex& index, std::span<const float> query, std::size_t k);

struct EvalReport {
  std::size_t max_n = 0;
  std::vector<double> thresholds_m;
  /// recall[t][n - 1] = Recall@n at thresholds_m[t].
  std::vector<std::vector<double>> recall;
  /// first_hit[t][q] = 1-based rank of the first top-max_n entry within
  /// thresholds_m[t] of query q, 0 when there is none.
  std::vector<std::vector<std::size_t>> first_hit;
  std::size_t query_count = 0;

  double recall_at(std::size_t n, double threshold_m) const;
  /// Recall non-decreasing in N and in the threshold.
  bool is_monotone() const;
  /// "N,threshold_m,recall" rows, thresholds outer, N inner.
  void write_csv(std::ostream& out) const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Recall@N from precomputed rankings: rankings[q] lists map indices, best
/// first (at least min(max_n, map size) of them).
EvalReport evaluate_rankings(const std::vector<std::vector<std::size_t>>& rankings, std::span<const Pose> map_poses,
                             std::span<const Pose> query_poses, std::size_t max_n,
                             const std::vector<double>& thresholds_m);

/// Euclidean-kNN evaluation of `queries` against `index`.
EvalReport evaluate(const DescriptorIndex& index, const std::vector<IndexEntry>& queries, std::size_t max_n,
                    const std::vector<double>& thresholds_m);

/// "PDSC dim count method\n", then per entry: u32 id length, id bytes,
/// x, y, yaw as f64, dim x f32. Little-endian.
void write_descriptors(std::ostream& out, const std::string& method, const std::vector<IndexEntry>& entries);
void write_descriptors(const std::filesystem::path& path, const std::string& method,
                       const std::vector<IndexEntry>& entries);
struct DescriptorFile {
  std::string method;
  std::vector<IndexEntry> entries;
};
DescriptorFile read_descriptors(std::istream& in);
DescriptorFile read_descriptors(const std::filesystem::path& path);

}  // namespace ploc
