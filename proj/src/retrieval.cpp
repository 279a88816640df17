#include "polarloc/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "polarloc/binary_io.hpp"
#include "polarloc/error.hpp"

namespace ploc {

DescriptorIndex::DescriptorIndex(std::vector<IndexEntry> entries, std::string method)
    : entries_(std::move(entries)), method_(std::move(method)) {
  if (entries_.empty()) throw ContractViolation("descriptor index needs at least one entry");
  dimension_ = entries_.front().descriptor.size();
  expects(dimension_ > 0, "descriptor index: zero-length descriptors");
  for (const auto& e : entries_)
    expects(e.descriptor.size() == dimension_, "descriptor index: inconsistent descriptor dimension for " + e.scan_id);
}

std::vector<Neighbor> knn(const DescriptorIndex& index, std::span<const float> query, std::size_t k) {
  expects(k >= 1, "knn: k must be at least 1");
  expects(query.size() == index.dimension(), "knn: query dimension " + std::to_string(query.size()) +
                                                 " does not match index dimension " +
                                                 std::to_string(index.dimension()));
  std::vector<Neighbor> all(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto& d = index.entry(i).descriptor;
    double acc = 0;
    for (std::size_t j = 0; j < d.size(); ++j) {
      const double diff = static_cast<double>(d[j]) - static_cast<double>(query[j]);
      acc += diff * diff;
    }
    all[i] = {i, std::sqrt(acc)};
  }
  const std::size_t take = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(),
                    [](const Neighbor& a, const Neighbor& b) {
                      return a.distance != b.distance ? a.distance < b.distance : a.index < b.index;
                    });
  all.resize(take);
  return all;
}

double EvalReport::recall_at(std::size_t n, double threshold_m) const {
  expects(n >= 1 && n <= max_n, "recall_at: N out of range");
  for (std::size_t t = 0; t < thresholds_m.size(); ++t)
    if (thresholds_m[t] == threshold_m) return recall[t][n - 1];
  throw ContractViolation("recall_at: threshold not in report");
}

bool EvalReport::is_monotone() const {
  std::vector<std::size_t> order(thresholds_m.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return thresholds_m[a] < thresholds_m[b]; });
  for (std::size_t t = 0; t < recall.size(); ++t)
    for (std::size_t n = 1; n < max_n; ++n)
      if (recall[t][n] < recall[t][n - 1]) return false;
  for (std::size_t i = 1; i < order.size(); ++i)
    for (std::size_t n = 0; n < max_n; ++n)
      if (recall[order[i]][n] < recall[order[i - 1]][n]) return false;
  return true;
}

void EvalReport::write_csv(std::ostream& out) const {
  out << "N,threshold_m,recall\n";
  for (std::size_t t = 0; t < thresholds_m.size(); ++t)
    for (std::size_t n = 1; n <= max_n; ++n)
      out << n << ',' << format_double(thresholds_m[t]) << ',' << format_double(recall[t][n - 1]) << '\n';
}

void EvalReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  write_csv(out);
}

EvalReport evaluate_rankings(const std::vector<std::vector<std::size_t>>& rankings, std::span<const Pose> map_poses,
                             std::span<const Pose> query_poses, std::size_t max_n,
                             const std::vector<double>& thresholds_m) {
  expects(!query_poses.empty(), "evaluate: no queries");
  expects(rankings.size() == query_poses.size(), "evaluate: one ranking per query required");
  expects(max_n >= 1, "evaluate: max N must be at least 1");
  expects(!thresholds_m.empty(), "evaluate: no distance thresholds");
  for (double t : thresholds_m) expects(t > 0, "evaluate: thresholds must be positive");

  EvalReport report;
  report.max_n = max_n;
  report.thresholds_m = thresholds_m;
  report.query_count = query_poses.size();
  for (double threshold : thresholds_m) {
    std::vector<std::size_t> hits(query_poses.size(), 0);
    std::vector<std::size_t> count_at(max_n + 1, 0);
    for (std::size_t q = 0; q < query_poses.size(); ++q) {
      const auto& ranked = rankings[q];
      const std::size_t depth = std::min(max_n, ranked.size());
      for (std::size_t r = 0; r < depth; ++r) {
        expects(ranked[r] < map_poses.size(), "evaluate: ranking refers to a missing map entry");
        if (planar_distance(map_poses[ranked[r]], query_poses[q]) <= threshold) {
          hits[q] = r + 1;
          break;
        }
      }
      if (hits[q]) count_at[hits[q]] += 1;
    }
    std::vector<double> recall(max_n);
    std::size_t cumulative = 0;
    for (std::size_t n = 1; n <= max_n; ++n) {
      cumulative += count_at[n];
      recall[n - 1] = static_cast<double>(cumulative) / static_cast<double>(query_poses.size());
    }
    report.recall.push_back(std::move(recall));
    report.first_hit.push_back(std::move(hits));
  }
  return report;
}

EvalReport evaluate(const DescriptorIndex& index, const std::vector<IndexEntry>& queries, std::size_t max_n,
                    const std::vector<double>& thresholds_m) {
  expects(!queries.empty(), "evaluate: no queries");
  std::vector<std::vector<std::size_t>> rankings;
  std::vector<Pose> query_poses, map_poses;
  for (const auto& q : queries) {
    std::vector<std::size_t> ranked;
    for (const auto& nb : knn(index, q.descriptor, max_n)) ranked.push_back(nb.index);
    rankings.push_back(std::move(ranked));
    query_poses.push_back(q.pose);
  }
  for (const auto& e : index.entries()) map_poses.push_back(e.pose);
  return evaluate_rankings(rankings, map_poses, query_poses, max_n, thresholds_m);
}

void write_descriptors(std::ostream& out, const std::string& method, const std::vector<IndexEntry>& entries) {
  expects(method.find_first_of(" \n") == std::string::npos && !method.empty(), "descriptor method id must be one word");
  const std::size_t dim = entries.empty() ? 0 : entries.front().descriptor.size();
  out << "PDSC " << dim << ' ' << entries.size() << ' ' << method << '\n';
  for (const auto& e : entries) {
    expects(e.descriptor.size() == dim, "write_descriptors: inconsistent descriptor dimension");
    binary::write_string(out, e.scan_id);
    binary::write_f64(out, e.pose.x);
    binary::write_f64(out, e.pose.y);
    binary::write_f64(out, e.pose.yaw);
    for (float v : e.descriptor) binary::write_f32(out, v);
  }
  if (!out) throw DataError("failed writing descriptor file");
}

void write_descriptors(const std::filesystem::path& path, const std::string& method,
                       const std::vector<IndexEntry>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  write_descriptors(out, method, entries);
}

DescriptorFile read_descriptors(std::istream& in) {
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic;
  std::size_t dim = 0, count = 0;
  DescriptorFile file;
  if (!(hs >> magic >> dim >> count >> file.method) || magic != "PDSC") throw DataError("malformed PDSC header");
  if (dim > (1u << 24)) throw DataError("PDSC descriptor dimension out of range");
  for (std::size_t i = 0; i < count; ++i) {
    IndexEntry e;
    e.scan_id = binary::read_string(in);
    e.pose.x = binary::read_f64(in);
    e.pose.y = binary::read_f64(in);
    e.pose.yaw = binary::read_f64(in);
    e.descriptor.resize(dim);
    for (auto& v : e.descriptor) v = binary::read_f32(in);
    file.entries.push_back(std::move(e));
  }
  return file;
}

DescriptorFile read_descriptors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open descriptor file " + path.string());
  return read_descriptors(in);
}

}  // namespace ploc
