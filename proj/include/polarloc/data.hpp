#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ploc {

/// Single-channel polar radar image, row-major with rows = azimuth bins
/// (row index proportional to bearing over [0, 360)) and columns = range bins.
struct PolarScan {
  std::string id;
  double timestamp = 0.0;
  std::size_t angular_bins = 0;
  std::size_t radial_bins = 0;
  std::vector<float> image;

  float at(std::size_t a, std::size_t r) const { return image[a * radial_bins + r]; }
  float& at(std::size_t a, std::size_t r) { return image[a * radial_bins + r]; }
};

/// Planar ground-truth pose.
struct Pose {
  double timestamp = 0.0;
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
};

double planar_distance(const Pose& a, const Pose& b);

/// Scans paired with their matched poses, after filtering.
struct Traversal {
  std::string name;
  std::string role;  // map | query | train
  std::vector<PolarScan> scans;
  std::vector<Pose> poses;

  std::size_t size() const { return scans.size(); }
};

struct FilterRules {
  double min_displacement_m = 0.1;
  double pose_tolerance_s = 1.0;
  std::size_t angular_bins = 384;
  std::size_t radial_bins = 128;
};

/// Matches each scan (in timestamp order) to its nearest pose, drops scans
/// whose nearest pose is more than pose_tolerance_s away, drops scans that
/// moved less than min_displacement_m from the previously retained one,
/// resamples to the configured resolution and min-max normalizes to [0, 1].
/// `poses` must be sorted by strictly increasing timestamp.
Traversal filter_traversal(std::vector<PolarScan> scans, std::span<const Pose> poses,
                           const FilterRules& rules, std::string name = {}, std::string role = {});

/// Reads every *.plsc / *.pgm file in `scan_dir` plus the pose CSV and
/// applies filter_traversal. Throws DataError naming the offending file.
Traversal ingest(const std::filesystem::path& scan_dir, const std::filesystem::path& pose_file,
                 const FilterRules& rules, std::string name = {}, std::string role = {});

/// Loads `<dir>/scans` and `<dir>/poses.csv`.
Traversal ingest_directory(const std::filesystem::path& dir, const FilterRules& rules, std::string role = {});

/// Writes `<dir>/scans/<id>.plsc` and `<dir>/poses.csv` (one pose per scan).
void write_traversal(const std::filesystem::path& dir, const Traversal& traversal);

// --- file formats -----------------------------------------------------------

/// "PLSC A R timestamp\n" followed by A*R little-endian float32 values.
void write_plsc(const std::filesystem::path& path, const PolarScan& scan);
PolarScan read_plsc(const std::filesystem::path& path);
/// Binary PGM (P5, maxval <= 255), azimuth as rows, scaled to [0, 1]. The
/// timestamp is parsed from the file stem.
PolarScan read_pgm(const std::filesystem::path& path);
/// Dispatches on extension.
PolarScan read_scan(const std::filesystem::path& path);

/// CSV with header "timestamp,x,y,yaw".
std::vector<Pose> read_poses_csv(const std::filesystem::path& path);
void write_poses_csv(const std::filesystem::path& path, std::span<const Pose> poses);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double value);

// --- image helpers ----------------------------------------------------------

PolarScan resample_bilinear(const PolarScan& scan, std::size_t angular_bins, std::size_t radial_bins);
void normalize_minmax(PolarScan& scan);
/// Rolls rows so that output row a equals input row (a + shift) mod A.
PolarScan roll_angular(const PolarScan& scan, std::ptrdiff_t shift);

// --- place labels -----------------------------------------------------------

enum class PairLabel : std::uint8_t { Similar, Dissimilar, Excluded };

struct PairThresholds {
  double positive_radius_m = 5.0;
  double negative_radius_m = 20.0;
};

PairLabel label_pair(const Pose& a, const Pose& b, const PairThresholds& thresholds = {});

/// Dense label matrix between two pose lists (rows = first list).
class PairRelation {
 public:
  PairRelation(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), labels_(rows * cols) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  PairLabel at(std::size_t i, std::size_t j) const { return labels_[i * cols_ + j]; }
  void set(std::size_t i, std::size_t j, PairLabel label) { labels_[i * cols_ + j] = label; }

 private:
  std::size_t rows_, cols_;
  std::vector<PairLabel> labels_;
};

/// Similar iff planar distance <= positive radius, dissimilar iff >= negative
/// radius, excluded otherwise.
PairRelation label_pairs(std::span<const Pose> a, std::span<const Pose> b, const PairThresholds& thresholds = {});

}  // namespace ploc
