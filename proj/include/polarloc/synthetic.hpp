#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "polarloc/data.hpp"

namespace ploc {

struct Landmark {
  double x = 0.0;
  double y = 0.0;
  double radius = 1.0;
};

using Waypoints = std::vector<std::pair<double, double>>;

/// Desk-scale stand-in for a radar driving dataset: circular landmarks on a
/// square world, a training loop and a disjoint evaluation loop driven twice
/// (map and query) with independent headings, lateral offsets and noise.
struct SyntheticWorldSpec {
  double world_size_m = 500.0;
  std::size_t landmark_count = 300;
  double landmark_radius_min_m = 0.5;
  double landmark_radius_max_m = 3.0;
  /// No landmark centre closer than this to a route.
  double route_clearance_m = 5.0;
  double max_range_m = 164.0;
  std::size_t angular_bins = 384;
  std::size_t radial_bins = 128;
  double noise_sigma = 0.02;
  double speckle_probability = 0.002;
  /// Intensity multiplier for each further hit along a ray.
  double hit_decay = 0.6;
  std::size_t max_hits_per_ray = 4;
  double radial_spread_bins = 0.8;

  Waypoints train_waypoints{{60, 150}, {160, 150}, {160, 250}, {60, 250}, {60, 150}};
  Waypoints eval_waypoints{{340, 250}, {440, 250}, {440, 350}, {340, 350}, {340, 250}};
  std::size_t train_scans = 200;
  std::size_t map_scans = 200;
  std::size_t query_scans = 200;
  double lateral_jitter_m = 1.0;
  double heading_jitter_rad = 0.05;

  /// Traversal-to-traversal change. Each traversal drops its own random
  /// subset of landmarks, parks its own objects beside the route, and every
  /// scan sees its own moving objects.
  double landmark_dropout = 0.0;
  double parked_per_100m = 0.0;
  double parked_offset_min_m = 4.0;
  double parked_offset_max_m = 6.0;
  double moving_objects_mean = 0.0;
  double moving_range_min_m = 8.0;
  double moving_range_max_m = 80.0;
  double clutter_radius_min_m = 0.8;
  double clutter_radius_max_m = 1.2;

  std::uint64_t seed = 7;

  void validate() const;
};

struct SyntheticDataset {
  std::vector<Landmark> landmarks;
  Traversal train;
  Traversal map;
  Traversal query;
};

SyntheticDataset generate_synthetic(const SyntheticWorldSpec& spec);

/// Renders the polar scan seen from `pose`. Noise is added only when `noise`
/// is given. Throws DataError when no landmark is within range.
std::vector<float> render_scan(const std::vector<Landmark>& landmarks, const Pose& pose,
                               const SyntheticWorldSpec& spec, std::mt19937_64* noise = nullptr);

}  // namespace ploc
