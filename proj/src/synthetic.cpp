#include "polarloc/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <string>

#include "polarloc/error.hpp"
#include "polarloc/seed.hpp"

namespace ploc {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Route {
  Waypoints points;
  std::vector<double> cumulative;  // arc length at each waypoint
  bool closed = false;

  explicit Route(Waypoints wp) : points(std::move(wp)) {
    cumulative.push_back(0.0);
    for (std::size_t i = 1; i < points.size(); ++i)
      cumulative.push_back(cumulative.back() + std::hypot(points[i].first - points[i - 1].first,
                                                          points[i].second - points[i - 1].second));
    closed = points.size() > 2 && points.front() == points.back();
  }

  double length() const { return cumulative.back(); }

  // Position and unit tangent at arc length s (wrapped for closed routes).
  void at(double s, double& x, double& y, double& tx, double& ty) const {
    if (closed) s = std::fmod(std::fmod(s, length()) + length(), length());
    s = std::clamp(s, 0.0, length());
    std::size_t seg = 1;
    while (seg + 1 < points.size() && cumulative[seg] < s) ++seg;
    const double seg_len = cumulative[seg] - cumulative[seg - 1];
    const double t = seg_len > 0 ? (s - cumulative[seg - 1]) / seg_len : 0.0;
    const auto [x0, y0] = points[seg - 1];
    const auto [x1, y1] = points[seg];
    x = x0 + t * (x1 - x0);
    y = y0 + t * (y1 - y0);
    tx = seg_len > 0 ? (x1 - x0) / seg_len : 1.0;
    ty = seg_len > 0 ? (y1 - y0) / seg_len : 0.0;
  }

  double distance_to(double px, double py) const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < points.size(); ++i) {
      const auto [x0, y0] = points[i - 1];
      const auto [x1, y1] = points[i];
      const double dx = x1 - x0, dy = y1 - y0;
      const double len2 = dx * dx + dy * dy;
      const double t = len2 > 0 ? std::clamp(((px - x0) * dx + (py - y0) * dy) / len2, 0.0, 1.0) : 0.0;
      best = std::min(best, std::hypot(px - (x0 + t * dx), py - (y0 + t * dy)));
    }
    return best;
  }
};

struct TraversalPlan {
  const char* name;
  const char* role;
  const Route* route;
  std::size_t count;
  double phase;  // along-track offset in units of the sample spacing
  double phase_jitter;
  double time_origin;
};

}  // namespace

void SyntheticWorldSpec::validate() const {
  if (landmark_count == 0) throw DataError("synthetic world needs at least one landmark");
  expects(world_size_m > 0 && max_range_m > 0, "synthetic: world size and max range must be positive");
  expects(landmark_radius_min_m > 0 && landmark_radius_max_m >= landmark_radius_min_m,
          "synthetic: invalid landmark radius range");
  expects(angular_bins >= 1 && radial_bins >= 1, "synthetic: image extents must be positive");
  expects(train_waypoints.size() >= 2 && eval_waypoints.size() >= 2, "synthetic: routes need two waypoints");
  expects(train_scans >= 1 && map_scans >= 1 && query_scans >= 1, "synthetic: traversals must be non-empty");
  expects(noise_sigma >= 0 && speckle_probability >= 0 && speckle_probability <= 1,
          "synthetic: invalid noise settings");
  expects(hit_decay > 0 && hit_decay <= 1 && max_hits_per_ray >= 1 && radial_spread_bins > 0,
          "synthetic: invalid rendering settings");
  expects(landmark_dropout >= 0 && landmark_dropout < 1 && parked_per_100m >= 0 && moving_objects_mean >= 0,
          "synthetic: invalid clutter settings");
  expects(parked_offset_min_m > 0 && parked_offset_max_m >= parked_offset_min_m && moving_range_min_m > 0 &&
              moving_range_max_m >= moving_range_min_m && clutter_radius_min_m > 0 &&
              clutter_radius_max_m >= clutter_radius_min_m,
          "synthetic: invalid clutter geometry");
}

std::vector<float> render_scan(const std::vector<Landmark>& landmarks, const Pose& pose,
                               const SyntheticWorldSpec& spec, std::mt19937_64* noise) {
  const std::size_t A = spec.angular_bins, R = spec.radial_bins;
  // Split the heading into whole azimuth bins (applied as an exact row roll)
  // and a fractional remainder quantized to 2^-20 bins (applied to the rays).
  constexpr double kFracScale = 1048576.0;
  const auto q = static_cast<long long>(std::llround(pose.yaw * static_cast<double>(A) / kTwoPi * kFracScale));
  const long long whole = q >= 0 ? q / 1048576 : -((-q + 1048575) / 1048576);
  const double frac_bins = static_cast<double>(q - whole * 1048576) / kFracScale;
  const double frac_angle = frac_bins * kTwoPi / static_cast<double>(A);

  struct Local {
    double dx, dy, r;
  };
  std::vector<Local> near;
  for (const auto& lm : landmarks) {
    const double dx = lm.x - pose.x, dy = lm.y - pose.y;
    if (std::hypot(dx, dy) - lm.radius < spec.max_range_m) near.push_back({dx, dy, lm.radius});
  }

  std::vector<float> rendered(A * R, 0.0f);
  std::vector<double> hits;
  bool any_hit = false;
  const double bins_per_m = static_cast<double>(R) / spec.max_range_m;
  const double sigma = spec.radial_spread_bins;
  const auto reach = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  for (std::size_t j = 0; j < A; ++j) {
    const double phi = frac_angle + kTwoPi * static_cast<double>(j) / static_cast<double>(A);
    const double ux = std::cos(phi), uy = std::sin(phi);
    hits.clear();
    for (const auto& lm : near) {
      const double along = lm.dx * ux + lm.dy * uy;
      if (along <= 0) continue;
      const double perp2 = lm.dx * lm.dx + lm.dy * lm.dy - along * along;
      const double r2 = lm.r * lm.r;
      if (perp2 >= r2) continue;
      const double entry = along - std::sqrt(r2 - perp2);
      if (entry > 0 && entry < spec.max_range_m) hits.push_back(entry);
    }
    if (hits.empty()) continue;
    any_hit = true;
    std::sort(hits.begin(), hits.end());
    double intensity = 1.0;
    float* row = rendered.data() + j * R;
    for (std::size_t h = 0; h < std::min(hits.size(), spec.max_hits_per_ray); ++h) {
      const double centre = hits[h] * bins_per_m;
      const auto c = static_cast<std::ptrdiff_t>(std::floor(centre));
      for (std::ptrdiff_t r = c - reach; r <= c + reach; ++r) {
        if (r < 0 || r >= static_cast<std::ptrdiff_t>(R)) continue;
        const double z = (static_cast<double>(r) + 0.5 - centre) / sigma;
        const auto v = static_cast<float>(intensity * std::exp(-0.5 * z * z));
        row[r] = std::max(row[r], v);
      }
      intensity *= spec.hit_decay;
    }
  }
  if (!any_hit)
    throw DataError("synthetic: no landmark within range of pose (" + format_double(pose.x) + ", " +
                    format_double(pose.y) + ")");

  std::vector<float> image(A * R);
  const auto An = static_cast<long long>(A);
  for (std::size_t i = 0; i < A; ++i) {
    const auto src = static_cast<std::size_t>(((static_cast<long long>(i) + whole) % An + An) % An);
    std::copy_n(rendered.begin() + static_cast<std::ptrdiff_t>(src * R), R,
                image.begin() + static_cast<std::ptrdiff_t>(i * R));
  }

  if (noise) {
    std::normal_distribution<double> gauss(0.0, spec.noise_sigma);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (auto& v : image) {
      double value = v + (spec.noise_sigma > 0 ? gauss(*noise) : 0.0);
      if (spec.speckle_probability > 0 && unit(*noise) < spec.speckle_probability) value = unit(*noise);
      v = static_cast<float>(std::clamp(value, 0.0, 1.0));
    }
  }
  return image;
}

SyntheticDataset generate_synthetic(const SyntheticWorldSpec& spec) {
  spec.validate();
  const Route train_route(spec.train_waypoints);
  const Route eval_route(spec.eval_waypoints);

  SyntheticDataset ds;
  {
    std::mt19937_64 rng(derive_seed(spec.seed, "landmarks"));
    std::uniform_real_distribution<double> coord(0.0, spec.world_size_m);
    std::uniform_real_distribution<double> radius(spec.landmark_radius_min_m, spec.landmark_radius_max_m);
    std::size_t attempts = 0;
    while (ds.landmarks.size() < spec.landmark_count) {
      if (++attempts > 1000 * spec.landmark_count)
        throw DataError("synthetic: cannot place landmarks away from the routes");
      const Landmark lm{coord(rng), coord(rng), radius(rng)};
      const double clearance = spec.route_clearance_m + lm.radius;
      if (train_route.distance_to(lm.x, lm.y) < clearance || eval_route.distance_to(lm.x, lm.y) < clearance)
        continue;
      ds.landmarks.push_back(lm);
    }
  }

  const TraversalPlan plans[] = {
      {"train", "train", &train_route, spec.train_scans, 0.0, 0.0, 0.0},
      {"map", "map", &eval_route, spec.map_scans, 0.0, 0.0, 10000.0},
      {"query", "query", &eval_route, spec.query_scans, 0.5, 0.25, 20000.0},
  };
  for (const auto& plan : plans) {
    std::mt19937_64 pose_rng(derive_seed(spec.seed, std::string(plan.name) + ".poses"));
    std::mt19937_64 noise_rng(derive_seed(spec.seed, std::string(plan.name) + ".noise"));
    std::mt19937_64 clutter_rng(derive_seed(spec.seed, std::string(plan.name) + ".clutter"));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> clutter_radius(spec.clutter_radius_min_m, spec.clutter_radius_max_m);
    const Route& route = *plan.route;

    std::vector<Landmark> scene;
    for (const auto& lm : ds.landmarks)
      if (unit(clutter_rng) >= spec.landmark_dropout) scene.push_back(lm);
    const auto parked = static_cast<std::size_t>(std::llround(spec.parked_per_100m * route.length() / 100.0));
    for (std::size_t k = 0; k < parked; ++k) {
      double x, y, tx, ty;
      route.at(unit(clutter_rng) * route.length(), x, y, tx, ty);
      const double side = unit(clutter_rng) < 0.5 ? -1.0 : 1.0;
      const double offset =
          side * (spec.parked_offset_min_m + unit(clutter_rng) * (spec.parked_offset_max_m - spec.parked_offset_min_m));
      scene.push_back({x - ty * offset, y + tx * offset, clutter_radius(clutter_rng)});
    }
    const std::size_t static_count = scene.size();
    std::poisson_distribution<int> moving(spec.moving_objects_mean > 0 ? spec.moving_objects_mean : 1.0);

    const double spacing =
        route.length() / static_cast<double>(route.closed ? plan.count : std::max<std::size_t>(plan.count - 1, 1));
    const double heading_offset = plan.role == std::string("train") ? 0.0 : kTwoPi * unit(pose_rng);

    Traversal t{plan.name, plan.role, {}, {}};
    for (std::size_t i = 0; i < plan.count; ++i) {
      const double phase = plan.phase + plan.phase_jitter * (2.0 * unit(pose_rng) - 1.0);
      const double s = (static_cast<double>(i) + phase) * spacing;
      double x, y, tx, ty;
      route.at(s, x, y, tx, ty);
      const double lateral = std::clamp(spec.lateral_jitter_m * gauss(pose_rng), -2.5 * spec.lateral_jitter_m,
                                        2.5 * spec.lateral_jitter_m);
      Pose pose;
      pose.timestamp = plan.time_origin + static_cast<double>(i);
      pose.x = x - ty * lateral;
      pose.y = y + tx * lateral;
      double yaw = std::atan2(ty, tx) + heading_offset + spec.heading_jitter_rad * gauss(pose_rng);
      pose.yaw = std::fmod(std::fmod(yaw, kTwoPi) + kTwoPi, kTwoPi);

      PolarScan scan;
      char id[32];
      std::snprintf(id, sizeof(id), "%s_%05zu", plan.name, i);
      scan.id = id;
      scan.timestamp = pose.timestamp;
      scan.angular_bins = spec.angular_bins;
      scan.radial_bins = spec.radial_bins;
      scene.resize(static_count);
      const int movers = spec.moving_objects_mean > 0 ? moving(clutter_rng) : 0;
      for (int k = 0; k < movers; ++k) {
        const double range =
            spec.moving_range_min_m + unit(clutter_rng) * (spec.moving_range_max_m - spec.moving_range_min_m);
        const double bearing = kTwoPi * unit(clutter_rng);
        scene.push_back({pose.x + range * std::cos(bearing), pose.y + range * std::sin(bearing),
                         clutter_radius(clutter_rng)});
      }
      scan.image = render_scan(scene, pose, spec, &noise_rng);
      t.scans.push_back(std::move(scan));
      t.poses.push_back(pose);
    }
    if (plan.role == std::string("train")) ds.train = std::move(t);
    else if (plan.role == std::string("map")) ds.map = std::move(t);
    else ds.query = std::move(t);
  }
  return ds;
}

}  // namespace ploc
