#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "polarloc/data.hpp"
#include "polarloc/error.hpp"
#include "polarloc/synthetic.hpp"
#include "test_util.hpp"

using namespace ploc;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

FilterRules small_rules() {
  FilterRules r;
  r.angular_bins = 16;
  r.radial_bins = 8;
  return r;
}

std::vector<PolarScan> scans_at(const std::vector<double>& timestamps) {
  auto g = testutil::rng(60);
  std::vector<PolarScan> out;
  for (std::size_t i = 0; i < timestamps.size(); ++i) {
    auto s = testutil::random_scan(16, 8, g, "s" + std::to_string(i));
    s.timestamp = timestamps[i];
    out.push_back(std::move(s));
  }
  return out;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

SyntheticWorldSpec small_world() {
  SyntheticWorldSpec spec;
  spec.angular_bins = 96;
  spec.radial_bins = 32;
  spec.train_scans = 10;
  spec.map_scans = 10;
  spec.query_scans = 10;
  return spec;
}

}  // namespace

TEST(Filter, MinimumDisplacement) {
  const std::vector<Pose> poses{{0, 0, 0, 0}, {1, 0.05, 0, 0}, {2, 1, 0, 0}};
  auto t = filter_traversal(scans_at({0, 1, 2}), poses, small_rules());
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t.scans[0].id, "s0");
  EXPECT_EQ(t.scans[1].id, "s2");
}

TEST(Filter, PoseToleranceDrop) {
  const std::vector<Pose> poses{{0, 0, 0, 0}, {11.5, 10, 0, 0}};
  auto t = filter_traversal(scans_at({0, 10.0}), poses, small_rules());
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t.scans[0].id, "s0");
}

TEST(Filter, StationaryKeepsOne) {
  const std::vector<Pose> poses{{0, 3, 3, 0}, {1, 3, 3, 0}, {2, 3, 3, 0}, {3, 3.01, 3, 0}};
  auto t = filter_traversal(scans_at({0, 1, 2, 3}), poses, small_rules());
  EXPECT_EQ(t.size(), 1u);
}

TEST(Filter, ResamplesAndNormalizes) {
  auto g = testutil::rng(61);
  auto s = testutil::random_scan(32, 16, g);
  for (auto& v : s.image) v = 10.0f * v + 5.0f;
  const std::vector<Pose> poses{{0, 0, 0, 0}};
  auto t = filter_traversal({s}, poses, small_rules());
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t.scans[0].angular_bins, 16u);
  EXPECT_EQ(t.scans[0].radial_bins, 8u);
  const auto [lo, hi] = std::minmax_element(t.scans[0].image.begin(), t.scans[0].image.end());
  EXPECT_FLOAT_EQ(*lo, 0.0f);
  EXPECT_FLOAT_EQ(*hi, 1.0f);
}

TEST(Labels, DistanceThresholds) {
  const Pose o{0, 0, 0, 0};
  EXPECT_EQ(label_pair(o, {0, 3, 0, 0}), PairLabel::Similar);
  EXPECT_EQ(label_pair(o, {0, 25, 0, 0}), PairLabel::Dissimilar);
  EXPECT_EQ(label_pair(o, {0, 10, 0, 0}), PairLabel::Excluded);
  EXPECT_EQ(label_pair(o, {0, 3, 4, 0}), PairLabel::Similar);
  EXPECT_EQ(label_pair(o, {0, 12, 16, 0}), PairLabel::Dissimilar);
}

TEST(Labels, RelationMatrix) {
  const std::vector<Pose> a{{0, 0, 0, 0}, {0, 30, 0, 0}};
  const std::vector<Pose> b{{0, 1, 0, 0}, {0, 12, 0, 0}, {0, 50, 0, 0}};
  auto rel = label_pairs(a, b);
  ASSERT_EQ(rel.rows(), 2u);
  ASSERT_EQ(rel.cols(), 3u);
  EXPECT_EQ(rel.at(0, 0), PairLabel::Similar);
  EXPECT_EQ(rel.at(0, 1), PairLabel::Excluded);
  EXPECT_EQ(rel.at(0, 2), PairLabel::Dissimilar);
  EXPECT_EQ(rel.at(1, 0), PairLabel::Dissimilar);
  EXPECT_EQ(rel.at(1, 1), PairLabel::Excluded);
  EXPECT_EQ(rel.at(1, 2), PairLabel::Dissimilar);
}

TEST(Io, PlscRoundTrip) {
  TempDir dir("ploc_test_plsc");
  auto g = testutil::rng(62);
  auto s = testutil::random_scan(12, 5, g, "abc");
  s.timestamp = 123.456789;
  write_plsc(dir.path / "abc.plsc", s);
  const auto r = read_plsc(dir.path / "abc.plsc");
  EXPECT_EQ(r.id, "abc");
  EXPECT_EQ(r.timestamp, s.timestamp);
  EXPECT_EQ(r.angular_bins, 12u);
  EXPECT_EQ(r.radial_bins, 5u);
  EXPECT_EQ(r.image, s.image);
}

TEST(Io, CorruptPlscNamesScan) {
  TempDir dir("ploc_test_plsc_bad");
  std::ofstream(dir.path / "broken.plsc") << "garbage";
  try {
    read_plsc(dir.path / "broken.plsc");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("broken"), std::string::npos);
  }
}

TEST(Io, PgmRowsAreAzimuth) {
  TempDir dir("ploc_test_pgm");
  {
    std::ofstream out(dir.path / "12.5.pgm", std::ios::binary);
    out << "P5\n# comment\n3 2\n255\n";
    const unsigned char px[6] = {0, 51, 255, 102, 0, 0};
    out.write(reinterpret_cast<const char*>(px), 6);
  }
  const auto s = read_scan(dir.path / "12.5.pgm");
  EXPECT_EQ(s.timestamp, 12.5);
  EXPECT_EQ(s.angular_bins, 2u);
  EXPECT_EQ(s.radial_bins, 3u);
  EXPECT_FLOAT_EQ(s.at(0, 2), 1.0f);
  EXPECT_FLOAT_EQ(s.at(1, 0), 0.4f);
}

TEST(Io, PosesCsvRoundTrip) {
  TempDir dir("ploc_test_poses");
  const std::vector<Pose> poses{{1.5, 2.25, -3.125, 0.5}, {2.0, 1e-7, 4, -1}};
  write_poses_csv(dir.path / "poses.csv", poses);
  const auto back = read_poses_csv(dir.path / "poses.csv");
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].timestamp, poses[i].timestamp);
    EXPECT_EQ(back[i].x, poses[i].x);
    EXPECT_EQ(back[i].y, poses[i].y);
    EXPECT_EQ(back[i].yaw, poses[i].yaw);
  }
}

TEST(Io, TraversalDirectoryRoundTrip) {
  TempDir dir("ploc_test_traversal");
  auto g = testutil::rng(63);
  Traversal t{"map", "map", {}, {}};
  for (int i = 0; i < 3; ++i) {
    auto s = testutil::random_scan(16, 8, g, "scan" + std::to_string(i));
    s.timestamp = i;
    s.image[0] = 0.0f, s.image[1] = 1.0f;
    t.scans.push_back(s);
    t.poses.push_back({double(i), 2.0 * i, 0, 0});
  }
  write_traversal(dir.path / "map", t);
  const auto back = ingest_directory(dir.path / "map", small_rules(), "map");
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(back.scans[i].image, t.scans[i].image);
}

TEST(Synthetic, YawIsCyclicShift) {
  auto spec = small_world();
  auto g = testutil::rng(64);
  std::vector<Landmark> lms;
  std::uniform_real_distribution<double> u(-60, 60);
  for (int i = 0; i < 40; ++i) lms.push_back({u(g), u(g), 2.0});
  const std::size_t A = spec.angular_bins;
  for (double delta : {0.3, 1.7, -2.4}) {
    const double theta = 0.4;
    auto n1 = testutil::rng(1), n2 = testutil::rng(2);
    const auto a = render_scan(lms, {0, 5, -3, theta}, spec, &n1);
    const auto b = render_scan(lms, {0, 5, -3, theta + delta}, spec, &n2);
    // Brute-force alignment over every shift.
    std::size_t best_shift = 0;
    double best = 1e300;
    for (std::size_t s = 0; s < A; ++s) {
      double acc = 0;
      for (std::size_t j = 0; j < A; ++j)
        for (std::size_t r = 0; r < spec.radial_bins; ++r)
          acc += std::abs(a[((j + s) % A) * spec.radial_bins + r] - b[j * spec.radial_bins + r]);
      if (acc < best) best = acc, best_shift = s;
    }
    const auto k = static_cast<long>(std::lround(delta / (2 * kPi) * double(A)));
    const long expected = ((k % long(A)) + long(A)) % long(A);
    EXPECT_TRUE(long(best_shift) == expected || long(best_shift) == (long(A) - expected) % long(A))
        << "delta " << delta << " shift " << best_shift << " expected +-" << k;
    EXPECT_LT(best / double(a.size()), 2.0 * spec.noise_sigma);
  }
}

TEST(Synthetic, EmptySceneRaises) {
  auto spec = small_world();
  const std::vector<Landmark> far{{1000, 1000, 1}};
  EXPECT_THROW(render_scan(far, {0, 0, 0, 0}, spec), DataError);
}

TEST(Synthetic, ZeroLandmarksRejected) {
  auto spec = small_world();
  spec.landmark_count = 0;
  EXPECT_THROW(generate_synthetic(spec), DataError);
}

TEST(Synthetic, SeededDeterminism) {
  const auto a = generate_synthetic(small_world());
  const auto b = generate_synthetic(small_world());
  ASSERT_EQ(a.query.size(), b.query.size());
  for (std::size_t i = 0; i < a.query.size(); ++i) EXPECT_EQ(a.query.scans[i].image, b.query.scans[i].image);
  auto other = small_world();
  other.seed = 8;
  EXPECT_NE(generate_synthetic(other).query.scans[0].image, a.query.scans[0].image);
}

TEST(Synthetic, SplitsHaveRequestedSizes) {
  const auto d = generate_synthetic(small_world());
  EXPECT_EQ(d.train.size(), 10u);
  EXPECT_EQ(d.map.size(), 10u);
  EXPECT_EQ(d.query.size(), 10u);
  EXPECT_EQ(d.map.scans[0].angular_bins, 96u);
}

TEST(Synthetic, ClutterChangesScansButNotPoses) {
  auto spec = small_world();
  const auto clean = generate_synthetic(spec);
  spec.moving_objects_mean = 20.0;
  spec.parked_per_100m = 4.0;
  spec.landmark_dropout = 0.2;
  const auto busy = generate_synthetic(spec);
  ASSERT_EQ(clean.query.size(), busy.query.size());
  std::size_t changed = 0;
  for (std::size_t i = 0; i < clean.query.size(); ++i) {
    EXPECT_EQ(clean.query.poses[i].x, busy.query.poses[i].x);
    changed += clean.query.scans[i].image != busy.query.scans[i].image;
  }
  EXPECT_EQ(changed, clean.query.size());
  EXPECT_EQ(generate_synthetic(spec).map.scans[2].image, busy.map.scans[2].image);
}

TEST(Synthetic, ClutterSettingsValidated) {
  auto spec = small_world();
  spec.landmark_dropout = 1.0;
  EXPECT_THROW(spec.validate(), ContractViolation);
}
