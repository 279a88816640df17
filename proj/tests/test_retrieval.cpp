#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "polarloc/error.hpp"
#include "polarloc/retrieval.hpp"
#include "test_util.hpp"

using namespace ploc;

namespace {

IndexEntry entry(std::string id, double x, double y, std::vector<float> d) {
  return {std::move(id), Pose{0, x, y, 0}, std::move(d)};
}

std::vector<IndexEntry> random_entries(std::size_t n, std::size_t dim, std::mt19937_64& g, int levels = 0) {
  std::uniform_real_distribution<double> pos(0, 100);
  std::uniform_real_distribution<float> u(-1, 1);
  std::uniform_int_distribution<int> q(0, std::max(levels - 1, 0));
  std::vector<IndexEntry> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<float> d(dim);
    for (auto& v : d) v = levels > 0 ? float(q(g)) : u(g);
    out.push_back({"e" + std::to_string(i), Pose{0, pos(g), pos(g), 0}, d});
  }
  return out;
}

}  // namespace

TEST(Index, SizeAndDuplicates) {
  DescriptorIndex idx({entry("a", 0, 0, {1, 2}), entry("b", 0, 0, {1, 2}), entry("c", 0, 0, {3, 4})}, "x");
  EXPECT_EQ(idx.size(), 3u);
  EXPECT_EQ(idx.dimension(), 2u);
}

TEST(Index, EmptyRejected) { EXPECT_THROW(DescriptorIndex({}, "x"), ContractViolation); }

TEST(Index, InconsistentDimensionRejected) {
  EXPECT_THROW(DescriptorIndex({entry("a", 0, 0, {1}), entry("b", 0, 0, {1, 2})}, "x"), ContractViolation);
}

TEST(Knn, HandExample) {
  DescriptorIndex idx({entry("a", 0, 0, {0, 0.1f}), entry("b", 0, 0, {1, 0}), entry("c", 0, 0, {5, 5})}, "x");
  const std::vector<float> q{0, 0};
  const auto nn = knn(idx, q, 2);
  ASSERT_EQ(nn.size(), 2u);
  EXPECT_EQ(nn[0].index, 0u);
  EXPECT_NEAR(nn[0].distance, 0.1, 1e-7);
  EXPECT_EQ(nn[1].index, 1u);
  EXPECT_EQ(nn[1].distance, 1.0);
}

TEST(Knn, ClampsToIndexSize) {
  DescriptorIndex idx({entry("a", 0, 0, {3}), entry("b", 0, 0, {1}), entry("c", 0, 0, {2})}, "x");
  const std::vector<float> q{0};
  const auto nn = knn(idx, q, 10);
  ASSERT_EQ(nn.size(), 3u);
  EXPECT_EQ(nn[0].index, 1u);
  EXPECT_EQ(nn[1].index, 2u);
  EXPECT_EQ(nn[2].index, 0u);
}

TEST(Knn, QueryDimensionChecked) {
  DescriptorIndex idx({entry("a", 0, 0, {3, 1})}, "x");
  const std::vector<float> q{0};
  EXPECT_THROW(knn(idx, q, 1), ContractViolation);
}

TEST(Knn, MatchesExhaustiveSort) {
  auto g = testutil::rng(70);
  for (int levels : {0, 3}) {
    const auto entries = random_entries(500, 4, g, levels);
    DescriptorIndex idx(entries, "x");
    for (const auto& q : random_entries(100, 4, g, levels)) {
      std::vector<Neighbor> all;
      for (std::size_t i = 0; i < entries.size(); ++i) {
        double acc = 0;
        for (std::size_t k = 0; k < 4; ++k) {
          const double diff = double(entries[i].descriptor[k]) - q.descriptor[k];
          acc += diff * diff;
        }
        all.push_back({i, std::sqrt(acc)});
      }
      std::stable_sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) { return a.distance < b.distance; });
      all.resize(25);
      EXPECT_EQ(knn(idx, q.descriptor, 25), all);
    }
  }
}

TEST(Evaluate, TopOneThreeMetresAway) {
  DescriptorIndex idx({entry("m", 3, 0, {0}), entry("far", 100, 0, {5})}, "x");
  const auto r = evaluate(idx, {entry("q", 0, 0, {0})}, 1, {1.0, 5.0});
  EXPECT_EQ(r.recall_at(1, 5.0), 1.0);
  EXPECT_EQ(r.recall_at(1, 1.0), 0.0);
}

TEST(Evaluate, UnreachableQueryContributesZero) {
  DescriptorIndex idx({entry("a", 0, 0, {0}), entry("b", 1, 0, {1})}, "x");
  const auto r = evaluate(idx, {entry("q1", 500, 500, {0}), entry("q2", 0, 0, {0})}, 2, {5.0});
  EXPECT_EQ(r.recall_at(1, 5.0), 0.5);
  EXPECT_EQ(r.recall_at(2, 5.0), 0.5);
  EXPECT_EQ(r.first_hit[0][0], 0u);
  EXPECT_EQ(r.first_hit[0][1], 1u);
}

TEST(Evaluate, MatchesDoubleLoopOracle) {
  auto g = testutil::rng(71);
  const auto map = random_entries(60, 3, g);
  const auto queries = random_entries(10, 3, g);
  const std::vector<double> thresholds{5, 10, 25};
  const auto report = evaluate(DescriptorIndex(map, "x"), queries, 10, thresholds);
  for (std::size_t t = 0; t < thresholds.size(); ++t)
    for (std::size_t n = 1; n <= 10; ++n) {
      std::size_t hits = 0;
      for (const auto& q : queries) {
        std::vector<std::pair<double, std::size_t>> all;
        for (std::size_t i = 0; i < map.size(); ++i) {
          double acc = 0;
          for (std::size_t k = 0; k < 3; ++k) acc += std::pow(double(map[i].descriptor[k]) - q.descriptor[k], 2);
          all.push_back({acc, i});
        }
        std::sort(all.begin(), all.end());
        bool hit = false;
        for (std::size_t r = 0; r < n; ++r) hit = hit || planar_distance(map[all[r].second].pose, q.pose) <= thresholds[t];
        hits += hit;
      }
      EXPECT_EQ(report.recall_at(n, thresholds[t]), double(hits) / 10.0) << "n=" << n << " t=" << thresholds[t];
    }
}

TEST(Evaluate, MonotoneFuzz) {
  auto g = testutil::rng(72);
  std::uniform_int_distribution<std::size_t> size(1, 80), dim(1, 8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = dim(g);
    const auto map = random_entries(size(g), d, g);
    const auto queries = random_entries(size(g), d, g);
    const auto r = evaluate(DescriptorIndex(map, "x"), queries, 10, {1, 5, 10, 20, 50});
    ASSERT_TRUE(r.is_monotone());
    for (std::size_t t = 0; t < r.thresholds_m.size(); ++t)
      for (std::size_t n = 1; n < r.max_n; ++n) ASSERT_LE(r.recall[t][n - 1], r.recall[t][n]);
  }
}

TEST(Evaluate, CsvGrid) {
  DescriptorIndex idx({entry("a", 0, 0, {0}), entry("b", 1, 0, {1})}, "x");
  const auto r = evaluate(idx, {entry("q", 0, 0, {0})}, 10, {5, 10});
  std::ostringstream os;
  r.write_csv(os);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "N,threshold_m,recall");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 20u);
}

TEST(Descriptors, FileRoundTrip) {
  auto g = testutil::rng(73);
  const auto entries = random_entries(7, 5, g);
  std::stringstream buf;
  write_descriptors(buf, "radarloc", entries);
  const auto back = read_descriptors(buf);
  EXPECT_EQ(back.method, "radarloc");
  ASSERT_EQ(back.entries.size(), 7u);
  for (std::size_t i = 0; i < 7; ++i) {
    EXPECT_EQ(back.entries[i].scan_id, entries[i].scan_id);
    EXPECT_EQ(back.entries[i].descriptor, entries[i].descriptor);
    EXPECT_EQ(back.entries[i].pose.x, entries[i].pose.x);
  }
}
