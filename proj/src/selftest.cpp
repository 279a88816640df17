#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <random>
#include <sstream>

#include "polarloc/checkpoint.hpp"
#include "polarloc/gradcheck.hpp"
#include "polarloc/seed.hpp"
#include "polarloc/pipeline.hpp"

namespace ploc {

namespace {

constexpr double kGradTolerance = 1e-4;
constexpr double kGradEpsilon = 1e-6;

using Rng = std::mt19937_64;

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(u(rng));
  return t;
}

// Weighted sum with fixed random weights, so every output element carries a
// distinct gradient.
Tensor<double> probe(const Tensor<double>& y, const Tensor<double>& weights) {
  return ops::sum(ops::mul(y, weights));
}

// y = x * x with a deliberately wrong backward rule (dy/dx = x instead of 2x).
Tensor<double> faulty_square(const Tensor<double>& x) {
  Tensor<double> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] = x.data()[i] * x.data()[i];
  if (detail::recording({&x})) {
    detail::record<double>({x}, out, [x, out]() mutable {
      auto g = out.grad();
      auto gx = x.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * x.data()[i];
    });
  }
  return out;
}

std::string format_error(double err) {
  std::ostringstream os;
  os << "max rel. error " << err;
  return os.str();
}

SelfTestCheck grad_result(std::string name, double err) {
  return {std::move(name), err < kGradTolerance, format_error(err)};
}

SelfTestCheck check_conv(bool inject) {
  Rng rng(derive_seed(1, "selftest.conv"));
  auto x = random_tensor<double>({2, 3, 8, 6}, rng);
  auto w = random_tensor<double>({4, 3, 3, 3}, rng);
  auto b = random_tensor<double>({4}, rng);
  auto r = random_tensor<double>({2, 4, 8, 6}, rng);
  std::function<Tensor<double>()> f = [&] {
    auto y = ops::conv2d_circular(x, w, b, 1, 1);
    return inject ? ops::sum(faulty_square(y)) : probe(y, r);
  };
  return grad_result("gradcheck/conv2d_circular", gradcheck<double>(f, {x, w, b}, kGradEpsilon));
}

SelfTestCheck check_strided_conv() {
  Rng rng(derive_seed(1, "selftest.strided"));
  auto x = random_tensor<double>({2, 3, 8, 6}, rng);
  auto w = random_tensor<double>({4, 3, 2, 2}, rng);
  auto b = random_tensor<double>({4}, rng);
  auto r = random_tensor<double>({2, 4, 4, 3}, rng);
  std::function<Tensor<double>()> f = [&] { return probe(ops::conv2d_circular(x, w, b, 2, 2), r); };
  return grad_result("gradcheck/conv2d_stride2", gradcheck<double>(f, {x, w, b}, kGradEpsilon));
}

SelfTestCheck check_tconv() {
  Rng rng(derive_seed(1, "selftest.tconv"));
  auto x = random_tensor<double>({2, 3, 4, 3}, rng);
  auto w = random_tensor<double>({3, 4, 2, 2}, rng);
  auto b = random_tensor<double>({4}, rng);
  auto r = random_tensor<double>({2, 4, 8, 6}, rng);
  std::function<Tensor<double>()> f = [&] { return probe(ops::transposed_conv2d(x, w, b, 2, 2), r); };
  return grad_result("gradcheck/transposed_conv2d", gradcheck<double>(f, {x, w, b}, kGradEpsilon));
}

SelfTestCheck check_batch_norm(Mode mode) {
  Rng rng(derive_seed(1, "selftest.bn"));
  auto x = random_tensor<double>({3, 2, 4, 3}, rng);
  auto gamma = random_tensor<double>({2}, rng, 0.5, 1.5);
  auto beta = random_tensor<double>({2}, rng);
  auto r = random_tensor<double>({3, 2, 4, 3}, rng);
  Tensor<double> rm(Shape{2}, 0.1), rv(Shape{2}, 0.8);
  std::function<Tensor<double>()> f = [&] {
    return probe(ops::batch_norm(x, gamma, beta, rm, rv, mode, 0.1, 1e-5), r);
  };
  const std::string name = mode == Mode::Train ? "gradcheck/batch_norm_train" : "gradcheck/batch_norm_eval";
  return grad_result(name, gradcheck<double>(f, {x, gamma, beta}, kGradEpsilon));
}

SelfTestCheck check_gem() {
  Rng rng(derive_seed(1, "selftest.gem"));
  auto x = random_tensor<double>({2, 3, 4, 3}, rng, 0.1, 2.0);
  auto p = Tensor<double>(Shape{1}, 2.5);
  auto r = random_tensor<double>({2, 3}, rng);
  std::function<Tensor<double>()> f = [&] { return probe(ops::gem_pool(x, p, 1e-6), r); };
  return grad_result("gradcheck/gem_pool", gradcheck<double>(f, {x, p}, kGradEpsilon));
}

SelfTestCheck check_eca() {
  Rng rng(derive_seed(1, "selftest.eca"));
  auto x = random_tensor<double>({2, 5, 3, 3}, rng);
  auto w = random_tensor<double>({3}, rng);
  auto r = random_tensor<double>({2, 5, 3, 3}, rng);
  std::function<Tensor<double>()> f = [&] { return probe(ops::eca(x, w), r); };
  return grad_result("gradcheck/eca", gradcheck<double>(f, {x, w}, kGradEpsilon));
}

SelfTestCheck check_triplet() {
  Rng rng(derive_seed(1, "selftest.triplet"));
  auto a = random_tensor<double>({8}, rng);
  auto p = random_tensor<double>({8}, rng);
  auto n = random_tensor<double>({8}, rng);
  // Margin large enough that the hinge is active.
  std::function<Tensor<double>()> f = [&] { return triplet_loss(a, p, n, TripletLossSpec{5.0}); };
  return grad_result("gradcheck/triplet_loss", gradcheck<double>(f, {a, p, n}, kGradEpsilon));
}

NetworkConfig small_network() {
  NetworkConfig cfg;
  cfg.angular_bins = 32;
  cfg.radial_bins = 16;
  return cfg;
}

SelfTestCheck check_network() {
  auto model = RadarLocModel<double>::build(small_network(), 11);
  model.set_mode(Mode::Train);
  Rng rng(derive_seed(1, "selftest.network"));
  auto x = random_tensor<double>({1, 1, 32, 16}, rng, 0.0, 1.0);
  std::vector<Tensor<double>> wrt{x};
  for (auto& [name, t] : model.parameters()) wrt.push_back(t);
  std::function<Tensor<double>()> f = [&] { return ops::mean(model.forward(x)); };
  return grad_result("gradcheck/network", gradcheck<double>(f, wrt, kGradEpsilon, 8));
}

SelfTestCheck check_conv_equivariance() {
  Rng rng(derive_seed(1, "selftest.equivariance"));
  auto x = random_tensor<float>({1, 2, 12, 5}, rng);
  auto w = random_tensor<float>({3, 2, 3, 3}, rng);
  auto b = random_tensor<float>({3}, rng);
  auto roll = [](const Tensor<float>& t, std::size_t shift) {
    Tensor<float> out(t.shape());
    const std::size_t C = t.dim(1), H = t.dim(2), W = t.dim(3);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w2 = 0; w2 < W; ++w2)
          out.data()[(c * H + h) * W + w2] = t.data()[(c * H + (h + shift) % H) * W + w2];
    return out;
  };
  double worst = 0;
  for (std::size_t s = 1; s < 12; ++s) {
    auto lhs = ops::conv2d_circular(roll(x, s), w, b, 1, 1);
    auto rhs = roll(ops::conv2d_circular(x, w, b, 1, 1), s);
    for (std::size_t i = 0; i < lhs.numel(); ++i)
      worst = std::max(worst, static_cast<double>(std::abs(lhs.data()[i] - rhs.data()[i])));
  }
  return {"equivariance/conv2d_circular", worst <= 1e-5, "max abs diff " + std::to_string(worst)};
}

SelfTestCheck check_descriptor_invariance() {
  NetworkConfig cfg = small_network();
  cfg.angular_bins = 64;
  auto model = RadarLocModel<float>::build(cfg, 5);
  model.set_mode(Mode::Eval);
  Rng rng(derive_seed(1, "selftest.invariance"));
  PolarScan scan{"s", 0.0, 64, 16, {}};
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (std::size_t i = 0; i < 64 * 16; ++i) scan.image.push_back(u(rng));
  auto describe_one = [&](const PolarScan& s) {
    const PolarScan* ptr = &s;
    return model.forward(stack_scans<float>(std::span<const PolarScan* const>(&ptr, 1)));
  };
  const auto base = describe_one(scan);
  double worst = 0;
  for (std::ptrdiff_t k = 1; k < 4; ++k) {
    const auto shifted = describe_one(roll_angular(scan, 16 * k));
    for (std::size_t i = 0; i < base.numel(); ++i)
      worst = std::max(worst, static_cast<double>(std::abs(base.data()[i] - shifted.data()[i])));
  }
  return {"invariance/descriptor_shift16", worst <= 1e-5, "max abs diff " + std::to_string(worst)};
}

SelfTestCheck check_ring_key_invariance() {
  Rng rng(derive_seed(1, "selftest.ringkey"));
  PolarScan scan{"s", 0.0, 96, 32, {}};
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (std::size_t i = 0; i < 96 * 32; ++i) scan.image.push_back(u(rng));
  const auto base = ring_key(scan, 8).values;
  bool same = true;
  for (std::ptrdiff_t s = 1; s < 96; ++s) same = same && ring_key(roll_angular(scan, s), 8).values == base;
  return {"invariance/ring_key", same, same ? "bit-identical under all shifts" : "differs under a shift"};
}

SelfTestCheck check_knn_oracle() {
  Rng rng(derive_seed(1, "selftest.knn"));
  std::uniform_real_distribution<double> u(-1, 1);
  std::uniform_int_distribution<int> grid(0, 3);
  std::vector<IndexEntry> entries;
  for (std::size_t i = 0; i < 200; ++i) {
    // Coarse values make exact ties common.
    std::vector<float> d{static_cast<float>(grid(rng)), static_cast<float>(grid(rng)), static_cast<float>(grid(rng))};
    entries.push_back({"m" + std::to_string(i), Pose{0, u(rng), u(rng), 0}, d});
  }
  const DescriptorIndex index(entries, "oracle");
  bool ok = true;
  for (int q = 0; q < 30 && ok; ++q) {
    std::vector<float> query{static_cast<float>(grid(rng)), static_cast<float>(grid(rng)),
                             static_cast<float>(grid(rng))};
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      double acc = 0;
      for (std::size_t k = 0; k < 3; ++k) acc += std::pow(double(entries[i].descriptor[k]) - query[k], 2);
      all.push_back({std::sqrt(acc), i});
    }
    std::stable_sort(all.begin(), all.end(), [](auto& a, auto& b) { return a.first < b.first; });
    const auto got = knn(index, query, 10);
    for (std::size_t r = 0; r < 10; ++r) ok = ok && got[r].index == all[r].second && got[r].distance == all[r].first;
  }
  return {"oracle/knn", ok, ok ? "matches exhaustive sort" : "differs from exhaustive sort"};
}

SelfTestCheck check_mining_oracle() {
  Rng rng(derive_seed(1, "selftest.mining"));
  std::uniform_real_distribution<double> pos(0, 60);
  bool ok = true;
  for (int trial = 0; trial < 10 && ok; ++trial) {
    const std::size_t n = 12;
    std::vector<Pose> poses;
    for (std::size_t i = 0; i < n; ++i) poses.push_back({double(i), pos(rng), 0.0, 0.0});
    const auto rel = label_pairs(poses, poses);
    auto d = random_tensor<float>({n, 4}, rng);
    const auto mined = batch_hard_mine(d, rel);
    std::vector<Triple> expected;
    for (std::size_t a = 0; a < n; ++a) {
      std::ptrdiff_t p = -1, best_n = -1;
      double best = 1e300;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == a) continue;
        if (p < 0 && rel.at(a, j) == PairLabel::Similar) p = std::ptrdiff_t(j);
        if (rel.at(a, j) != PairLabel::Dissimilar) continue;
        double acc = 0;
        for (std::size_t k = 0; k < 4; ++k) acc += std::pow(double(d.data()[a * 4 + k]) - d.data()[j * 4 + k], 2);
        if (std::sqrt(acc) < best) best = std::sqrt(acc), best_n = std::ptrdiff_t(j);
      }
      if (p >= 0 && best_n >= 0) expected.push_back({a, std::size_t(p), std::size_t(best_n)});
    }
    ok = mined.triples == expected;
  }
  return {"oracle/batch_hard_mine", ok, ok ? "matches O(N^2) scan" : "differs from O(N^2) scan"};
}

SelfTestCheck check_scancontext_oracle() {
  Rng rng(derive_seed(1, "selftest.scancontext"));
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  double worst = 0;
  for (int trial = 0; trial < 5; ++trial) {
    ScanContextDescriptor a{12, 4, {}}, b{12, 4, {}};
    for (int i = 0; i < 48; ++i) a.matrix.push_back(u(rng)), b.matrix.push_back(u(rng));
    double best = 1e300;
    for (std::size_t shift = 0; shift < 12; ++shift) {
      double total = 0;
      for (std::size_t s = 0; s < 12; ++s) {
        const float* x = &a.matrix[s * 4];
        const float* y = &b.matrix[((s + shift) % 12) * 4];
        double dot = 0, nx = 0, ny = 0;
        for (int r = 0; r < 4; ++r) dot += double(x[r]) * y[r], nx += double(x[r]) * x[r], ny += double(y[r]) * y[r];
        total += 1.0 - dot / std::sqrt(nx * ny);
      }
      best = std::min(best, total / 12);
    }
    worst = std::max(worst, std::abs(best - scancontext_distance(a, b)));
  }
  return {"oracle/scancontext_distance", worst <= 1e-6, "max abs diff " + std::to_string(worst)};
}

SelfTestCheck check_recall_monotone() {
  Rng rng(derive_seed(1, "selftest.recall"));
  std::uniform_real_distribution<double> u(0, 50);
  bool ok = true;
  for (int trial = 0; trial < 10 && ok; ++trial) {
    std::vector<IndexEntry> map, queries;
    for (int i = 0; i < 40; ++i)
      map.push_back({"m", Pose{0, u(rng), u(rng), 0}, {float(u(rng)), float(u(rng))}});
    for (int i = 0; i < 15; ++i)
      queries.push_back({"q", Pose{0, u(rng), u(rng), 0}, {float(u(rng)), float(u(rng))}});
    ok = evaluate(DescriptorIndex(map, "x"), queries, 10, {2.0, 5.0, 10.0, 25.0}).is_monotone();
  }
  return {"property/recall_monotone", ok, ok ? "non-decreasing in N and d" : "monotonicity violated"};
}

std::vector<PolarScan> fixture_scans(const std::vector<double>& timestamps) {
  std::vector<PolarScan> scans;
  for (std::size_t i = 0; i < timestamps.size(); ++i) {
    PolarScan s{"s" + std::to_string(i), timestamps[i], 16, 16, std::vector<float>(256, 0.0f)};
    s.image[i % 256] = 1.0f;
    scans.push_back(std::move(s));
  }
  return scans;
}

SelfTestCheck check_filtering() {
  FilterRules rules;
  rules.angular_bins = 16;
  rules.radial_bins = 16;
  // 0.05 m step dropped.
  std::vector<Pose> poses{{0, 0, 0, 0}, {1, 0.05, 0, 0}, {2, 1, 0, 0}};
  auto t = filter_traversal(fixture_scans({0, 1, 2}), poses, rules);
  bool ok = t.size() == 2 && t.scans[0].id == "s0" && t.scans[1].id == "s2";
  // Nearest pose 1.5 s away: dropped.
  std::vector<Pose> far{{0, 0, 0, 0}, {11.5, 5, 0, 0}};
  auto t2 = filter_traversal(fixture_scans({0, 10.0}), far, rules);
  ok = ok && t2.size() == 1 && t2.scans[0].id == "s0";
  return {"protocol/filtering", ok, ok ? "0.1 m and 1 s rules hold" : "filter rules violated"};
}

SelfTestCheck check_labeling() {
  const Pose o{0, 0, 0, 0};
  const bool ok = label_pair(o, {0, 3, 0, 0}) == PairLabel::Similar && label_pair(o, {0, 25, 0, 0}) == PairLabel::Dissimilar &&
                  label_pair(o, {0, 10, 0, 0}) == PairLabel::Excluded && label_pair(o, {0, 5, 0, 0}) == PairLabel::Similar &&
                  label_pair(o, {0, 20, 0, 0}) == PairLabel::Dissimilar;
  return {"protocol/labeling", ok, ok ? "5 m / 20 m thresholds hold" : "labels wrong"};
}

SelfTestCheck check_checkpoint() {
  auto model = RadarLocModel<float>::build(small_network(), 3);
  std::stringstream buffer;
  write_checkpoint(buffer, model.state());
  const auto restored = read_checkpoint(buffer);
  const auto original = model.state();
  bool ok = restored.size() == original.size();
  for (std::size_t i = 0; ok && i < original.size(); ++i)
    ok = restored[i].first == original[i].first && restored[i].second.shape() == original[i].second.shape() &&
         std::equal(original[i].second.data().begin(), original[i].second.data().end(),
                    restored[i].second.data().begin());
  return {"io/checkpoint_roundtrip", ok, ok ? "bit-exact" : "mismatch after round trip"};
}

}  // namespace

std::vector<SelfTestCheck> run_selftest(const SelfTestOptions& options, std::ostream* progress) {
  if (!options.inject_fault.empty() && options.inject_fault != "gradient")
    throw UsageError("unknown fault '" + options.inject_fault + "' (supported: gradient)");
  const bool inject = options.inject_fault == "gradient";

  std::vector<std::function<SelfTestCheck()>> checks{
      [&] { return check_conv(inject); },
      check_strided_conv,
      check_tconv,
      [] { return check_batch_norm(Mode::Train); },
      [] { return check_batch_norm(Mode::Eval); },
      check_gem,
      check_eca,
      check_triplet,
      check_network,
      check_conv_equivariance,
      check_descriptor_invariance,
      check_ring_key_invariance,
      check_knn_oracle,
      check_mining_oracle,
      check_scancontext_oracle,
      check_recall_monotone,
      check_filtering,
      check_labeling,
      check_checkpoint,
  };
  std::vector<SelfTestCheck> results;
  for (const auto& run : checks) {
    SelfTestCheck result;
    try {
      result = run();
    } catch (const std::exception& e) {
      result = {"(check raised)", false, e.what()};
    }
    if (progress)
      *progress << (result.passed ? "PASS " : "FAIL ") << result.name << "  " << result.detail << '\n' << std::flush;
    results.push_back(std::move(result));
  }
  return results;
}

}  // namespace ploc
