// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.
//
//   acceptance <ploc binary> <work dir> [criterion ...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "polarloc/baselines.hpp"
#include "polarloc/data.hpp"
#include "polarloc/gradcheck.hpp"
#include "polarloc/layers.hpp"
#include "polarloc/pipeline.hpp"
#include "polarloc/retrieval.hpp"
#include "polarloc/training.hpp"

namespace fs = std::filesystem;
using namespace ploc;
using Clock = std::chrono::steady_clock;

namespace {

std::string g_bin;
fs::path g_work;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

void ploc(const std::string& args) {
  const fs::path log = g_work / "ploc.log";
  const std::string cmd = g_bin + " --threads 1 " + args + " >> " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) throw std::runtime_error("command failed: ploc " + args);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Recall@1 for a threshold from an eval CSV (N,threshold_m,recall).
double csv_recall1(const fs::path& csv, double threshold) {
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::stringstream row(line);
    std::string n, t, r;
    std::getline(row, n, ',');
    std::getline(row, t, ',');
    std::getline(row, r, ',');
    if (n == "1" && std::stod(t) == threshold) return std::stod(r);
  }
  throw std::runtime_error("no Recall@1 at " + fmt(threshold) + " m in " + csv.string());
}

// gen, train and eval of all three methods for one seed; cached per seed.
struct BenchRun {
  fs::path root;
  double seconds = 0;
  std::map<std::string, double> r5, r10;
};

std::map<std::uint64_t, BenchRun> g_bench;

const BenchRun& bench(std::uint64_t seed) {
  if (auto it = g_bench.find(seed); it != g_bench.end()) return it->second;
  BenchRun run;
  run.root = g_work / ("seed" + std::to_string(seed));
  fs::remove_all(run.root);
  const std::string data = (run.root / "data").string(), model = (run.root / "model").string();
  const auto t0 = Clock::now();
  ploc("gen --seed " + std::to_string(seed) + " --out " + data);
  ploc("train --data " + data + " --out " + model + " --seed " + std::to_string(seed) + " --epochs 30");
  ploc("eval --data " + data + " --out " + (run.root / "eval").string() + " --method radarloc --checkpoint " + model +
       "/model.ploc");
  run.seconds = seconds_since(t0);
  ploc("eval --data " + data + " --out " + (run.root / "eval").string() + " --method scancontext");
  ploc("eval --data " + data + " --out " + (run.root / "eval").string() + " --method ringkey");
  for (const char* m : {"radarloc", "scancontext", "ringkey"}) {
    const auto csv = run.root / "eval" / ("eval_" + std::string(m) + ".csv");
    run.r5[m] = csv_recall1(csv, 5.0);
    run.r10[m] = csv_recall1(csv, 10.0);
  }
  std::cout << "  seed " << seed << ": radarloc " << fmt(run.r5["radarloc"]) << " / " << fmt(run.r10["radarloc"])
            << ", scancontext " << fmt(run.r5["scancontext"]) << ", ringkey " << fmt(run.r5["ringkey"])
            << " (Recall@1 5 m / 10 m), pipeline " << fmt(run.seconds) << " s\n"
            << std::flush;
  return g_bench.emplace(seed, std::move(run)).first->second;
}

Tensor<float> describe_scans(RadarLocModel<float>& model, const std::vector<PolarScan>& scans) {
  std::vector<const PolarScan*> ptrs;
  for (const auto& s : scans) ptrs.push_back(&s);
  return model.forward(stack_scans<float>(ptrs));
}

double l2(const float* a, const float* b, std::size_t n) {
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
  return std::sqrt(acc);
}

// ---------------------------------------------------------------------------

Outcome gradients() {
  const auto t0 = Clock::now();
  const auto checks = run_selftest({});
  const double secs = seconds_since(t0);
  std::size_t n = 0;
  std::string failed;
  for (const auto& c : checks) {
    if (c.name.rfind("gradcheck/", 0) != 0) continue;
    ++n;
    if (!c.passed) failed += " " + c.name + " (" + c.detail + ")";
  }
  const bool ok = failed.empty() && n >= 9 && secs < 60.0;
  return {ok, std::to_string(n) + " gradchecks in 64-bit, " + fmt(secs) + " s" + (failed.empty() ? "" : ";" + failed)};
}

Outcome exact_invariance() {
  const auto& run = bench(7);
  auto model = load_model(run.root / "model" / "model.ploc");
  model.set_mode(Mode::Eval);
  NoGradScope<float> ng;
  const auto queries = load_split(run.root / "data", "query", "query");
  double worst = 0;
  for (std::size_t q = 0; q < 4; ++q) {
    const PolarScan& scan = queries.scans[q * 50];
    std::vector<PolarScan> copies{scan};
    for (std::ptrdiff_t k = 1; k <= 23; ++k) copies.push_back(roll_angular(scan, 16 * k));
    std::vector<Tensor<float>> parts;
    for (const auto& c : copies) parts.push_back(describe_scans(model, {c}));
    const std::size_t D = parts[0].numel();
    for (std::size_t k = 1; k < parts.size(); ++k)
      for (std::size_t i = 0; i < D; ++i)
        worst = std::max(worst, double(std::abs(parts[k].data()[i] - parts[0].data()[i])));
  }
  return {worst <= 1e-5, "max |d(shift 16k) - d| = " + fmt(worst) + " over k = 1..23, 4 scans"};
}

Outcome trained_invariance() {
  const auto& run = bench(7);
  auto model = load_model(run.root / "model" / "model.ploc");
  model.set_mode(Mode::Eval);
  NoGradScope<float> ng;
  const auto map = load_split(run.root / "data", "map", "map");
  const auto queries = load_split(run.root / "data", "query", "query");
  const auto map_desc = describe(Method::RadarLoc, map, &model);
  std::mt19937_64 rng(2024);
  const std::size_t A = queries.scans.front().angular_bins;
  std::uniform_int_distribution<std::size_t> shift(1, A - 1);
  double rot_sum = 0, other_sum = 0;
  std::size_t rot_n = 0, other_n = 0;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const PolarScan& scan = queries.scans[q];
    std::vector<PolarScan> copies{scan};
    while (copies.size() < 9) {
      const std::size_t s = shift(rng);
      if (s % 16 != 0) copies.push_back(roll_angular(scan, static_cast<std::ptrdiff_t>(s)));
    }
    const auto d = describe_scans(model, copies);
    const std::size_t D = d.dim(1);
    for (std::size_t k = 1; k < copies.size(); ++k, ++rot_n) rot_sum += l2(d.ptr(), d.ptr() + k * D, D);
    std::vector<double> others;
    for (const auto& m : map_desc)
      if (label_pair(queries.poses[q], m.pose) == PairLabel::Dissimilar)
        others.push_back(l2(d.ptr(), m.descriptor.data(), D));
    std::partial_sort(others.begin(), others.begin() + 10, others.end());
    for (std::size_t k = 0; k < 10; ++k, ++other_n) other_sum += others[k];
  }
  const double rot = rot_sum / double(rot_n), other = other_sum / double(other_n);
  return {rot < 0.5 * other, "rotation " + fmt(rot) + " vs 10 nearest other places " + fmt(other) + ", ratio " +
                                 fmt(rot / other) + " (" + std::to_string(queries.size()) + " queries)"};
}

Outcome localization() {
  const auto& run = bench(7);
  const double r5 = run.r5.at("radarloc"), r10 = run.r10.at("radarloc");
  const bool ok = r5 >= 0.90 && r10 >= 0.95 && run.seconds < 1800.0;
  return {ok, "Recall@1 " + fmt(r5) + " (5 m), " + fmt(r10) + " (10 m), gen+train+eval " + fmt(run.seconds) + " s"};
}

Outcome ordering() {
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed : {7, 8, 9}) {
    const auto& run = bench(seed);
    const double rl = run.r5.at("radarloc"), sc = run.r5.at("scancontext"), rk = run.r5.at("ringkey");
    ok = ok && rl >= sc && sc >= rk;
    detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + ": " + fmt(rl) + " >= " +
              fmt(sc) + " >= " + fmt(rk);
  }
  return {ok, detail};
}

// Direct-loop convolution with circular H and zero-padded W.
std::vector<double> direct_conv(const Tensor<float>& x, const Tensor<float>& w, const Tensor<float>& b,
                                std::size_t sh, std::size_t sw) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  const long ph = long(KH) / 2, pw = long(KW) / 2;
  const std::size_t Ho = H / sh, Wo = W / sw;
  std::vector<double> out(N * O * Ho * Wo);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < Ho; ++i)
        for (std::size_t j = 0; j < Wo; ++j) {
          double acc = b.data()[o];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t u = 0; u < KH; ++u)
              for (std::size_t v = 0; v < KW; ++v) {
                const long hh = ((long(i * sh) + long(u) - (sh == 1 ? ph : 0)) % long(H) + long(H)) % long(H);
                const long ww = long(j * sw) + long(v) - (sw == 1 ? pw : 0);
                if (ww < 0 || ww >= long(W)) continue;
                acc += double(x.data()[((n * C + c) * H + hh) * W + ww]) * w.data()[((o * C + c) * KH + u) * KW + v];
              }
          out[((n * O + o) * Ho + i) * Wo + j] = acc;
        }
  return out;
}

Outcome oracles() {
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> u(-1, 1);
  std::string fails;

  // knn, exact against a full sort with index tie-break.
  {
    std::uniform_int_distribution<int> coarse(0, 4);
    std::vector<IndexEntry> entries;
    for (std::size_t i = 0; i < 500; ++i) {
      std::vector<float> d(6);
      for (auto& v : d) v = i % 5 == 0 ? float(coarse(rng)) : float(u(rng));
      entries.push_back({"m" + std::to_string(i), Pose{0, 0, 0, 0}, d});
    }
    const DescriptorIndex index(entries, "oracle");
    bool ok = true;
    for (int q = 0; q < 100; ++q) {
      std::vector<float> query(6);
      for (auto& v : query) v = q % 4 == 0 ? float(coarse(rng)) : float(u(rng));
      std::vector<std::pair<double, std::size_t>> all;
      for (std::size_t i = 0; i < entries.size(); ++i) {
        double acc = 0;
        for (std::size_t k = 0; k < 6; ++k) acc += std::pow(double(entries[i].descriptor[k]) - query[k], 2);
        all.push_back({std::sqrt(acc), i});
      }
      std::sort(all.begin(), all.end());
      const auto got = knn(index, query, 25);
      for (std::size_t r = 0; r < 25; ++r) ok = ok && got[r].index == all[r].second && got[r].distance == all[r].first;
    }
    if (!ok) fails += " knn";
  }
  // batch-hard mining against an O(N^2) scan.
  {
    bool ok = true;
    std::uniform_real_distribution<double> pos(0, 80);
    std::uniform_int_distribution<std::size_t> size(4, 24);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = size(rng);
      std::vector<Pose> poses;
      for (std::size_t i = 0; i < n; ++i) poses.push_back({double(i), pos(rng), pos(rng) * 0.1, 0.0});
      const auto rel = label_pairs(poses, poses);
      Tensor<float> d(Shape{n, 5});
      for (auto& v : d.data()) v = float(u(rng));
      std::vector<Triple> expected;
      std::size_t skipped = 0;
      for (std::size_t a = 0; a < n; ++a) {
        long p = -1, best_n = -1;
        double best = 1e300;
        for (std::size_t j = 0; j < n; ++j) {
          if (j == a) continue;
          if (p < 0 && rel.at(a, j) == PairLabel::Similar) p = long(j);
          if (rel.at(a, j) != PairLabel::Dissimilar) continue;
          const double dist = l2(d.ptr() + a * 5, d.ptr() + j * 5, 5);
          if (dist < best) best = dist, best_n = long(j);
        }
        if (p >= 0 && best_n >= 0) expected.push_back({a, std::size_t(p), std::size_t(best_n)});
        else ++skipped;
      }
      const auto mined = batch_hard_mine(d, rel);
      ok = ok && mined.triples == expected && mined.skipped == skipped;
    }
    if (!ok) fails += " batch_hard_mine";
  }
  // conv2d_circular against direct loops.
  double conv_worst = 0;
  {
    std::uniform_int_distribution<std::size_t> small(1, 4), spatial(2, 6), kernel(0, 2);
    for (int trial = 0; trial < 20; ++trial) {
      const bool strided = trial % 4 == 3;
      const std::size_t k = strided ? 2 : 2 * kernel(rng) + 1, s = strided ? 2 : 1;
      const std::size_t N = small(rng), C = small(rng), O = small(rng);
      const std::size_t H = 2 * spatial(rng), W = 2 * spatial(rng);
      Tensor<float> x(Shape{N, C, H, W}), w(Shape{O, C, k, k}), b(Shape{O});
      for (auto* t : {&x, &w, &b})
        for (auto& v : t->data()) v = float(u(rng));
      const auto got = ops::conv2d_circular(x, w, b, s, s);
      const auto want = direct_conv(x, w, b, s, s);
      for (std::size_t i = 0; i < want.size(); ++i) conv_worst = std::max(conv_worst, std::abs(got.data()[i] - want[i]));
    }
    if (conv_worst > 1e-5) fails += " conv2d_circular";
  }
  // ScanContext distance against an exhaustive shift search.
  double sc_worst = 0;
  {
    std::uniform_real_distribution<float> pos(0.0f, 1.0f);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t S = 8 + 4 * std::size_t(trial % 5), R = 3 + std::size_t(trial % 3);
      ScanContextDescriptor a{S, R, {}}, b{S, R, {}};
      for (std::size_t i = 0; i < S * R; ++i) a.matrix.push_back(pos(rng)), b.matrix.push_back(pos(rng));
      double best = 1e300;
      for (std::size_t shift = 0; shift < S; ++shift) {
        double total = 0;
        for (std::size_t s = 0; s < S; ++s) {
          const float* x = &a.matrix[s * R];
          const float* y = &b.matrix[((s + shift) % S) * R];
          double dot = 0, nx = 0, ny = 0;
          for (std::size_t r = 0; r < R; ++r) dot += double(x[r]) * y[r], nx += double(x[r]) * x[r], ny += double(y[r]) * y[r];
          total += 1.0 - dot / std::sqrt(nx * ny);
        }
        best = std::min(best, total / double(S));
      }
      sc_worst = std::max(sc_worst, std::abs(best - scancontext_distance(a, b)));
    }
    if (sc_worst > 1e-6) fails += " scancontext_distance";
  }
  return {fails.empty(), "knn 500x100 exact, mining 50 batches exact, conv 20 cases max diff " + fmt(conv_worst) +
                             ", ScanContext 20 cases max diff " + fmt(sc_worst) + (fails.empty() ? "" : "; failed:" + fails)};
}

Outcome protocol() {
  FilterRules rules;
  rules.angular_bins = 8;
  rules.radial_bins = 4;
  auto scans = [](std::vector<double> ts) {
    std::vector<PolarScan> out;
    for (std::size_t i = 0; i < ts.size(); ++i) {
      PolarScan s{"s" + std::to_string(i), ts[i], 8, 4, std::vector<float>(32, 0.0f)};
      s.image[i] = 1.0f;
      out.push_back(std::move(s));
    }
    return out;
  };
  std::vector<std::string> fails;
  // Steps of 0.05, 0.09 and 0.12 m: the first two dropped (measured from the last kept scan, 0.12 m ≥ 0.1 m).
  {
    const std::vector<Pose> poses{{0, 0, 0, 0}, {1, 0.05, 0, 0}, {2, 0.09, 0, 0}, {3, 0.12, 0, 0}, {4, 0.5, 0, 0}};
    const auto t = filter_traversal(scans({0, 1, 2, 3, 4}), poses, rules);
    std::vector<std::string> ids;
    for (const auto& s : t.scans) ids.push_back(s.id);
    if (ids != std::vector<std::string>{"s0", "s3", "s4"}) fails.push_back("displacement");
  }
  // Nearest pose 0.9 s away kept, 1.2 s away dropped.
  {
    const std::vector<Pose> poses{{0, 0, 0, 0}, {10.9, 5, 0, 0}, {21.2, 10, 0, 0}};
    const auto t = filter_traversal(scans({0, 10, 20}), poses, rules);
    if (t.size() != 2 || t.scans[1].id != "s1") fails.push_back("pose tolerance");
  }
  // 5 m / 20 m thresholds, exclusion band in between.
  {
    const Pose o{0, 0, 0, 0};
    const std::vector<std::pair<Pose, PairLabel>> cases{
        {{0, 0, 0, 0}, PairLabel::Similar},    {{0, 3, 4, 0}, PairLabel::Similar},
        {{0, 5.01, 0, 0}, PairLabel::Excluded}, {{0, 12, 0, 0}, PairLabel::Excluded},
        {{0, 19.99, 0, 0}, PairLabel::Excluded}, {{0, 12, 16, 0}, PairLabel::Dissimilar},
        {{0, 40, 0, 0}, PairLabel::Dissimilar}};
    for (const auto& [p, want] : cases)
      if (label_pair(o, p) != want) fails.push_back("label at " + fmt(planar_distance(o, p)) + " m");
  }
  std::string detail = "0.1 m displacement, 1 s pose tolerance, 5 m / 20 m labels";
  for (const auto& f : fails) detail += "; failed " + f;
  return {fails.empty(), detail};
}

Outcome monotonicity() {
  std::mt19937_64 rng(808);
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<std::size_t> count(5, 60), dim(1, 8);
  const std::vector<double> thresholds{1.0, 2.5, 5.0, 10.0, 20.0, 40.0};
  std::size_t violations = 0;
  for (int set = 0; set < 50; ++set) {
    const std::size_t D = dim(rng), M = count(rng), Q = count(rng);
    const double extent = 5.0 + 60.0 * u(rng);
    auto entries = [&](std::size_t n) {
      std::vector<IndexEntry> out;
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<float> d(D);
        for (auto& v : d) v = float(u(rng));
        out.push_back({"e", Pose{0, extent * u(rng), extent * u(rng), 0}, d});
      }
      return out;
    };
    const auto map = entries(M), queries = entries(Q);
    const std::size_t max_n = std::min<std::size_t>(M, 12);
    const auto report = evaluate(DescriptorIndex(map, "fuzz"), queries, max_n, thresholds);
    for (std::size_t t = 0; t < thresholds.size(); ++t)
      for (std::size_t n = 1; n <= max_n; ++n) {
        if (n > 1 && report.recall_at(n, thresholds[t]) < report.recall_at(n - 1, thresholds[t])) ++violations;
        if (t > 0 && report.recall_at(n, thresholds[t]) < report.recall_at(n, thresholds[t - 1])) ++violations;
      }
  }
  return {violations == 0, "50 fuzzed descriptor sets, " + std::to_string(violations) + " violations"};
}

Outcome determinism() {
  // Both runs use the same paths, since the recorded configs include them.
  const fs::path root = g_work / "det";
  std::vector<fs::path> roots;
  for (const char* name : {"det_a", "det_b"}) {
    fs::remove_all(root);
    fs::remove_all(g_work / name);
    const std::string data = (root / "data").string(), model = (root / "model").string();
    ploc("gen --seed 7 --out " + data);
    ploc("train --data " + data + " --out " + model + " --seed 7 --epochs 2");
    ploc("eval --data " + data + " --out " + (root / "eval").string() + " --method radarloc --checkpoint " + model +
         "/model.ploc");
    ploc("eval --data " + data + " --out " + (root / "eval").string() + " --method scancontext");
    ploc("eval --data " + data + " --out " + (root / "eval").string() + " --method ringkey");
    fs::rename(root, g_work / name);
    roots.push_back(g_work / name);
  }
  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (const auto& e : fs::recursive_directory_iterator(roots[0])) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), roots[0]);
    // Logs carry wall-clock timings.
    if (rel.filename() == "train.log") continue;
    ++compared;
    if (slurp(e.path()) != slurp(roots[1] / rel)) differing.push_back(rel.string());
  }
  std::string detail = std::to_string(compared) + " files compared (dataset, checkpoint, descriptors, CSV reports)";
  for (const auto& d : differing) detail += "; differs: " + d;
  return {differing.empty() && compared > 0, detail};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::cerr << "usage: acceptance <ploc binary> <work dir> [criterion ...]\n";
    return 1;
  }
  g_bin = argv[1];
  g_work = argv[2];
  fs::create_directories(g_work);
  std::set<int> only;
  for (int i = 3; i < argc; ++i) only.insert(std::atoi(argv[i]));

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradients},
      {"rotational invariance, exact tier", exact_invariance},
      {"rotational invariance, trained tier", trained_invariance},
      {"end-to-end synthetic localization", localization},
      {"baseline ordering", ordering},
      {"oracle equivalences", oracles},
      {"protocol rules", protocol},
      {"recall monotonicity", monotonicity},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = int(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("raised: ") + e.what()};
    }
    failed += out.pass ? 0 : 1;
    std::cout << (out.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first << "): " << out.detail
              << '\n'
              << std::flush;
  }
  return failed == 0 ? 0 : 1;
}
