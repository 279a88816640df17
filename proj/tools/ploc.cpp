#include <Eigen/Core>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "polarloc/error.hpp"
#include "polarloc/pipeline.hpp"

namespace fs = std::filesystem;
using namespace ploc;

namespace {

struct Options {
  std::optional<std::string> data;
  std::string out;
  std::uint64_t seed = 7;
  int threads = 1;
  std::string method = "radarloc";
  std::optional<std::string> checkpoint;
  std::size_t epochs = TrainConfig{}.epochs;
  std::size_t batch_size = TrainConfig{}.batch_size;
  double margin = TripletLossSpec{}.margin;
  double lr = AdamConfig{}.lr;
  std::size_t recall_max_n = 10;
  std::vector<double> thresholds{5.0, 10.0};
  std::string map_split = "map";
  std::string query_split = "query";
  std::string train_split = "train";
  std::size_t sectors = ScanContextSpec{}.sectors;
  std::size_t rings = ScanContextSpec{}.rings;
  FilterRules filter;
  SyntheticWorldSpec world;
  std::string inject_fault;
};

fs::path data_dir(const Options& o) {
  return resolve_data_dir(o.data ? std::optional<fs::path>(*o.data) : std::nullopt);
}

EvalRun eval_run(const Options& o) {
  EvalRun run;
  run.data = data_dir(o);
  run.out = o.out;
  run.method = parse_method(o.method);
  if (o.checkpoint) run.checkpoint = fs::path(*o.checkpoint);
  run.filter = o.filter;
  run.map_split = o.map_split;
  run.query_split = o.query_split;
  run.scancontext.sectors = o.sectors;
  run.scancontext.rings = o.rings;
  run.max_n = o.recall_max_n;
  run.thresholds_m = o.thresholds;
  if (run.max_n < 1) throw UsageError("--recall-max-n must be at least 1");
  if (run.thresholds_m.empty()) throw UsageError("--thresholds needs at least one value");
  return run;
}

int cmd_gen(Options& o) {
  o.world.seed = o.seed;
  try {
    o.world.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  const auto dataset = generate_synthetic(o.world);
  write_synthetic_dataset(o.out, dataset, o.world);
  std::cout << "wrote " << dataset.train.size() << " train, " << dataset.map.size() << " map, "
            << dataset.query.size() << " query scans to " << o.out << '\n';
  return 0;
}

int cmd_train(const Options& o) {
  TrainRun run;
  run.data = data_dir(o);
  run.out = o.out;
  run.split = o.train_split;
  run.filter = o.filter;
  run.train.epochs = o.epochs;
  run.train.batch_size = o.batch_size;
  run.train.loss.margin = o.margin;
  run.train.adam.lr = o.lr;
  run.train.seed = o.seed;
  try {
    run.train.validate();
  } catch (const ContractViolation& e) {
    throw UsageError(e.what());
  }
  const auto result = run_training(run, &std::cout);
  std::cout << "checkpoint " << result.checkpoint.string() << '\n';
  return 0;
}

int cmd_index(const Options& o) {
  const auto entries = run_index(eval_run(o));
  std::cout << "indexed " << entries.size() << " map scans\n";
  return 0;
}

int cmd_eval(const Options& o) {
  const EvalRun run = eval_run(o);
  const auto report = run_eval(run);
  std::cout << method_name(run.method) << " queries " << report.query_count << '\n';
  for (double t : report.thresholds_m)
    std::cout << "Recall@1(" << t << " m) = " << report.recall_at(1, t) << '\n';
  return 0;
}

int cmd_selftest(const Options& o) {
  const auto checks = run_selftest(SelfTestOptions{o.inject_fault}, &std::cout);
  std::size_t failed = 0;
  for (const auto& c : checks) failed += c.passed ? 0 : 1;
  std::cout << checks.size() - failed << "/" << checks.size() << " checks passed\n";
  if (failed == 0) return 0;
  for (const auto& c : checks)
    if (!c.passed) std::cerr << "failed: " << c.name << '\n';
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"polar radar place recognition"};
  app.require_subcommand(1);
  app.add_option("--seed", o.seed, "master seed");
  app.add_option("--threads", o.threads, "worker threads (1 = deterministic)")->check(CLI::PositiveNumber);

  auto* gen = app.add_subcommand("gen", "write a synthetic dataset");
  gen->add_option("--out", o.out, "output directory")->required();
  gen->add_option("--seed", o.seed, "master seed");
  gen->add_option("--landmarks", o.world.landmark_count, "number of landmarks");
  gen->add_option("--world-size", o.world.world_size_m, "world edge length in metres");
  gen->add_option("--train-scans", o.world.train_scans);
  gen->add_option("--map-scans", o.world.map_scans);
  gen->add_option("--query-scans", o.world.query_scans);
  gen->add_option("--angular-bins", o.world.angular_bins);
  gen->add_option("--radial-bins", o.world.radial_bins);
  gen->add_option("--landmark-dropout", o.world.landmark_dropout, "fraction of landmarks absent per traversal");
  gen->add_option("--parked-per-100m", o.world.parked_per_100m, "objects parked beside the route per traversal");
  gen->add_option("--moving-objects", o.world.moving_objects_mean, "mean moving objects per scan");

  auto* train = app.add_subcommand("train", "train the descriptor network");
  train->add_option("--data", o.data, "dataset root (default $PLOC_DATA_DIR or ./data)");
  train->add_option("--out", o.out, "output directory")->required();
  train->add_option("--seed", o.seed, "master seed");
  train->add_option("--split", o.train_split, "training split");
  train->add_option("--epochs", o.epochs);
  train->add_option("--batch-size", o.batch_size);
  train->add_option("--margin", o.margin);
  train->add_option("--lr", o.lr);
  train->add_option("--angular-bins", o.filter.angular_bins, "input resolution (azimuth)");
  train->add_option("--radial-bins", o.filter.radial_bins, "input resolution (range)");

  auto* index = app.add_subcommand("index", "describe the map split");
  auto* eval = app.add_subcommand("eval", "describe map and query splits and report Recall@N");
  for (auto* sub : {index, eval}) {
    sub->add_option("--data", o.data, "dataset root (default $PLOC_DATA_DIR or ./data)");
    sub->add_option("--out", o.out, "output directory")->required();
    sub->add_option("--method", o.method, "radarloc, scancontext or ringkey");
    sub->add_option("--checkpoint", o.checkpoint, "model checkpoint (radarloc only)");
    sub->add_option("--map-split", o.map_split);
    sub->add_option("--query-split", o.query_split);
    sub->add_option("--sectors", o.sectors, "ScanContext sectors");
    sub->add_option("--rings", o.rings, "ScanContext / ring key rings");
    sub->add_option("--angular-bins", o.filter.angular_bins, "input resolution without a checkpoint (azimuth)");
    sub->add_option("--radial-bins", o.filter.radial_bins, "input resolution without a checkpoint (range)");
  }
  eval->add_option("--recall-max-n", o.recall_max_n);
  eval->add_option("--thresholds", o.thresholds, "distance thresholds in metres")->delimiter(',');

  auto* selftest = app.add_subcommand("selftest", "run built-in correctness checks");
  selftest->add_option("--inject-fault", o.inject_fault, "deliberately break a check (gradient)");

  for (auto* sub : {gen, train, index, eval, selftest})
    sub->add_option("--threads", o.threads, "worker threads (1 = deterministic)")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  Eigen::setNbThreads(o.threads);
  try {
    if (*gen) return cmd_gen(o);
    if (*train) return cmd_train(o);
    if (*index) return cmd_index(o);
    if (*eval) return cmd_eval(o);
    if (*selftest) return cmd_selftest(o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
