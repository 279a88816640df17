#include "polarloc/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <ostream>

#include "polarloc/autodiff.hpp"
#include "polarloc/config_json.hpp"
#include "polarloc/error.hpp"
#include "polarloc/seed.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ploc {

Method parse_method(const std::string& name) {
  if (name == "radarloc") return Method::RadarLoc;
  if (name == "scancontext") return Method::ScanContext;
  if (name == "ringkey") return Method::RingKey;
  throw UsageError("unknown method '" + name + "' (expected radarloc, scancontext or ringkey)");
}

std::string method_name(Method method) {
  switch (method) {
    case Method::RadarLoc:
      return "radarloc";
    case Method::ScanContext:
      return "scancontext";
    case Method::RingKey:
      return "ringkey";
  }
  return "unknown";
}

fs::path resolve_data_dir(const std::optional<fs::path>& explicit_dir) {
  if (explicit_dir) return *explicit_dir;
  if (const char* env = std::getenv("PLOC_DATA_DIR"); env && *env) return fs::path(env);
  return fs::path("data");
}

namespace {

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_json(const fs::path& path, const json& value) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << value.dump(2) << '\n';
  if (!out) throw DataError("failed writing " + path.string());
}

RadarLocModel<float> load_checked_model(const EvalRun& run) {
  if (run.method != Method::RadarLoc) {
    if (run.checkpoint)
      throw UsageError("method " + method_name(run.method) + " takes no checkpoint, but --checkpoint was given");
    throw ContractViolation("no model for a hand-crafted method");
  }
  if (!run.checkpoint) throw UsageError("method radarloc requires --checkpoint");
  return load_model(*run.checkpoint);
}

json eval_config_json(const EvalRun& run, const std::string& command) {
  json cfg;
  cfg["command"] = command;
  cfg["data"] = run.data.string();
  cfg["out"] = run.out.string();
  cfg["method"] = method_name(run.method);
  cfg["checkpoint"] = run.checkpoint ? json(run.checkpoint->string()) : json(nullptr);
  cfg["filter"] = run.filter;
  cfg["map_split"] = run.map_split;
  cfg["query_split"] = run.query_split;
  cfg["scancontext"] = run.scancontext;
  cfg["recall_max_n"] = run.max_n;
  cfg["thresholds_m"] = run.thresholds_m;
  return cfg;
}

std::vector<IndexEntry> describe_split(const EvalRun& run, const std::string& split, const std::string& role,
                                       RadarLocModel<float>* model) {
  const Traversal traversal = load_split(run.data, split, role, run.filter);
  return describe(run.method, traversal, model, run.scancontext);
}

// The model's input size wins over the requested resolution.
EvalRun resolve(const EvalRun& run, const RadarLocModel<float>* model) {
  EvalRun resolved = run;
  if (model) {
    resolved.filter.angular_bins = model->config().angular_bins;
    resolved.filter.radial_bins = model->config().radial_bins;
  }
  return resolved;
}

ScanContextDescriptor unflatten(const IndexEntry& entry, const ScanContextSpec& spec) {
  expects(entry.descriptor.size() == spec.sectors * spec.rings,
          "scancontext descriptor of " + entry.scan_id + " does not match the sector x ring grid");
  return ScanContextDescriptor{spec.sectors, spec.rings, entry.descriptor};
}

}  // namespace

void write_synthetic_dataset(const fs::path& out, const SyntheticDataset& dataset, const SyntheticWorldSpec& spec) {
  make_dir(out);
  json manifest;
  manifest["generator"] = "synthetic";
  manifest["seed"] = spec.seed;
  manifest["spec"] = spec;
  for (const Traversal* t : {&dataset.train, &dataset.map, &dataset.query}) {
    write_traversal(out / t->name, *t);
    manifest["splits"][t->name] = {{"role", t->role}, {"scans", t->size()}};
  }
  write_json(out / "manifest.json", manifest);
}

Traversal load_split(const fs::path& root, const std::string& split, const std::string& role,
                     const FilterRules& rules) {
  const fs::path dir = root / split;
  if (!fs::is_directory(dir)) throw DataError("dataset split not found: " + dir.string());
  return ingest_directory(dir, rules, role);
}

TrainResult run_training(const TrainRun& run, std::ostream* progress) {
  NetworkConfig network = run.network;
  network.angular_bins = run.filter.angular_bins;
  network.radial_bins = run.filter.radial_bins;
  run.train.validate();
  network.validate();
  const Traversal data = load_split(run.data, run.split, "train", run.filter);

  make_dir(run.out);
  json cfg;
  cfg["command"] = "train";
  cfg["data"] = run.data.string();
  cfg["out"] = run.out.string();
  cfg["split"] = run.split;
  cfg["train"] = run.train;
  cfg["network"] = network;
  cfg["filter"] = run.filter;
  write_json(run.out / "train_config.json", cfg);

  std::ofstream log(run.out / "train.log");
  if (!log) throw DataError("cannot open for writing: " + (run.out / "train.log").string());
  log << "epoch,mean_loss,active_fraction,triples,skipped_anchors,batches,seconds\n" << std::flush;

  RadarLocModel<float> model = RadarLocModel<float>::build(network, derive_seed(run.train.seed, "network.init"));
  TrainResult result;
  result.epochs = train(model, data, run.train, [&](const EpochStats& s) {
    log << s.epoch << ',' << format_double(s.mean_loss) << ',' << format_double(s.active_fraction) << ','
        << s.triples << ',' << s.skipped << ',' << s.batches << ',' << format_double(s.seconds) << '\n'
        << std::flush;
    if (progress)
      *progress << "epoch " << s.epoch << "/" << run.train.epochs << "  loss " << s.mean_loss << "  active "
                << s.active_fraction << "  (" << s.seconds << " s)\n"
                << std::flush;
  });
  result.checkpoint = run.out / "model.ploc";
  save_model(result.checkpoint, model);
  return result;
}

std::vector<IndexEntry> describe(Method method, const Traversal& traversal, RadarLocModel<float>* model,
                                 const ScanContextSpec& grid, std::size_t batch_size) {
  expects(batch_size >= 1, "describe: batch size must be positive");
  std::vector<IndexEntry> entries;
  entries.reserve(traversal.size());
  if (method != Method::RadarLoc) {
    for (std::size_t i = 0; i < traversal.size(); ++i) {
      const PolarScan& scan = traversal.scans[i];
      std::vector<float> d = method == Method::ScanContext ? scancontext(scan, grid).matrix
                                                           : ring_key(scan, grid.rings).values;
      entries.push_back({scan.id, traversal.poses[i], std::move(d)});
    }
    return entries;
  }

  expects(model != nullptr, "describe: radarloc needs a model");
  const NetworkConfig& cfg = model->config();
  const Mode saved = model->mode();
  model->set_mode(Mode::Eval);
  NoGradScope<float> no_grad;
  for (std::size_t begin = 0; begin < traversal.size(); begin += batch_size) {
    const std::size_t end = std::min(traversal.size(), begin + batch_size);
    std::vector<const PolarScan*> batch;
    for (std::size_t i = begin; i < end; ++i) {
      const PolarScan& scan = traversal.scans[i];
      if (scan.angular_bins != cfg.angular_bins || scan.radial_bins != cfg.radial_bins)
        throw DataError("scan " + scan.id + " does not match the model input size");
      batch.push_back(&scan);
    }
    const Tensor<float> d = model->forward(stack_scans<float>(batch));
    check_finite<float>(d.data(), "descriptor");
    const std::size_t dim = d.dim(1);
    for (std::size_t j = 0; j < batch.size(); ++j)
      entries.push_back({batch[j]->id, traversal.poses[begin + j],
                         std::vector<float>(d.ptr() + j * dim, d.ptr() + (j + 1) * dim)});
  }
  model->set_mode(saved);
  return entries;
}

EvalReport evaluate_method(Method method, const std::vector<IndexEntry>& map, const std::vector<IndexEntry>& queries,
                           const ScanContextSpec& scancontext, std::size_t max_n,
                           const std::vector<double>& thresholds_m) {
  if (method != Method::ScanContext)
    return evaluate(DescriptorIndex(map, method_name(method)), queries, max_n, thresholds_m);

  expects(!map.empty(), "evaluate: empty map");
  std::vector<ScanContextDescriptor> db;
  std::vector<Pose> map_poses, query_poses;
  for (const auto& e : map) {
    db.push_back(unflatten(e, scancontext));
    map_poses.push_back(e.pose);
  }
  std::vector<std::vector<std::size_t>> rankings;
  std::vector<std::pair<double, std::size_t>> scored(db.size());
  for (const auto& q : queries) {
    const ScanContextDescriptor qd = unflatten(q, scancontext);
    for (std::size_t i = 0; i < db.size(); ++i) scored[i] = {scancontext_distance(qd, db[i]), i};
    const std::size_t take = std::min(max_n, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end());
    std::vector<std::size_t> ranked(take);
    for (std::size_t r = 0; r < take; ++r) ranked[r] = scored[r].second;
    rankings.push_back(std::move(ranked));
    query_poses.push_back(q.pose);
  }
  return evaluate_rankings(rankings, map_poses, query_poses, max_n, thresholds_m);
}

std::vector<IndexEntry> run_index(const EvalRun& requested) {
  std::optional<RadarLocModel<float>> model;
  if (requested.method == Method::RadarLoc || requested.checkpoint) model.emplace(load_checked_model(requested));
  const EvalRun run = resolve(requested, model ? &*model : nullptr);
  auto map = describe_split(run, run.map_split, "map", model ? &*model : nullptr);
  DescriptorIndex index(map, method_name(run.method));
  make_dir(run.out);
  write_json(run.out / "index_config.json", eval_config_json(run, "index"));
  write_descriptors(run.out / ("map_" + method_name(run.method) + ".pdsc"), method_name(run.method), map);
  return map;
}

EvalReport run_eval(const EvalRun& requested) {
  std::optional<RadarLocModel<float>> model;
  if (requested.method == Method::RadarLoc || requested.checkpoint) model.emplace(load_checked_model(requested));
  const EvalRun run = resolve(requested, model ? &*model : nullptr);
  RadarLocModel<float>* m = model ? &*model : nullptr;
  const auto map = describe_split(run, run.map_split, "map", m);
  const auto queries = describe_split(run, run.query_split, "query", m);
  EvalReport report = evaluate_method(run.method, map, queries, run.scancontext, run.max_n, run.thresholds_m);
  if (!report.is_monotone()) throw NumericalError("evaluation report violates recall monotonicity");

  make_dir(run.out);
  const std::string name = method_name(run.method);
  write_json(run.out / "eval_config.json", eval_config_json(run, "eval"));
  write_descriptors(run.out / ("map_" + name + ".pdsc"), name, map);
  write_descriptors(run.out / ("query_" + name + ".pdsc"), name, queries);
  report.write_csv(run.out / ("eval_" + name + ".csv"));
  return report;
}

}  // namespace ploc
