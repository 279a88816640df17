#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "polarloc/baselines.hpp"
#include "polarloc/network.hpp"
#include "polarloc/retrieval.hpp"
#include "polarloc/synthetic.hpp"
#include "polarloc/training.hpp"

// The stages behind the command-line tool. Every stage writes its resolved
// configuration next to its outputs.
namespace ploc {

enum class Method { RadarLoc, ScanContext, RingKey };

Method parse_method(const std::string& name);
std::string method_name(Method method);

/// Dataset root: explicit path if given, else $PLOC_DATA_DIR, else "data".
std::filesystem::path resolve_data_dir(const std::optional<std::filesystem::path>& explicit_dir);

/// Writes <out>/{train,map,query}/{scans/*.plsc,poses.csv} and
/// <out>/manifest.json.
void write_synthetic_dataset(const std::filesystem::path& out, const SyntheticDataset& dataset,
                             const SyntheticWorldSpec& spec);

/// Reads <root>/<split> through the ingestion filters.
Traversal load_split(const std::filesystem::path& root, const std::string& split, const std::string& role,
                     const FilterRules& rules = {});

struct TrainRun {
  std::filesystem::path data;
  std::filesystem::path out;
  std::string split = "train";
  TrainConfig train;
  /// Input resolution is taken from `filter`, not from the network fields.
  NetworkConfig network;
  FilterRules filter;
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  std::filesystem::path checkpoint;
};

/// Trains from scratch and writes model.ploc, model.ploc.json, train.log and
/// train_config.json into `out`. The log is flushed after every epoch, so a
/// failed run keeps its partial history.
TrainResult run_training(const TrainRun& run, std::ostream* progress = nullptr);

/// Global descriptors for every scan of a traversal. `model` is required for
/// RadarLoc and ignored otherwise.
std::vector<IndexEntry> describe(Method method, const Traversal& traversal, RadarLocModel<float>* model,
                                 const ScanContextSpec& grid = {}, std::size_t batch_size = 8);

/// Recall@N of `queries` against `map` using the method's own comparison:
/// Euclidean kNN for RadarLoc and ring keys, shift-aligned ScanContext
/// distance for ScanContext.
EvalReport evaluate_method(Method method, const std::vector<IndexEntry>& map, const std::vector<IndexEntry>& queries,
                           const ScanContextSpec& scancontext, std::size_t max_n,
                           const std::vector<double>& thresholds_m);

struct EvalRun {
  std::filesystem::path data;
  std::filesystem::path out;
  Method method = Method::RadarLoc;
  std::optional<std::filesystem::path> checkpoint;
  /// Scans are resampled to this resolution; a checkpoint overrides it with
  /// the model's own input size.
  FilterRules filter;
  std::string map_split = "map";
  std::string query_split = "query";
  ScanContextSpec scancontext;
  std::size_t max_n = 10;
  std::vector<double> thresholds_m{5.0, 10.0};
};

/// Writes <out>/map_<method>.pdsc and index_config.json.
std::vector<IndexEntry> run_index(const EvalRun& run);

/// Writes the map and query descriptor files, eval_<method>.csv and
/// eval_config.json.
EvalReport run_eval(const EvalRun& run);

struct SelfTestOptions {
  /// Name of a deliberately broken check to run in place of its correct
  /// counterpart ("gradient" corrupts one backward rule); empty for none.
  std::string inject_fault;
};

struct SelfTestCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

std::vector<SelfTestCheck> run_selftest(const SelfTestOptions& options, std::ostream* progress = nullptr);

}  // namespace ploc
