#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "polarloc/data.hpp"
#include "polarloc/network.hpp"

namespace ploc {

struct TripletLossSpec {
  double margin = 0.2;
};

/// max(d(a, p) - d(a, n) + margin, 0) with Euclidean d. Recorded on the
/// active tape like any other op.
template <typename T>
Tensor<T> triplet_loss(const Tensor<T>& anchor, const Tensor<T>& positive, const Tensor<T>& negative,
                       const TripletLossSpec& spec);

struct Triple {
  std::size_t anchor;
  std::size_t positive;
  std::size_t negative;

  bool operator==(const Triple&) const = default;
};

struct MiningResult {
  std::vector<Triple> triples;
  /// Anchors without an in-batch positive or negative.
  std::size_t skipped = 0;
};

inline constexpr std::ptrdiff_t kNoDesignatedPositive = -1;

/// Batch-hard mining over rank-2 `descriptors` (N x D). Every element is an
/// anchor. The positive is `designated[i]` when given (and similar), else the
/// lowest-index similar element. The negative is the dissimilar element with
/// the smallest descriptor distance, lowest index on ties.
template <typename T>
MiningResult batch_hard_mine(const Tensor<T>& descriptors, const PairRelation& relation,
                             std::span<const std::ptrdiff_t> designated = {});

struct AugmentationSpec {
  double erase_probability = 0.5;
  double erase_area_min = 0.02;
  double erase_area_max = 0.2;
  double erase_aspect_min = 0.3;
  double erase_aspect_max = 3.3;
  bool cyclic_shift = true;
};

/// Random erasing (rectangle set to 0) followed by a uniform random roll
/// along the angular axis.
PolarScan augment(const PolarScan& scan, const AugmentationSpec& spec, std::mt19937_64& rng);

/// One training batch: indices into the traversal and, for each element, the
/// batch position of its designated positive.
struct Batch {
  std::vector<std::size_t> indices;
  std::vector<std::ptrdiff_t> partner;
};

/// Draws batch_size / 2 places per batch with two scans each (an anchor and
/// a random scan within the positive radius). Places in a batch are pairwise
/// farther apart than the positive radius.
class PlaceBatchSampler {
 public:
  PlaceBatchSampler(std::vector<Pose> poses, std::size_t batch_size, double positive_radius_m);

  std::vector<Batch> epoch(std::mt19937_64& rng) const;
  std::size_t batch_size() const { return batch_size_; }

 private:
  std::vector<Pose> poses_;
  std::size_t batch_size_;
  double positive_radius_m_;
  std::vector<std::vector<std::size_t>> neighbours_;
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  TripletLossSpec loss;
  AdamConfig adam;
  PairThresholds thresholds;
  AugmentationSpec augmentation;
  std::uint64_t seed = 7;

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double active_fraction = 0.0;
  std::size_t triples = 0;
  std::size_t skipped = 0;
  std::size_t batches = 0;
  double seconds = 0.0;
};

/// Stacks scans into an (N, 1, A, R) tensor.
template <typename T>
Tensor<T> stack_scans(std::span<const PolarScan* const> scans);

/// One pass over the sampler's batches: augment, forward, mine, mean triplet
/// loss over mined triples, backward, Adam. Batches without triples do not
/// update parameters. Throws NumericalError on a non-finite loss.
EpochStats train_epoch(RadarLocModel<float>& model, const Traversal& data, const PlaceBatchSampler& sampler,
                       AdamState<float>& optimizer, const TrainConfig& config, std::mt19937_64& rng);

/// Full run; `on_epoch` is called after every epoch.
std::vector<EpochStats> train(RadarLocModel<float>& model, const Traversal& data, const TrainConfig& config,
                              const std::function<void(const EpochStats&)>& on_epoch = {});

}  // namespace ploc
