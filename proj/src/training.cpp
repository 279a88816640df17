#include "polarloc/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "polarloc/seed.hpp"

namespace ploc {

template <typename T>
Tensor<T> triplet_loss(const Tensor<T>& anchor, const Tensor<T>& positive, const Tensor<T>& negative,
                       const TripletLossSpec& spec) {
  expects(anchor.numel() == positive.numel() && anchor.numel() == negative.numel(),
          "triplet_loss: descriptor dimensions differ");
  Tensor<T> d_pos = ops::euclidean_distance(anchor, positive);
  Tensor<T> d_neg = ops::euclidean_distance(anchor, negative);
  return ops::relu(ops::add_scalar(ops::sub(d_pos, d_neg), static_cast<T>(spec.margin)));
}

template <typename T>
MiningResult batch_hard_mine(const Tensor<T>& descriptors, const PairRelation& relation,
                             std::span<const std::ptrdiff_t> designated) {
  expects(descriptors.rank() == 2, "batch_hard_mine: descriptors must be N x D");
  const std::size_t n = descriptors.dim(0), dim = descriptors.dim(1);
  expects(relation.rows() == n && relation.cols() == n, "batch_hard_mine: relation must be N x N");
  expects(designated.empty() || designated.size() == n, "batch_hard_mine: designated positives must be N long");

  const T* d = descriptors.ptr();
  auto distance = [&](std::size_t i, std::size_t j) {
    double acc = 0;
    for (std::size_t k = 0; k < dim; ++k) {
      const double diff = static_cast<double>(d[i * dim + k]) - static_cast<double>(d[j * dim + k]);
      acc += diff * diff;
    }
    return std::sqrt(acc);
  };

  MiningResult result;
  for (std::size_t a = 0; a < n; ++a) {
    std::ptrdiff_t positive = -1;
    if (!designated.empty() && designated[a] >= 0) {
      const auto p = static_cast<std::size_t>(designated[a]);
      expects(p < n, "batch_hard_mine: designated positive out of range");
      if (p != a && relation.at(a, p) == PairLabel::Similar) positive = designated[a];
    }
    if (positive < 0) {
      for (std::size_t j = 0; j < n; ++j) {
        if (j != a && relation.at(a, j) == PairLabel::Similar) {
          positive = static_cast<std::ptrdiff_t>(j);
          break;
        }
      }
    }
    std::ptrdiff_t negative = -1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a || relation.at(a, j) != PairLabel::Dissimilar) continue;
      const double dist = distance(a, j);
      if (dist < best) {
        best = dist;
        negative = static_cast<std::ptrdiff_t>(j);
      }
    }
    if (positive < 0 || negative < 0) {
      ++result.skipped;
      continue;
    }
    result.triples.push_back({a, static_cast<std::size_t>(positive), static_cast<std::size_t>(negative)});
  }
  return result;
}

PolarScan augment(const PolarScan& scan, const AugmentationSpec& spec, std::mt19937_64& rng) {
  PolarScan out = scan;
  const std::size_t A = scan.angular_bins, R = scan.radial_bins;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (spec.erase_probability > 0 && unit(rng) < spec.erase_probability) {
    const double total = static_cast<double>(A * R);
    std::uniform_real_distribution<double> area_dist(spec.erase_area_min, spec.erase_area_max);
    std::uniform_real_distribution<double> log_aspect(std::log(spec.erase_aspect_min), std::log(spec.erase_aspect_max));
    for (int attempt = 0; attempt < 10; ++attempt) {
      const double area = area_dist(rng) * total;
      const double aspect = std::exp(log_aspect(rng));
      const auto h = static_cast<std::size_t>(std::lround(std::sqrt(area * aspect)));
      const auto w = static_cast<std::size_t>(std::lround(std::sqrt(area / aspect)));
      if (h == 0 || w == 0 || h >= A || w >= R) continue;
      std::uniform_int_distribution<std::size_t> top(0, A - h), left(0, R - w);
      const std::size_t a0 = top(rng), r0 = left(rng);
      for (std::size_t a = a0; a < a0 + h; ++a)
        for (std::size_t r = r0; r < r0 + w; ++r) out.at(a, r) = 0.0f;
      break;
    }
  }
  if (spec.cyclic_shift) {
    std::uniform_int_distribution<std::size_t> shift(0, A - 1);
    out = roll_angular(out, static_cast<std::ptrdiff_t>(shift(rng)));
  }
  return out;
}

PlaceBatchSampler::PlaceBatchSampler(std::vector<Pose> poses, std::size_t batch_size, double positive_radius_m)
    : poses_(std::move(poses)), batch_size_(batch_size), positive_radius_m_(positive_radius_m) {
  expects(batch_size >= 2 && batch_size % 2 == 0, "batch size must be an even number >= 2");
  expects(!poses_.empty(), "sampler needs at least one pose");
  neighbours_.resize(poses_.size());
  for (std::size_t i = 0; i < poses_.size(); ++i)
    for (std::size_t j = 0; j < poses_.size(); ++j)
      if (i != j && planar_distance(poses_[i], poses_[j]) <= positive_radius_m_) neighbours_[i].push_back(j);
}

std::vector<Batch> PlaceBatchSampler::epoch(std::mt19937_64& rng) const {
  std::vector<std::size_t> queue(poses_.size());
  std::iota(queue.begin(), queue.end(), std::size_t{0});
  std::shuffle(queue.begin(), queue.end(), rng);
  std::erase_if(queue, [&](std::size_t i) { return neighbours_[i].empty(); });

  const std::size_t places = batch_size_ / 2;
  const std::size_t batch_count = std::max<std::size_t>(1, poses_.size() / batch_size_);
  std::vector<Batch> batches;
  for (std::size_t b = 0; b < batch_count && !queue.empty(); ++b) {
    Batch batch;
    std::vector<std::size_t> remaining;
    for (std::size_t q = 0; q < queue.size(); ++q) {
      const std::size_t anchor = queue[q];
      if (batch.indices.size() / 2 >= places) {
        remaining.push_back(anchor);
        continue;
      }
      const auto& nb = neighbours_[anchor];
      std::uniform_int_distribution<std::size_t> pick(0, nb.size() - 1);
      const std::size_t partner = nb[pick(rng)];
      bool compatible = true;
      for (std::size_t e : batch.indices) {
        if (planar_distance(poses_[e], poses_[anchor]) <= positive_radius_m_ ||
            planar_distance(poses_[e], poses_[partner]) <= positive_radius_m_) {
          compatible = false;
          break;
        }
      }
      if (!compatible) {
        remaining.push_back(anchor);
        continue;
      }
      const auto pos = static_cast<std::ptrdiff_t>(batch.indices.size());
      batch.indices.push_back(anchor);
      batch.indices.push_back(partner);
      batch.partner.push_back(pos + 1);
      batch.partner.push_back(pos);
    }
    queue = std::move(remaining);
    if (batch.indices.empty()) break;
    batches.push_back(std::move(batch));
  }
  return batches;
}

void TrainConfig::validate() const {
  expects(batch_size >= 2 && batch_size % 2 == 0, "batch size must be an even number >= 2");
  expects(loss.margin > 0, "triplet margin must be positive");
  expects(adam.lr > 0, "learning rate must be positive");
  expects(thresholds.positive_radius_m < thresholds.negative_radius_m,
          "positive radius must be smaller than the negative radius");
  expects(augmentation.erase_probability >= 0 && augmentation.erase_probability <= 1,
          "erase probability must lie in [0, 1]");
  expects(augmentation.erase_area_min > 0 && augmentation.erase_area_min <= augmentation.erase_area_max &&
              augmentation.erase_area_max < 1,
          "invalid erase area range");
}

template <typename T>
Tensor<T> stack_scans(std::span<const PolarScan* const> scans) {
  expects(!scans.empty(), "stack_scans: no scans");
  const std::size_t A = scans.front()->angular_bins, R = scans.front()->radial_bins;
  Tensor<T> out(Shape{scans.size(), 1, A, R});
  T* dst = out.ptr();
  for (const PolarScan* s : scans) {
    expects(s->angular_bins == A && s->radial_bins == R, "stack_scans: scans differ in resolution");
    dst = std::copy(s->image.begin(), s->image.end(), dst);
  }
  return out;
}

EpochStats train_epoch(RadarLocModel<float>& model, const Traversal& data, const PlaceBatchSampler& sampler,
                       AdamState<float>& optimizer, const TrainConfig& config, std::mt19937_64& rng) {
  const auto start = std::chrono::steady_clock::now();
  model.set_mode(Mode::Train);
  EpochStats stats;
  double loss_sum = 0;
  std::size_t active = 0;
  for (const Batch& batch : sampler.epoch(rng)) {
    std::vector<PolarScan> augmented;
    std::vector<Pose> poses;
    augmented.reserve(batch.indices.size());
    for (std::size_t i : batch.indices) {
      augmented.push_back(augment(data.scans.at(i), config.augmentation, rng));
      poses.push_back(data.poses.at(i));
    }
    std::vector<const PolarScan*> ptrs;
    for (const auto& s : augmented) ptrs.push_back(&s);
    const Tensor<float> images = stack_scans<float>(ptrs);

    model.parameters().zero_grad();
    Tape<float> tape;
    TapeScope<float> scope(tape);
    const Tensor<float> descriptors = model.forward(images);
    const MiningResult mined =
        batch_hard_mine(descriptors, label_pairs(poses, poses, config.thresholds), batch.partner);
    stats.batches += 1;
    stats.skipped += mined.skipped;
    if (mined.triples.empty()) continue;

    Tensor<float> total;
    for (const Triple& t : mined.triples) {
      Tensor<float> l = triplet_loss(ops::select_row(descriptors, t.anchor), ops::select_row(descriptors, t.positive),
                                     ops::select_row(descriptors, t.negative), config.loss);
      if (l.item() > 0) ++active;
      total = total.defined() ? ops::add(total, l) : l;
    }
    Tensor<float> loss = ops::scale(total, 1.0f / static_cast<float>(mined.triples.size()));
    if (!std::isfinite(loss.item()))
      throw NumericalError("non-finite training loss in epoch batch " + std::to_string(stats.batches));
    backward(tape, loss);
    adam_step(model.parameters(), optimizer);
    model.enforce_constraints();
    loss_sum += loss.item();
    stats.triples += mined.triples.size();
  }
  stats.mean_loss = stats.batches ? loss_sum / static_cast<double>(stats.batches) : 0.0;
  stats.active_fraction = stats.triples ? static_cast<double>(active) / static_cast<double>(stats.triples) : 0.0;
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return stats;
}

std::vector<EpochStats> train(RadarLocModel<float>& model, const Traversal& data, const TrainConfig& config,
                              const std::function<void(const EpochStats&)>& on_epoch) {
  config.validate();
  expects(data.scans.size() == data.poses.size() && !data.scans.empty(), "train: empty or inconsistent traversal");
  const PlaceBatchSampler sampler(data.poses, config.batch_size, config.thresholds.positive_radius_m);
  AdamState<float> optimizer = AdamState<float>::init(model.parameters(), config.adam);
  std::mt19937_64 rng(derive_seed(config.seed, "train.batches"));
  std::vector<EpochStats> history;
  for (std::size_t e = 1; e <= config.epochs; ++e) {
    EpochStats stats = train_epoch(model, data, sampler, optimizer, config, rng);
    stats.epoch = e;
    history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  model.set_mode(Mode::Eval);
  return history;
}

template Tensor<float> triplet_loss<float>(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                           const TripletLossSpec&);
template Tensor<double> triplet_loss<double>(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                             const TripletLossSpec&);
template MiningResult batch_hard_mine<float>(const Tensor<float>&, const PairRelation&, std::span<const std::ptrdiff_t>);
template MiningResult batch_hard_mine<double>(const Tensor<double>&, const PairRelation&,
                                              std::span<const std::ptrdiff_t>);
template Tensor<float> stack_scans<float>(std::span<const PolarScan* const>);
template Tensor<double> stack_scans<double>(std::span<const PolarScan* const>);

}  // namespace ploc
