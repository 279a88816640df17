#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "polarloc/checkpoint.hpp"
#include "polarloc/layers.hpp"

namespace ploc {

/// Shape and width of the descriptor extractor.
struct NetworkConfig {
  std::size_t angular_bins = 384;
  std::size_t radial_bins = 128;
  /// Output channels of the 5x5 stem followed by the four downsampling blocks.
  std::vector<std::size_t> block_channels{32, 32, 64, 64, 128};
  std::size_t lateral_channels = 128;
  std::size_t descriptor_dim = 256;
  std::size_t stem_kernel = 5;
  EcaSpec eca;
  GemSpec gem;

  /// Throws ContractViolation on inconsistent settings.
  void validate() const;
  /// Total stride of the encoder (2 per downsampling block).
  std::size_t total_stride() const { return std::size_t{1} << (block_channels.size() - 1); }
};

template <typename T>
struct ConvBnRelu {
  Conv2d<T> conv;
  BatchNorm2d<T> bn;

  Tensor<T> forward(const Tensor<T>& x, Mode mode) { return ops::relu(bn.forward(conv.forward(x), mode)); }
};

/// Stride-2 conv, then two 3x3 convs whose output is added back onto the
/// stride-2 result, then channel attention.
template <typename T>
struct DownBlock {
  ConvBnRelu<T> down;
  ConvBnRelu<T> conv1;
  ConvBnRelu<T> conv2;
  Eca<T> attention;

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> s = down.forward(x, mode);
    Tensor<T> r = conv2.forward(conv1.forward(s, mode), mode);
    return attention.forward(ops::add(s, r));
  }
};

/// Rotation-invariant polar-scan descriptor network: FPN-style encoder with
/// circular angular padding, one transposed-conv upsampling step merged with
/// a lateral 1x1 projection by concatenation, and GeM pooling.
template <typename T>
class RadarLocModel {
 public:
  struct Output {
    Tensor<T> feature_map;  // (N, descriptor_dim, A/8, R/8)
    Tensor<T> descriptor;   // (N, descriptor_dim)
  };

  /// Deterministic initialization from `seed`.
  static RadarLocModel build(const NetworkConfig& config, std::uint64_t seed);
  /// Rebuilds a model from checkpointed tensors.
  static RadarLocModel from_state(const NetworkConfig& config, const NamedTensors& state);

  RadarLocModel(RadarLocModel&&) noexcept = default;
  RadarLocModel& operator=(RadarLocModel&&) noexcept = default;
  RadarLocModel(const RadarLocModel&) = delete;
  RadarLocModel& operator=(const RadarLocModel&) = delete;

  /// batch is (N, 1, angular_bins, radial_bins).
  Output forward_features(const Tensor<T>& batch);
  Tensor<T> forward(const Tensor<T>& batch) { return forward_features(batch).descriptor; }

  void set_mode(Mode mode) { mode_ = mode; }
  Mode mode() const { return mode_; }
  const NetworkConfig& config() const { return config_; }

  ParameterStore<T>& parameters() { return params_; }
  const ParameterStore<T>& parameters() const { return params_; }
  const ParameterStore<T>& buffers() const { return buffers_; }

  /// Keeps constrained parameters (GeM p) inside their valid range.
  void enforce_constraints() { gem_.clamp_p(); }

  /// Parameters followed by buffers, converted to float32.
  NamedTensors state() const;
  void load_state(const NamedTensors& state);

 private:
  RadarLocModel() = default;
  void register_all();

  NetworkConfig config_;
  Mode mode_ = Mode::Train;
  ConvBnRelu<T> stem_;
  std::vector<DownBlock<T>> blocks_;
  Conv2d<T> lateral_skip_;  // on the second-to-last block output
  Conv2d<T> lateral_top_;   // on the last block output, before upsampling
  TransposedConv2d<T> upsample_;
  Gem<T> gem_;
  ParameterStore<T> params_;
  ParameterStore<T> buffers_;
};

/// Writes `<path>` (PLOC checkpoint) and `<path>.json` (network config).
void save_model(const std::filesystem::path& path, const RadarLocModel<float>& model);
RadarLocModel<float> load_model(const std::filesystem::path& path);

}  // namespace ploc
