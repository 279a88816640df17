#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "polarloc/autodiff.hpp"
#include "polarloc/optim.hpp"

// Differentiable layers over NCHW tensors where H is the angular (azimuth)
// axis of a polar scan and W the radial (range) axis. Every convolution
// wraps around the angular axis and zero-pads the radial axis.
namespace ploc {

enum class Mode { Train, Eval };

struct Conv2dSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;

  /// Odd kernels for stride 1, kernel == stride otherwise.
  void validate() const;
  std::size_t pad_h() const { return stride_h == 1 ? (kernel_h - 1) / 2 : 0; }
  std::size_t pad_w() const { return stride_w == 1 ? (kernel_w - 1) / 2 : 0; }
};

struct EcaSpec {
  std::size_t kernel_size = 3;
};

struct GemSpec {
  double initial_p = 3.0;
  double eps = 1e-6;
  /// Lower bound applied to p after each optimizer step.
  double min_p = 1e-3;
};

namespace ops {

/// weight (out, in, kh, kw), bias (out). "Same" output extent for stride 1;
/// extent / stride for kernel == stride.
template <typename T>
Tensor<T> conv2d_circular(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                          std::size_t stride_h, std::size_t stride_w);

/// Adjoint of conv2d_circular with kernel == stride. weight (in, out, kh, kw)
/// so that a strided conv and this op can share one weight tensor.
template <typename T>
Tensor<T> transposed_conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                            std::size_t stride_h, std::size_t stride_w);

/// Per-channel normalization over (N, H, W). Train mode also updates the
/// running statistics in place (unbiased variance, exponential average).
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, Mode mode, T momentum, T eps);

/// (mean over H*W of max(x, eps)^p)^(1/p) per channel; p is a 1-element tensor.
template <typename T>
Tensor<T> gem_pool(const Tensor<T>& x, const Tensor<T>& p, T eps);

/// Efficient channel attention: global average pool, circular 1-D conv over
/// channels, sigmoid, multiplicative channel gate.
template <typename T>
Tensor<T> eca(const Tensor<T>& x, const Tensor<T>& weight);

}  // namespace ops

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const Conv2dSpec& spec, std::mt19937_64& rng);

  Tensor<T> forward(const Tensor<T>& x) const;
  void register_parameters(ParameterStore<T>& params, const std::string& prefix);
  const Conv2dSpec& spec() const { return spec_; }

  Tensor<T> weight;
  Tensor<T> bias;

 private:
  Conv2dSpec spec_;
};

template <typename T>
class TransposedConv2d {
 public:
  TransposedConv2d() = default;
  TransposedConv2d(const Conv2dSpec& spec, std::mt19937_64& rng);

  Tensor<T> forward(const Tensor<T>& x) const;
  void register_parameters(ParameterStore<T>& params, const std::string& prefix);
  const Conv2dSpec& spec() const { return spec_; }

  Tensor<T> weight;
  Tensor<T> bias;

 private:
  Conv2dSpec spec_;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(std::size_t channels, T momentum = T(0.1), T eps = T(1e-5));

  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  void register_parameters(ParameterStore<T>& params, ParameterStore<T>& buffers,
                           const std::string& prefix);

  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;

 private:
  T momentum_ = T(0.1);
  T eps_ = T(1e-5);
};

template <typename T>
class Eca {
 public:
  Eca() = default;
  Eca(const EcaSpec& spec, std::mt19937_64& rng);

  Tensor<T> forward(const Tensor<T>& x) const { return ops::eca(x, weight); }
  void register_parameters(ParameterStore<T>& params, const std::string& prefix);

  Tensor<T> weight;
};

template <typename T>
class Gem {
 public:
  Gem() = default;
  explicit Gem(const GemSpec& spec);

  Tensor<T> forward(const Tensor<T>& x) const { return ops::gem_pool(x, p, static_cast<T>(spec_.eps)); }
  void register_parameters(ParameterStore<T>& params, const std::string& prefix);
  void clamp_p();

  Tensor<T> p;

 private:
  GemSpec spec_;
};

}  // namespace ploc
