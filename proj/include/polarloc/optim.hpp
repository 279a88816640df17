#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "polarloc/tensor.hpp"

namespace ploc {

/// Ordered collection of named tensors. Used both for trainable parameters
/// and for non-trainable buffers such as batch-norm running statistics.
template <typename T>
class ParameterStore {
 public:
  using Entry = std::pair<std::string, Tensor<T>>;

  Tensor<T>& add(std::string name, Tensor<T> tensor);
  Tensor<T>& at(const std::string& name);
  const Tensor<T>& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  /// Total number of scalar elements.
  std::size_t element_count() const;
  void zero_grad();

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<Entry> entries_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  /// Zero moments sized to `params`.
  static AdamState init(const ParameterStore<T>& params, AdamConfig config = {});
};

/// One bias-corrected Adam update of every parameter from its grad buffer.
/// A parameter without a gradient buffer is a contract violation.
template <typename T>
void adam_step(ParameterStore<T>& params, AdamState<T>& state);

}  // namespace ploc
