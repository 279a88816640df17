#pragma once

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "polarloc/tensor.hpp"

namespace ploc {

/// Ordered record of differentiable operations. Nodes are appended in
/// execution order, so the sequence is already topologically sorted.
template <typename T>
class Tape {
 public:
  struct Node {
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    std::function<void()> backward;
  };

  void record(std::vector<Tensor<T>> inputs, Tensor<T> output, std::function<void()> backward) {
    nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(backward)});
  }

  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  void clear() { nodes_.clear(); }

  /// Tape that ops currently record into on this thread, or nullptr.
  static Tape*& current();

 private:
  std::vector<Node> nodes_;
};

/// Makes `tape` the recording tape for the current thread while in scope.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : previous_(Tape<T>::current()) { Tape<T>::current() = &tape; }
  ~TapeScope() { Tape<T>::current() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// Suspends recording while in scope (inference, finite differences).
template <typename T>
class NoGradScope {
 public:
  NoGradScope() : previous_(Tape<T>::current()) { Tape<T>::current() = nullptr; }
  ~NoGradScope() { Tape<T>::current() = previous_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// Gradients of the leaf tensors (requires_grad, not produced by a recorded
/// op) keyed by Tensor::id().
template <typename T>
using GradientMap = std::unordered_map<std::uint64_t, std::vector<T>>;

/// Reverse pass from a scalar `loss`. Gradients accumulate into each
/// tensor's grad buffer, so multi-consumer tensors receive the sum.
template <typename T>
GradientMap<T> backward(Tape<T>& tape, Tensor<T>& loss);

namespace detail {

/// True when an op with these inputs should be recorded.
template <typename T>
bool recording(std::initializer_list<const Tensor<T>*> inputs) {
  if (Tape<T>::current() == nullptr) return false;
  for (const auto* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

template <typename T>
void record(std::vector<Tensor<T>> inputs, Tensor<T>& output, std::function<void()> rule) {
  output.set_requires_grad(true);
  Tape<T>::current()->record(std::move(inputs), output, std::move(rule));
}

}  // namespace detail

namespace ops {

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T value);
template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
/// Row `row` of a rank-2 tensor as a rank-1 tensor.
template <typename T> Tensor<T> select_row(const Tensor<T>& a, std::size_t row);
/// ||a - b||_2 of two equal-length tensors; the gradient at a == b is taken as 0.
template <typename T> Tensor<T> euclidean_distance(const Tensor<T>& a, const Tensor<T>& b);
/// Concatenation of NCHW tensors along the channel axis.
template <typename T> Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace ops

/// Throws NumericalError if any element is NaN or infinite.
template <typename T>
void check_finite(std::span<const T> values, const char* what);

}  // namespace ploc
