#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "polarloc/buffer_pool.hpp"
#include "polarloc/error.hpp"

namespace ploc {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

namespace detail {
inline std::uint64_t next_tensor_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

/// Dense row-major array with optional gradient storage.
///
/// A Tensor is a handle: copies share the same storage, which is how the tape
/// keeps forward values alive for the backward pass. Use clone() for a deep
/// copy and detach() for a copy that does not participate in differentiation.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : s_(std::make_shared<Storage>()) {
    validate(shape);
    s_->data.assign(ploc::numel(shape), fill);
    s_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<T> data) : s_(std::make_shared<Storage>()) {
    validate(shape);
    expects(ploc::numel(shape) == data.size(),
            "tensor data length " + std::to_string(data.size()) + " does not match shape " +
                to_string(shape));
    s_->shape = std::move(shape);
    s_->data.assign(data.begin(), data.end());
  }

  /// Tensor whose contents are unspecified; for outputs that are fully
  /// overwritten before use.
  static Tensor uninitialized(Shape shape) {
    validate(shape);
    Tensor out;
    out.s_ = std::make_shared<Storage>();
    out.s_->data.resize(ploc::numel(shape));
    out.s_->shape = std::move(shape);
    return out;
  }

  static Tensor scalar(T value) { return Tensor(Shape{1}, std::vector<T>{value}); }

  bool defined() const { return static_cast<bool>(s_); }
  std::uint64_t id() const { return storage().id; }
  bool same_as(const Tensor& other) const { return s_ == other.s_; }

  const Shape& shape() const { return storage().shape; }
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const {
    if (axis >= rank()) throw ContractViolation("axis out of range for shape " + to_string(shape()));
    return shape()[axis];
  }
  std::size_t numel() const { return storage().data.size(); }

  std::span<T> data() { return storage().data; }
  std::span<const T> data() const { return storage().data; }
  T* ptr() { return storage().data.data(); }
  const T* ptr() const { return storage().data.data(); }
  T item() const {
    if (numel() != 1) throw ContractViolation("item() on a tensor of shape " + to_string(shape()));
    return storage().data[0];
  }

  bool requires_grad() const { return storage().requires_grad; }
  Tensor& set_requires_grad(bool flag) {
    storage().requires_grad = flag;
    return *this;
  }

  bool has_grad() const { return !storage().grad.empty(); }
  std::span<T> grad() {
    expects(has_grad(), "tensor has no gradient");
    return storage().grad;
  }
  std::span<const T> grad() const {
    expects(has_grad(), "tensor has no gradient");
    return storage().grad;
  }
  /// Allocates a zero gradient buffer on first use. Const because a Tensor is
  /// a handle: gradient accumulation never changes which storage it refers to.
  std::span<T> ensure_grad() const {
    auto& st = *s_;
    expects(defined(), "use of an undefined tensor");
    if (st.grad.empty()) st.grad.assign(st.data.size(), T(0));
    return st.grad;
  }
  void zero_grad() {
    auto& g = storage().grad;
    std::fill(g.begin(), g.end(), T(0));
  }
  void clear_grad() {
    auto& g = storage().grad;
    g.clear();
    g.shrink_to_fit();
  }

  Tensor clone() const {
    Tensor out = detach();
    out.set_requires_grad(requires_grad());
    return out;
  }
  Tensor detach() const {
    Tensor out;
    out.s_ = std::make_shared<Storage>();
    out.s_->shape = shape();
    out.s_->data = storage().data;
    return out;
  }

  /// Deep copy under a new shape with the same element count.
  Tensor reshaped(Shape new_shape) const {
    expects(ploc::numel(new_shape) == numel(), "reshaped: element count mismatch");
    Tensor out = detach();
    out.s_->shape = std::move(new_shape);
    return out;
  }

 private:
  struct Storage {
    Shape shape;
    PooledVector<T> data;
    PooledVector<T> grad;
    bool requires_grad = false;
    std::uint64_t id = detail::next_tensor_id();
  };

  static void validate(const Shape& shape) {
    expects(!shape.empty(), "tensor rank must be at least 1");
    for (auto extent : shape)
      if (extent == 0) throw ContractViolation("tensor extents must be >= 1, got " + to_string(shape));
  }

  Storage& storage() {
    expects(defined(), "use of an undefined tensor");
    return *s_;
  }
  const Storage& storage() const {
    expects(defined(), "use of an undefined tensor");
    return *s_;
  }

  std::shared_ptr<Storage> s_;
};

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& src) {
  std::vector<To> out(src.data().begin(), src.data().end());
  return Tensor<To>(src.shape(), std::move(out));
}

}  // namespace ploc
