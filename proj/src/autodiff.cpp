#include "polarloc/autodiff.hpp"

#include <cmath>
#include <string>
#include <unordered_set>

namespace ploc {

template <typename T>
Tape<T>*& Tape<T>::current() {
  thread_local Tape<T>* active = nullptr;
  return active;
}

template <typename T>
void check_finite(std::span<const T> values, const char* what) {
  for (T v : values)
    if (!std::isfinite(v)) throw NumericalError(std::string("non-finite value in ") + what);
}

template <typename T>
GradientMap<T> backward(Tape<T>& tape, Tensor<T>& loss) {
  expects(loss.numel() == 1, "backward: loss must be a scalar, got shape " + to_string(loss.shape()));
  const auto& nodes = tape.nodes();
  std::size_t last = nodes.size();
  for (std::size_t i = nodes.size(); i-- > 0;) {
    if (nodes[i].output.same_as(loss)) {
      last = i;
      break;
    }
  }
  expects(last < nodes.size(), "backward: loss tensor was not recorded on this tape");

  loss.ensure_grad()[0] += T(1);
  for (std::size_t i = last + 1; i-- > 0;) {
    const auto& node = nodes[i];
    if (!node.output.has_grad()) continue;
    node.backward();
  }

  std::unordered_set<std::uint64_t> produced;
  for (const auto& node : nodes) produced.insert(node.output.id());
  GradientMap<T> leaves;
  for (const auto& node : nodes) {
    for (const auto& in : node.inputs) {
      if (!in.requires_grad() || produced.count(in.id()) || leaves.count(in.id())) continue;
      if (!in.has_grad()) continue;
      auto g = in.grad();
      leaves.emplace(in.id(), std::vector<T>(g.begin(), g.end()));
    }
  }
  return leaves;
}

namespace ops {

namespace {
template <typename T>
void same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  expects(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                                      " vs " + to_string(b.shape()));
}
}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  same_shape(a, b, "add");
  auto out = Tensor<T>::uninitialized(a.shape());
  auto o = out.data();
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  if (detail::recording({&a, &b})) {
    detail::record<T>({a, b}, out, [a, b, out]() mutable {
      auto g = out.grad();
      for (const Tensor<T>* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto gt = t->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  same_shape(a, b, "sub");
  auto out = Tensor<T>::uninitialized(a.shape());
  auto o = out.data();
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  if (detail::recording({&a, &b})) {
    detail::record<T>({a, b}, out, [a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  same_shape(a, b, "mul");
  auto out = Tensor<T>::uninitialized(a.shape());
  auto o = out.data();
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  if (detail::recording({&a, &b})) {
    detail::record<T>({a, b}, out, [a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.ensure_grad();
        auto y = b.data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
      }
      if (b.requires_grad()) {
        auto gb = b.ensure_grad();
        auto x = a.data();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  auto out = Tensor<T>::uninitialized(a.shape());
  auto o = out.data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * factor;
  if (detail::recording({&a})) {
    detail::record<T>({a}, out, [a, out, factor]() mutable {
      auto g = out.grad();
      auto ga = a.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    });
  }
  return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value) {
  auto out = Tensor<T>::uninitialized(a.shape());
  auto o = out.data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + value;
  if (detail::recording({&a})) {
    detail::record<T>({a}, out, [a, out]() mutable {
      auto g = out.grad();
      auto ga = a.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = 0;
  for (T v : a.data()) total += v;
  auto out = Tensor<T>::scalar(total);
  if (detail::recording({&a})) {
    detail::record<T>({a}, out, [a, out]() mutable {
      const T g = out.grad()[0];
      for (auto& v : a.ensure_grad()) v += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  auto out = Tensor<T>::uninitialized(a.shape());
  auto o = out.data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] > T(0) ? x[i] : T(0);
  if (detail::recording({&a})) {
    detail::record<T>({a}, out, [a, out]() mutable {
      auto g = out.grad();
      auto y = out.data();
      auto ga = a.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += y[i] > T(0) ? g[i] : T(0);
    });
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  auto out = Tensor<T>::uninitialized(a.shape());
  auto o = out.data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = T(1) / (T(1) + std::exp(-x[i]));
  if (detail::recording({&a})) {
    detail::record<T>({a}, out, [a, out]() mutable {
      auto g = out.grad();
      auto y = out.data();
      auto ga = a.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (T(1) - y[i]);
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  Tensor<T> out = a.reshaped(std::move(shape));
  if (detail::recording({&a})) {
    detail::record<T>({a}, out, [a, out]() mutable {
      auto g = out.grad();
      auto ga = a.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> select_row(const Tensor<T>& a, std::size_t row) {
  expects(a.rank() == 2, "select_row: expected a rank-2 tensor, got " + to_string(a.shape()));
  expects(row < a.dim(0), "select_row: row index out of range");
  const std::size_t cols = a.dim(1);
  auto src = a.data().subspan(row * cols, cols);
  Tensor<T> out(Shape{cols}, std::vector<T>(src.begin(), src.end()));
  if (detail::recording({&a})) {
    detail::record<T>({a}, out, [a, out, row, cols]() mutable {
      auto g = out.grad();
      auto ga = a.ensure_grad().subspan(row * cols, cols);
      for (std::size_t i = 0; i < cols; ++i) ga[i] += g[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> euclidean_distance(const Tensor<T>& a, const Tensor<T>& b) {
  expects(a.numel() == b.numel(), "euclidean_distance: dimension mismatch " + to_string(a.shape()) +
                                      " vs " + to_string(b.shape()));
  auto x = a.data(), y = b.data();
  T sq = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sq += (x[i] - y[i]) * (x[i] - y[i]);
  const T dist = std::sqrt(sq);
  auto out = Tensor<T>::scalar(dist);
  if (detail::recording({&a, &b})) {
    detail::record<T>({a, b}, out, [a, b, out, dist]() mutable {
      if (dist == T(0)) return;
      const T g = out.grad()[0] / dist;
      auto x = a.data(), y = b.data();
      if (a.requires_grad()) {
        auto ga = a.ensure_grad();
        for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g * (x[i] - y[i]);
      }
      if (b.requires_grad()) {
        auto gb = b.ensure_grad();
        for (std::size_t i = 0; i < x.size(); ++i) gb[i] -= g * (x[i] - y[i]);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  expects(a.rank() == 4 && b.rank() == 4, "concat_channels: expected NCHW tensors");
  expects(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
          "concat_channels: batch/spatial mismatch " + to_string(a.shape()) + " vs " +
              to_string(b.shape()));
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  auto out = Tensor<T>::uninitialized(Shape{n, ca + cb, a.dim(2), a.dim(3)});
  T* o = out.ptr();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.ptr() + i * ca * hw, ca * hw, o + i * (ca + cb) * hw);
    std::copy_n(b.ptr() + i * cb * hw, cb * hw, o + i * (ca + cb) * hw + ca * hw);
  }
  if (detail::recording({&a, &b})) {
    detail::record<T>({a, b}, out, [a, b, out, n, ca, cb, hw]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < ca * hw; ++j) ga[i * ca * hw + j] += g[i * (ca + cb) * hw + j];
      }
      if (b.requires_grad()) {
        auto gb = b.ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < cb * hw; ++j)
            gb[i * cb * hw + j] += g[i * (ca + cb) * hw + ca * hw + j];
      }
    });
  }
  return out;
}

}  // namespace ops

#define PLOC_INSTANTIATE(T)                                                               \
  template class Tape<T>;                                                                 \
  template GradientMap<T> backward<T>(Tape<T>&, Tensor<T>&);                              \
  template void check_finite<T>(std::span<const T>, const char*);                         \
  template Tensor<T> ops::add<T>(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> ops::sub<T>(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> ops::mul<T>(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> ops::scale<T>(const Tensor<T>&, T);                                  \
  template Tensor<T> ops::add_scalar<T>(const Tensor<T>&, T);                             \
  template Tensor<T> ops::sum<T>(const Tensor<T>&);                                       \
  template Tensor<T> ops::mean<T>(const Tensor<T>&);                                      \
  template Tensor<T> ops::relu<T>(const Tensor<T>&);                                      \
  template Tensor<T> ops::sigmoid<T>(const Tensor<T>&);                                   \
  template Tensor<T> ops::reshape<T>(const Tensor<T>&, Shape);                            \
  template Tensor<T> ops::select_row<T>(const Tensor<T>&, std::size_t);                   \
  template Tensor<T> ops::euclidean_distance<T>(const Tensor<T>&, const Tensor<T>&);      \
  template Tensor<T> ops::concat_channels<T>(const Tensor<T>&, const Tensor<T>&);

PLOC_INSTANTIATE(float)
PLOC_INSTANTIATE(double)
#undef PLOC_INSTANTIATE

}  // namespace ploc
