#include "polarloc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace ploc {

namespace {
template <typename T>
T evaluate(const std::function<Tensor<T>()>& forward) {
  NoGradScope<T> no_grad;
  Tensor<T> y = forward();
  expects(y.numel() == 1, "gradcheck: forward must return a scalar");
  const T value = y.item();
  if (!std::isfinite(value)) throw NumericalError("gradcheck: non-finite forward output");
  return value;
}
}  // namespace

template <typename T>
T gradcheck(const std::function<Tensor<T>()>& forward, std::vector<Tensor<T>> wrt, T epsilon,
            std::size_t max_per_tensor) {
  expects(epsilon > T(0), "gradcheck: epsilon must be positive");
  std::vector<bool> saved_flags;
  for (auto& t : wrt) {
    saved_flags.push_back(t.requires_grad());
    t.set_requires_grad(true);
    t.clear_grad();
  }

  Tape<T> tape;
  {
    TapeScope<T> scope(tape);
    Tensor<T> y = forward();
    expects(y.numel() == 1, "gradcheck: forward must return a scalar");
    if (!std::isfinite(y.item())) throw NumericalError("gradcheck: non-finite forward output");
    bool on_tape = false;
    for (const auto& node : tape.nodes()) on_tape = on_tape || node.output.same_as(y);
    // A forward that never touches `wrt` is constant: analytic gradient 0.
    if (on_tape) backward(tape, y);
  }

  T worst = 0;
  for (auto& t : wrt) {
    std::vector<T> analytic(t.numel(), T(0));
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    auto values = t.data();
    const std::size_t n = values.size();
    const std::size_t probes = max_per_tensor == 0 ? n : std::min(n, max_per_tensor);
    for (std::size_t k = 0; k < probes; ++k) {
      const std::size_t i = probes == n ? k : k * n / probes;
      const T original = values[i];
      values[i] = original + epsilon;
      const T plus = evaluate(forward);
      values[i] = original - epsilon;
      const T minus = evaluate(forward);
      values[i] = original;
      const T numeric = (plus - minus) / (T(2) * epsilon);
      const T err = std::abs(analytic[i] - numeric) /
                    std::max(T(1), std::abs(analytic[i]) + std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  for (std::size_t i = 0; i < wrt.size(); ++i) {
    wrt[i].clear_grad();
    wrt[i].set_requires_grad(saved_flags[i]);
  }
  return worst;
}

template <typename T>
T gradcheck(const std::function<Tensor<T>(const Tensor<T>&)>& forward, Tensor<T> x, T epsilon) {
  return gradcheck<T>(std::function<Tensor<T>()>([&]() { return forward(x); }), {x}, epsilon);
}

template float gradcheck<float>(const std::function<Tensor<float>()>&, std::vector<Tensor<float>>, float,
                                std::size_t);
template double gradcheck<double>(const std::function<Tensor<double>()>&, std::vector<Tensor<double>>, double,
                                  std::size_t);
template float gradcheck<float>(const std::function<Tensor<float>(const Tensor<float>&)>&, Tensor<float>,
                                float);
template double gradcheck<double>(const std::function<Tensor<double>(const Tensor<double>&)>&,
                                  Tensor<double>, double);

}  // namespace ploc
