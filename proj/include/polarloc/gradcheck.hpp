#pragma once

#include <functional>
#include <vector>

#include "polarloc/autodiff.hpp"

namespace ploc {

/// Compares taped gradients of a scalar-valued `forward` with central
/// differences of step `epsilon`, perturbing every element of every tensor in
/// `wrt` in place. Returns the largest
///   |analytic - numeric| / max(1, |analytic| + |numeric|).
/// `forward` must be a pure function of the tensors' current values.
///
/// With `max_per_tensor` > 0, only that many evenly spaced elements of each
/// larger tensor are perturbed.
template <typename T>
T gradcheck(const std::function<Tensor<T>()>& forward, std::vector<Tensor<T>> wrt, T epsilon,
            std::size_t max_per_tensor = 0);

/// Single-input convenience form.
template <typename T>
T gradcheck(const std::function<Tensor<T>(const Tensor<T>&)>& forward, Tensor<T> x, T epsilon);

}  // namespace ploc
