#include "polarloc/optim.hpp"

#include <cmath>

namespace ploc {

template <typename T>
Tensor<T>& ParameterStore<T>::add(std::string name, Tensor<T> tensor) {
  expects(!contains(name), "duplicate parameter name: " + name);
  entries_.emplace_back(std::move(name), std::move(tensor));
  return entries_.back().second;
}

template <typename T>
Tensor<T>& ParameterStore<T>::at(const std::string& name) {
  for (auto& [key, t] : entries_)
    if (key == name) return t;
  throw ContractViolation("unknown parameter: " + name);
}

template <typename T>
const Tensor<T>& ParameterStore<T>::at(const std::string& name) const {
  for (const auto& [key, t] : entries_)
    if (key == name) return t;
  throw ContractViolation("unknown parameter: " + name);
}

template <typename T>
bool ParameterStore<T>::contains(const std::string& name) const {
  for (const auto& entry : entries_)
    if (entry.first == name) return true;
  return false;
}

template <typename T>
std::size_t ParameterStore<T>::element_count() const {
  std::size_t total = 0;
  for (const auto& entry : entries_) total += entry.second.numel();
  return total;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& entry : entries_) entry.second.ensure_grad(), entry.second.zero_grad();
}

template <typename T>
AdamState<T> AdamState<T>::init(const ParameterStore<T>& params, AdamConfig config) {
  expects(config.lr > 0 && config.beta1 > 0 && config.beta1 < 1 && config.beta2 > 0 &&
              config.beta2 < 1 && config.eps > 0,
          "invalid Adam hyperparameters");
  AdamState state;
  state.config = config;
  for (const auto& [name, t] : params) {
    state.m.emplace_back(t.numel(), T(0));
    state.v.emplace_back(t.numel(), T(0));
  }
  return state;
}

template <typename T>
void adam_step(ParameterStore<T>& params, AdamState<T>& state) {
  expects(state.m.size() == params.size() && state.v.size() == params.size(),
          "adam_step: optimizer state does not match parameter store");
  const auto& c = state.config;
  state.step += 1;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  std::size_t k = 0;
  for (auto& [name, p] : params) {
    expects(p.has_grad(), "adam_step: parameter has no gradient: " + name);
    auto g = p.grad();
    auto w = p.data();
    auto& m = state.m[k];
    auto& v = state.v[k];
    expects(m.size() == w.size() && v.size() == w.size() && g.size() == w.size(),
            "adam_step: shape mismatch for parameter " + name);
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = static_cast<T>(c.beta1 * m[i] + (1.0 - c.beta1) * g[i]);
      v[i] = static_cast<T>(c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i]);
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      w[i] = static_cast<T>(w[i] - c.lr * m_hat / (std::sqrt(v_hat) + c.eps));
    }
    ++k;
  }
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(ParameterStore<float>&, AdamState<float>&);
template void adam_step<double>(ParameterStore<double>&, AdamState<double>&);

}  // namespace ploc
