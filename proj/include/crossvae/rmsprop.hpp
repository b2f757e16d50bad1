#pragma once

#include "crossvae/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace crossvae {

struct RmspropConfig {
  double learning_rate = 1e-3;
  double rho = 0.9;
  double epsilon = 1e-8;
};

/// Running mean of squared gradients, one accumulator per parameter slot.
template <typename S>
struct RmspropState {
  RmspropConfig config;
  std::vector<std::string> names;
  std::vector<Tensor<S>> accumulators;

  static RmspropState for_params(const ParamStore<S>& params, RmspropConfig cfg = {}) {
    RmspropState st;
    st.config = cfg;
    for (const auto& e : params) {
      st.names.push_back(e.name);
      st.accumulators.emplace_back(e.value.shape);
    }
    return st;
  }

  friend bool operator==(const RmspropState&, const RmspropState&) = default;
};

inline bool operator==(const RmspropConfig& a, const RmspropConfig& b) {
  return a.learning_rate == b.learning_rate && a.rho == b.rho && a.epsilon == b.epsilon;
}

/// v <- rho v + (1 - rho) g^2;  theta <- theta - lr g / (sqrt(v) + eps)
template <typename S>
void rmsprop_step(ParamStore<S>& params, RmspropState<S>& state) {
  if (state.accumulators.size() != params.size()) {
    throw std::invalid_argument("rmsprop_step: optimizer tracks " +
                                std::to_string(state.accumulators.size()) +
                                " tensors, parameter store has " + std::to_string(params.size()));
  }
  const S lr = static_cast<S>(state.config.learning_rate);
  const S rho = static_cast<S>(state.config.rho);
  const S eps = static_cast<S>(state.config.epsilon);
  for (std::size_t s = 0; s < params.size(); ++s) {
    auto& e = params.entry(s);
    auto& v = state.accumulators[s];
    if (state.names[s] != e.name || v.shape != e.value.shape) {
      throw ShapeError("rmsprop_step: optimizer state for '" + state.names[s] + "' " +
                       shape_string(v.shape) + " does not match parameter '" + e.name + "' " +
                       shape_string(e.value.shape));
    }
    auto va = v.values.array();
    const auto g = e.grad.values.array();
    va = rho * va + (S(1) - rho) * g.square();
    e.value.values.array() -= lr * g / (va.sqrt() + eps);
  }
}

}  // namespace crossvae
