#pragma once

// Loss terms of the cross-modal objective and their gradients.

#include "crossvae/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace crossvae {

inline constexpr double kOutputClip = 1e-7;
inline constexpr double kLogVarMin = -20.0;
inline constexpr double kLogVarMax = 20.0;

/// Bernoulli cross-entropy  -sum_i [x_i log y_i + (1 - x_i) log(1 - y_i)],
/// with y clipped to [clip, 1 - clip].
template <typename S>
S recon_loss(const Tensor<S>& x, const Tensor<S>& y, double clip = kOutputClip) {
  require_shape("recon_loss", x.shape, y.shape);
  const S lo = static_cast<S>(clip), hi = S(1) - static_cast<S>(clip);
  S total = 0;
  for (Index i = 0; i < x.size(); ++i) {
    const S yc = std::clamp(y[i], lo, hi);
    total -= x[i] * std::log(yc) + (S(1) - x[i]) * std::log(S(1) - yc);
  }
  return total;
}

/// Gradient of recon_loss with respect to the pre-sigmoid logits of y, scaled
/// by `weight`. Elements inside the clip band have zero gradient.
template <typename S>
Tensor<S> recon_loss_logit_grad(const Tensor<S>& x, const Tensor<S>& y, S weight,
                                double clip = kOutputClip) {
  require_shape("recon_loss_logit_grad", x.shape, y.shape);
  const S lo = static_cast<S>(clip), hi = S(1) - static_cast<S>(clip);
  Tensor<S> g(x.shape);
  for (Index i = 0; i < x.size(); ++i) {
    g[i] = (y[i] < lo || y[i] > hi) ? S(0) : weight * (y[i] - x[i]);
  }
  return g;
}

/// -1/2 sum_j (1 + log s2_j - mu_j^2 - s2_j)
template <typename S>
S kl_loss(const Tensor<S>& mean, const Tensor<S>& log_var) {
  require_shape("kl_loss", mean.shape, log_var.shape);
  S total = 0;
  for (Index j = 0; j < mean.size(); ++j) {
    total += S(1) + log_var[j] - mean[j] * mean[j] - std::exp(log_var[j]);
  }
  return S(-0.5) * total;
}

template <typename S>
struct KlGrads {
  Tensor<S> mean, log_var;
};

template <typename S>
KlGrads<S> kl_loss_backward(const Tensor<S>& mean, const Tensor<S>& log_var, S weight) {
  KlGrads<S> g{Tensor<S>(mean.shape, weight * mean.values), Tensor<S>(log_var.shape)};
  g.log_var.values =
      (weight * S(0.5)) * (log_var.values.array().exp() - S(1)).matrix();
  return g;
}

/// delta * 1/2 * ||z_t - z_b||^2
template <typename S>
S space_sharing_loss(const Tensor<S>& z_t, const Tensor<S>& z_b, S delta) {
  require_shape("space_sharing_loss", z_t.shape, z_b.shape);
  return delta * S(0.5) * (z_t.values - z_b.values).squaredNorm();
}

/// Gradient with respect to z_t; the gradient for z_b is its negation.
template <typename S>
Tensor<S> space_sharing_loss_grad(const Tensor<S>& z_t, const Tensor<S>& z_b, S delta) {
  require_shape("space_sharing_loss_grad", z_t.shape, z_b.shape);
  return Tensor<S>(z_t.shape, delta * (z_t.values - z_b.values));
}

}  // namespace crossvae
