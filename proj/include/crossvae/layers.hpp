#pragma once

// Differentiable layer primitives. Every forward op has a matching *_backward
// that returns gradients for all of its inputs given the upstream gradient.
// Convolutions are stride 1 with zero same-padding and cross-correlation
// semantics; they are lowered to a GEMM over an im2col buffer.

#include "crossvae/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace crossvae {

// ---------------------------------------------------------------------------
// elementwise

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  return Tensor<S>(x.shape, x.values.cwiseMax(S(0)));
}

/// Subgradient at exactly 0 is 0.
template <typename S>
Tensor<S> relu_backward(const Tensor<S>& x, const Tensor<S>& dy) {
  require_shape("relu_backward", x.shape, dy.shape);
  return Tensor<S>(x.shape, (x.values.array() > S(0)).select(dy.values, S(0)));
}

template <typename S>
S sigmoid(S x) {
  if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
  const S e = std::exp(x);
  return e / (S(1) + e);
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  return Tensor<S>(x.shape, x.values.unaryExpr([](S v) { return sigmoid(v); }));
}

/// Takes the forward *output* y = sigmoid(x).
template <typename S>
Tensor<S> sigmoid_backward(const Tensor<S>& y, const Tensor<S>& dy) {
  require_shape("sigmoid_backward", y.shape, dy.shape);
  return Tensor<S>(y.shape, dy.values.cwiseProduct(y.values.cwiseProduct(
                                (Vec<S>::Ones(y.size()) - y.values))));
}

// ---------------------------------------------------------------------------
// dense

template <typename S>
struct DenseGrads {
  Tensor<S> input, weights, bias;
};

template <typename S>
Tensor<S> dense(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  if (w.rank() != 2 || x.rank() != 1 || w.dim(1) != x.dim(0)) {
    throw ShapeError("dense: weights " + shape_string(w.shape) + " incompatible with input " +
                     shape_string(x.shape));
  }
  require_shape("dense bias", {w.dim(0)}, b.shape);
  Tensor<S> y({w.dim(0)});
  y.values.noalias() = w.matrix() * x.values;
  y.values += b.values;
  return y;
}

template <typename S>
DenseGrads<S> dense_backward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& dy) {
  require_shape("dense_backward", {w.dim(0)}, dy.shape);
  DenseGrads<S> g{Tensor<S>(x.shape), Tensor<S>(w.shape), Tensor<S>(dy.shape, dy.values)};
  g.input.values.noalias() = w.matrix().transpose() * dy.values;
  g.weights.matrix().noalias() = dy.values * x.values.transpose();
  return g;
}

// ---------------------------------------------------------------------------
// 2-D convolution (3x3)

namespace detail {

template <typename S>
RowMat<S> im2col3x3(const S* x, Index channels, Index height, Index width) {
  RowMat<S> cols = RowMat<S>::Zero(channels * 9, height * width);
  for (Index c = 0; c < channels; ++c) {
    const S* plane = x + c * height * width;
    for (Index ky = 0; ky < 3; ++ky) {
      for (Index kx = 0; kx < 3; ++kx) {
        S* row = cols.row(c * 9 + ky * 3 + kx).data();
        for (Index y = 0; y < height; ++y) {
          const Index sy = y + ky - 1;
          if (sy < 0 || sy >= height) continue;
          const Index x0 = std::max<Index>(0, 1 - kx);
          const Index x1 = std::min<Index>(width, width + 1 - kx);
          for (Index xx = x0; xx < x1; ++xx) row[y * width + xx] = plane[sy * width + xx + kx - 1];
        }
      }
    }
  }
  return cols;
}

template <typename S>
void col2im3x3(const RowMat<S>& cols, Index channels, Index height, Index width, S* out) {
  for (Index c = 0; c < channels; ++c) {
    S* plane = out + c * height * width;
    for (Index ky = 0; ky < 3; ++ky) {
      for (Index kx = 0; kx < 3; ++kx) {
        const S* row = cols.row(c * 9 + ky * 3 + kx).data();
        for (Index y = 0; y < height; ++y) {
          const Index sy = y + ky - 1;
          if (sy < 0 || sy >= height) continue;
          const Index x0 = std::max<Index>(0, 1 - kx);
          const Index x1 = std::min<Index>(width, width + 1 - kx);
          for (Index xx = x0; xx < x1; ++xx) plane[sy * width + xx + kx - 1] += row[y * width + xx];
        }
      }
    }
  }
}

template <typename S>
RowMat<S> im2col1d(const S* x, Index channels, Index length, Index k) {
  const Index half = k / 2;
  RowMat<S> cols = RowMat<S>::Zero(channels * k, length);
  for (Index c = 0; c < channels; ++c) {
    for (Index j = 0; j < k; ++j) {
      S* row = cols.row(c * k + j).data();
      for (Index t = 0; t < length; ++t) {
        const Index s = t + j - half;
        if (s >= 0 && s < length) row[t] = x[c * length + s];
      }
    }
  }
  return cols;
}

template <typename S>
void col2im1d(const RowMat<S>& cols, Index channels, Index length, Index k, S* out) {
  const Index half = k / 2;
  for (Index c = 0; c < channels; ++c) {
    for (Index j = 0; j < k; ++j) {
      const S* row = cols.row(c * k + j).data();
      for (Index t = 0; t < length; ++t) {
        const Index s = t + j - half;
        if (s >= 0 && s < length) out[c * length + s] += row[t];
      }
    }
  }
}

template <typename S>
void add_channel_bias(Tensor<S>& y, const Tensor<S>& b) {
  y.matrix().colwise() += b.values;
}

}  // namespace detail

template <typename S>
struct ConvGrads {
  Tensor<S> input, kernels, bias;
};

inline void check_conv2d(const char* op, const Shape& x, const Shape& k, Index in_channels,
                         Index out_channels, const Shape& b) {
  if (x.size() != 3 || k.size() != 4 || k[2] != 3 || k[3] != 3 || x[0] != in_channels) {
    throw ShapeError(std::string(op) + ": kernels " + shape_string(k) +
                     " incompatible with input " + shape_string(x));
  }
  require_shape(op, {out_channels}, b);
}

/// input [C_in x H x W], kernels [C_out x C_in x 3 x 3], bias [C_out].
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& k, const Tensor<S>& b) {
  check_conv2d("conv2d", x.shape, k.shape, k.rank() == 4 ? k.dim(1) : -1,
               k.rank() == 4 ? k.dim(0) : -1, b.shape);
  const Index h = x.dim(1), w = x.dim(2);
  const RowMat<S> cols = detail::im2col3x3(x.data(), x.dim(0), h, w);
  Tensor<S> y({k.dim(0), h, w});
  y.matrix().noalias() = k.matrix() * cols;
  detail::add_channel_bias(y, b);
  return y;
}

template <typename S>
ConvGrads<S> conv2d_backward(const Tensor<S>& x, const Tensor<S>& k, const Tensor<S>& dy) {
  require_shape("conv2d_backward", {k.dim(0), x.dim(1), x.dim(2)}, dy.shape);
  const Index h = x.dim(1), w = x.dim(2);
  const RowMat<S> cols = detail::im2col3x3(x.data(), x.dim(0), h, w);
  ConvGrads<S> g{Tensor<S>(x.shape), Tensor<S>(k.shape), Tensor<S>({k.dim(0)})};
  g.kernels.matrix().noalias() = dy.matrix() * cols.transpose();
  g.bias.values = dy.matrix().rowwise().sum();
  const RowMat<S> dcols = k.matrix().transpose() * dy.matrix();
  detail::col2im3x3(dcols, x.dim(0), h, w, g.input.data());
  return g;
}

/// Transposed convolution, the adjoint of conv2d with the same kernels:
/// input [C_in x H x W], kernels [C_in x C_out x 3 x 3], bias [C_out].
template <typename S>
Tensor<S> deconv2d(const Tensor<S>& x, const Tensor<S>& k, const Tensor<S>& b) {
  check_conv2d("deconv2d", x.shape, k.shape, k.rank() == 4 ? k.dim(0) : -1,
               k.rank() == 4 ? k.dim(1) : -1, b.shape);
  const Index h = x.dim(1), w = x.dim(2), out_c = k.dim(1);
  const RowMat<S> cols = k.matrix().transpose() * x.matrix();
  Tensor<S> y({out_c, h, w});
  detail::col2im3x3(cols, out_c, h, w, y.data());
  detail::add_channel_bias(y, b);
  return y;
}

template <typename S>
ConvGrads<S> deconv2d_backward(const Tensor<S>& x, const Tensor<S>& k, const Tensor<S>& dy) {
  require_shape("deconv2d_backward", {k.dim(1), x.dim(1), x.dim(2)}, dy.shape);
  const Index h = x.dim(1), w = x.dim(2);
  const RowMat<S> dcols = detail::im2col3x3(dy.data(), k.dim(1), h, w);
  ConvGrads<S> g{Tensor<S>(x.shape), Tensor<S>(k.shape), Tensor<S>({k.dim(1)})};
  g.input.matrix().noalias() = k.matrix() * dcols;
  g.kernels.matrix().noalias() = x.matrix() * dcols.transpose();
  g.bias.values = dy.matrix().rowwise().sum();
  return g;
}

// ---------------------------------------------------------------------------
// 1-D convolution

/// input [C_in x T], kernels [C_out x C_in x k] with k odd, bias [C_out].
template <typename S>
Tensor<S> conv1d(const Tensor<S>& x, const Tensor<S>& k, const Tensor<S>& b) {
  if (x.rank() != 2 || k.rank() != 3 || k.dim(1) != x.dim(0) || k.dim(2) % 2 == 0) {
    throw ShapeError("conv1d: kernels " + shape_string(k.shape) + " incompatible with input " +
                     shape_string(x.shape));
  }
  require_shape("conv1d bias", {k.dim(0)}, b.shape);
  const RowMat<S> cols = detail::im2col1d(x.data(), x.dim(0), x.dim(1), k.dim(2));
  Tensor<S> y({k.dim(0), x.dim(1)});
  y.matrix().noalias() = k.matrix() * cols;
  detail::add_channel_bias(y, b);
  return y;
}

template <typename S>
ConvGrads<S> conv1d_backward(const Tensor<S>& x, const Tensor<S>& k, const Tensor<S>& dy) {
  require_shape("conv1d_backward", {k.dim(0), x.dim(1)}, dy.shape);
  const RowMat<S> cols = detail::im2col1d(x.data(), x.dim(0), x.dim(1), k.dim(2));
  ConvGrads<S> g{Tensor<S>(x.shape), Tensor<S>(k.shape), Tensor<S>({k.dim(0)})};
  g.kernels.matrix().noalias() = dy.matrix() * cols.transpose();
  g.bias.values = dy.matrix().rowwise().sum();
  const RowMat<S> dcols = k.matrix().transpose() * dy.matrix();
  detail::col2im1d(dcols, x.dim(0), x.dim(1), k.dim(2), g.input.data());
  return g;
}

// ---------------------------------------------------------------------------
// 2x2 max pooling and unpooling

/// Argmax position inside each 2x2 window, encoded as row * 2 + col.
/// Shape describes the pooled tensor.
struct PoolIndices {
  Shape shape;
  std::vector<std::uint8_t> positions;

  /// Index-free placement used when no encoder pass is available: every value
  /// goes to its window's top-left cell.
  static PoolIndices top_left(const Shape& pooled_shape) {
    return {pooled_shape, std::vector<std::uint8_t>(shape_size(pooled_shape), 0)};
  }

  friend bool operator==(const PoolIndices&, const PoolIndices&) = default;
};

template <typename S>
struct PoolResult {
  Tensor<S> values;
  PoolIndices indices;
};

/// Ties resolve to the first maximal position in row-major window order.
template <typename S>
PoolResult<S> maxpool2x2(const Tensor<S>& x) {
  if (x.rank() != 3 || x.dim(1) % 2 != 0 || x.dim(2) % 2 != 0) {
    throw ShapeError("maxpool2x2: spatial dims must be even, got " + shape_string(x.shape));
  }
  const Index c = x.dim(0), h = x.dim(1) / 2, w = x.dim(2) / 2;
  PoolResult<S> r{Tensor<S>({c, h, w}), PoolIndices{{c, h, w}, {}}};
  r.indices.positions.resize(c * h * w);
  for (Index ch = 0; ch < c; ++ch) {
    const S* plane = x.data() + ch * x.dim(1) * x.dim(2);
    for (Index i = 0; i < h; ++i) {
      for (Index j = 0; j < w; ++j) {
        std::uint8_t best = 0;
        S best_v = plane[(2 * i) * x.dim(2) + 2 * j];
        for (std::uint8_t p = 1; p < 4; ++p) {
          const S v = plane[(2 * i + p / 2) * x.dim(2) + 2 * j + p % 2];
          if (v > best_v) {
            best_v = v;
            best = p;
          }
        }
        const Index o = (ch * h + i) * w + j;
        r.values[o] = best_v;
        r.indices.positions[o] = best;
      }
    }
  }
  return r;
}

template <typename S>
Tensor<S> max_unpool2x2(const Tensor<S>& x, const PoolIndices& idx) {
  require_shape("max_unpool2x2 indices", x.shape, idx.shape);
  if (idx.positions.size() != static_cast<std::size_t>(x.size())) {
    throw ShapeError("max_unpool2x2: index count does not match input");
  }
  const Index c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor<S> y({c, 2 * h, 2 * w});
  for (Index ch = 0; ch < c; ++ch) {
    for (Index i = 0; i < h; ++i) {
      for (Index j = 0; j < w; ++j) {
        const Index o = (ch * h + i) * w + j;
        const std::uint8_t p = idx.positions[o];
        if (p > 3) {
          throw std::out_of_range("max_unpool2x2: window position " + std::to_string(p) +
                                  " out of range at element " + std::to_string(o));
        }
        y[(ch * 2 * h + 2 * i + p / 2) * 2 * w + 2 * j + p % 2] = x[o];
      }
    }
  }
  return y;
}

/// Gradient of maxpool2x2 routes each upstream value back to its argmax.
template <typename S>
Tensor<S> maxpool2x2_backward(const Tensor<S>& dy, const PoolIndices& idx) {
  return max_unpool2x2(dy, idx);
}

/// Gradient of max_unpool2x2 gathers from the recorded positions.
template <typename S>
Tensor<S> max_unpool2x2_backward(const Tensor<S>& dy, const PoolIndices& idx) {
  const Index c = idx.shape.at(0), h = idx.shape.at(1), w = idx.shape.at(2);
  require_shape("max_unpool2x2_backward", {c, 2 * h, 2 * w}, dy.shape);
  Tensor<S> dx(idx.shape);
  for (Index ch = 0; ch < c; ++ch) {
    for (Index i = 0; i < h; ++i) {
      for (Index j = 0; j < w; ++j) {
        const Index o = (ch * h + i) * w + j;
        const std::uint8_t p = idx.positions[o];
        dx[o] = dy[(ch * 2 * h + 2 * i + p / 2) * 2 * w + 2 * j + p % 2];
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// LSTM cell

/// Gate rows are stacked in the order input, forget, candidate, output.
template <typename S>
struct LstmParams {
  const Tensor<S>& input_weights;      // [4m x n]
  const Tensor<S>& recurrent_weights;  // [4m x m]
  const Tensor<S>& bias;               // [4m]
};

template <typename S>
struct LstmStep {
  Tensor<S> x, h_prev, c_prev;
  Vec<S> input_gate, forget_gate, candidate, output_gate, tanh_c;
  Tensor<S> h, c;
};

template <typename S>
struct LstmGrads {
  Tensor<S> input, h_prev, c_prev, input_weights, recurrent_weights, bias;
};

template <typename S>
LstmStep<S> lstm_cell(const Tensor<S>& x, const Tensor<S>& h, const Tensor<S>& c,
                      const LstmParams<S>& p) {
  const Index m = h.size();
  require_shape("lstm_cell input weights", {4 * m, x.size()}, p.input_weights.shape);
  require_shape("lstm_cell recurrent weights", {4 * m, m}, p.recurrent_weights.shape);
  require_shape("lstm_cell bias", {4 * m}, p.bias.shape);
  require_shape("lstm_cell cell state", h.shape, c.shape);
  Vec<S> a = p.bias.values;
  a.noalias() += p.input_weights.matrix() * x.values;
  a.noalias() += p.recurrent_weights.matrix() * h.values;

  const auto sig = [](S v) { return sigmoid(v); };
  LstmStep<S> s{x, h, c, {}, {}, {}, {}, {}, Tensor<S>({m}), Tensor<S>({m})};
  s.input_gate = a.segment(0, m).unaryExpr(sig);
  s.forget_gate = a.segment(m, m).unaryExpr(sig);
  s.candidate = a.segment(2 * m, m).array().tanh();
  s.output_gate = a.segment(3 * m, m).unaryExpr(sig);
  s.c.values = s.forget_gate.cwiseProduct(c.values) + s.input_gate.cwiseProduct(s.candidate);
  s.tanh_c = s.c.values.array().tanh();
  s.h.values = s.output_gate.cwiseProduct(s.tanh_c);
  return s;
}

/// dh and dc are the gradients flowing into this step's h' and c'.
template <typename S>
LstmGrads<S> lstm_cell_backward(const LstmStep<S>& s, const LstmParams<S>& p, const Tensor<S>& dh,
                                const Tensor<S>& dc) {
  const Index m = s.h.size();
  const auto& i = s.input_gate;
  const auto& f = s.forget_gate;
  const auto& g = s.candidate;
  const auto& o = s.output_gate;

  const Vec<S> ones = Vec<S>::Ones(m);
  const Vec<S> d_o = dh.values.cwiseProduct(s.tanh_c);
  const Vec<S> dc_total =
      dc.values + dh.values.cwiseProduct(o).cwiseProduct(ones - s.tanh_c.cwiseAbs2());

  Vec<S> da(4 * m);
  da.segment(0, m) = dc_total.cwiseProduct(g).cwiseProduct(i).cwiseProduct(ones - i);
  da.segment(m, m) = dc_total.cwiseProduct(s.c_prev.values).cwiseProduct(f).cwiseProduct(ones - f);
  da.segment(2 * m, m) = dc_total.cwiseProduct(i).cwiseProduct(ones - g.cwiseAbs2());
  da.segment(3 * m, m) = d_o.cwiseProduct(o).cwiseProduct(ones - o);

  LstmGrads<S> r{Tensor<S>(s.x.shape),           Tensor<S>({m}),
                 Tensor<S>({m}),                 Tensor<S>(p.input_weights.shape),
                 Tensor<S>(p.recurrent_weights.shape), Tensor<S>({4 * m}, da)};
  r.input.values.noalias() = p.input_weights.matrix().transpose() * da;
  r.h_prev.values.noalias() = p.recurrent_weights.matrix().transpose() * da;
  r.c_prev.values = dc_total.cwiseProduct(f);
  r.input_weights.matrix().noalias() = da * s.x.values.transpose();
  r.recurrent_weights.matrix().noalias() = da * s.h_prev.values.transpose();
  return r;
}

}  // namespace crossvae
