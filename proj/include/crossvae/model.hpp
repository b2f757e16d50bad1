#pragma once

// Cross-modal VAE: a convolutional image VAE and a sequence VAE (1-D conv or
// LSTM) whose latent codes are tied together. Each latent code is decoded by
// both decoders, giving two intra-modal and two cross-modal outputs.
//
// Tensor layouts: images are [1 x N x N]; trajectories are [T x 2] with one
// (x, y) row per step.

#include "crossvae/layers.hpp"
#include "crossvae/losses.hpp"
#include "crossvae/rng.hpp"
#include "crossvae/stroke_data.hpp"
#include "crossvae/tensor.hpp"

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace crossvae {

enum class SeqEncoder { conv1d, lstm };

/// Where the image decoder's unpooling places values.
///   fixed:    always the (0,0) cell of each 2x2 window, for every decode.
///   recorded: the argmax positions from encoding the paired image; decodes
///             without an image (inference t->b) fall back to (0,0).
enum class ImageUnpool { fixed, recorded };

inline std::string to_string(ImageUnpool u) { return u == ImageUnpool::fixed ? "fixed" : "recorded"; }

inline ImageUnpool parse_image_unpool(const std::string& s) {
  if (s == "fixed") return ImageUnpool::fixed;
  if (s == "recorded") return ImageUnpool::recorded;
  throw std::invalid_argument("unknown unpool mode '" + s + "' (expected fixed or recorded)");
}

inline std::string to_string(SeqEncoder e) { return e == SeqEncoder::conv1d ? "conv" : "lstm"; }

inline SeqEncoder parse_seq_encoder(const std::string& s) {
  if (s == "conv" || s == "conv1d") return SeqEncoder::conv1d;
  if (s == "lstm") return SeqEncoder::lstm;
  throw std::invalid_argument("unknown sequence encoder '" + s + "' (expected conv or lstm)");
}

struct ModelConfig {
  int latent_dim = 32;
  int seq_len = kDefaultSeqLen;
  SeqEncoder seq_encoder = SeqEncoder::conv1d;
  int image_size = kBitmapSize;
  /// One conv + 2x2 pool stage per entry; image_size must be divisible by 2^stages.
  std::vector<int> image_channels{32, 64, 128, 256};
  int image_hidden = 256;
  std::vector<int> seq_channels{32, 64};
  int seq_kernel = 3;
  int seq_hidden = 256;
  int lstm_hidden = 64;
  double output_clip = kOutputClip;
  ImageUnpool image_unpool = ImageUnpool::fixed;

  void validate() const {
    if (latent_dim < 1) throw std::invalid_argument("latent_dim must be >= 1");
    if (seq_len < 2) throw std::invalid_argument("seq_len must be >= 2");
    if (image_channels.empty()) throw std::invalid_argument("image_channels must be non-empty");
    const int pooled = image_size >> image_channels.size();
    if (pooled < 1 || (pooled << image_channels.size()) != image_size) {
      throw std::invalid_argument("image_size " + std::to_string(image_size) +
                                  " not divisible by 2^" + std::to_string(image_channels.size()));
    }
    if (seq_channels.empty()) throw std::invalid_argument("seq_channels must be non-empty");
    if (seq_kernel < 1 || seq_kernel % 2 == 0) throw std::invalid_argument("seq_kernel must be odd");
    if (image_hidden < 1 || seq_hidden < 1 || lstm_hidden < 1) {
      throw std::invalid_argument("hidden sizes must be >= 1");
    }
    for (int c : image_channels) {
      if (c < 1) throw std::invalid_argument("image channel widths must be >= 1");
    }
    for (int c : seq_channels) {
      if (c < 1) throw std::invalid_argument("sequence channel widths must be >= 1");
    }
  }

  int pooled_size() const { return image_size >> image_channels.size(); }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LossWeights {
  double alpha = 0.5;     // KL, sequence posterior
  double beta = 0.5;      // KL, image posterior
  double gamma_tt = 0.4;  // sequence -> sequence
  double gamma_bb = 0.5;  // image -> image
  double gamma_tb = 0.4;  // sequence -> image
  double gamma_bt = 0.2;  // image -> sequence
  double delta = 1.0;     // space sharing

  void validate() const {
    for (double w : {alpha, beta, gamma_tt, gamma_bb, gamma_tb, gamma_bt, delta}) {
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw std::invalid_argument("loss weights must be finite and non-negative");
      }
    }
  }

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// Weighted loss terms; total is their sum in declaration order.
struct LossBreakdown {
  double kl_t = 0, kl_b = 0;
  double re_tt = 0, re_bb = 0, re_tb = 0, re_bt = 0;
  double ls = 0;
  double total = 0;

  static constexpr std::array<const char*, 7> kNames{"kl_t",  "kl_b",  "re_tt", "re_bb",
                                                     "re_tb", "re_bt", "ls"};
  std::array<double, 7> terms() const { return {kl_t, kl_b, re_tt, re_bb, re_tb, re_bt, ls}; }
  void sum_terms() { total = kl_t + kl_b + re_tt + re_bb + re_tb + re_bt + ls; }

  LossBreakdown& operator+=(const LossBreakdown& o) {
    kl_t += o.kl_t;
    kl_b += o.kl_b;
    re_tt += o.re_tt;
    re_bb += o.re_bb;
    re_tb += o.re_tb;
    re_bt += o.re_bt;
    ls += o.ls;
    total += o.total;
    return *this;
  }
  LossBreakdown scaled(double s) const {
    LossBreakdown r;
    r.kl_t = kl_t * s;
    r.kl_b = kl_b * s;
    r.re_tt = re_tt * s;
    r.re_bb = re_bb * s;
    r.re_tb = re_tb * s;
    r.re_bt = re_bt * s;
    r.ls = ls * s;
    r.total = total * s;
    return r;
  }
};

template <typename S>
struct LatentStats {
  Tensor<S> mean;
  Tensor<S> log_var;  // clamped to [-20, 20]
};

// Forward records ("tapes") keep every intermediate the backward pass needs.

template <typename S>
struct ImageEncoding {
  LatentStats<S> stats;
  std::vector<PoolIndices> indices;  // stage 0 (finest) first
  std::vector<Tensor<S>> stage_inputs, conv_out;
  Tensor<S> flat, hidden_pre, hidden, log_var_raw;
};

template <typename S>
struct ImageDecoding {
  Tensor<S> output, logits;
  Tensor<S> z, fc_pre;
  std::vector<Tensor<S>> unpooled, deconv_out;  // indexed by stage
  std::vector<PoolIndices> indices;
};

template <typename S>
struct SeqEncoding {
  LatentStats<S> stats;
  std::vector<Tensor<S>> conv_inputs, conv_out;  // conv variant
  std::vector<LstmStep<S>> steps;                // lstm variant
  Tensor<S> flat, hidden_pre, hidden, log_var_raw;
};

template <typename S>
struct SeqDecoding {
  Tensor<S> output, logits;  // [T x 2]
  Tensor<S> z, fc_pre;
  std::vector<Tensor<S>> conv_inputs, conv_out;  // conv variant, indexed by layer
  std::vector<LstmStep<S>> steps;                // lstm variant
};

template <typename S>
struct CrossOutputs {
  SeqEncoding<S> enc_t;
  ImageEncoding<S> enc_b;
  Tensor<S> eps_t, eps_b;
  Tensor<S> z_t, z_b;
  SeqDecoding<S> dec_tt, dec_bt;
  ImageDecoding<S> dec_bb, dec_tb;

  const Tensor<S>& y_tt() const { return dec_tt.output; }
  const Tensor<S>& y_bb() const { return dec_bb.output; }
  const Tensor<S>& y_tb() const { return dec_tb.output; }
  const Tensor<S>& y_bt() const { return dec_bt.output; }
  const LatentStats<S>& stats_t() const { return enc_t.stats; }
  const LatentStats<S>& stats_b() const { return enc_b.stats; }
};

template <typename S>
Tensor<S> to_tensor(const Bitmap& b) {
  Tensor<S> t({1, kBitmapSize, kBitmapSize});
  Eigen::Map<Eigen::Matrix<S, kBitmapSize, kBitmapSize, Eigen::RowMajor>>(t.data()) =
      b.pixels.cast<S>();
  return t;
}

template <typename S>
Tensor<S> to_tensor(const Trajectory& tr) {
  Tensor<S> t({tr.length(), 2});
  t.matrix() = tr.points.cast<S>();
  return t;
}

template <typename S>
Bitmap to_bitmap(const Tensor<S>& t) {
  require_shape("to_bitmap", {1, kBitmapSize, kBitmapSize}, t.shape);
  Bitmap b;
  b.pixels = Eigen::Map<const Eigen::Matrix<S, kBitmapSize, kBitmapSize, Eigen::RowMajor>>(t.data())
                 .template cast<double>();
  return b;
}

template <typename S>
Trajectory to_trajectory(const Tensor<S>& t) {
  if (t.rank() != 2 || t.dim(1) != 2) {
    throw ShapeError("to_trajectory: expected [T x 2], got " + shape_string(t.shape));
  }
  return Trajectory{t.matrix().template cast<double>()};
}

/// z = mean + exp(log_var / 2) * eps
template <typename S>
Tensor<S> reparameterize(const LatentStats<S>& stats, const Tensor<S>& eps) {
  require_shape("reparameterize", stats.mean.shape, eps.shape);
  return Tensor<S>(stats.mean.shape,
                   stats.mean.values +
                       (S(0.5) * stats.log_var.values.array()).exp().matrix().cwiseProduct(eps.values));
}

template <typename S>
Tensor<S> sample_noise(Index dim, Rng& rng) {
  Tensor<S> eps({dim});
  for (Index j = 0; j < dim; ++j) eps[j] = static_cast<S>(rng.normal());
  return eps;
}

template <typename S>
Tensor<S> reparameterize(const LatentStats<S>& stats, Rng& rng) {
  return reparameterize(stats, sample_noise<S>(stats.mean.size(), rng));
}

template <typename S>
class CrossVae {
 public:
  explicit CrossVae(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    image_chans_.push_back(1);
    for (int c : cfg_.image_channels) image_chans_.push_back(c);
    seq_chans_.push_back(2);
    for (int c : cfg_.seq_channels) seq_chans_.push_back(c);
    top_left_ = top_left_indices();
  }

  const ModelConfig& config() const { return cfg_; }
  Index latent_dim() const { return cfg_.latent_dim; }
  Index image_stages() const { return static_cast<Index>(cfg_.image_channels.size()); }
  Index seq_layers() const { return static_cast<Index>(cfg_.seq_channels.size()); }

  // -------------------------------------------------------------------------
  // parameters

  /// Registers every parameter (zero-valued) in a fixed order.
  ParamStore<S> make_params() const {
    ParamStore<S> p;
    const Index J = cfg_.latent_dim, L = image_stages(), s = cfg_.pooled_size();
    const Index img_flat = image_chans_[L] * s * s;
    for (Index k = 0; k < L; ++k) {
      p.add(name("img_enc.conv", k, ".w"), {image_chans_[k + 1], image_chans_[k], 3, 3});
      p.add(name("img_enc.conv", k, ".b"), {image_chans_[k + 1]});
    }
    p.add("img_enc.fc.w", {cfg_.image_hidden, img_flat});
    p.add("img_enc.fc.b", {cfg_.image_hidden});
    p.add("img_enc.mean.w", {J, cfg_.image_hidden});
    p.add("img_enc.mean.b", {J});
    p.add("img_enc.logvar.w", {J, cfg_.image_hidden});
    p.add("img_enc.logvar.b", {J});

    p.add("img_dec.fc.w", {img_flat, J});
    p.add("img_dec.fc.b", {img_flat});
    for (Index k = 0; k < L; ++k) {
      p.add(name("img_dec.deconv", k, ".w"), {image_chans_[k + 1], image_chans_[k], 3, 3});
      p.add(name("img_dec.deconv", k, ".b"), {image_chans_[k]});
    }

    const Index T = cfg_.seq_len, M = seq_layers(), K = cfg_.seq_kernel;
    if (cfg_.seq_encoder == SeqEncoder::conv1d) {
      for (Index j = 0; j < M; ++j) {
        p.add(name("seq_enc.conv", j, ".w"), {seq_chans_[j + 1], seq_chans_[j], K});
        p.add(name("seq_enc.conv", j, ".b"), {seq_chans_[j + 1]});
      }
      p.add("seq_enc.fc.w", {cfg_.seq_hidden, seq_chans_[M] * T});
    } else {
      const Index m = cfg_.lstm_hidden;
      p.add("seq_enc.lstm.wx", {4 * m, 2});
      p.add("seq_enc.lstm.wh", {4 * m, m});
      p.add("seq_enc.lstm.b", {4 * m});
      p.add("seq_enc.fc.w", {cfg_.seq_hidden, m});
    }
    p.add("seq_enc.fc.b", {cfg_.seq_hidden});
    p.add("seq_enc.mean.w", {J, cfg_.seq_hidden});
    p.add("seq_enc.mean.b", {J});
    p.add("seq_enc.logvar.w", {J, cfg_.seq_hidden});
    p.add("seq_enc.logvar.b", {J});

    if (cfg_.seq_encoder == SeqEncoder::conv1d) {
      p.add("seq_dec.fc.w", {seq_chans_[M] * T, J});
      p.add("seq_dec.fc.b", {seq_chans_[M] * T});
      for (Index j = 0; j < M; ++j) {
        p.add(name("seq_dec.conv", j, ".w"), {seq_chans_[j], seq_chans_[j + 1], K});
        p.add(name("seq_dec.conv", j, ".b"), {seq_chans_[j]});
      }
    } else {
      const Index m = cfg_.lstm_hidden;
      p.add("seq_dec.init.w", {2 * m, J});
      p.add("seq_dec.init.b", {2 * m});
      p.add("seq_dec.lstm.wx", {4 * m, J});
      p.add("seq_dec.lstm.wh", {4 * m, m});
      p.add("seq_dec.lstm.b", {4 * m});
      p.add("seq_dec.out.w", {2, m});
      p.add("seq_dec.out.b", {2});
    }
    return p;
  }

  /// Glorot-uniform weights, zero biases, forget-gate biases +1.
  void initialize(ParamStore<S>& params, Rng& rng) const {
    for (auto& e : params) {
      auto& v = e.value;
      const bool is_bias = e.name.ends_with(".b");
      if (is_bias) {
        v.values.setZero();
        if (e.name.find(".lstm.") != std::string::npos) {
          const Index m = v.size() / 4;
          v.values.segment(m, m).setConstant(S(1));
        }
        continue;
      }
      const Index receptive = v.rank() > 2 ? shape_size(Shape(v.shape.begin() + 2, v.shape.end())) : 1;
      double fan_in = static_cast<double>(v.dim(1) * receptive);
      double fan_out = static_cast<double>(v.dim(0) * receptive);
      if (e.name.find(".lstm.") != std::string::npos) fan_out /= 4.0;
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<S>(rng.uniform(-limit, limit));
    }
  }

  ParamStore<S> make_initialized_params(Rng& rng) const {
    ParamStore<S> p = make_params();
    initialize(p, rng);
    return p;
  }

  /// Unpooling placements used when decoding an image without an encoder pass.
  std::vector<PoolIndices> top_left_indices() const {
    std::vector<PoolIndices> out;
    Index size = cfg_.image_size;
    for (Index k = 0; k < image_stages(); ++k) {
      size /= 2;
      out.push_back(PoolIndices::top_left({image_chans_[k + 1], size, size}));
    }
    return out;
  }

  /// Indices the image decoder uses when the paired image was encoded as `e`.
  const std::vector<PoolIndices>& unpool_indices(const ImageEncoding<S>& e) const {
    return cfg_.image_unpool == ImageUnpool::recorded ? e.indices : top_left_;
  }

  // -------------------------------------------------------------------------
  // image encoder / decoder

  ImageEncoding<S> encode_image(const Tensor<S>& x_b, const ParamStore<S>& p) const {
    require_shape("encode_image", {1, cfg_.image_size, cfg_.image_size}, x_b.shape);
    ImageEncoding<S> e;
    Tensor<S> h = x_b;
    for (Index k = 0; k < image_stages(); ++k) {
      e.stage_inputs.push_back(h);
      e.conv_out.push_back(conv2d(h, w(p, "img_enc.conv", k, ".w"), w(p, "img_enc.conv", k, ".b")));
      auto pooled = maxpool2x2(relu(e.conv_out.back()));
      e.indices.push_back(std::move(pooled.indices));
      h = std::move(pooled.values);
    }
    e.flat = Tensor<S>({h.size()}, h.values);
    e.hidden_pre = dense(e.flat, p["img_enc.fc.w"].value, p["img_enc.fc.b"].value);
    e.hidden = relu(e.hidden_pre);
    heads(e.hidden, p, "img_enc", e.stats, e.log_var_raw);
    check_finite("encode_image", e.stats);
    return e;
  }

  void encode_image_backward(const ImageEncoding<S>& e, const Tensor<S>& d_mean,
                             const Tensor<S>& d_log_var, const ParamStore<S>& p,
                             GradBuffer<S>& g) const {
    Tensor<S> d_hidden = heads_backward(e.hidden, e.log_var_raw, d_mean, d_log_var, p, "img_enc", g);
    Tensor<S> d_pre = relu_backward(e.hidden_pre, d_hidden);
    auto fc = dense_backward(e.flat, p["img_enc.fc.w"].value, d_pre);
    accumulate(g, p, "img_enc.fc.w", fc.weights);
    accumulate(g, p, "img_enc.fc.b", fc.bias);

    const Index L = image_stages();
    Tensor<S> d_h(e.indices[L - 1].shape, fc.input.values);
    for (Index k = L - 1; k >= 0; --k) {
      Tensor<S> d_relu = maxpool2x2_backward(d_h, e.indices[k]);
      Tensor<S> d_conv = relu_backward(e.conv_out[k], d_relu);
      auto cg = conv2d_backward(e.stage_inputs[k], w(p, "img_enc.conv", k, ".w"), d_conv);
      accumulate(g, p, name("img_enc.conv", k, ".w"), cg.kernels);
      accumulate(g, p, name("img_enc.conv", k, ".b"), cg.bias);
      d_h = std::move(cg.input);
    }
  }

  /// `indices` come from encode_image on the paired image, or from
  /// top_left_indices() when there is no image.
  ImageDecoding<S> decode_image(const Tensor<S>& z, const ParamStore<S>& p,
                                const std::vector<PoolIndices>& indices) const {
    const Index L = image_stages(), s = cfg_.pooled_size();
    if (static_cast<Index>(indices.size()) != L) {
      throw std::invalid_argument("decode_image: expected " + std::to_string(L) +
                                  " sets of pooling indices, got " + std::to_string(indices.size()));
    }
    require_shape("decode_image latent", {cfg_.latent_dim}, z.shape);
    ImageDecoding<S> d;
    d.z = z;
    d.indices = indices;
    d.fc_pre = dense(z, p["img_dec.fc.w"].value, p["img_dec.fc.b"].value);
    Tensor<S> h({image_chans_[L], s, s}, relu(d.fc_pre).values);
    d.unpooled.resize(L);
    d.deconv_out.resize(L);
    for (Index k = L - 1; k >= 0; --k) {
      d.unpooled[k] = max_unpool2x2(h, indices[k]);
      d.deconv_out[k] =
          deconv2d(d.unpooled[k], w(p, "img_dec.deconv", k, ".w"), w(p, "img_dec.deconv", k, ".b"));
      if (k > 0) h = relu(d.deconv_out[k]);
    }
    d.logits = d.deconv_out[0];
    d.output = sigmoid(d.logits);
    return d;
  }

  /// Returns the gradient with respect to z.
  Tensor<S> decode_image_backward(const ImageDecoding<S>& d, const Tensor<S>& d_logits,
                                  const ParamStore<S>& p, GradBuffer<S>& g) const {
    const Index L = image_stages();
    Tensor<S> d_out = d_logits;
    Tensor<S> d_h;
    for (Index k = 0; k < L; ++k) {
      if (k > 0) d_out = relu_backward(d.deconv_out[k], d_h);
      auto dg = deconv2d_backward(d.unpooled[k], w(p, "img_dec.deconv", k, ".w"), d_out);
      accumulate(g, p, name("img_dec.deconv", k, ".w"), dg.kernels);
      accumulate(g, p, name("img_dec.deconv", k, ".b"), dg.bias);
      d_h = max_unpool2x2_backward(dg.input, d.indices[k]);
    }
    Tensor<S> d_pre = relu_backward(d.fc_pre, Tensor<S>(d.fc_pre.shape, d_h.values));
    auto fc = dense_backward(d.z, p["img_dec.fc.w"].value, d_pre);
    accumulate(g, p, "img_dec.fc.w", fc.weights);
    accumulate(g, p, "img_dec.fc.b", fc.bias);
    return fc.input;
  }

  // -------------------------------------------------------------------------
  // sequence encoder / decoder

  SeqEncoding<S> encode_seq(const Tensor<S>& x_t, const ParamStore<S>& p) const {
    require_shape("encode_seq", {cfg_.seq_len, 2}, x_t.shape);
    SeqEncoding<S> e;
    if (cfg_.seq_encoder == SeqEncoder::conv1d) {
      Tensor<S> h({2, cfg_.seq_len});
      h.matrix() = x_t.matrix().transpose();
      for (Index j = 0; j < seq_layers(); ++j) {
        e.conv_inputs.push_back(h);
        e.conv_out.push_back(conv1d(h, w(p, "seq_enc.conv", j, ".w"), w(p, "seq_enc.conv", j, ".b")));
        h = relu(e.conv_out.back());
      }
      e.flat = Tensor<S>({h.size()}, h.values);
    } else {
      const Index m = cfg_.lstm_hidden;
      const LstmParams<S> lp{p["seq_enc.lstm.wx"].value, p["seq_enc.lstm.wh"].value,
                             p["seq_enc.lstm.b"].value};
      Tensor<S> h({m}), c({m});
      for (Index t = 0; t < cfg_.seq_len; ++t) {
        Tensor<S> x({2}, x_t.matrix().row(t).transpose());
        e.steps.push_back(lstm_cell(x, h, c, lp));
        h = e.steps.back().h;
        c = e.steps.back().c;
      }
      e.flat = h;
    }
    e.hidden_pre = dense(e.flat, p["seq_enc.fc.w"].value, p["seq_enc.fc.b"].value);
    e.hidden = relu(e.hidden_pre);
    heads(e.hidden, p, "seq_enc", e.stats, e.log_var_raw);
    check_finite("encode_seq", e.stats);
    return e;
  }

  void encode_seq_backward(const SeqEncoding<S>& e, const Tensor<S>& d_mean,
                           const Tensor<S>& d_log_var, const ParamStore<S>& p,
                           GradBuffer<S>& g) const {
    Tensor<S> d_hidden = heads_backward(e.hidden, e.log_var_raw, d_mean, d_log_var, p, "seq_enc", g);
    Tensor<S> d_pre = relu_backward(e.hidden_pre, d_hidden);
    auto fc = dense_backward(e.flat, p["seq_enc.fc.w"].value, d_pre);
    accumulate(g, p, "seq_enc.fc.w", fc.weights);
    accumulate(g, p, "seq_enc.fc.b", fc.bias);

    if (cfg_.seq_encoder == SeqEncoder::conv1d) {
      const Index M = seq_layers();
      Tensor<S> d_h({seq_chans_[M], cfg_.seq_len}, fc.input.values);
      for (Index j = M - 1; j >= 0; --j) {
        Tensor<S> d_conv = relu_backward(e.conv_out[j], d_h);
        auto cg = conv1d_backward(e.conv_inputs[j], w(p, "seq_enc.conv", j, ".w"), d_conv);
        accumulate(g, p, name("seq_enc.conv", j, ".w"), cg.kernels);
        accumulate(g, p, name("seq_enc.conv", j, ".b"), cg.bias);
        d_h = std::move(cg.input);
      }
    } else {
      const Index m = cfg_.lstm_hidden;
      const LstmParams<S> lp{p["seq_enc.lstm.wx"].value, p["seq_enc.lstm.wh"].value,
                             p["seq_enc.lstm.b"].value};
      Tensor<S> dh = fc.input, dc({m});
      for (Index t = cfg_.seq_len - 1; t >= 0; --t) {
        auto lg = lstm_cell_backward(e.steps[t], lp, dh, dc);
        accumulate(g, p, "seq_enc.lstm.wx", lg.input_weights);
        accumulate(g, p, "seq_enc.lstm.wh", lg.recurrent_weights);
        accumulate(g, p, "seq_enc.lstm.b", lg.bias);
        dh = std::move(lg.h_prev);
        dc = std::move(lg.c_prev);
      }
    }
  }

  SeqDecoding<S> decode_seq(const Tensor<S>& z, const ParamStore<S>& p) const {
    require_shape("decode_seq latent", {cfg_.latent_dim}, z.shape);
    const Index T = cfg_.seq_len;
    SeqDecoding<S> d;
    d.z = z;
    d.logits = Tensor<S>({T, 2});
    if (cfg_.seq_encoder == SeqEncoder::conv1d) {
      const Index M = seq_layers();
      d.fc_pre = dense(z, p["seq_dec.fc.w"].value, p["seq_dec.fc.b"].value);
      Tensor<S> h({seq_chans_[M], T}, relu(d.fc_pre).values);
      d.conv_inputs.resize(M);
      d.conv_out.resize(M);
      for (Index j = M - 1; j >= 0; --j) {
        d.conv_inputs[j] = h;
        d.conv_out[j] = conv1d(h, w(p, "seq_dec.conv", j, ".w"), w(p, "seq_dec.conv", j, ".b"));
        if (j > 0) h = relu(d.conv_out[j]);
      }
      d.logits.matrix() = d.conv_out[0].matrix().transpose();
    } else {
      const Index m = cfg_.lstm_hidden;
      const LstmParams<S> lp{p["seq_dec.lstm.wx"].value, p["seq_dec.lstm.wh"].value,
                             p["seq_dec.lstm.b"].value};
      d.fc_pre = dense(z, p["seq_dec.init.w"].value, p["seq_dec.init.b"].value);
      Tensor<S> h({m}, d.fc_pre.values.head(m)), c({m}, d.fc_pre.values.tail(m));
      const auto& wo = p["seq_dec.out.w"].value;
      const auto& bo = p["seq_dec.out.b"].value;
      for (Index t = 0; t < T; ++t) {
        d.steps.push_back(lstm_cell(z, h, c, lp));
        h = d.steps.back().h;
        c = d.steps.back().c;
        d.logits.matrix().row(t) = dense(h, wo, bo).values.transpose();
      }
    }
    d.output = sigmoid(d.logits);
    return d;
  }

  Tensor<S> decode_seq_backward(const SeqDecoding<S>& d, const Tensor<S>& d_logits,
                                const ParamStore<S>& p, GradBuffer<S>& g) const {
    require_shape("decode_seq_backward", d.logits.shape, d_logits.shape);
    const Index T = cfg_.seq_len;
    if (cfg_.seq_encoder == SeqEncoder::conv1d) {
      const Index M = seq_layers();
      Tensor<S> d_out({2, T});
      d_out.matrix() = d_logits.matrix().transpose();
      Tensor<S> d_h;
      for (Index j = 0; j < M; ++j) {
        if (j > 0) d_out = relu_backward(d.conv_out[j], d_h);
        auto cg = conv1d_backward(d.conv_inputs[j], w(p, "seq_dec.conv", j, ".w"), d_out);
        accumulate(g, p, name("seq_dec.conv", j, ".w"), cg.kernels);
        accumulate(g, p, name("seq_dec.conv", j, ".b"), cg.bias);
        d_h = std::move(cg.input);
      }
      Tensor<S> d_pre = relu_backward(d.fc_pre, Tensor<S>(d.fc_pre.shape, d_h.values));
      auto fc = dense_backward(d.z, p["seq_dec.fc.w"].value, d_pre);
      accumulate(g, p, "seq_dec.fc.w", fc.weights);
      accumulate(g, p, "seq_dec.fc.b", fc.bias);
      return fc.input;
    }

    const Index m = cfg_.lstm_hidden;
    const LstmParams<S> lp{p["seq_dec.lstm.wx"].value, p["seq_dec.lstm.wh"].value,
                           p["seq_dec.lstm.b"].value};
    const auto& wo = p["seq_dec.out.w"].value;
    Tensor<S> dz({cfg_.latent_dim});
    Tensor<S> dh({m}), dc({m});
    Tensor<S> d_wo(wo.shape), d_bo({2});
    Tensor<S> d_wx(lp.input_weights.shape), d_wh(lp.recurrent_weights.shape), d_b(lp.bias.shape);
    for (Index t = T - 1; t >= 0; --t) {
      Tensor<S> dl({2}, d_logits.matrix().row(t).transpose());
      auto og = dense_backward(d.steps[t].h, wo, dl);
      d_wo.values += og.weights.values;
      d_bo.values += og.bias.values;
      dh.values += og.input.values;
      auto lg = lstm_cell_backward(d.steps[t], lp, dh, dc);
      d_wx.values += lg.input_weights.values;
      d_wh.values += lg.recurrent_weights.values;
      d_b.values += lg.bias.values;
      dz.values += lg.input.values;
      dh = std::move(lg.h_prev);
      dc = std::move(lg.c_prev);
    }
    accumulate(g, p, "seq_dec.out.w", d_wo);
    accumulate(g, p, "seq_dec.out.b", d_bo);
    accumulate(g, p, "seq_dec.lstm.wx", d_wx);
    accumulate(g, p, "seq_dec.lstm.wh", d_wh);
    accumulate(g, p, "seq_dec.lstm.b", d_b);
    Tensor<S> d_init({2 * m});
    d_init.values << dh.values, dc.values;
    auto ig = dense_backward(d.z, p["seq_dec.init.w"].value, d_init);
    accumulate(g, p, "seq_dec.init.w", ig.weights);
    accumulate(g, p, "seq_dec.init.b", ig.bias);
    dz.values += ig.input.values;
    return dz;
  }

  // -------------------------------------------------------------------------
  // full cross-modal pass

  /// One latent sample per modality, each decoded by both decoders. Both image
  /// decodes unpool with unpool_indices(enc_b).
  CrossOutputs<S> forward_cross(const Tensor<S>& x_t, const Tensor<S>& x_b, const ParamStore<S>& p,
                                const Tensor<S>& eps_t, const Tensor<S>& eps_b) const {
    CrossOutputs<S> o;
    o.enc_t = encode_seq(x_t, p);
    o.enc_b = encode_image(x_b, p);
    o.eps_t = eps_t;
    o.eps_b = eps_b;
    o.z_t = reparameterize(o.enc_t.stats, eps_t);
    o.z_b = reparameterize(o.enc_b.stats, eps_b);
    o.dec_tt = decode_seq(o.z_t, p);
    const auto& idx = unpool_indices(o.enc_b);
    o.dec_tb = decode_image(o.z_t, p, idx);
    o.dec_bb = decode_image(o.z_b, p, idx);
    o.dec_bt = decode_seq(o.z_b, p);
    return o;
  }

  /// Draws eps_t then eps_b from `rng`.
  CrossOutputs<S> forward_cross(const Tensor<S>& x_t, const Tensor<S>& x_b, const ParamStore<S>& p,
                                Rng& rng) const {
    Tensor<S> eps_t = sample_noise<S>(latent_dim(), rng);
    Tensor<S> eps_b = sample_noise<S>(latent_dim(), rng);
    return forward_cross(x_t, x_b, p, eps_t, eps_b);
  }

  LossBreakdown total_loss(const CrossOutputs<S>& o, const Tensor<S>& x_t, const Tensor<S>& x_b,
                           const LossWeights& lw) const {
    const double clip = cfg_.output_clip;
    LossBreakdown b;
    b.kl_t = lw.alpha * static_cast<double>(kl_loss(o.stats_t().mean, o.stats_t().log_var));
    b.kl_b = lw.beta * static_cast<double>(kl_loss(o.stats_b().mean, o.stats_b().log_var));
    b.re_tt = lw.gamma_tt * static_cast<double>(recon_loss(x_t, o.y_tt(), clip));
    b.re_bb = lw.gamma_bb * static_cast<double>(recon_loss(x_b, o.y_bb(), clip));
    b.re_tb = lw.gamma_tb * static_cast<double>(recon_loss(x_b, o.y_tb(), clip));
    b.re_bt = lw.gamma_bt * static_cast<double>(recon_loss(x_t, o.y_bt(), clip));
    b.ls = static_cast<double>(space_sharing_loss(o.z_t, o.z_b, static_cast<S>(lw.delta)));
    b.sum_terms();
    return b;
  }

  /// Accumulates d(total_loss)/d(params) into `g`.
  void backward(const CrossOutputs<S>& o, const Tensor<S>& x_t, const Tensor<S>& x_b,
                const LossWeights& lw, const ParamStore<S>& p, GradBuffer<S>& g) const {
    const double clip = cfg_.output_clip;
    const auto W = [](double v) { return static_cast<S>(v); };
    Tensor<S> dz_t = space_sharing_loss_grad(o.z_t, o.z_b, W(lw.delta));
    Tensor<S> dz_b(dz_t.shape, -dz_t.values);

    dz_t.values += decode_seq_backward(
        o.dec_tt, recon_loss_logit_grad(x_t, o.y_tt(), W(lw.gamma_tt), clip), p, g).values;
    dz_t.values += decode_image_backward(
        o.dec_tb, recon_loss_logit_grad(x_b, o.y_tb(), W(lw.gamma_tb), clip), p, g).values;
    dz_b.values += decode_image_backward(
        o.dec_bb, recon_loss_logit_grad(x_b, o.y_bb(), W(lw.gamma_bb), clip), p, g).values;
    dz_b.values += decode_seq_backward(
        o.dec_bt, recon_loss_logit_grad(x_t, o.y_bt(), W(lw.gamma_bt), clip), p, g).values;

    auto [dm_t, dv_t] = latent_backward(o.enc_t.stats, o.eps_t, dz_t, W(lw.alpha));
    auto [dm_b, dv_b] = latent_backward(o.enc_b.stats, o.eps_b, dz_b, W(lw.beta));
    encode_seq_backward(o.enc_t, dm_t, dv_t, p, g);
    encode_image_backward(o.enc_b, dm_b, dv_b, p, g);
  }

  LossBreakdown loss_and_grad(const Tensor<S>& x_t, const Tensor<S>& x_b, const ParamStore<S>& p,
                              const LossWeights& lw, const Tensor<S>& eps_t, const Tensor<S>& eps_b,
                              GradBuffer<S>& g, CrossOutputs<S>* keep = nullptr) const {
    CrossOutputs<S> o = forward_cross(x_t, x_b, p, eps_t, eps_b);
    LossBreakdown b = total_loss(o, x_t, x_b, lw);
    backward(o, x_t, x_b, lw, p, g);
    if (keep) *keep = std::move(o);
    return b;
  }

  // -------------------------------------------------------------------------
  // inference (posterior means, no sampling noise)

  Tensor<S> convert_t2b(const Tensor<S>& x_t, const ParamStore<S>& p) const {
    return decode_image(encode_seq(x_t, p).stats.mean, p, top_left_indices()).output;
  }
  Tensor<S> convert_t2t(const Tensor<S>& x_t, const ParamStore<S>& p) const {
    return decode_seq(encode_seq(x_t, p).stats.mean, p).output;
  }
  Tensor<S> convert_b2t(const Tensor<S>& x_b, const ParamStore<S>& p) const {
    return decode_seq(encode_image(x_b, p).stats.mean, p).output;
  }
  Tensor<S> convert_b2b(const Tensor<S>& x_b, const ParamStore<S>& p) const {
    auto e = encode_image(x_b, p);
    return decode_image(e.stats.mean, p, unpool_indices(e)).output;
  }

 private:
  static std::string name(const char* prefix, Index k, const char* suffix) {
    return std::string(prefix) + std::to_string(k) + suffix;
  }

  static const Tensor<S>& w(const ParamStore<S>& p, const char* prefix, Index k, const char* suffix) {
    return p[name(prefix, k, suffix)].value;
  }

  static void accumulate(GradBuffer<S>& g, const ParamStore<S>& p, const std::string& n,
                         const Tensor<S>& grad) {
    g[p.slot(n)] += grad.values;
  }

  static void check_finite(const char* where, const LatentStats<S>& s) {
    if (!s.mean.all_finite() || !s.log_var.all_finite()) {
      throw NumericError(std::string(where) + ": non-finite activation in latent statistics");
    }
  }

  static void heads(const Tensor<S>& hidden, const ParamStore<S>& p, const std::string& prefix,
                    LatentStats<S>& stats, Tensor<S>& log_var_raw) {
    stats.mean = dense(hidden, p[prefix + ".mean.w"].value, p[prefix + ".mean.b"].value);
    log_var_raw = dense(hidden, p[prefix + ".logvar.w"].value, p[prefix + ".logvar.b"].value);
    stats.log_var = Tensor<S>(log_var_raw.shape,
                              log_var_raw.values.cwiseMax(S(kLogVarMin)).cwiseMin(S(kLogVarMax)));
  }

  static Tensor<S> heads_backward(const Tensor<S>& hidden, const Tensor<S>& log_var_raw,
                                  const Tensor<S>& d_mean, const Tensor<S>& d_log_var,
                                  const ParamStore<S>& p, const std::string& prefix,
                                  GradBuffer<S>& g) {
    Tensor<S> d_raw(log_var_raw.shape);
    for (Index j = 0; j < d_raw.size(); ++j) {
      const S v = log_var_raw[j];
      d_raw[j] = (v >= S(kLogVarMin) && v <= S(kLogVarMax)) ? d_log_var[j] : S(0);
    }
    auto gm = dense_backward(hidden, p[prefix + ".mean.w"].value, d_mean);
    auto gv = dense_backward(hidden, p[prefix + ".logvar.w"].value, d_raw);
    accumulate(g, p, prefix + ".mean.w", gm.weights);
    accumulate(g, p, prefix + ".mean.b", gm.bias);
    accumulate(g, p, prefix + ".logvar.w", gv.weights);
    accumulate(g, p, prefix + ".logvar.b", gv.bias);
    return Tensor<S>(hidden.shape, gm.input.values + gv.input.values);
  }

  /// Gradients of (weighted KL + downstream through z) with respect to the
  /// posterior mean and clamped log-variance.
  static std::pair<Tensor<S>, Tensor<S>> latent_backward(const LatentStats<S>& s,
                                                         const Tensor<S>& eps, const Tensor<S>& dz,
                                                         S kl_weight) {
    auto kl = kl_loss_backward(s.mean, s.log_var, kl_weight);
    Tensor<S> dm(s.mean.shape, dz.values + kl.mean.values);
    Tensor<S> dv(s.log_var.shape);
    dv.values = dz.values.cwiseProduct(eps.values)
                    .cwiseProduct((S(0.5) * s.log_var.values.array()).exp().matrix()) *
                    S(0.5) +
                kl.log_var.values;
    return {std::move(dm), std::move(dv)};
  }

  ModelConfig cfg_;
  std::vector<Index> image_chans_;
  std::vector<Index> seq_chans_;
  std::vector<PoolIndices> top_left_;
};

}  // namespace crossvae
