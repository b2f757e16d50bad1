#pragma once

#include "crossvae/model.hpp"
#include "crossvae/stroke_data.hpp"

#include <limits>
#include <string>
#include <vector>

namespace crossvae {

double mean_squared_error(const Bitmap& x, const Bitmap& y);

/// 10 log10(max^2 / mse); +infinity when mse == 0.
double psnr_from_mse(double mse, double max_val = 1.0);
double psnr(const Bitmap& x, const Bitmap& y, double max_val = 1.0);

/// Global (single-window) SSIM on pixels rescaled to [0, 255], with
/// C1 = (0.01 * 255)^2 and C2 = (0.03 * 255)^2. Population statistics.
double ssim(const Bitmap& x, const Bitmap& y);

inline constexpr double kSsimC1 = (0.01 * 255.0) * (0.01 * 255.0);
inline constexpr double kSsimC2 = (0.03 * 255.0) * (0.03 * 255.0);

struct DtwResult {
  double cost = 0.0;         // summed Euclidean distance along the warping path
  std::size_t path_length = 0;
  double normalized() const { return cost / static_cast<double>(path_length); }
};

/// Boundary-anchored DTW with match/insert/delete steps and Euclidean point
/// cost. Among equal-cost paths the shortest is chosen.
DtwResult dtw_path(const PointMatrix& a, const PointMatrix& b);

/// DTW cost divided by the optimal warping-path length.
double dtw(const Trajectory& a, const Trajectory& b);

struct ClassAverage {
  std::string label;
  Bitmap bitmap;
  Trajectory trajectory;
};

/// Elementwise mean bitmap and pointwise mean trajectory per class, in
/// order of first appearance.
std::vector<ClassAverage> class_average_baseline(const Dataset& train);

struct ClassMetrics {
  std::string label;
  std::size_t n_items = 0;
  std::size_t psnr_exact_matches = 0;
  double psnr_mean = 0.0;
  double ssim_mean = 0.0;
  double dtw_mean = 0.0;
};

struct MetricsReport {
  std::string variant;
  std::size_t n_items = 0;
  /// Items whose inked image matched exactly (infinite PSNR); excluded from psnr_mean.
  std::size_t psnr_exact_matches = 0;
  double psnr_mean = 0.0;
  double ssim_mean = 0.0;
  double dtw_mean = 0.0;
  std::vector<ClassMetrics> per_class;

  /// Per-item values in dataset order, kept for auditing the means.
  std::vector<double> item_psnr, item_ssim, item_dtw;

  std::string to_json() const;
};

/// Per-item converted outputs compared against the ground truth.
struct ItemPrediction {
  std::string label;
  Bitmap inked;            // y_tb, compared to the item's bitmap
  Trajectory recovered;    // y_bt, compared to the item's trajectory
};

MetricsReport aggregate(const Dataset& test, const std::vector<ItemPrediction>& predictions,
                        const std::string& variant);

/// Inking (t->b, PSNR/SSIM) and stroke recovery (b->t, DTW) on every test
/// item, decoding from posterior means.
MetricsReport evaluate(const CrossVae<float>& model, const ParamStore<float>& params,
                       const Dataset& test);

/// Scores the per-class mean pattern against every test item of that class.
MetricsReport evaluate_baseline(const std::vector<ClassAverage>& baseline, const Dataset& test);

}  // namespace crossvae
