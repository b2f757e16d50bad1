#pragma once

// Independent references for the evaluation metrics: DTW by enumerating every
// monotone alignment, SSIM from hand-rolled moment sums.

#include "crossvae/stroke_data.hpp"

#include <cmath>
#include <cstddef>
#include <functional>

namespace crossvae::oracle {

struct Alignment {
  double cost = 0.0;
  std::size_t length = 0;
};

/// Walks every path from (0,0) to (n-1,m-1) made of (1,0), (0,1) and (1,1)
/// steps. Returns the minimum (cost, length) pair, compared lexicographically.
inline Alignment brute_force_dtw(const PointMatrix& a, const PointMatrix& b) {
  const long n = a.rows(), m = b.rows();
  const auto dist = [&](long i, long j) {
    const double dx = a(i, 0) - b(j, 0), dy = a(i, 1) - b(j, 1);
    return std::sqrt(dx * dx + dy * dy);
  };
  Alignment best{INFINITY, 0};
  std::function<void(long, long, double, std::size_t)> walk = [&](long i, long j, double cost,
                                                                 std::size_t len) {
    if (i == n - 1 && j == m - 1) {
      if (cost < best.cost || (cost == best.cost && len < best.length)) best = {cost, len};
      return;
    }
    if (i + 1 < n && j + 1 < m) walk(i + 1, j + 1, cost + dist(i + 1, j + 1), len + 1);
    if (i + 1 < n) walk(i + 1, j, cost + dist(i + 1, j), len + 1);
    if (j + 1 < m) walk(i, j + 1, cost + dist(i, j + 1), len + 1);
  };
  walk(0, 0, dist(0, 0), 1);
  return best;
}

inline double brute_force_dtw_normalized(const PointMatrix& a, const PointMatrix& b) {
  const Alignment r = brute_force_dtw(a, b);
  return r.cost / static_cast<double>(r.length);
}

/// Global SSIM from explicit sums over the 255-scaled pixels.
inline double ssim_by_hand(const Bitmap& x, const Bitmap& y) {
  const double c1 = (0.01 * 255) * (0.01 * 255), c2 = (0.03 * 255) * (0.03 * 255);
  const int n = kBitmapSize * kBitmapSize;
  double sx = 0, sy = 0;
  for (int r = 0; r < kBitmapSize; ++r) {
    for (int c = 0; c < kBitmapSize; ++c) {
      sx += 255 * x.pixels(r, c);
      sy += 255 * y.pixels(r, c);
    }
  }
  const double mx = sx / n, my = sy / n;
  double vx = 0, vy = 0, cxy = 0;
  for (int r = 0; r < kBitmapSize; ++r) {
    for (int c = 0; c < kBitmapSize; ++c) {
      const double a = 255 * x.pixels(r, c) - mx, b = 255 * y.pixels(r, c) - my;
      vx += a * a;
      vy += b * b;
      cxy += a * b;
    }
  }
  vx /= n;
  vy /= n;
  cxy /= n;
  return ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

}  // namespace crossvae::oracle
