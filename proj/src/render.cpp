#include "crossvae/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace crossvae {

RgbImage::RgbImage(int w, int h, Rgb fill) : width(w), height(h), data(3 * w * h) {
  for (int i = 0; i < w * h; ++i) {
    data[3 * i] = fill.r;
    data[3 * i + 1] = fill.g;
    data[3 * i + 2] = fill.b;
  }
}

Rgb RgbImage::at(int x, int y) const {
  const std::size_t o = 3 * (static_cast<std::size_t>(y) * width + x);
  return {data[o], data[o + 1], data[o + 2]};
}

void RgbImage::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  const std::size_t o = 3 * (static_cast<std::size_t>(y) * width + x);
  data[o] = c.r;
  data[o + 1] = c.g;
  data[o + 2] = c.b;
}

void RgbImage::blit(const RgbImage& src, int x0, int y0) {
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) set(x0 + x, y0 + y, src.at(x, y));
  }
}

void RenderSpec::validate() const {
  if (size < 32) throw std::invalid_argument("render size must be >= 32");
  if (thickness < 1) throw std::invalid_argument("stroke thickness must be >= 1");
}

Rgb ramp_color(const RenderSpec& spec, int i, int segments) {
  const double t = segments > 1 ? static_cast<double>(i) / (segments - 1) : 0.0;
  const auto mix = [t](std::uint8_t a, std::uint8_t b) {
    return static_cast<std::uint8_t>(std::lround(a + t * (static_cast<double>(b) - a)));
  };
  return {mix(spec.start.r, spec.end.r), mix(spec.start.g, spec.end.g),
          mix(spec.start.b, spec.end.b)};
}

namespace {

void stamp(RgbImage& img, int cx, int cy, int thickness, Rgb c) {
  const int lo = -(thickness - 1) / 2;
  const int hi = thickness / 2;
  const double r2 = std::max(0.25, (thickness / 2.0) * (thickness / 2.0));
  for (int dy = lo; dy <= hi; ++dy) {
    for (int dx = lo; dx <= hi; ++dx) {
      if (thickness > 2 && dx * dx + dy * dy > r2) continue;
      img.set(cx + dx, cy + dy, c);
    }
  }
}

void draw_line(RgbImage& img, int x0, int y0, int x1, int y1, int thickness, Rgb c) {
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    stamp(img, x0, y0, thickness, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

// 5x7 glyphs for the grid header, one row per byte, MSB-aligned in 5 bits.
const std::array<std::uint8_t, 7>* glyph(char ch) {
  static const std::array<std::uint8_t, 7> X{0b10001, 0b10001, 0b01010, 0b00100,
                                             0b01010, 0b10001, 0b10001};
  static const std::array<std::uint8_t, 7> Y{0b10001, 0b10001, 0b01010, 0b00100,
                                             0b00100, 0b00100, 0b00100};
  static const std::array<std::uint8_t, 7> b{0b10000, 0b10000, 0b11110, 0b10001,
                                             0b10001, 0b10001, 0b11110};
  static const std::array<std::uint8_t, 7> t{0b01000, 0b01000, 0b11110, 0b01000,
                                             0b01000, 0b01001, 0b00110};
  switch (ch) {
    case 'X': return &X;
    case 'Y': return &Y;
    case 'b': return &b;
    case 't': return &t;
    default: return nullptr;
  }
}

void draw_text(RgbImage& img, const std::string& s, int x, int y, int scale, Rgb c) {
  for (char ch : s) {
    if (const auto* g = glyph(ch)) {
      for (int row = 0; row < 7; ++row) {
        for (int col = 0; col < 5; ++col) {
          if (!((*g)[row] >> (4 - col) & 1)) continue;
          for (int sy = 0; sy < scale; ++sy) {
            for (int sx = 0; sx < scale; ++sx) img.set(x + col * scale + sx, y + row * scale + sy, c);
          }
        }
      }
    }
    x += 6 * scale;
  }
}

}  // namespace

RgbImage render_trajectory(const Trajectory& traj, const RenderSpec& spec) {
  spec.validate();
  RgbImage img(spec.size, spec.size, spec.background);
  const int n = static_cast<int>(traj.length());
  if (n == 0) return img;
  const double span = spec.size - 1;
  const auto px = [&](int k) {
    const double x = std::clamp(traj.points(k, 0), 0.0, 1.0);
    const double y = std::clamp(traj.points(k, 1), 0.0, 1.0);
    return std::pair{static_cast<int>(std::lround(x * span)),
                     static_cast<int>(std::lround((1.0 - y) * span))};
  };
  if (n == 1) {
    const auto [x, y] = px(0);
    stamp(img, x, y, spec.thickness, spec.start);
    return img;
  }
  const int segments = n - 1;
  for (int i = 0; i < segments; ++i) {
    const auto [x0, y0] = px(i);
    const auto [x1, y1] = px(i + 1);
    draw_line(img, x0, y0, x1, y1, spec.thickness, ramp_color(spec, i, segments));
  }
  return img;
}

RgbImage render_bitmap(const Bitmap& bitmap, int size) {
  RgbImage img(size, size, {});
  for (int y = 0; y < size; ++y) {
    const int r = y * kBitmapSize / size;
    for (int x = 0; x < size; ++x) {
      const int c = x * kBitmapSize / size;
      const auto v = static_cast<std::uint8_t>(
          std::lround(255.0 * std::clamp(bitmap.pixels(r, c), 0.0, 1.0)));
      img.set(x, y, {v, v, v});
    }
  }
  return img;
}

RgbImage figure_grid(const std::vector<GridRow>& rows, const GridLayout& layout,
                     const RenderSpec& spec) {
  if (rows.empty()) throw std::invalid_argument("figure_grid: no items to lay out");
  const int n = static_cast<int>(rows.size());
  RgbImage img(layout.width(), layout.height(n), {40, 40, 40});
  const auto& labels = grid_column_labels();
  for (int c = 0; c < GridLayout::kColumns; ++c) {
    draw_text(img, labels[c], layout.cell_x(c) + 2, layout.margin + 2, 2, {255, 255, 255});
  }
  RenderSpec cell_spec = spec;
  cell_spec.size = layout.cell;
  for (int r = 0; r < n; ++r) {
    const auto& row = rows[r];
    const int y = layout.cell_y(r);
    img.blit(render_bitmap(row.x_b, layout.cell), layout.cell_x(0), y);
    img.blit(render_bitmap(row.y_bb, layout.cell), layout.cell_x(1), y);
    img.blit(render_bitmap(row.y_tb, layout.cell), layout.cell_x(2), y);
    img.blit(render_trajectory(row.x_t, cell_spec), layout.cell_x(3), y);
    img.blit(render_trajectory(row.y_tt, cell_spec), layout.cell_x(4), y);
    img.blit(render_trajectory(row.y_bt, cell_spec), layout.cell_x(5), y);
  }
  return img;
}

}  // namespace crossvae
