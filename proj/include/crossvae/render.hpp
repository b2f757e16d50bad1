#pragma once

#include "crossvae/stroke_data.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace crossvae {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // row-major RGB triplets

  RgbImage() = default;
  RgbImage(int w, int h, Rgb fill);

  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);
  void blit(const RgbImage& src, int x0, int y0);
  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

struct RenderSpec {
  int size = 256;
  int thickness = 3;
  Rgb start{255, 105, 180};  // pink: first segment
  Rgb end{255, 255, 0};      // yellow: last segment
  Rgb background{0, 0, 0};

  void validate() const;
};

/// Color of segment `i` out of `segments`, interpolated along the ramp.
Rgb ramp_color(const RenderSpec& spec, int i, int segments);

/// Draws segment i (between points i and i+1) in ramp_color(i, T - 1);
/// later segments paint over earlier ones.
RgbImage render_trajectory(const Trajectory& traj, const RenderSpec& spec = {});

/// Nearest-neighbour upscale of a bitmap to size x size gray levels.
RgbImage render_bitmap(const Bitmap& bitmap, int size);

struct GridRow {
  Bitmap x_b, y_bb, y_tb;
  Trajectory x_t, y_tt, y_bt;
};

struct GridLayout {
  int cell = 96;
  int gap = 4;
  int margin = 8;
  int header = 20;

  static constexpr int kColumns = 6;
  int width() const { return 2 * margin + kColumns * cell + (kColumns - 1) * gap; }
  int height(int rows) const { return 2 * margin + header + rows * (cell + gap); }
  int cell_x(int column) const { return margin + column * (cell + gap); }
  int cell_y(int row) const { return margin + header + row * (cell + gap); }
};

inline const std::vector<std::string>& grid_column_labels() {
  static const std::vector<std::string> labels{"Xb", "Ybb", "Ytb", "Xt", "Ytt", "Ybt"};
  return labels;
}

/// One row per item; columns X_b, Y_bb, Y_tb, X_t, Y_tt, Y_bt under a label header.
RgbImage figure_grid(const std::vector<GridRow>& rows, const GridLayout& layout = {},
                     const RenderSpec& spec = {});

// PNG encoding is deterministic: no timestamps or text chunks are written.
std::vector<std::uint8_t> encode_png(const RgbImage& image);
void write_png(const std::string& path, const RgbImage& image);
void write_png(const std::string& path, const Bitmap& bitmap);
/// Reads an 8-bit grayscale or RGB PNG of exactly 32x32 into [0, 1] intensities.
Bitmap read_bitmap_png(const std::string& path);

}  // namespace crossvae
