#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace crossvae {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

using Stroke = std::vector<Point>;

/// A raw handwritten character: ordered strokes of device-unit points.
struct StrokeSample {
  std::string label;
  std::vector<Stroke> strokes;
  friend bool operator==(const StrokeSample&, const StrokeSample&) = default;
};

inline constexpr int kBitmapSize = 32;
inline constexpr int kDefaultSeqLen = 64;

using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;
using PixelMatrix = Eigen::Matrix<double, kBitmapSize, kBitmapSize, Eigen::RowMajor>;

/// Fixed-length pen trajectory in the unit square, one (x, y) row per step.
struct Trajectory {
  PointMatrix points;

  Eigen::Index length() const { return points.rows(); }
  friend bool operator==(const Trajectory& a, const Trajectory& b) {
    return a.points.rows() == b.points.rows() && a.points == b.points;
  }
};

/// 32x32 grayscale image, row 0 at the top, intensities in [0, 1].
struct Bitmap {
  PixelMatrix pixels = PixelMatrix::Zero();
  friend bool operator==(const Bitmap& a, const Bitmap& b) { return a.pixels == b.pixels; }
};

enum class SplitTag { all, train, test };

struct DatasetItem {
  std::string label;
  Trajectory trajectory;
  Bitmap bitmap;
  friend bool operator==(const DatasetItem&, const DatasetItem&) = default;
};

struct Dataset {
  std::vector<DatasetItem> items;
  SplitTag tag = SplitTag::all;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
  /// Labels in order of first appearance.
  std::vector<std::string> labels() const;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Newline-delimited stroke JSON: {"label": "A", "strokes": [[[x, y], ...], ...]}
std::vector<StrokeSample> parse_stroke_file(std::string_view text);
std::string format_stroke_file(const std::vector<StrokeSample>& samples);
std::vector<StrokeSample> read_stroke_file(const std::string& path);
void write_stroke_file(const std::string& path, const std::vector<StrokeSample>& samples);

/// Throws ValidationError naming `what` if the sample is empty or non-finite.
void validate(const StrokeSample& sample, std::string_view what = "sample");
void validate(const Trajectory& trajectory);

/// Uniformly scales so the larger extent spans [0, 1] and centers the
/// shorter axis. A zero-extent sample collapses to (0.5, 0.5).
StrokeSample normalize(const StrokeSample& sample);

/// Concatenates strokes in writing order and resamples to exactly
/// `length` points equally spaced in arc length.
Trajectory resample(const StrokeSample& sample, int length);

/// Bresenham segments between consecutive points, with
/// col = round(31 x), row = round(31 (1 - y)). Pixels are exactly 0 or 1.
Bitmap rasterize(const Trajectory& trajectory);

/// A trajectory as a single-stroke sample (for writing converter output).
StrokeSample to_sample(const std::string& label, const Trajectory& trajectory);

DatasetItem make_item(const StrokeSample& raw, int seq_len);
Dataset build_dataset(const std::vector<StrokeSample>& raw, int seq_len);

struct SynthConfig {
  double scale_jitter = 0.10;
  double translate_jitter = 0.05;
  double point_noise = 0.01;
  int seq_len = kDefaultSeqLen;
};

/// Uppercase letter skeletons in the unit square (y up).
const std::vector<std::pair<std::string, std::vector<Stroke>>>& letter_templates();
std::vector<std::string> supported_classes();
const std::vector<Stroke>& letter_template(const std::string& label);

/// Raw jittered stroke samples, n_per_class per class, classes in the given order.
std::vector<StrokeSample> synth_samples(std::uint64_t seed, int n_per_class,
                                        const std::vector<std::string>& classes,
                                        const SynthConfig& cfg = {});

Dataset synth_dataset(std::uint64_t seed, int n_per_class, const std::vector<std::string>& classes,
                      const SynthConfig& cfg = {});

/// Stratified per class, deterministic per seed; item order is preserved.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction,
                                  std::uint64_t seed);

/// Splits raw samples with the same per-class rule as split().
std::pair<std::vector<StrokeSample>, std::vector<StrokeSample>> split_samples(
    const std::vector<StrokeSample>& samples, double train_fraction, std::uint64_t seed);

}  // namespace crossvae
