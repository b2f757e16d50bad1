#include "crossvae/stroke_data.hpp"

#include "crossvae/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace crossvae {

namespace {

std::string describe_record(std::size_t index, std::size_t line, const std::string& label) {
  std::ostringstream os;
  os << "record " << index << " (line " << line;
  if (!label.empty()) os << ", label '" << label << "'";
  os << ")";
  return os.str();
}

Point parse_point(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ValidationError(where + ": point must be a [x, y] pair of numbers");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

std::vector<std::string> Dataset::labels() const {
  std::vector<std::string> out;
  for (const auto& it : items) {
    if (std::find(out.begin(), out.end(), it.label) == out.end()) out.push_back(it.label);
  }
  return out;
}

std::vector<StrokeSample> parse_stroke_file(std::string_view text) {
  std::vector<StrokeSample> samples;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }

    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    }

    const std::string where = describe_record(samples.size(), line_no,
                                              j.is_object() && j.contains("label") &&
                                                      j["label"].is_string()
                                                  ? j["label"].get<std::string>()
                                                  : std::string());
    if (!j.is_object()) throw ValidationError(where + ": record must be a JSON object");
    if (!j.contains("label") || !j["label"].is_string()) {
      throw ValidationError(where + ": missing string field 'label'");
    }
    if (!j.contains("strokes") || !j["strokes"].is_array()) {
      throw ValidationError(where + ": missing array field 'strokes'");
    }

    StrokeSample s;
    s.label = j["label"].get<std::string>();
    for (const auto& js : j["strokes"]) {
      if (!js.is_array()) throw ValidationError(where + ": stroke must be an array of points");
      Stroke stroke;
      stroke.reserve(js.size());
      for (const auto& jp : js) stroke.push_back(parse_point(jp, where));
      s.strokes.push_back(std::move(stroke));
    }
    validate(s, where);
    samples.push_back(std::move(s));
    if (end == text.size()) break;
  }
  return samples;
}

std::string format_stroke_file(const std::vector<StrokeSample>& samples) {
  std::string out;
  for (const auto& s : samples) {
    nlohmann::json strokes = nlohmann::json::array();
    for (const auto& stroke : s.strokes) {
      nlohmann::json js = nlohmann::json::array();
      for (const auto& p : stroke) js.push_back({p.x, p.y});
      strokes.push_back(std::move(js));
    }
    nlohmann::json rec;
    rec["label"] = s.label;
    rec["strokes"] = std::move(strokes);
    out += rec.dump();
    out += '\n';
  }
  return out;
}

std::vector<StrokeSample> read_stroke_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open stroke file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_stroke_file(ss.str());
}

void write_stroke_file(const std::string& path, const std::vector<StrokeSample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write stroke file: " + path);
  out << format_stroke_file(samples);
}

void validate(const StrokeSample& sample, std::string_view what) {
  const std::string w(what);
  if (sample.strokes.empty()) throw ValidationError(w + ": sample has zero strokes");
  for (std::size_t i = 0; i < sample.strokes.size(); ++i) {
    if (sample.strokes[i].empty()) {
      throw ValidationError(w + ": stroke " + std::to_string(i) + " has zero points");
    }
    for (const auto& p : sample.strokes[i]) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
        throw ValidationError(w + ": stroke " + std::to_string(i) + " has a non-finite coordinate");
      }
    }
  }
}

void validate(const Trajectory& trajectory) {
  if (trajectory.length() < 1) throw ValidationError("trajectory is empty");
  const auto& p = trajectory.points;
  if (!p.allFinite() || (p.array() < 0.0).any() || (p.array() > 1.0).any()) {
    throw ValidationError("trajectory coordinates must lie in [0, 1]");
  }
}

StrokeSample normalize(const StrokeSample& sample) {
  validate(sample);
  double min_x = sample.strokes[0][0].x, max_x = min_x;
  double min_y = sample.strokes[0][0].y, max_y = min_y;
  for (const auto& stroke : sample.strokes) {
    for (const auto& p : stroke) {
      min_x = std::min(min_x, p.x);
      max_x = std::max(max_x, p.x);
      min_y = std::min(min_y, p.y);
      max_y = std::max(max_y, p.y);
    }
  }
  const double ex = max_x - min_x, ey = max_y - min_y;
  const double extent = std::max(ex, ey);

  StrokeSample out = sample;
  for (auto& stroke : out.strokes) {
    for (auto& p : stroke) {
      if (extent == 0.0) {
        p = {0.5, 0.5};
        continue;
      }
      const double x = (p.x - min_x) / extent + 0.5 * (1.0 - ex / extent);
      const double y = (p.y - min_y) / extent + 0.5 * (1.0 - ey / extent);
      p = {std::clamp(x, 0.0, 1.0), std::clamp(y, 0.0, 1.0)};
    }
  }
  return out;
}

Trajectory resample(const StrokeSample& sample, int length) {
  if (length < 2) throw std::invalid_argument("resample: length must be at least 2");
  validate(sample);
  std::vector<Point> path;
  for (const auto& stroke : sample.strokes) path.insert(path.end(), stroke.begin(), stroke.end());

  std::vector<double> cumulative(path.size(), 0.0);
  for (std::size_t i = 1; i < path.size(); ++i) {
    cumulative[i] =
        cumulative[i - 1] + std::hypot(path[i].x - path[i - 1].x, path[i].y - path[i - 1].y);
  }
  const double total = cumulative.back();

  Trajectory t{PointMatrix(length, 2)};
  if (total == 0.0) {
    for (int k = 0; k < length; ++k) t.points.row(k) << path[0].x, path[0].y;
    return t;
  }

  std::size_t seg = 0;
  for (int k = 0; k < length; ++k) {
    const double target = total * static_cast<double>(k) / static_cast<double>(length - 1);
    while (seg + 2 < path.size() && cumulative[seg + 1] < target) ++seg;
    const double seg_len = cumulative[seg + 1] - cumulative[seg];
    const double u = seg_len > 0.0 ? std::clamp((target - cumulative[seg]) / seg_len, 0.0, 1.0)
                                   : 0.0;
    const Point& a = path[seg];
    const Point& b = path[seg + 1];
    t.points.row(k) << a.x + u * (b.x - a.x), a.y + u * (b.y - a.y);
  }
  t.points.row(0) << path.front().x, path.front().y;
  t.points.row(length - 1) << path.back().x, path.back().y;
  return t;
}

Bitmap rasterize(const Trajectory& trajectory) {
  validate(trajectory);
  static constexpr int kMax = kBitmapSize - 1;
  Bitmap bmp;
  const auto to_pixel = [](double x, double y) {
    const int col = static_cast<int>(std::lround(x * kMax));
    const int row = static_cast<int>(std::lround((1.0 - y) * kMax));
    return std::pair{std::clamp(row, 0, kMax), std::clamp(col, 0, kMax)};
  };

  auto [r0, c0] = to_pixel(trajectory.points(0, 0), trajectory.points(0, 1));
  bmp.pixels(r0, c0) = 1.0;
  for (Eigen::Index k = 1; k < trajectory.length(); ++k) {
    const auto [r1, c1] = to_pixel(trajectory.points(k, 0), trajectory.points(k, 1));
    int x = c0, y = r0;
    const int dx = std::abs(c1 - c0), dy = -std::abs(r1 - r0);
    const int sx = c0 < c1 ? 1 : -1, sy = r0 < r1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      bmp.pixels(y, x) = 1.0;
      if (x == c1 && y == r1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y += sy;
      }
    }
    r0 = r1;
    c0 = c1;
  }
  return bmp;
}

StrokeSample to_sample(const std::string& label, const Trajectory& trajectory) {
  Stroke stroke;
  stroke.reserve(trajectory.length());
  for (Eigen::Index k = 0; k < trajectory.length(); ++k) {
    stroke.push_back({trajectory.points(k, 0), trajectory.points(k, 1)});
  }
  return {label, {std::move(stroke)}};
}

DatasetItem make_item(const StrokeSample& raw, int seq_len) {
  Trajectory t = resample(normalize(raw), seq_len);
  Bitmap b = rasterize(t);
  return {raw.label, std::move(t), b};
}

Dataset build_dataset(const std::vector<StrokeSample>& raw, int seq_len) {
  Dataset d;
  d.items.reserve(raw.size());
  for (const auto& s : raw) d.items.push_back(make_item(s, seq_len));
  return d;
}

std::vector<std::string> supported_classes() {
  std::vector<std::string> out;
  for (const auto& [label, strokes] : letter_templates()) out.push_back(label);
  return out;
}

const std::vector<Stroke>& letter_template(const std::string& label) {
  for (const auto& [l, strokes] : letter_templates()) {
    if (l == label) return strokes;
  }
  std::string supported;
  for (const auto& l : supported_classes()) supported += l;
  throw std::invalid_argument("unknown class label '" + label + "'; supported classes: " +
                              supported);
}

std::vector<StrokeSample> synth_samples(std::uint64_t seed, int n_per_class,
                                        const std::vector<std::string>& classes,
                                        const SynthConfig& cfg) {
  if (n_per_class < 1) throw std::invalid_argument("synth: n_per_class must be at least 1");
  std::vector<StrokeSample> out;
  out.reserve(classes.size() * static_cast<std::size_t>(n_per_class));
  for (const auto& label : classes) {
    const auto& tmpl = letter_template(label);
    for (int k = 0; k < n_per_class; ++k) {
      Rng rng = Rng::stream(seed, "synth/" + label, {static_cast<std::uint64_t>(k)});
      const double sx = 1.0 + rng.uniform(-cfg.scale_jitter, cfg.scale_jitter);
      const double sy = 1.0 + rng.uniform(-cfg.scale_jitter, cfg.scale_jitter);
      const double tx = rng.uniform(-cfg.translate_jitter, cfg.translate_jitter);
      const double ty = rng.uniform(-cfg.translate_jitter, cfg.translate_jitter);
      StrokeSample s{label, tmpl};
      for (auto& stroke : s.strokes) {
        for (auto& p : stroke) {
          p.x = sx * p.x + tx + cfg.point_noise * rng.normal();
          p.y = sy * p.y + ty + cfg.point_noise * rng.normal();
        }
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

Dataset synth_dataset(std::uint64_t seed, int n_per_class, const std::vector<std::string>& classes,
                      const SynthConfig& cfg) {
  return build_dataset(synth_samples(seed, n_per_class, classes, cfg), cfg.seq_len);
}

namespace {

/// Per-class train membership for items labelled by `labels`.
std::vector<bool> stratified_mask(const std::vector<std::string>& labels, double train_fraction,
                                  std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("split: train_fraction must be in (0, 1)");
  }
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  std::vector<bool> train(labels.size(), false);
  for (auto& [label, idx] : by_class) {
    if (idx.size() < 2) {
      throw std::invalid_argument("split: class '" + label + "' has fewer than 2 items");
    }
    Rng rng = Rng::stream(seed, "split/" + label);
    rng.shuffle(idx);
    const auto n = static_cast<long>(idx.size());
    const long n_train =
        std::clamp(std::lround(train_fraction * static_cast<double>(n)), 1L, n - 1);
    for (long k = 0; k < n_train; ++k) train[idx[static_cast<std::size_t>(k)]] = true;
  }
  return train;
}

}  // namespace

std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction,
                                  std::uint64_t seed) {
  std::vector<std::string> labels;
  for (const auto& it : dataset.items) labels.push_back(it.label);
  const auto mask = stratified_mask(labels, train_fraction, seed);
  Dataset tr{{}, SplitTag::train}, te{{}, SplitTag::test};
  for (std::size_t i = 0; i < mask.size(); ++i) {
    (mask[i] ? tr : te).items.push_back(dataset.items[i]);
  }
  return {std::move(tr), std::move(te)};
}

std::pair<std::vector<StrokeSample>, std::vector<StrokeSample>> split_samples(
    const std::vector<StrokeSample>& samples, double train_fraction, std::uint64_t seed) {
  std::vector<std::string> labels;
  for (const auto& s : samples) labels.push_back(s.label);
  const auto mask = stratified_mask(labels, train_fraction, seed);
  std::pair<std::vector<StrokeSample>, std::vector<StrokeSample>> out;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    (mask[i] ? out.first : out.second).push_back(samples[i]);
  }
  return out;
}

}  // namespace crossvae
