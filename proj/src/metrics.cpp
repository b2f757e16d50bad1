#include "crossvae/metrics.hpp"

#include <json.hpp>

#include <cmath>
#include <map>
#include <stdexcept>

namespace crossvae {

double mean_squared_error(const Bitmap& x, const Bitmap& y) {
  return (x.pixels - y.pixels).squaredNorm() / static_cast<double>(x.pixels.size());
}

double psnr_from_mse(double mse, double max_val) {
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_val * max_val / mse);
}

double psnr(const Bitmap& x, const Bitmap& y, double max_val) {
  return psnr_from_mse(mean_squared_error(x, y), max_val);
}

double ssim(const Bitmap& x, const Bitmap& y) {
  const Eigen::ArrayXXd a = x.pixels.array() * 255.0;
  const Eigen::ArrayXXd b = y.pixels.array() * 255.0;
  const double n = static_cast<double>(a.size());
  const double mu_a = a.sum() / n;
  const double mu_b = b.sum() / n;
  const Eigen::ArrayXXd da = a - mu_a;
  const Eigen::ArrayXXd db = b - mu_b;
  const double var_a = (da * da).sum() / n;
  const double var_b = (db * db).sum() / n;
  const double cov = (da * db).sum() / n;
  return ((2.0 * mu_a * mu_b + kSsimC1) * (2.0 * cov + kSsimC2)) /
         ((mu_a * mu_a + mu_b * mu_b + kSsimC1) * (var_a + var_b + kSsimC2));
}

DtwResult dtw_path(const PointMatrix& a, const PointMatrix& b) {
  const Index n = a.rows(), m = b.rows();
  if (n == 0 || m == 0) throw std::invalid_argument("dtw: sequences must be non-empty");

  // Lexicographic (cost, length) minimum; ties in cost prefer shorter paths.
  std::vector<DtwResult> d(static_cast<std::size_t>(n * m));
  const auto at = [&](Index i, Index j) -> DtwResult& { return d[static_cast<std::size_t>(i * m + j)]; };
  const auto better = [](const DtwResult& p, const DtwResult& q) {
    return p.cost < q.cost || (p.cost == q.cost && p.path_length < q.path_length);
  };
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < m; ++j) {
      const double c = (a.row(i) - b.row(j)).norm();
      if (i == 0 && j == 0) {
        at(i, j) = {c, 1};
        continue;
      }
      const DtwResult* best = nullptr;
      if (i > 0 && j > 0) best = &at(i - 1, j - 1);
      if (i > 0 && (!best || better(at(i - 1, j), *best))) best = &at(i - 1, j);
      if (j > 0 && (!best || better(at(i, j - 1), *best))) best = &at(i, j - 1);
      at(i, j) = {best->cost + c, best->path_length + 1};
    }
  }
  return at(n - 1, m - 1);
}

double dtw(const Trajectory& a, const Trajectory& b) {
  return dtw_path(a.points, b.points).normalized();
}

std::vector<ClassAverage> class_average_baseline(const Dataset& train) {
  std::vector<ClassAverage> out;
  for (const auto& label : train.labels()) {
    ClassAverage avg{label, {}, {}};
    std::size_t n = 0;
    for (const auto& it : train.items) {
      if (it.label != label) continue;
      if (n == 0) {
        avg.trajectory.points = PointMatrix::Zero(it.trajectory.length(), 2);
      } else if (it.trajectory.length() != avg.trajectory.length()) {
        throw std::invalid_argument("class_average_baseline: trajectories of class '" + label +
                                    "' differ in length");
      }
      avg.bitmap.pixels += it.bitmap.pixels;
      avg.trajectory.points += it.trajectory.points;
      ++n;
    }
    if (n == 0) throw std::invalid_argument("class_average_baseline: empty class '" + label + "'");
    avg.bitmap.pixels /= static_cast<double>(n);
    avg.trajectory.points /= static_cast<double>(n);
    out.push_back(std::move(avg));
  }
  if (out.empty()) throw std::invalid_argument("class_average_baseline: empty training set");
  return out;
}

MetricsReport aggregate(const Dataset& test, const std::vector<ItemPrediction>& predictions,
                        const std::string& variant) {
  if (test.empty()) throw std::invalid_argument("evaluate: test set is empty");
  if (predictions.size() != test.size()) {
    throw std::invalid_argument("evaluate: prediction count does not match test set");
  }
  MetricsReport r;
  r.variant = variant;
  r.n_items = test.size();

  struct Acc {
    std::size_t n = 0, exact = 0, finite_psnr = 0;
    double psnr = 0, ssim = 0, dtw = 0;
  };
  std::map<std::string, Acc> per;
  Acc all;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& item = test.items[i];
    const auto& pred = predictions[i];
    const double p = psnr(item.bitmap, pred.inked);
    const double s = ssim(item.bitmap, pred.inked);
    const double w = dtw(item.trajectory, pred.recovered);
    r.item_psnr.push_back(p);
    r.item_ssim.push_back(s);
    r.item_dtw.push_back(w);
    for (Acc* a : {&all, &per[item.label]}) {
      ++a->n;
      if (std::isinf(p)) {
        ++a->exact;
      } else {
        a->psnr += p;
        ++a->finite_psnr;
      }
      a->ssim += s;
      a->dtw += w;
    }
  }
  const auto mean_psnr = [](const Acc& a) {
    return a.finite_psnr ? a.psnr / static_cast<double>(a.finite_psnr)
                         : std::numeric_limits<double>::infinity();
  };
  r.psnr_exact_matches = all.exact;
  r.psnr_mean = mean_psnr(all);
  r.ssim_mean = all.ssim / static_cast<double>(all.n);
  r.dtw_mean = all.dtw / static_cast<double>(all.n);
  for (const auto& label : test.labels()) {
    const Acc& a = per.at(label);
    r.per_class.push_back({label, a.n, a.exact, mean_psnr(a), a.ssim / static_cast<double>(a.n),
                           a.dtw / static_cast<double>(a.n)});
  }
  return r;
}

MetricsReport evaluate(const CrossVae<float>& model, const ParamStore<float>& params,
                       const Dataset& test) {
  if (test.empty()) throw std::invalid_argument("evaluate: test set is empty");
  std::vector<ItemPrediction> preds;
  preds.reserve(test.size());
  for (const auto& it : test.items) {
    const auto x_t = to_tensor<float>(it.trajectory);
    const auto x_b = to_tensor<float>(it.bitmap);
    preds.push_back({it.label, to_bitmap(model.convert_t2b(x_t, params)),
                     to_trajectory(model.convert_b2t(x_b, params))});
  }
  return aggregate(test, preds, to_string(model.config().seq_encoder));
}

MetricsReport evaluate_baseline(const std::vector<ClassAverage>& baseline, const Dataset& test) {
  std::vector<ItemPrediction> preds;
  for (const auto& it : test.items) {
    const ClassAverage* match = nullptr;
    for (const auto& b : baseline) {
      if (b.label == it.label) match = &b;
    }
    if (!match) throw std::invalid_argument("baseline has no class '" + it.label + "'");
    preds.push_back({it.label, match->bitmap, match->trajectory});
  }
  return aggregate(test, preds, "class_average");
}

std::string MetricsReport::to_json() const {
  const auto num = [](double v) -> nlohmann::ordered_json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  nlohmann::ordered_json j;
  j["variant"] = variant;
  j["n_items"] = n_items;
  j["psnr_mean"] = num(psnr_mean);
  j["ssim_mean"] = num(ssim_mean);
  j["dtw_mean"] = num(dtw_mean);
  j["psnr_exact_matches"] = psnr_exact_matches;
  nlohmann::ordered_json pc = nlohmann::ordered_json::object();
  for (const auto& c : per_class) {
    pc[c.label] = {{"n_items", c.n_items},
                   {"psnr_mean", num(c.psnr_mean)},
                   {"ssim_mean", num(c.ssim_mean)},
                   {"dtw_mean", num(c.dtw_mean)},
                   {"psnr_exact_matches", c.psnr_exact_matches}};
  }
  j["per_class"] = std::move(pc);
  return j.dump(2) + "\n";
}

}  // namespace crossvae
