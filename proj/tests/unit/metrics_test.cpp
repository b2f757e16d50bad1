#include "crossvae/metrics.hpp"
#include "crossvae/rng.hpp"
#include "crossvae/training.hpp"

#include "metric_oracles.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cmath>
#include <limits>
#include <numeric>

using namespace crossvae;

namespace {

Bitmap constant(double v) {
  Bitmap b;
  b.pixels.setConstant(v);
  return b;
}

Bitmap random_bitmap(Rng& rng, bool binary) {
  Bitmap b;
  for (int r = 0; r < kBitmapSize; ++r) {
    for (int c = 0; c < kBitmapSize; ++c) {
      b.pixels(r, c) = binary ? (rng.uniform() < 0.2 ? 1.0 : 0.0) : rng.uniform();
    }
  }
  return b;
}

PointMatrix points(std::initializer_list<std::pair<double, double>> pts) {
  PointMatrix m(static_cast<Index>(pts.size()), 2);
  Index i = 0;
  for (auto [x, y] : pts) {
    m(i, 0) = x;
    m(i, 1) = y;
    ++i;
  }
  return m;
}

PointMatrix random_points(Rng& rng, Index n) {
  PointMatrix m(n, 2);
  for (Index i = 0; i < n; ++i) {
    m(i, 0) = rng.uniform();
    m(i, 1) = rng.uniform();
  }
  return m;
}

DatasetItem item(const std::string& label, const Bitmap& b, const PointMatrix& p) {
  return {label, Trajectory{p}, b};
}

}  // namespace

// ---------------------------------------------------------------------------
// PSNR

TEST(Psnr, HundredthMseIsTwentyDecibels) { EXPECT_EQ(psnr_from_mse(0.01, 1.0), 20.0); }

TEST(Psnr, IdenticalImagesAreInfinite) {
  Rng rng = Rng::stream(1, "psnr");
  const Bitmap b = random_bitmap(rng, false);
  EXPECT_TRUE(std::isinf(psnr(b, b)));
  EXPECT_GT(psnr(b, b), 0.0);
}

TEST(Psnr, BlackVersusWhiteIsZero) {
  EXPECT_DOUBLE_EQ(mean_squared_error(constant(0), constant(1)), 1.0);
  EXPECT_EQ(psnr(constant(0), constant(1)), 0.0);
}

TEST(Psnr, MatchesDefinitionOnRandomPair) {
  Rng rng = Rng::stream(2, "psnr");
  const Bitmap a = random_bitmap(rng, false), b = random_bitmap(rng, true);
  double se = 0;
  for (int r = 0; r < kBitmapSize; ++r) {
    for (int c = 0; c < kBitmapSize; ++c) se += std::pow(a.pixels(r, c) - b.pixels(r, c), 2);
  }
  EXPECT_NEAR(psnr(a, b), 10 * std::log10(1.0 / (se / 1024)), 1e-10);
}

TEST(Psnr, StrictlyDecreasesWithNoise) {
  Rng rng = Rng::stream(3, "psnr-sweep");
  const Bitmap clean = random_bitmap(rng, true);
  Bitmap noise;
  for (int r = 0; r < kBitmapSize; ++r) {
    for (int c = 0; c < kBitmapSize; ++c) noise.pixels(r, c) = rng.uniform(-1, 1);
  }
  double prev = std::numeric_limits<double>::infinity();
  for (double level : {0.01, 0.02, 0.05, 0.1, 0.2, 0.4}) {
    Bitmap noisy;
    noisy.pixels = clean.pixels + level * noise.pixels;
    const double p = psnr(clean, noisy);
    EXPECT_LT(p, prev) << level;
    prev = p;
  }
}

// ---------------------------------------------------------------------------
// SSIM

TEST(Ssim, IdenticalIsExactlyOne) {
  Rng rng = Rng::stream(4, "ssim");
  for (int k = 0; k < 20; ++k) {
    const Bitmap b = random_bitmap(rng, k % 2 == 0);
    EXPECT_EQ(ssim(b, b), 1.0);
  }
}

TEST(Ssim, ConstantBlackVersusWhite) {
  const double expected = kSsimC1 / (255.0 * 255.0 + kSsimC1);
  EXPECT_NEAR(ssim(constant(0), constant(1)), expected, 1e-15);
  EXPECT_NEAR(expected, 9.999e-5, 1e-8);
}

TEST(Ssim, MatchesStatisticsOracle) {
  Rng rng = Rng::stream(5, "ssim-oracle");
  for (int k = 0; k < 100; ++k) {
    const Bitmap a = random_bitmap(rng, k % 3 == 0), b = random_bitmap(rng, k % 2 == 0);
    EXPECT_NEAR(ssim(a, b), oracle::ssim_by_hand(a, b), 1e-10);
  }
}

TEST(Ssim, SymmetricAndBounded) {
  Rng rng = Rng::stream(6, "ssim-sym");
  for (int k = 0; k < 50; ++k) {
    const Bitmap a = random_bitmap(rng, false), b = random_bitmap(rng, true);
    const double s = ssim(a, b);
    EXPECT_DOUBLE_EQ(s, ssim(b, a));
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
  }
}

// ---------------------------------------------------------------------------
// DTW

TEST(Dtw, IdenticalIsZero) {
  Rng rng = Rng::stream(7, "dtw");
  const PointMatrix a = random_points(rng, 10);
  EXPECT_EQ(dtw(Trajectory{a}, Trajectory{a}), 0.0);
  EXPECT_EQ(dtw_path(a, a).path_length, 10u);
}

TEST(Dtw, RepeatedPointIsAbsorbed) {
  const auto a = points({{0, 0}, {1, 0}});
  const auto b = points({{0, 0}, {0, 0}, {1, 0}});
  EXPECT_EQ(dtw(Trajectory{a}, Trajectory{b}), 0.0);
}

TEST(Dtw, HandComputedPair) {
  // match (0,0)-(0,0), then (1,0)-(1,1): costs 0 and 1 over two steps
  const auto a = points({{0, 0}, {1, 0}});
  const auto b = points({{0, 0}, {1, 1}});
  const auto r = dtw_path(a, b);
  EXPECT_DOUBLE_EQ(r.cost, 1.0);
  EXPECT_EQ(r.path_length, 2u);
  EXPECT_DOUBLE_EQ(r.normalized(), 0.5);
}

TEST(Dtw, EqualsBruteForceEnumeration) {
  Rng rng = Rng::stream(8, "dtw-brute");
  int pairs = 0;
  for (Index n = 1; n <= 6; ++n) {
    for (Index m = 1; m <= 6; ++m) {
      for (int k = 0; k < 8; ++k) {
        const PointMatrix a = random_points(rng, n), b = random_points(rng, m);
        const auto fast = dtw_path(a, b);
        const auto slow = oracle::brute_force_dtw(a, b);
        ASSERT_EQ(fast.cost, slow.cost) << n << "x" << m;
        ASSERT_EQ(fast.path_length, slow.length) << n << "x" << m;
        ++pairs;
      }
    }
  }
  EXPECT_GE(pairs, 200);
}

TEST(Dtw, TiesPreferShorterPaths) {
  // All points coincide: every alignment costs 0; the diagonal-heavy one is shortest.
  const PointMatrix a = PointMatrix::Zero(4, 2), b = PointMatrix::Zero(3, 2);
  const auto r = dtw_path(a, b);
  EXPECT_EQ(r.cost, 0.0);
  EXPECT_EQ(r.path_length, 4u);
  EXPECT_EQ(oracle::brute_force_dtw(a, b).length, 4u);
}

TEST(Dtw, SymmetricAndNonNegative) {
  Rng rng = Rng::stream(9, "dtw-sym");
  for (int k = 0; k < 50; ++k) {
    const Trajectory a{random_points(rng, 12)}, b{random_points(rng, 9)};
    const double d = dtw(a, b);
    EXPECT_GE(d, 0.0);
    EXPECT_DOUBLE_EQ(d, dtw(b, a));
  }
}

TEST(Dtw, EmptyInputThrows) {
  EXPECT_THROW(dtw_path(PointMatrix(0, 2), points({{0, 0}})), std::invalid_argument);
  EXPECT_THROW(dtw_path(points({{0, 0}}), PointMatrix(0, 2)), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// baseline and reports

TEST(Baseline, SingleItemClassIsThatItem) {
  Rng rng = Rng::stream(10, "base");
  Dataset d;
  d.items.push_back(item("A", random_bitmap(rng, true), random_points(rng, 5)));
  const auto avg = class_average_baseline(d);
  ASSERT_EQ(avg.size(), 1u);
  EXPECT_EQ(avg[0].label, "A");
  EXPECT_EQ(avg[0].bitmap.pixels, d.items[0].bitmap.pixels);
  EXPECT_EQ(avg[0].trajectory.points, d.items[0].trajectory.points);
}

TEST(Baseline, MeanOfBlackAndWhiteIsHalf) {
  Dataset d;
  d.items.push_back(item("A", constant(0), points({{0, 0}, {1, 1}})));
  d.items.push_back(item("A", constant(1), points({{1, 1}, {0, 0}})));
  d.items.push_back(item("B", constant(1), points({{0.2, 0.2}, {0.4, 0.4}})));
  const auto avg = class_average_baseline(d);
  ASSERT_EQ(avg.size(), 2u);
  EXPECT_TRUE((avg[0].bitmap.pixels.array() == 0.5).all());
  EXPECT_TRUE((avg[0].trajectory.points.array() == 0.5).all());
  EXPECT_EQ(avg[1].label, "B");
  EXPECT_TRUE((avg[1].bitmap.pixels.array() == 1.0).all());
}

TEST(Baseline, EmptyTrainingSetThrows) {
  EXPECT_THROW(class_average_baseline(Dataset{}), std::invalid_argument);
}

TEST(Baseline, UnknownTestClassThrows) {
  Dataset train, test;
  train.items.push_back(item("A", constant(0), points({{0, 0}})));
  test.items.push_back(item("B", constant(0), points({{0, 0}})));
  EXPECT_THROW(evaluate_baseline(class_average_baseline(train), test), std::invalid_argument);
}

class Reports : public ::testing::Test {
 protected:
  void SetUp() override {
    test_ = synth_dataset(5, 3, {"A", "B", "C"});
    Rng rng = Rng::stream(11, "preds");
    for (std::size_t i = 0; i < test_.size(); ++i) {
      const auto& it = test_.items[i];
      ItemPrediction p{it.label, it.bitmap, it.trajectory};
      if (i % 4 != 0) {  // every fourth item is reproduced exactly
        p.inked = random_bitmap(rng, true);
        p.recovered.points.array() += 0.05 * (rng.uniform() - 0.5);
      }
      preds_.push_back(p);
    }
  }
  Dataset test_;
  std::vector<ItemPrediction> preds_;
};

TEST_F(Reports, MeansAreArithmeticMeansOfItems) {
  const auto r = aggregate(test_, preds_, "conv");
  ASSERT_EQ(r.item_psnr.size(), test_.size());
  double psnr_sum = 0;
  std::size_t finite = 0, exact = 0;
  for (double p : r.item_psnr) {
    if (std::isinf(p)) {
      ++exact;
    } else {
      psnr_sum += p;
      ++finite;
    }
  }
  EXPECT_EQ(r.psnr_exact_matches, exact);
  EXPECT_EQ(exact, 3u);
  EXPECT_NEAR(r.psnr_mean, psnr_sum / finite, 1e-12);
  const double n = static_cast<double>(test_.size());
  EXPECT_NEAR(r.ssim_mean, std::accumulate(r.item_ssim.begin(), r.item_ssim.end(), 0.0) / n, 1e-12);
  EXPECT_NEAR(r.dtw_mean, std::accumulate(r.item_dtw.begin(), r.item_dtw.end(), 0.0) / n, 1e-12);
  EXPECT_GE(r.ssim_mean, -1.0);
  EXPECT_LE(r.ssim_mean, 1.0);
}

TEST_F(Reports, PerClassBreakdown) {
  const auto r = aggregate(test_, preds_, "conv");
  ASSERT_EQ(r.per_class.size(), 3u);
  std::size_t total = 0;
  for (const auto& c : r.per_class) total += c.n_items;
  EXPECT_EQ(total, test_.size());
  EXPECT_EQ(r.per_class[0].label, "A");
}

TEST_F(Reports, JsonFieldNames) {
  const auto r = aggregate(test_, preds_, "lstm");
  const auto j = nlohmann::json::parse(r.to_json());
  for (const char* k : {"psnr_mean", "ssim_mean", "dtw_mean", "n_items", "variant", "per_class"}) {
    EXPECT_TRUE(j.contains(k)) << k;
  }
  EXPECT_EQ(j["variant"], "lstm");
  EXPECT_EQ(j["n_items"], test_.size());
  EXPECT_TRUE(j["per_class"].contains("B"));
  EXPECT_NEAR(j["psnr_mean"].get<double>(), r.psnr_mean, 1e-9);
}

TEST_F(Reports, MismatchedOrEmptyInputsThrow) {
  EXPECT_THROW(aggregate(Dataset{}, {}, "conv"), std::invalid_argument);
  auto short_preds = preds_;
  short_preds.pop_back();
  EXPECT_THROW(aggregate(test_, short_preds, "conv"), std::invalid_argument);
}

TEST_F(Reports, FaithfulPredictorBeatsBaseline) {
  std::vector<ItemPrediction> exact;
  for (const auto& it : test_.items) exact.push_back({it.label, it.bitmap, it.trajectory});
  const auto good = aggregate(test_, exact, "identity");
  const auto base = evaluate_baseline(class_average_baseline(test_), test_);
  EXPECT_EQ(good.psnr_exact_matches, test_.size());
  EXPECT_GT(good.ssim_mean, base.ssim_mean);
  EXPECT_LT(good.dtw_mean, base.dtw_mean);
  EXPECT_TRUE(std::isfinite(base.psnr_mean));
}

TEST(Evaluate, UntrainedModelGivesFiniteReport) {
  ModelConfig m;
  m.image_channels = {4, 8};
  m.image_hidden = 16;
  m.seq_channels = {4, 4};
  m.seq_hidden = 16;
  TrainConfig t;
  t.seed = 1;
  const Checkpoint c = init_training(m, t);
  const Dataset test = synth_dataset(2, 2, {"A", "B"});
  const auto r = evaluate(CrossVae<float>(m), c.params, test);
  EXPECT_EQ(r.n_items, 4u);
  EXPECT_EQ(r.variant, "conv");
  EXPECT_TRUE(std::isfinite(r.psnr_mean));
  EXPECT_TRUE(std::isfinite(r.ssim_mean));
  EXPECT_TRUE(std::isfinite(r.dtw_mean));
  EXPECT_THROW(evaluate(CrossVae<float>(m), c.params, Dataset{}), std::invalid_argument);
}
