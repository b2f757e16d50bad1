#include "crossvae/rng.hpp"
#include "crossvae/stroke_data.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace crossvae;

namespace {

Trajectory traj(std::initializer_list<std::pair<double, double>> pts) {
  Trajectory t{PointMatrix(static_cast<Eigen::Index>(pts.size()), 2)};
  Eigen::Index k = 0;
  for (auto [x, y] : pts) t.points.row(k++) << x, y;
  return t;
}

StrokeSample one_stroke(std::initializer_list<Point> pts) { return {"A", {Stroke(pts)}}; }

// Point at arc length s along a polyline, found by walking the segments.
Point point_at(const std::vector<Point>& path, double s) {
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const double len = std::hypot(path[i + 1].x - path[i].x, path[i + 1].y - path[i].y);
    if (s <= len || i + 2 == path.size()) {
      const double u = len > 0 ? s / len : 0.0;
      return {path[i].x + u * (path[i + 1].x - path[i].x),
              path[i].y + u * (path[i + 1].y - path[i].y)};
    }
    s -= len;
  }
  return path.back();
}

}  // namespace

TEST(ParseStrokeFile, SingleRecord) {
  const auto s = parse_stroke_file(R"({"label":"A","strokes":[[[0,0],[1,1]]]})");
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].label, "A");
  ASSERT_EQ(s[0].strokes.size(), 1u);
  EXPECT_EQ(s[0].strokes[0], (Stroke{{0, 0}, {1, 1}}));
}

TEST(ParseStrokeFile, EmptyStrokesIsValidationError) {
  EXPECT_THROW(parse_stroke_file(R"({"label":"A","strokes":[]})"), ValidationError);
  EXPECT_THROW(parse_stroke_file(R"({"label":"A","strokes":[[]]})"), ValidationError);
}

TEST(ParseStrokeFile, ValidationErrorNamesRecord) {
  const std::string text =
      "{\"label\":\"A\",\"strokes\":[[[0,0]]]}\n{\"label\":\"Q\",\"strokes\":[[]]}\n";
  try {
    parse_stroke_file(text);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("record 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'Q'"), std::string::npos) << msg;
  }
}

TEST(ParseStrokeFile, MalformedJsonReportsLine) {
  const std::string text = "{\"label\":\"A\",\"strokes\":[[[0,0]]]}\n\n{\"label\": oops}\n";
  try {
    parse_stroke_file(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(ParseStrokeFile, PreservesOrderAndRoundTrips) {
  std::vector<StrokeSample> in{{"B", {{{0, 0}, {1, 2}}, {{3, 4}}}},
                               {"A", {{{0.125, -7.5}}}},
                               {"C", {{{1e-3, 2.5}, {3, 3}, {4, 4}}}}};
  const auto out = parse_stroke_file(format_stroke_file(in));
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out, in);
}

TEST(Normalize, UniformScaleCentersMinorAxis) {
  const auto n = normalize(one_stroke({{2, 2}, {4, 6}}));
  EXPECT_DOUBLE_EQ(n.strokes[0][0].x, 0.25);
  EXPECT_DOUBLE_EQ(n.strokes[0][0].y, 0.0);
  EXPECT_DOUBLE_EQ(n.strokes[0][1].x, 0.75);
  EXPECT_DOUBLE_EQ(n.strokes[0][1].y, 1.0);
}

TEST(Normalize, FullSquareUnchanged) {
  const auto s = one_stroke({{0, 0}, {1, 1}, {0.3, 0.6}});
  EXPECT_EQ(normalize(s), s);
}

TEST(Normalize, SinglePointMapsToCenter) {
  const auto n = normalize(one_stroke({{7, 9}}));
  EXPECT_EQ(n.strokes[0][0], (Point{0.5, 0.5}));
}

TEST(Normalize, RejectsNonFinite) {
  EXPECT_THROW(normalize(one_stroke({{0, 0}, {NAN, 1}})), ValidationError);
  EXPECT_THROW(normalize(one_stroke({{0, INFINITY}})), ValidationError);
}

TEST(Normalize, IdempotentOnRandomSamples) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    StrokeSample s{"A", {}};
    const int strokes = 1 + static_cast<int>(rng.below(3));
    for (int k = 0; k < strokes; ++k) {
      Stroke st;
      const int n = 1 + static_cast<int>(rng.below(6));
      for (int i = 0; i < n; ++i) st.push_back({rng.uniform(-50, 50), rng.uniform(-5, 80)});
      s.strokes.push_back(st);
    }
    const auto a = normalize(s);
    const auto b = normalize(a);
    for (std::size_t k = 0; k < a.strokes.size(); ++k) {
      for (std::size_t i = 0; i < a.strokes[k].size(); ++i) {
        EXPECT_NEAR(a.strokes[k][i].x, b.strokes[k][i].x, 1e-12);
        EXPECT_NEAR(a.strokes[k][i].y, b.strokes[k][i].y, 1e-12);
        EXPECT_GE(a.strokes[k][i].x, 0.0);
        EXPECT_LE(a.strokes[k][i].y, 1.0);
      }
    }
  }
}

TEST(Resample, StraightSegment) {
  const auto t = resample(one_stroke({{0, 0}, {1, 0}}), 3);
  EXPECT_EQ(t, traj({{0, 0}, {0.5, 0}, {1, 0}}));
}

TEST(Resample, EqualSegmentsIdentity) {
  const auto s = one_stroke({{0, 0}, {0.25, 0}, {0.5, 0}, {0.75, 0}, {1, 0}});
  const auto t = resample(s, 5);
  for (int k = 0; k < 5; ++k) {
    EXPECT_NEAR(t.points(k, 0), s.strokes[0][k].x, 1e-15);
    EXPECT_NEAR(t.points(k, 1), s.strokes[0][k].y, 1e-15);
  }
}

TEST(Resample, LShapeMatchesArcLengthWalk) {
  const std::vector<Point> path{{0, 0}, {1, 0}, {1, 1}};
  const auto t = resample({"L", {path}}, 5);
  ASSERT_EQ(t.length(), 5);
  for (int k = 0; k < 5; ++k) {
    const Point p = point_at(path, 0.5 * k);
    EXPECT_NEAR(t.points(k, 0), p.x, 1e-12) << k;
    EXPECT_NEAR(t.points(k, 1), p.y, 1e-12) << k;
  }
}

TEST(Resample, MultiStrokeJumpCountsAsArcLength) {
  // Second stroke starts away from the first; the jump is part of the path.
  const std::vector<Point> path{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  const auto t = resample({"A", {{path[0], path[1]}, {path[2], path[3]}}}, 7);
  for (int k = 0; k < 7; ++k) {
    const Point p = point_at(path, 0.5 * k);
    EXPECT_NEAR(t.points(k, 0), p.x, 1e-12);
    EXPECT_NEAR(t.points(k, 1), p.y, 1e-12);
  }
}

TEST(Resample, ZeroLengthRepeatsPoint) {
  const auto t = resample(one_stroke({{0.3, 0.7}, {0.3, 0.7}}), 4);
  for (int k = 0; k < 4; ++k) EXPECT_EQ(t.points.row(k), Eigen::RowVector2d(0.3, 0.7));
}

TEST(Resample, ExactLengthAndEndpointsOnRandomPolylines) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    Stroke st;
    const int n = 1 + static_cast<int>(rng.below(10));
    for (int i = 0; i < n; ++i) st.push_back({rng.uniform(), rng.uniform()});
    const int T = 2 + static_cast<int>(rng.below(80));
    const auto t = resample({"A", {st}}, T);
    ASSERT_EQ(t.length(), T);
    EXPECT_NEAR(t.points(0, 0), st.front().x, 1e-12);
    EXPECT_NEAR(t.points(0, 1), st.front().y, 1e-12);
    EXPECT_NEAR(t.points(T - 1, 0), st.back().x, 1e-12);
    EXPECT_NEAR(t.points(T - 1, 1), st.back().y, 1e-12);
  }
}

TEST(Resample, RejectsShortLength) { EXPECT_THROW(resample(one_stroke({{0, 0}}), 1), std::invalid_argument); }

TEST(Rasterize, RepeatedCornerPoint) {
  const auto b = rasterize(traj({{0, 1}, {0, 1}}));
  EXPECT_EQ(b.pixels(0, 0), 1.0);
  EXPECT_EQ(b.pixels.sum(), 1.0);
}

TEST(Rasterize, HorizontalLineFillsRow16) {
  const auto b = rasterize(traj({{0, 0.5}, {1, 0.5}}));
  for (int c = 0; c < kBitmapSize; ++c) EXPECT_EQ(b.pixels(16, c), 1.0);
  EXPECT_EQ(b.pixels.sum(), kBitmapSize);
}

// A segment's pixels must be an 8-connected chain of max(|dx|,|dy|)+1 pixels,
// one per major-axis step, each within half a pixel of the ideal line.
TEST(Rasterize, SegmentsMatchLineCoverageProperties) {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const auto t = traj({{rng.uniform(), rng.uniform()}, {rng.uniform(), rng.uniform()}});
    const auto b = rasterize(t);
    const int c0 = static_cast<int>(std::lround(t.points(0, 0) * 31));
    const int r0 = static_cast<int>(std::lround((1 - t.points(0, 1)) * 31));
    const int c1 = static_cast<int>(std::lround(t.points(1, 0) * 31));
    const int r1 = static_cast<int>(std::lround((1 - t.points(1, 1)) * 31));
    const int dc = c1 - c0, dr = r1 - r0;
    const int steps = std::max(std::abs(dc), std::abs(dr));
    EXPECT_EQ(b.pixels.sum(), steps + 1);
    EXPECT_EQ(b.pixels(r0, c0), 1.0);
    EXPECT_EQ(b.pixels(r1, c1), 1.0);
    for (int r = 0; r < kBitmapSize; ++r) {
      for (int c = 0; c < kBitmapSize; ++c) {
        if (b.pixels(r, c) == 0.0) continue;
        // Distance along the minor axis to the ideal line.
        if (std::abs(dc) >= std::abs(dr)) {
          const double ideal = dc == 0 ? r0 : r0 + static_cast<double>(dr) * (c - c0) / dc;
          EXPECT_LE(std::abs(r - ideal), 0.5 + 1e-12);
        } else {
          const double ideal = c0 + static_cast<double>(dc) * (r - r0) / dr;
          EXPECT_LE(std::abs(c - ideal), 0.5 + 1e-12);
        }
      }
    }
  }
}

TEST(Rasterize, BinaryAndIdempotent) {
  const auto data = synth_dataset(2, 3, {"A", "B", "O", "S", "W"});
  for (const auto& it : data.items) {
    const auto b = rasterize(it.trajectory);
    EXPECT_EQ(b, it.bitmap);
    EXPECT_EQ(rasterize(it.trajectory), b);
    EXPECT_TRUE(((b.pixels.array() == 0.0) || (b.pixels.array() == 1.0)).all());
  }
}

TEST(Rasterize, RejectsOutOfRange) {
  EXPECT_THROW(rasterize(traj({{0, 0}, {1.5, 0}})), ValidationError);
}

TEST(Synth, SameSeedBitIdentical) {
  const std::vector<std::string> cls{"A", "B", "C", "D", "E"};
  EXPECT_EQ(synth_dataset(9, 4, cls), synth_dataset(9, 4, cls));
  EXPECT_NE(synth_dataset(9, 4, cls), synth_dataset(10, 4, cls));
}

TEST(Synth, Counting) {
  const auto d = synth_dataset(1, 10, {"A", "B", "C", "D", "E"});
  EXPECT_EQ(d.size(), 50u);
  EXPECT_EQ(d.labels(), (std::vector<std::string>{"A", "B", "C", "D", "E"}));
  for (const auto& it : d.items) EXPECT_EQ(it.trajectory.length(), kDefaultSeqLen);
}

TEST(Synth, ZeroJitterReproducesTemplate) {
  SynthConfig cfg;
  cfg.scale_jitter = cfg.translate_jitter = cfg.point_noise = 0.0;
  for (const auto& label : supported_classes()) {
    const auto expected = make_item({label, letter_template(label)}, cfg.seq_len);
    for (const auto& it : synth_dataset(4, 3, {label}, cfg).items) EXPECT_EQ(it, expected) << label;
  }
}

TEST(Synth, AllUppercaseLettersSupported) {
  const auto cls = supported_classes();
  ASSERT_EQ(cls.size(), 26u);
  for (char c = 'A'; c <= 'Z'; ++c) EXPECT_NO_THROW(letter_template(std::string(1, c)));
}

TEST(Synth, UnknownClassListsSupported) {
  try {
    synth_dataset(1, 1, {"a"});
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("ABCDEFGHIJKLMNOPQRSTUVWXYZ"), std::string::npos);
  }
}

TEST(Split, CountsAndDeterminism) {
  const auto d = synth_dataset(1, 20, {"A", "B", "C", "D", "E"});
  const auto [tr, te] = split(d, 0.8, 3);
  EXPECT_EQ(tr.size(), 80u);
  EXPECT_EQ(te.size(), 20u);
  EXPECT_EQ(tr.tag, SplitTag::train);
  EXPECT_EQ(te.tag, SplitTag::test);
  const auto [tr2, te2] = split(d, 0.8, 3);
  EXPECT_EQ(tr, tr2);
  EXPECT_EQ(te, te2);
  for (const auto& label : d.labels()) {
    EXPECT_EQ(std::count_if(tr.items.begin(), tr.items.end(),
                            [&](const DatasetItem& it) { return it.label == label; }),
              16);
  }
}

TEST(Split, UnionIsInputMultiset) {
  const auto d = synth_dataset(7, 9, {"K", "M", "N"});
  const auto [tr, te] = split(d, 0.6, 1);
  std::multiset<std::string> in, out;
  const auto key = [](const DatasetItem& it) {
    std::string k = it.label;
    for (Eigen::Index i = 0; i < it.trajectory.points.size(); ++i) {
      k += ',' + std::to_string(it.trajectory.points.data()[i]);
    }
    return k;
  };
  for (const auto& it : d.items) in.insert(key(it));
  for (const auto& it : tr.items) out.insert(key(it));
  for (const auto& it : te.items) out.insert(key(it));
  EXPECT_EQ(in, out);
}

TEST(Split, Errors) {
  const auto d = synth_dataset(1, 1, {"A", "B"});
  EXPECT_THROW(split(d, 0.5, 0), std::invalid_argument);
  const auto ok = synth_dataset(1, 4, {"A"});
  EXPECT_THROW(split(ok, 0.0, 0), std::invalid_argument);
  EXPECT_THROW(split(ok, 1.0, 0), std::invalid_argument);
}

TEST(Split, SamplesFollowDatasetRule) {
  const auto raw = synth_samples(3, 10, {"A", "Z"});
  const auto [tr, te] = split_samples(raw, 0.7, 5);
  const auto [dtr, dte] = split(build_dataset(raw, kDefaultSeqLen), 0.7, 5);
  EXPECT_EQ(build_dataset(tr, kDefaultSeqLen).items, dtr.items);
  EXPECT_EQ(build_dataset(te, kDefaultSeqLen).items, dte.items);
}
