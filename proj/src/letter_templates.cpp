#include "crossvae/stroke_data.hpp"

#include <cmath>
#include <numbers>

namespace crossvae {

namespace {

Stroke ellipse(double cx, double cy, double rx, double ry, double start_deg, double sweep_deg,
               int segments) {
  Stroke s;
  for (int i = 0; i <= segments; ++i) {
    const double a = (start_deg + sweep_deg * i / segments) * std::numbers::pi / 180.0;
    s.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
  return s;
}

std::vector<std::pair<std::string, std::vector<Stroke>>> build_templates() {
  std::vector<std::pair<std::string, std::vector<Stroke>>> t;
  // Stroke order and direction follow common pen habits for print capitals.
  t.push_back({"A", {{{0, 0}, {0.5, 1}, {1, 0}}, {{0.22, 0.42}, {0.78, 0.42}}}});
  t.push_back({"B",
               {{{0, 0}, {0, 1}},
                {{0, 1}, {0.6, 1}, {0.8, 0.9}, {0.8, 0.62}, {0.6, 0.52}, {0, 0.52}},
                {{0.6, 0.52}, {0.88, 0.4}, {0.88, 0.12}, {0.65, 0}, {0, 0}}}});
  t.push_back({"C", {ellipse(0.5, 0.5, 0.5, 0.5, 45, 270, 12)}});
  t.push_back({"D", {{{0, 0}, {0, 1}}, {{0, 1}, {0.5, 1}, {0.9, 0.75}, {0.9, 0.25}, {0.5, 0}, {0, 0}}}});
  t.push_back({"E", {{{1, 1}, {0, 1}, {0, 0}, {1, 0}}, {{0, 0.5}, {0.7, 0.5}}}});
  t.push_back({"F", {{{1, 1}, {0, 1}, {0, 0}}, {{0, 0.5}, {0.7, 0.5}}}});
  {
    Stroke g = ellipse(0.5, 0.5, 0.5, 0.5, 45, 315, 14);
    g.push_back({0.55, 0.5});
    t.push_back({"G", {g}});
  }
  t.push_back({"H", {{{0, 1}, {0, 0}}, {{1, 1}, {1, 0}}, {{0, 0.5}, {1, 0.5}}}});
  t.push_back({"I", {{{0.2, 1}, {0.8, 1}}, {{0.5, 1}, {0.5, 0}}, {{0.2, 0}, {0.8, 0}}}});
  t.push_back({"J", {{{0.3, 1}, {1, 1}}, {{0.75, 1}, {0.75, 0.2}, {0.55, 0}, {0.2, 0}, {0, 0.2}}}});
  t.push_back({"K", {{{0, 1}, {0, 0}}, {{0.9, 1}, {0, 0.4}}, {{0.25, 0.6}, {1, 0}}}});
  t.push_back({"L", {{{0, 1}, {0, 0}, {0.9, 0}}}});
  t.push_back({"M", {{{0, 0}, {0, 1}, {0.5, 0.35}, {1, 1}, {1, 0}}}});
  t.push_back({"N", {{{0, 0}, {0, 1}, {1, 0}, {1, 1}}}});
  t.push_back({"O", {ellipse(0.5, 0.5, 0.45, 0.5, 90, 360, 16)}});
  t.push_back({"P", {{{0, 0}, {0, 1}, {0.7, 1}, {0.9, 0.85}, {0.9, 0.6}, {0.7, 0.45}, {0, 0.45}}}});
  t.push_back({"Q", {ellipse(0.5, 0.5, 0.45, 0.5, 90, 360, 16), {{0.6, 0.3}, {1, 0}}}});
  t.push_back({"R",
               {{{0, 0}, {0, 1}, {0.7, 1}, {0.9, 0.85}, {0.9, 0.6}, {0.7, 0.45}, {0, 0.45}},
                {{0.4, 0.45}, {0.9, 0}}}});
  t.push_back({"S",
               {{{1, 0.85}, {0.75, 1}, {0.25, 1}, {0, 0.8}, {0.2, 0.55}, {0.8, 0.45}, {1, 0.2},
                 {0.75, 0}, {0.25, 0}, {0, 0.15}}}});
  t.push_back({"T", {{{0, 1}, {1, 1}}, {{0.5, 1}, {0.5, 0}}}});
  t.push_back({"U", {{{0, 1}, {0, 0.25}, {0.25, 0}, {0.75, 0}, {1, 0.25}, {1, 1}}}});
  t.push_back({"V", {{{0, 1}, {0.5, 0}, {1, 1}}}});
  t.push_back({"W", {{{0, 1}, {0.25, 0}, {0.5, 0.6}, {0.75, 0}, {1, 1}}}});
  t.push_back({"X", {{{0, 1}, {1, 0}}, {{1, 1}, {0, 0}}}});
  t.push_back({"Y", {{{0, 1}, {0.5, 0.5}, {1, 1}}, {{0.5, 0.5}, {0.5, 0}}}});
  t.push_back({"Z", {{{0, 1}, {1, 1}, {0, 0}, {1, 0}}}});
  return t;
}

}  // namespace

const std::vector<std::pair<std::string, std::vector<Stroke>>>& letter_templates() {
  static const auto templates = build_templates();
  return templates;
}

}  // namespace crossvae
