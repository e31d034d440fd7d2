#include "sketchteach/sketch.hpp"

#include <cmath>
#include <stdexcept>

namespace sketchteach {

std::string to_string(TimeMode mode) { return mode == TimeMode::kArcLength ? "arclength" : "recorded"; }

TimeMode time_mode_from_string(const std::string& s) {
  if (s == "arclength") return TimeMode::kArcLength;
  if (s == "recorded") return TimeMode::kRecorded;
  throw std::invalid_argument("time_mode: expected \"arclength\" or \"recorded\", got \"" + s + "\"");
}

namespace {

bool in_unit(double x) { return x >= 0.0 && x <= 1.0; }

}  // namespace

void SketchTrajectory::validate() const {
  if (points.size() < 2) throw std::invalid_argument("sketch: length l >= 2 required");
  if (points.front().t != 0.0 || points.back().t != 1.0)
    throw std::invalid_argument("sketch: t must start at 0 and end at 1");
  for (std::size_t k = 0; k < points.size(); ++k) {
    const SketchPoint& p = points[k];
    if (!in_unit(p.t) || !in_unit(p.u) || !in_unit(p.v))
      throw std::invalid_argument("sketch: point " + std::to_string(k) + " has a coordinate outside [0,1]");
    if (k > 0 && !(p.t > points[k - 1].t))
      throw std::invalid_argument("sketch: t non-monotonic at point " + std::to_string(k));
  }
}

SketchTrajectory normalize_stroke(const std::string& view_id, const std::vector<std::array<double, 3>>& raw,
                                  TimeMode mode) {
  if (raw.size() < 2) throw std::invalid_argument("sketch: length l >= 2 required");
  for (std::size_t k = 0; k < raw.size(); ++k) {
    const auto& p = raw[k];
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2]))
      throw std::invalid_argument("sketch: point " + std::to_string(k) + " is non-finite");
    if (!in_unit(p[1]) || !in_unit(p[2]))
      throw std::invalid_argument("sketch: point " + std::to_string(k) + " has (u,v) outside [0,1]");
  }

  SketchTrajectory out;
  out.view_id = view_id;
  if (mode == TimeMode::kRecorded) {
    for (std::size_t k = 1; k < raw.size(); ++k)
      if (!(raw[k][0] > raw[k - 1][0]))
        throw std::invalid_argument("sketch: t non-monotonic at point " + std::to_string(k));
    const double t0 = raw.front()[0];
    const double span = raw.back()[0] - t0;
    out.points.reserve(raw.size());
    for (const auto& p : raw) out.points.push_back({(p[0] - t0) / span, p[1], p[2]});
  } else {
    // Repeated samples carry no arc length; keep the first of each run.
    std::vector<std::array<double, 3>> pts;
    pts.reserve(raw.size());
    for (const auto& p : raw)
      if (pts.empty() || p[1] != pts.back()[1] || p[2] != pts.back()[2]) pts.push_back(p);
    if (pts.size() < 2) throw std::invalid_argument("sketch: length l >= 2 required (stroke has zero length)");
    std::vector<double> s(pts.size(), 0.0);
    for (std::size_t k = 1; k < pts.size(); ++k)
      s[k] = s[k - 1] + std::hypot(pts[k][1] - pts[k - 1][1], pts[k][2] - pts[k - 1][2]);
    out.points.reserve(pts.size());
    for (std::size_t k = 0; k < pts.size(); ++k) out.points.push_back({s[k] / s.back(), pts[k][1], pts[k][2]});
  }
  out.points.front().t = 0.0;
  out.points.back().t = 1.0;
  out.validate();
  return out;
}

}  // namespace sketchteach
