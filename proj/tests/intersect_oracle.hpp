#pragma once

// Direct scalar re-implementation of the intersection sampler: per-point
// density scan, per-pixel ray tracing and an all-pairs distance test.

#include "sketchteach/intersect.hpp"

#include <algorithm>
#include <tuple>
#include <vector>

namespace testsupport {

using namespace sketchteach;

using SampleKey = std::tuple<double, double, double, double, int>;

inline SampleKey key_of(const Sample& s) { return {s.t, s.x.x(), s.x.y(), s.x.z(), s.source_view}; }

inline std::vector<SampleKey> sorted_keys(const std::vector<Sample>& samples) {
  std::vector<SampleKey> keys;
  keys.reserve(samples.size());
  for (const Sample& s : samples) keys.push_back(key_of(s));
  std::sort(keys.begin(), keys.end());
  return keys;
}

inline double oracle_grid_value(int i, int n, double lo, double hi) { return lo + (hi - lo) * i / (n - 1); }

inline std::vector<Vec2> oracle_pixels(const FlowModel& m, double t, const IntersectionConfig& cfg) {
  const int n = cfg.grid;
  std::vector<double> dens;
  std::vector<Vec2> px;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double u = i == n - 1 ? 1.0 : oracle_grid_value(i, n, 0.0, 1.0);
      const double v = j == n - 1 ? 1.0 : oracle_grid_value(j, n, 0.0, 1.0);
      px.emplace_back(u, v);
      dens.push_back(std::exp(log_density(m, Vec3(t, u, v))));
    }
  double threshold = cfg.epsilon;
  if (cfg.threshold_mode == ThresholdMode::kRelative)
    threshold = cfg.relative_fraction * *std::max_element(dens.begin(), dens.end());
  std::vector<Vec2> out;
  for (std::size_t k = 0; k < px.size(); ++k)
    if (dens[k] >= threshold) out.push_back(px[k]);
  return out;
}

inline std::vector<Vec3> oracle_trace(const ViewCamera& cam, const std::vector<Vec2>& px, int depths) {
  std::vector<Vec3> out;
  for (const Vec2& p : px) {
    const Ray r = pixel_ray(cam, p.x(), p.y());
    for (int k = 0; k < depths; ++k) {
      const double d = k == depths - 1 ? cam.d_far : oracle_grid_value(k, depths, cam.d_near, cam.d_far);
      out.push_back(ray_point(r, d));
    }
  }
  return out;
}

/// All-pairs intersection samples in "both" pair mode.
inline std::vector<Sample> oracle_samples(const FlowModel& m1, const FlowModel& m2, const ViewCamera& c1,
                                          const ViewCamera& c2, const IntersectionConfig& cfg, double delta) {
  std::vector<Sample> out;
  for (int s = 0; s < cfg.time_samples; ++s) {
    const double t = s == cfg.time_samples - 1 ? 1.0 : oracle_grid_value(s, cfg.time_samples, 0.0, 1.0);
    const std::vector<Vec3> r1 = oracle_trace(c1, oracle_pixels(m1, t, cfg), cfg.depth_samples);
    const std::vector<Vec3> r2 = oracle_trace(c2, oracle_pixels(m2, t, cfg), cfg.depth_samples);
    std::vector<char> hit2(r2.size(), 0);
    for (const Vec3& a : r1) {
      bool hit = false;
      for (std::size_t j = 0; j < r2.size(); ++j) {
        if ((a - r2[j]).norm() < delta) {
          hit = true;
          hit2[j] = 1;
        }
      }
      if (hit) out.push_back({t, a, 1});
    }
    for (std::size_t j = 0; j < r2.size(); ++j)
      if (hit2[j]) out.push_back({t, r2[j], 2});
  }
  return out;
}

}  // namespace testsupport
