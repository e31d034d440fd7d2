#include "sketchteach/intersect.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>

namespace sketchteach {

void IntersectionConfig::validate() const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("intersection: epsilon must be > 0");
  if (!(relative_fraction > 0.0 && relative_fraction <= 1.0))
    throw std::invalid_argument("intersection: relative_fraction must be in (0,1]");
  if (!std::isfinite(delta)) throw std::invalid_argument("intersection: delta must be finite");
  if (grid < 2) throw std::invalid_argument("intersection: grid must be >= 2");
  if (depth_samples < 2) throw std::invalid_argument("intersection: depth_samples must be >= 2");
  if (time_samples < 2) throw std::invalid_argument("intersection: time_samples must be >= 2");
  if (threads < 0) throw std::invalid_argument("intersection: threads must be >= 0");
}

std::string to_string(ThresholdMode mode) { return mode == ThresholdMode::kAbsolute ? "absolute" : "relative"; }

ThresholdMode threshold_mode_from_string(const std::string& s) {
  if (s == "absolute") return ThresholdMode::kAbsolute;
  if (s == "relative") return ThresholdMode::kRelative;
  throw std::invalid_argument("threshold_mode: expected absolute or relative, got \"" + s + "\"");
}

std::string to_string(PairMode mode) { return mode == PairMode::kBoth ? "both" : "midpoint"; }

PairMode pair_mode_from_string(const std::string& s) {
  if (s == "both") return PairMode::kBoth;
  if (s == "midpoint") return PairMode::kMidpoint;
  throw std::invalid_argument("pair_mode: expected both or midpoint, got \"" + s + "\"");
}

double resolved_delta(const IntersectionConfig& config, const ViewCamera& cam1, const ViewCamera& cam2) {
  if (config.delta > 0.0) return config.delta;
  const double span = std::max(cam1.d_far - cam1.d_near, cam2.d_far - cam2.d_near);
  return 2.0 * span / config.depth_samples;
}

std::vector<double> linspace(double lo, double hi, int count) {
  std::vector<double> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (count - 1);
  if (count > 0) out.back() = hi;
  return out;
}

namespace {

std::string describe(const std::vector<SliceDiagnostics>& diags) {
  std::ostringstream os;
  os << "no intersections: widen epsilon or delta;";
  for (const auto& d : diags)
    os << " [t=" << d.t << " |R1|=" << d.region1 << " |R2|=" << d.region2 << " min_dist=" << d.min_distance << "]";
  return os.str();
}

}  // namespace

NoIntersectionsError::NoIntersectionsError(std::vector<SliceDiagnostics> diagnostics)
    : std::runtime_error(describe(diagnostics)), diagnostics_(std::move(diagnostics)) {}

std::vector<Vec2> threshold_pixels(const FlowModel& model, double t, const IntersectionConfig& config) {
  config.validate();
  if (!(t >= 0.0 && t <= 1.0)) throw std::out_of_range("threshold_pixels: t outside [0,1]");
  const int n = config.grid;
  const std::vector<double> axis = linspace(0.0, 1.0, n);
  Matrix pts(static_cast<Eigen::Index>(n) * n, 3);
  Eigen::Index row = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) pts.row(row++) << t, axis[static_cast<std::size_t>(i)], axis[static_cast<std::size_t>(j)];
  const Eigen::VectorXd density = log_density_batch(model, pts).array().exp();

  double threshold = config.epsilon;
  if (config.threshold_mode == ThresholdMode::kRelative) threshold = config.relative_fraction * density.maxCoeff();

  std::vector<Vec2> out;
  for (Eigen::Index k = 0; k < density.size(); ++k)
    if (density(k) >= threshold) out.emplace_back(pts(k, 1), pts(k, 2));
  return out;
}

std::vector<Vec3> trace_region(const ViewCamera& camera, const std::vector<Vec2>& pixels, int depth_samples) {
  const std::vector<double> depths = linspace(camera.d_near, camera.d_far, depth_samples);
  std::vector<Vec3> out;
  out.reserve(pixels.size() * depths.size());
  for (const Vec2& px : pixels) {
    const Ray ray = pixel_ray(camera, px.x(), px.y());
    for (double d : depths) out.push_back(ray_point(ray, d));
  }
  return out;
}

namespace {

struct CellKey {
  std::int64_t x, y, z;
  bool operator==(const CellKey&) const = default;
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ULL;
    h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4FULL + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

CellKey cell_of(const Vec3& p, double inv_cell) {
  return {static_cast<std::int64_t>(std::floor(p.x() * inv_cell)),
          static_cast<std::int64_t>(std::floor(p.y() * inv_cell)),
          static_cast<std::int64_t>(std::floor(p.z() * inv_cell))};
}

}  // namespace

RegionMatch match_regions(const std::vector<Vec3>& region1, const std::vector<Vec3>& region2, double delta,
                          bool collect_pairs) {
  if (!(delta > 0.0)) throw std::invalid_argument("match_regions: delta must be > 0");
  RegionMatch out;
  out.matched1.assign(region1.size(), 0);
  out.matched2.assign(region2.size(), 0);
  if (region1.empty() || region2.empty()) return out;

  // A cell a hair larger than delta keeps every close pair within adjacent cells
  // even after floating-point rounding of the cell coordinates.
  const double inv_cell = 1.0 / (delta * (1.0 + 1e-6));
  std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> cells;
  cells.reserve(region2.size());
  for (std::size_t j = 0; j < region2.size(); ++j) cells[cell_of(region2[j], inv_cell)].push_back(j);

  std::vector<std::size_t> partners;
  for (std::size_t i = 0; i < region1.size(); ++i) {
    const Vec3& p = region1[i];
    const CellKey c = cell_of(p, inv_cell);
    partners.clear();
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          const auto it = cells.find({c.x + dx, c.y + dy, c.z + dz});
          if (it == cells.end()) continue;
          for (std::size_t j : it->second)
            if ((p - region2[j]).norm() < delta) partners.push_back(j);
        }
    if (partners.empty()) continue;
    out.matched1[i] = 1;
    for (std::size_t j : partners) out.matched2[j] = 1;
    if (collect_pairs) {
      std::sort(partners.begin(), partners.end());
      for (std::size_t j : partners) out.pairs.emplace_back(i, j);
    }
  }
  return out;
}

double min_cross_distance(const std::vector<Vec3>& region1, const std::vector<Vec3>& region2) {
  double best = std::numeric_limits<double>::infinity();
  if (region1.empty() || region2.empty()) return best;
  std::vector<Vec3> sorted = region2;
  std::sort(sorted.begin(), sorted.end(), [](const Vec3& a, const Vec3& b) { return a.x() < b.x(); });
  for (const Vec3& p : region1) {
    const auto mid = std::lower_bound(sorted.begin(), sorted.end(), p.x(),
                                      [](const Vec3& a, double x) { return a.x() < x; });
    for (auto it = mid; it != sorted.end() && it->x() - p.x() < best; ++it) best = std::min(best, (p - *it).norm());
    for (auto it = mid; it != sorted.begin();) {
      --it;
      if (p.x() - it->x() >= best) break;
      best = std::min(best, (p - *it).norm());
    }
  }
  return best;
}

namespace {

struct SliceResult {
  std::vector<Sample> samples;
  SliceDiagnostics diag;
};

SliceResult run_slice(const FlowModel& model1, const FlowModel& model2, const ViewCamera& cam1,
                      const ViewCamera& cam2, const IntersectionConfig& config, double t, double delta) {
  SliceResult r;
  r.diag.t = t;
  const std::vector<Vec2> px1 = threshold_pixels(model1, t, config);
  const std::vector<Vec2> px2 = threshold_pixels(model2, t, config);
  const std::vector<Vec3> region1 = trace_region(cam1, px1, config.depth_samples);
  const std::vector<Vec3> region2 = trace_region(cam2, px2, config.depth_samples);
  r.diag.pixels1 = px1.size();
  r.diag.pixels2 = px2.size();
  r.diag.region1 = region1.size();
  r.diag.region2 = region2.size();

  const bool midpoints = config.pair_mode == PairMode::kMidpoint;
  const RegionMatch m = match_regions(region1, region2, delta, midpoints);
  if (midpoints) {
    for (const auto& [i, j] : m.pairs) r.samples.push_back({t, 0.5 * (region1[i] + region2[j]), 0});
  } else {
    for (std::size_t i = 0; i < region1.size(); ++i)
      if (m.matched1[i]) r.samples.push_back({t, region1[i], 1});
    for (std::size_t j = 0; j < region2.size(); ++j)
      if (m.matched2[j]) r.samples.push_back({t, region2[j], 2});
  }
  r.diag.samples = r.samples.size();
  if (r.samples.empty()) r.diag.min_distance = min_cross_distance(region1, region2);
  return r;
}

}  // namespace

IntersectionSamples sample_intersections(const FlowModel& model1, const FlowModel& model2, const ViewCamera& cam1,
                                         const ViewCamera& cam2, const IntersectionConfig& config) {
  config.validate();
  cam1.validate();
  cam2.validate();
  const double delta = resolved_delta(config, cam1, cam2);
  const std::vector<double> times = linspace(0.0, 1.0, config.time_samples);

  std::vector<SliceResult> slices(times.size());
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers =
      std::min<std::size_t>(times.size(), config.threads > 0 ? static_cast<std::size_t>(config.threads) : hw);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t k = next++; k < times.size(); k = next++) {
      try {
        slices[k] = run_slice(model1, model2, cam1, cam2, config, times[k], delta);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  IntersectionSamples out;
  out.times = times;
  out.delta = delta;
  out.slice_offsets.push_back(0);
  for (SliceResult& s : slices) {
    out.samples.insert(out.samples.end(), s.samples.begin(), s.samples.end());
    out.slice_offsets.push_back(out.samples.size());
    out.diagnostics.push_back(s.diag);
  }
  if (out.samples.empty()) throw NoIntersectionsError(out.diagnostics);
  return out;
}

}  // namespace sketchteach
