#pragma once

// Sampling of 3D points where the high-density rays of two views meet.

#include "sketchteach/flow.hpp"
#include "sketchteach/geometry.hpp"

#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace sketchteach {

enum class ThresholdMode {
  kAbsolute,  // keep pixels with p(u,v|t) >= epsilon
  kRelative,  // keep pixels with p(u,v|t) >= relative_fraction * (max of the slice's grid)
};

enum class PairMode {
  kBoth,      // insert both points of every close pair
  kMidpoint,  // insert the midpoint of every close pair
};

struct IntersectionConfig {
  /// Absolute density threshold; 1.0 keeps pixels denser than a uniform density on the image.
  double epsilon = 1.0;
  ThresholdMode threshold_mode = ThresholdMode::kAbsolute;
  double relative_fraction = 0.1;
  /// World-unit distance threshold; <= 0 selects 2 * (d_far - d_near) / depth_samples.
  double delta = 0.0;
  int grid = 64;
  int depth_samples = 64;
  int time_samples = 32;
  PairMode pair_mode = PairMode::kBoth;
  /// Worker threads over time slices; 0 uses the hardware concurrency.
  int threads = 0;

  void validate() const;
};

std::string to_string(ThresholdMode mode);
ThresholdMode threshold_mode_from_string(const std::string& s);
std::string to_string(PairMode mode);
PairMode pair_mode_from_string(const std::string& s);

/// Delta actually used for a camera pair (explicit value or the depth-grid default).
double resolved_delta(const IntersectionConfig& config, const ViewCamera& cam1, const ViewCamera& cam2);

/// Evenly spaced samples on [lo, hi], both ends included.
std::vector<double> linspace(double lo, double hi, int count);

struct Sample {
  double t;
  Vec3 x;
  int source_view;  // 1 or 2; 0 for midpoints
};

struct SliceDiagnostics {
  double t = 0.0;
  std::size_t pixels1 = 0;
  std::size_t pixels2 = 0;
  std::size_t region1 = 0;
  std::size_t region2 = 0;
  std::size_t samples = 0;
  /// Smallest cross-view distance; only computed for slices without samples.
  double min_distance = std::numeric_limits<double>::infinity();
};

struct IntersectionSamples {
  std::vector<Sample> samples;
  /// samples[slice_offsets[k] .. slice_offsets[k+1]) belong to time slice k.
  std::vector<std::size_t> slice_offsets;
  std::vector<double> times;
  std::vector<SliceDiagnostics> diagnostics;
  double delta = 0.0;
};

class NoIntersectionsError : public std::runtime_error {
 public:
  explicit NoIntersectionsError(std::vector<SliceDiagnostics> diagnostics);
  const std::vector<SliceDiagnostics>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<SliceDiagnostics> diagnostics_;
};

/// Grid pixels (u, v) with conditional density at time t above the threshold.
/// Ordered with u index outer and v index inner.
std::vector<Vec2> threshold_pixels(const FlowModel& model, double t, const IntersectionConfig& config);

/// Ray-traces every pixel at `depth_samples` evenly spaced depths, pixel-major.
std::vector<Vec3> trace_region(const ViewCamera& camera, const std::vector<Vec2>& pixels, int depth_samples);

/// Which points of each region have a partner in the other with distance < delta.
struct RegionMatch {
  std::vector<char> matched1;
  std::vector<char> matched2;
  /// Close pairs (i, j), sorted by i then j. Only filled when requested.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

/// Uniform spatial hash over `region2` with cell size slightly above delta.
RegionMatch match_regions(const std::vector<Vec3>& region1, const std::vector<Vec3>& region2, double delta,
                          bool collect_pairs);

/// Exact smallest distance between the two sets (infinity if either is empty).
double min_cross_distance(const std::vector<Vec3>& region1, const std::vector<Vec3>& region2);

IntersectionSamples sample_intersections(const FlowModel& model1, const FlowModel& model2, const ViewCamera& cam1,
                                         const ViewCamera& cam2, const IntersectionConfig& config);

}  // namespace sketchteach
