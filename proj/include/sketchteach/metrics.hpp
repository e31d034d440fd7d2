#pragma once

// Curve and distribution distances plus the held-out-view evaluation protocol.

#include "sketchteach/geometry.hpp"
#include "sketchteach/sketch.hpp"
#include "sketchteach/trajdist.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sketchteach {

/// Rows are points (2D view space or 3D task space).
using Polyline = Matrix;

/// Discrete Frechet distance with Euclidean ground metric.
double frechet(const Polyline& a, const Polyline& b);

struct WeightedPoints {
  Matrix points;  // rows are points
  Eigen::VectorXd weights;

  static WeightedPoints uniform(Matrix points);
};

/// Exact 2-Wasserstein distance (squared-Euclidean ground cost, min-cost flow).
double wasserstein2(const WeightedPoints& a, const WeightedPoints& b);

/// Straight segment from the mean test start to the mean test end.
Polyline linear_baseline(std::span<const Polyline> tests, int points = 100);

struct TrainingView {
  ViewCamera camera;
  std::vector<Polyline> sketches;
};

/// Sketches of the training view whose camera origin is nearest to the test camera.
std::vector<Polyline> nn_baseline(std::span<const TrainingView> train_views, const ViewCamera& test_view);

/// Sketch as rows of (u, v * H / W): pixel coordinates divided by the image width.
Polyline sketch_to_width_units(const SketchTrajectory& sketch, const ViewCamera& camera);

struct MethodScores {
  std::string method;
  double mfd_mean = 0.0;
  double mfd_std = 0.0;
  double wd = 0.0;
};

struct EvalConfig {
  int n_samples = 5;
  int timesteps = 100;
  std::uint64_t seed = 0;
  /// Include normalized time as an extra coordinate in the Wasserstein operands.
  bool timestamped_wd = false;
};

struct EvaluationReport {
  std::string view_id;
  std::vector<MethodScores> methods;  // "RPTL" first, then baselines
  /// Fraction of evaluated 3D points dropped for lying behind the camera.
  double dropped_fraction = 0.0;
  EvalConfig config;

  const MethodScores& method(const std::string& name) const;
};

/// Projected mean curve in width units; `dropped` counts behind-camera points.
Polyline project_curve(const std::vector<TimedPoint>& curve, const ViewCamera& camera, std::size_t* dropped = nullptr,
                       bool with_time = false);

/// Scores RPTL on a held-out view. Linear is always reported; NN is added when
/// `train_views` is non-empty.
EvaluationReport evaluate_heldout(const TrajectoryDistribution& dist, const ViewCamera& heldout,
                                  const std::vector<SketchTrajectory>& heldout_sketches,
                                  std::span<const TrainingView> train_views, const EvalConfig& config = {});

/// Mean and population std of Frechet distances between `curve` and each test.
std::pair<double, double> mean_frechet(const Polyline& curve, std::span<const Polyline> tests);

}  // namespace sketchteach
