#pragma once

// Distribution over smooth 3D trajectories xi(t) = W^T Phi(t), with W drawn
// from independent Gaussians per entry and Phi a bank of squared-exponential
// bumps on normalized time.

#include "sketchteach/autodiff.hpp"
#include "sketchteach/geometry.hpp"
#include "sketchteach/intersect.hpp"
#include "sketchteach/optimizer.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace sketchteach {

/// Additive floor on every conditional variance.
inline constexpr double kVarianceFloor = 1e-8;

struct BasisConfig {
  int count = 20;
  double gamma = 200.0;
  std::vector<double> centers;  // evenly spaced on [0,1]

  static BasisConfig make(int count, double gamma);
  void validate() const;
};

using WeightMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3>;

Eigen::VectorXd basis_eval(const BasisConfig& basis, double t);
/// Row k is Phi(times[k])^T.
Matrix basis_matrix(const BasisConfig& basis, std::span<const double> times);

Vec3 eval_trajectory(const WeightMatrix& weights, const BasisConfig& basis, double t);

struct TrajectoryDistribution {
  BasisConfig basis;
  WeightMatrix means;
  WeightMatrix log_stds;

  /// Entry-wise weight variances exp(2 * log_std).
  WeightMatrix weight_variances() const;
  void validate() const;
};

struct Moments {
  Vec3 mean;
  Vec3 var;
};

/// mean = means^T Phi(t); var = Lambda^T Phi(t)^2 + floor.
Moments conditional_moments(const TrajectoryDistribution& dist, double t);

struct TimedPoint {
  double t;
  Vec3 x;
};

/// Samples grouped by identical timestamps: count, centered mean, centered
/// second moment. The grouped NLL equals the per-sample NLL exactly.
struct GroupedSamples {
  std::vector<double> times;
  Eigen::VectorXd counts;
  Matrix means;      // K x 3
  Matrix variances;  // K x 3, population (divide by count)

  static GroupedSamples from_points(std::span<const TimedPoint> points);
  double total_count() const { return counts.sum(); }
};

/// Mean per-sample Gaussian NLL (without the 0.5 log 2 pi constant) on a tape.
/// Expects parameter blocks "means" and "log_stds" (M x 3).
Var trajectory_nll(Tape& tape, const BoundParams& params, const GroupedSamples& samples, const BasisConfig& basis);

struct FitConfig {
  AdamConfig adam{.learning_rate = 1e-2};
  int steps = 3000;
  /// Learning rate decays by a half cosine to this fraction of the initial rate.
  double final_lr_fraction = 0.01;
  double ridge = 1e-6;
  double init_std = 0.05;
  std::uint64_t seed = 0;
};

struct FitResult {
  TrajectoryDistribution dist;
  std::vector<double> loss_curve;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::size_t sample_count = 0;
  /// Set when the sample times cover less than half of [0,1].
  bool narrow_time_support = false;
};

FitResult fit_distribution(std::span<const TimedPoint> points, const BasisConfig& basis, const FitConfig& config);
FitResult fit_distribution(const IntersectionSamples& samples, const BasisConfig& basis, const FitConfig& config);

WeightMatrix sample_weights(const TrajectoryDistribution& dist, std::uint64_t seed);

/// Replaces the first row of W so that xi(0) == x_eef; other rows untouched.
WeightMatrix condition_start(const WeightMatrix& weights, const BasisConfig& basis, const Vec3& x_eef);

std::vector<TimedPoint> evaluate_on_grid(const WeightMatrix& weights, const BasisConfig& basis, int timesteps);

std::vector<TimedPoint> sample_trajectory(const TrajectoryDistribution& dist, std::uint64_t seed,
                                          const std::optional<Vec3>& start, int timesteps);

/// t -> means^T Phi(t) at evenly spaced times.
std::vector<TimedPoint> mean_trajectory(const TrajectoryDistribution& dist, int timesteps);

}  // namespace sketchteach
