#include "sketchteach/trajdist.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>

namespace sketchteach {

BasisConfig BasisConfig::make(int count, double gamma) {
  BasisConfig b;
  b.count = count;
  b.gamma = gamma;
  if (count >= 2) b.centers = linspace(0.0, 1.0, count);
  b.validate();
  return b;
}

void BasisConfig::validate() const {
  if (count < 2) throw std::invalid_argument("basis: M must be >= 2");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("basis: gamma must be > 0");
  if (static_cast<int>(centers.size()) != count) throw std::invalid_argument("basis: centers must have M entries");
  if (centers.front() != 0.0 || centers.back() != 1.0)
    throw std::invalid_argument("basis: centers must run from 0 to 1");
  const double step = 1.0 / (count - 1);
  for (int i = 0; i < count; ++i)
    if (std::abs(centers[static_cast<std::size_t>(i)] - i * step) > 1e-12)
      throw std::invalid_argument("basis: centers must be evenly spaced");
}

namespace {

void require_unit_time(double t, const char* op) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::out_of_range(std::string(op) + ": t outside [0,1]");
}

void require_shape(const WeightMatrix& w, const BasisConfig& basis, const char* op) {
  if (w.rows() != basis.count) throw std::invalid_argument(std::string(op) + ": weight rows differ from basis count");
}

}  // namespace

Eigen::VectorXd basis_eval(const BasisConfig& basis, double t) {
  require_unit_time(t, "basis_eval");
  Eigen::VectorXd phi(basis.count);
  for (int i = 0; i < basis.count; ++i) {
    const double d = t - basis.centers[static_cast<std::size_t>(i)];
    phi(i) = std::exp(-basis.gamma * d * d);
  }
  return phi;
}

Matrix basis_matrix(const BasisConfig& basis, std::span<const double> times) {
  Matrix phi(static_cast<Eigen::Index>(times.size()), basis.count);
  for (std::size_t k = 0; k < times.size(); ++k) phi.row(static_cast<Eigen::Index>(k)) = basis_eval(basis, times[k]).transpose();
  return phi;
}

Vec3 eval_trajectory(const WeightMatrix& weights, const BasisConfig& basis, double t) {
  require_shape(weights, basis, "eval_trajectory");
  return weights.transpose() * basis_eval(basis, t);
}

WeightMatrix TrajectoryDistribution::weight_variances() const { return (2.0 * log_stds.array()).exp().matrix(); }

void TrajectoryDistribution::validate() const {
  basis.validate();
  if (means.rows() != basis.count || log_stds.rows() != basis.count)
    throw std::invalid_argument("trajectory distribution: parameter rows differ from basis count");
  if (!means.allFinite() || !log_stds.allFinite())
    throw std::invalid_argument("trajectory distribution: non-finite parameters");
}

Moments conditional_moments(const TrajectoryDistribution& dist, double t) {
  const Eigen::VectorXd phi = basis_eval(dist.basis, t);
  const Eigen::VectorXd phi2 = phi.array().square();
  Moments m;
  m.mean = dist.means.transpose() * phi;
  m.var = (dist.weight_variances().transpose() * phi2).array() + kVarianceFloor;
  return m;
}

GroupedSamples GroupedSamples::from_points(std::span<const TimedPoint> points) {
  // Two-pass centered statistics per exact timestamp.
  std::map<double, std::vector<const TimedPoint*>> groups;
  for (const TimedPoint& p : points) groups[p.t].push_back(&p);
  GroupedSamples g;
  const auto k = static_cast<Eigen::Index>(groups.size());
  g.counts.resize(k);
  g.means.resize(k, 3);
  g.variances.resize(k, 3);
  Eigen::Index row = 0;
  for (const auto& [t, members] : groups) {
    g.times.push_back(t);
    const double n = static_cast<double>(members.size());
    Vec3 mean = Vec3::Zero();
    for (const TimedPoint* p : members) mean += p->x;
    mean /= n;
    Vec3 var = Vec3::Zero();
    for (const TimedPoint* p : members) var += (p->x - mean).cwiseAbs2();
    var /= n;
    g.counts(row) = n;
    g.means.row(row) = mean.transpose();
    g.variances.row(row) = var.transpose();
    ++row;
  }
  return g;
}

Var trajectory_nll(Tape& tape, const BoundParams& params, const GroupedSamples& samples, const BasisConfig& basis) {
  if (samples.times.empty()) throw std::invalid_argument("trajectory_nll: no samples");
  const Matrix phi = basis_matrix(basis, samples.times);
  const Matrix weights = (samples.counts / samples.total_count()).replicate(1, 3);

  tape.set_scope("means");
  const Var mean = affine(tape.constant(phi), params["means"]);
  tape.set_scope("log_stds");
  const Var var = shift(affine(tape.constant(Matrix(phi.array().square())), exp(scale(params["log_stds"], 2.0))),
                        kVarianceFloor);
  tape.set_scope("nll");
  const Var resid2 = add(square(sub(mean, tape.constant(samples.means))), tape.constant(samples.variances));
  const Var log_var = log(var);
  const Var inv_var = exp(scale(log_var, -1.0));
  const Var per_entry = add(scale(log_var, 0.5), scale(mul(resid2, inv_var), 0.5));
  return sum(mul(per_entry, tape.constant(weights)));
}

namespace {

WeightMatrix ridge_init(const GroupedSamples& g, const BasisConfig& basis, double ridge) {
  const Matrix phi = basis_matrix(basis, g.times);
  const Matrix weighted = phi.array().colwise() * g.counts.array();
  Matrix gram = phi.transpose() * weighted;
  gram.diagonal().array() += ridge * g.total_count();
  const Matrix rhs = weighted.transpose() * g.means;
  return gram.ldlt().solve(rhs);
}

}  // namespace

FitResult fit_distribution(std::span<const TimedPoint> points, const BasisConfig& basis, const FitConfig& config) {
  basis.validate();
  if (points.empty()) throw std::invalid_argument("fit_distribution: empty sample set");
  if (config.steps < 0) throw std::invalid_argument("fit_distribution: steps must be >= 0");
  if (!(config.init_std > 0.0)) throw std::invalid_argument("fit_distribution: init_std must be > 0");
  for (const TimedPoint& p : points) {
    require_unit_time(p.t, "fit_distribution");
    if (!p.x.allFinite()) throw std::invalid_argument("fit_distribution: non-finite sample");
  }

  const GroupedSamples groups = GroupedSamples::from_points(points);
  FitResult result;
  result.sample_count = points.size();
  result.narrow_time_support = (groups.times.back() - groups.times.front()) < 0.5;

  ParamVector params;
  params.add_block("means", ridge_init(groups, basis, config.ridge));
  params.add_block("log_stds", Matrix::Constant(basis.count, 3, std::log(config.init_std)));

  const LossFn loss = [&](Tape& tape, const BoundParams& p) { return trajectory_nll(tape, p, groups, basis); };
  OptimizerState opt = OptimizerState::for_params(params, config.adam);
  const ParamVector start = params;
  result.initial_loss = evaluate(loss, params);
  result.loss_curve.reserve(static_cast<std::size_t>(config.steps));
  for (int step = 0; step < config.steps; ++step) {
    ValueAndGrad vg = value_and_grad(loss, params);
    if (!std::isfinite(vg.loss)) throw NonFiniteError("nll", "loss at step " + std::to_string(step));
    result.loss_curve.push_back(vg.loss);
    const double progress = static_cast<double>(step) / std::max(1, config.steps);
    const double lr_scale =
        config.final_lr_fraction + (1.0 - config.final_lr_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    adam_update(opt, params, vg.gradient, lr_scale);
    params.check_finite();
  }
  result.final_loss = evaluate(loss, params);
  if (!(result.final_loss <= result.initial_loss)) {
    params = start;
    result.final_loss = result.initial_loss;
  }

  result.dist.basis = basis;
  result.dist.means = params.block("means");
  result.dist.log_stds = params.block("log_stds");
  return result;
}

FitResult fit_distribution(const IntersectionSamples& samples, const BasisConfig& basis, const FitConfig& config) {
  std::vector<TimedPoint> pts;
  pts.reserve(samples.samples.size());
  for (const Sample& s : samples.samples) pts.push_back({s.t, s.x});
  return fit_distribution(pts, basis, config);
}

WeightMatrix sample_weights(const TrajectoryDistribution& dist, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  WeightMatrix w(dist.means.rows(), 3);
  for (Eigen::Index m = 0; m < w.rows(); ++m)
    for (Eigen::Index n = 0; n < 3; ++n) w(m, n) = dist.means(m, n) + std::exp(dist.log_stds(m, n)) * normal(rng);
  return w;
}

WeightMatrix condition_start(const WeightMatrix& weights, const BasisConfig& basis, const Vec3& x_eef) {
  require_shape(weights, basis, "condition_start");
  const Eigen::VectorXd phi0 = basis_eval(basis, 0.0);
  if (std::abs(phi0(0)) <= 1e-6) throw std::domain_error("condition_start: degenerate first basis value at t=0");
  const Vec3 rest = weights.bottomRows(weights.rows() - 1).transpose() * phi0.tail(phi0.size() - 1);
  WeightMatrix out = weights;
  out.row(0) = ((x_eef - rest) / phi0(0)).transpose();
  return out;
}

std::vector<TimedPoint> evaluate_on_grid(const WeightMatrix& weights, const BasisConfig& basis, int timesteps) {
  if (timesteps < 2) throw std::invalid_argument("timesteps must be >= 2");
  std::vector<TimedPoint> out;
  out.reserve(static_cast<std::size_t>(timesteps));
  for (double t : linspace(0.0, 1.0, timesteps)) out.push_back({t, eval_trajectory(weights, basis, t)});
  return out;
}

std::vector<TimedPoint> sample_trajectory(const TrajectoryDistribution& dist, std::uint64_t seed,
                                          const std::optional<Vec3>& start, int timesteps) {
  if (timesteps < 2) throw std::invalid_argument("sample_trajectory: timesteps must be >= 2");
  WeightMatrix w = sample_weights(dist, seed);
  if (start) w = condition_start(w, dist.basis, *start);
  return evaluate_on_grid(w, dist.basis, timesteps);
}

std::vector<TimedPoint> mean_trajectory(const TrajectoryDistribution& dist, int timesteps) {
  return evaluate_on_grid(dist.means, dist.basis, timesteps);
}

}  // namespace sketchteach
