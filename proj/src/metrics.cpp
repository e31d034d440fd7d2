#include "sketchteach/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sketchteach {

double frechet(const Polyline& a, const Polyline& b) {
  if (a.rows() == 0 || b.rows() == 0) throw std::invalid_argument("frechet: empty polyline");
  if (a.cols() != b.cols()) throw std::invalid_argument("frechet: dimension mismatch");
  if (!a.allFinite() || !b.allFinite()) throw std::invalid_argument("frechet: non-finite coordinates");
  const Eigen::Index n = a.rows(), m = b.rows();
  // Row-by-row DP over the coupling table.
  std::vector<double> prev(static_cast<std::size_t>(m)), cur(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const double d = (a.row(i) - b.row(j)).norm();
      double reach;
      if (i == 0 && j == 0)
        reach = d;
      else if (i == 0)
        reach = cur[static_cast<std::size_t>(j - 1)];
      else if (j == 0)
        reach = prev[0];
      else
        reach = std::min({prev[static_cast<std::size_t>(j)], prev[static_cast<std::size_t>(j - 1)],
                          cur[static_cast<std::size_t>(j - 1)]});
      cur[static_cast<std::size_t>(j)] = std::max(reach, d);
    }
    std::swap(prev, cur);
  }
  return prev[static_cast<std::size_t>(m - 1)];
}

WeightedPoints WeightedPoints::uniform(Matrix points) {
  WeightedPoints w;
  const Eigen::Index n = points.rows();
  w.points = std::move(points);
  w.weights = Eigen::VectorXd::Constant(n, n > 0 ? 1.0 / static_cast<double>(n) : 0.0);
  return w;
}

namespace {

void validate_measure(const WeightedPoints& w, const char* name) {
  if (w.points.rows() == 0) throw std::invalid_argument(std::string("wasserstein2: empty set ") + name);
  if (w.weights.size() != w.points.rows())
    throw std::invalid_argument(std::string("wasserstein2: weight count differs from point count in ") + name);
  if (!w.points.allFinite() || !w.weights.allFinite())
    throw std::invalid_argument(std::string("wasserstein2: non-finite input in ") + name);
  if ((w.weights.array() < 0.0).any())
    throw std::invalid_argument(std::string("wasserstein2: negative weight in ") + name);
  if (std::abs(w.weights.sum() - 1.0) > 1e-9)
    throw std::invalid_argument(std::string("wasserstein2: weights must sum to 1 in ") + name);
}

// Successive shortest augmenting paths with Johnson potentials on the dense
// bipartite transport graph. Node layout: 0 = super source, 1..n sources,
// n+1..n+m sinks, n+m+1 = super sink.
double transport_cost(const Matrix& cost, Eigen::VectorXd supply, Eigen::VectorXd demand) {
  const Eigen::Index n = cost.rows(), m = cost.cols();
  const Eigen::Index nodes = n + m + 2;
  const Eigen::Index src = 0, snk = n + m + 1;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const double tol = 1e-14;

  Matrix flow = Matrix::Zero(n, m);
  Eigen::VectorXd potential = Eigen::VectorXd::Zero(nodes);
  Eigen::VectorXd dist(nodes);
  std::vector<Eigen::Index> parent(static_cast<std::size_t>(nodes));
  std::vector<char> done(static_cast<std::size_t>(nodes));

  // Total supply and demand agree only up to rounding, so stop when either side is exhausted.
  while ((supply.array() > tol).any() && (demand.array() > tol).any()) {
    dist.setConstant(kInf);
    std::fill(done.begin(), done.end(), 0);
    std::fill(parent.begin(), parent.end(), -1);
    dist(src) = 0.0;
    auto relax = [&](Eigen::Index from, Eigen::Index to, double c) {
      const double rc = std::max(0.0, c + potential(from) - potential(to));
      const double nd = dist(from) + rc;
      if (nd < dist(to)) {
        dist(to) = nd;
        parent[static_cast<std::size_t>(to)] = from;
      }
    };
    for (;;) {
      Eigen::Index u = -1;
      double best = kInf;
      for (Eigen::Index v = 0; v < nodes; ++v)
        if (!done[static_cast<std::size_t>(v)] && dist(v) < best) {
          best = dist(v);
          u = v;
        }
      if (u < 0) break;
      done[static_cast<std::size_t>(u)] = 1;
      if (u == src) {
        for (Eigen::Index i = 0; i < n; ++i)
          if (supply(i) > tol) relax(src, 1 + i, 0.0);
      } else if (u <= n) {
        const Eigen::Index i = u - 1;
        for (Eigen::Index j = 0; j < m; ++j) relax(u, 1 + n + j, cost(i, j));
      } else if (u < snk) {
        const Eigen::Index j = u - 1 - n;
        for (Eigen::Index i = 0; i < n; ++i)
          if (flow(i, j) > tol) relax(u, 1 + i, -cost(i, j));
        if (demand(j) > tol) relax(u, snk, 0.0);
      }
    }
    if (!std::isfinite(dist(snk))) throw std::runtime_error("wasserstein2: transport graph disconnected");
    for (Eigen::Index v = 0; v < nodes; ++v)
      if (std::isfinite(dist(v))) potential(v) += dist(v);

    // Bottleneck along the path, then push.
    double push = kInf;
    for (Eigen::Index v = snk; v != src; v = parent[static_cast<std::size_t>(v)]) {
      const Eigen::Index p = parent[static_cast<std::size_t>(v)];
      if (v == snk)
        push = std::min(push, demand(p - 1 - n));
      else if (p == src)
        push = std::min(push, supply(v - 1));
      else if (p > n)  // sink -> source: cancel existing flow
        push = std::min(push, flow(v - 1, p - 1 - n));
    }
    for (Eigen::Index v = snk; v != src; v = parent[static_cast<std::size_t>(v)]) {
      const Eigen::Index p = parent[static_cast<std::size_t>(v)];
      if (v == snk)
        demand(p - 1 - n) -= push;
      else if (p == src)
        supply(v - 1) -= push;
      else if (p <= n)
        flow(p - 1, v - 1 - n) += push;
      else
        flow(v - 1, p - 1 - n) -= push;
    }
  }
  return std::max(0.0, (flow.array() * cost.array()).sum());
}

}  // namespace

double wasserstein2(const WeightedPoints& a, const WeightedPoints& b) {
  validate_measure(a, "a");
  validate_measure(b, "b");
  if (a.points.cols() != b.points.cols()) throw std::invalid_argument("wasserstein2: dimension mismatch");
  Matrix cost(a.points.rows(), b.points.rows());
  for (Eigen::Index i = 0; i < cost.rows(); ++i)
    for (Eigen::Index j = 0; j < cost.cols(); ++j) cost(i, j) = (a.points.row(i) - b.points.row(j)).squaredNorm();
  // Rescale to exact unit mass so rounding in the inputs cannot strand supply.
  return std::sqrt(transport_cost(cost, a.weights / a.weights.sum(), b.weights / b.weights.sum()));
}

Polyline linear_baseline(std::span<const Polyline> tests, int points) {
  if (tests.empty()) throw std::invalid_argument("linear_baseline: no test trajectories");
  if (points < 2) throw std::invalid_argument("linear_baseline: need at least 2 points");
  const Eigen::Index dim = tests.front().cols();
  Eigen::RowVectorXd start = Eigen::RowVectorXd::Zero(dim), end = Eigen::RowVectorXd::Zero(dim);
  for (const Polyline& p : tests) {
    if (p.rows() < 2 || p.cols() != dim) throw std::invalid_argument("linear_baseline: malformed test trajectory");
    start += p.row(0);
    end += p.row(p.rows() - 1);
  }
  start /= static_cast<double>(tests.size());
  end /= static_cast<double>(tests.size());
  Polyline out(points, dim);
  for (int k = 0; k < points; ++k) {
    const double s = static_cast<double>(k) / (points - 1);
    out.row(k) = (1.0 - s) * start + s * end;
  }
  out.row(points - 1) = end;
  return out;
}

std::vector<Polyline> nn_baseline(std::span<const TrainingView> train_views, const ViewCamera& test_view) {
  if (train_views.empty()) throw std::invalid_argument("nn_baseline: no training views");
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < train_views.size(); ++k) {
    const double d = (train_views[k].camera.origin - test_view.origin).norm();
    if (d < best_dist) {
      best_dist = d;
      best = k;
    }
  }
  return train_views[best].sketches;
}

Polyline sketch_to_width_units(const SketchTrajectory& sketch, const ViewCamera& camera) {
  const double aspect = static_cast<double>(camera.image_height_px) / camera.image_width_px;
  Polyline out(static_cast<Eigen::Index>(sketch.points.size()), 2);
  for (std::size_t k = 0; k < sketch.points.size(); ++k)
    out.row(static_cast<Eigen::Index>(k)) << sketch.points[k].u, sketch.points[k].v * aspect;
  return out;
}

namespace {

Polyline sketch_features(const SketchTrajectory& sketch, const ViewCamera& camera, bool with_time) {
  Polyline xy = sketch_to_width_units(sketch, camera);
  if (!with_time) return xy;
  Polyline out(xy.rows(), 3);
  out.leftCols(2) = xy;
  for (std::size_t k = 0; k < sketch.points.size(); ++k) out(static_cast<Eigen::Index>(k), 2) = sketch.points[k].t;
  return out;
}

Matrix pool(std::span<const Polyline> curves) {
  Eigen::Index rows = 0;
  for (const auto& c : curves) rows += c.rows();
  Matrix out(rows, curves.empty() ? 0 : curves.front().cols());
  Eigen::Index r = 0;
  for (const auto& c : curves) {
    out.middleRows(r, c.rows()) = c;
    r += c.rows();
  }
  return out;
}

// Appends a time column running 0..1 to a resampled polyline.
Polyline with_uniform_time(const Polyline& p) {
  Polyline out(p.rows(), p.cols() + 1);
  out.leftCols(p.cols()) = p;
  for (Eigen::Index k = 0; k < p.rows(); ++k)
    out(k, p.cols()) = p.rows() > 1 ? static_cast<double>(k) / static_cast<double>(p.rows() - 1) : 0.0;
  return out;
}

}  // namespace

Polyline project_curve(const std::vector<TimedPoint>& curve, const ViewCamera& camera, std::size_t* dropped,
                       bool with_time) {
  const double aspect = static_cast<double>(camera.image_height_px) / camera.image_width_px;
  std::vector<Eigen::RowVector3d> rows;
  rows.reserve(curve.size());
  std::size_t lost = 0;
  for (const TimedPoint& p : curve) {
    try {
      const Projection pr = project(camera, p.x);
      rows.emplace_back(pr.u, pr.v * aspect, p.t);
    } catch (const BehindCameraError&) {
      ++lost;
    }
  }
  if (dropped) *dropped += lost;
  const Eigen::Index cols = with_time ? 3 : 2;
  Polyline out(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = rows[k].leftCols(cols);
  return out;
}

std::pair<double, double> mean_frechet(const Polyline& curve, std::span<const Polyline> tests) {
  if (tests.empty()) throw std::invalid_argument("mean_frechet: no test trajectories");
  std::vector<double> d;
  d.reserve(tests.size());
  for (const Polyline& t : tests) d.push_back(frechet(curve, t));
  double mean = 0.0;
  for (double x : d) mean += x;
  mean /= static_cast<double>(d.size());
  double var = 0.0;
  for (double x : d) var += (x - mean) * (x - mean);
  var /= static_cast<double>(d.size());
  return {mean, std::sqrt(var)};
}

const MethodScores& EvaluationReport::method(const std::string& name) const {
  for (const auto& m : methods)
    if (m.method == name) return m;
  throw std::out_of_range("evaluation report: no method '" + name + "'");
}

EvaluationReport evaluate_heldout(const TrajectoryDistribution& dist, const ViewCamera& heldout,
                                  const std::vector<SketchTrajectory>& heldout_sketches,
                                  std::span<const TrainingView> train_views, const EvalConfig& config) {
  if (heldout_sketches.empty()) throw std::invalid_argument("evaluate_heldout: no held-out sketches");
  if (config.n_samples < 1) throw std::invalid_argument("evaluate_heldout: n_samples must be >= 1");
  dist.validate();
  heldout.validate();
  const bool wt = config.timestamped_wd;

  std::vector<Polyline> tests, test_features;
  for (const auto& s : heldout_sketches) {
    tests.push_back(sketch_to_width_units(s, heldout));
    test_features.push_back(sketch_features(s, heldout, wt));
  }
  const WeightedPoints test_pool = WeightedPoints::uniform(pool(test_features));

  EvaluationReport report;
  report.view_id = heldout.id;
  report.config = config;

  std::size_t evaluated = 0, dropped = 0;
  const std::vector<TimedPoint> mean_curve = mean_trajectory(dist, config.timesteps);
  evaluated += mean_curve.size();
  const Polyline mean_proj = project_curve(mean_curve, heldout, &dropped);
  if (mean_proj.rows() == 0) throw std::domain_error("evaluate_heldout: mean curve entirely behind the camera");
  MethodScores rptl{"RPTL"};
  std::tie(rptl.mfd_mean, rptl.mfd_std) = mean_frechet(mean_proj, tests);

  std::vector<Polyline> sampled;
  for (int s = 0; s < config.n_samples; ++s) {
    const auto traj = sample_trajectory(dist, config.seed + static_cast<std::uint64_t>(s), std::nullopt, config.timesteps);
    evaluated += traj.size();
    Polyline p = project_curve(traj, heldout, &dropped, wt);
    if (p.rows() > 0) sampled.push_back(std::move(p));
  }
  if (sampled.empty()) throw std::domain_error("evaluate_heldout: all sampled points behind the camera");
  rptl.wd = wasserstein2(WeightedPoints::uniform(pool(sampled)), test_pool);
  report.methods.push_back(rptl);
  report.dropped_fraction = static_cast<double>(dropped) / static_cast<double>(evaluated);

  MethodScores linear{"Linear"};
  const Polyline line = linear_baseline(tests, config.timesteps);
  std::tie(linear.mfd_mean, linear.mfd_std) = mean_frechet(line, tests);
  const Polyline line_features = wt ? with_uniform_time(line) : line;
  linear.wd = wasserstein2(WeightedPoints::uniform(line_features), test_pool);
  report.methods.push_back(linear);

  if (!train_views.empty()) {
    // The nearest view's sketches are reused verbatim as test-view coordinates.
    std::size_t nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < train_views.size(); ++k) {
      const double d = (train_views[k].camera.origin - heldout.origin).norm();
      if (d < best) {
        best = d;
        nearest = k;
      }
    }
    const std::vector<Polyline> predicted = nn_baseline(train_views, heldout);
    if (predicted.empty()) throw std::invalid_argument("evaluate_heldout: nearest training view has no sketches");
    const double aspect_train =
        static_cast<double>(train_views[nearest].camera.image_height_px) / train_views[nearest].camera.image_width_px;
    const double aspect_test = static_cast<double>(heldout.image_height_px) / heldout.image_width_px;
    std::vector<Polyline> pred_units, pred_features;
    for (const Polyline& p : predicted) {
      Polyline q = p;
      q.col(1) *= aspect_test / aspect_train;
      pred_units.push_back(q);
      pred_features.push_back(wt ? with_uniform_time(q) : q);
    }
    std::vector<double> per_test;
    for (const Polyline& t : tests) {
      double acc = 0.0;
      for (const Polyline& p : pred_units) acc += frechet(p, t);
      per_test.push_back(acc / static_cast<double>(pred_units.size()));
    }
    MethodScores nn{"NN"};
    for (double x : per_test) nn.mfd_mean += x;
    nn.mfd_mean /= static_cast<double>(per_test.size());
    for (double x : per_test) nn.mfd_std += (x - nn.mfd_mean) * (x - nn.mfd_mean);
    nn.mfd_std = std::sqrt(nn.mfd_std / static_cast<double>(per_test.size()));
    nn.wd = wasserstein2(WeightedPoints::uniform(pool(pred_features)), test_pool);
    report.methods.push_back(nn);
  }
  return report;
}

}  // namespace sketchteach
