#pragma once

#include "sketchteach/autodiff.hpp"
#include "sketchteach/flow.hpp"
#include "sketchteach/geometry.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>

namespace testsupport {

using namespace sketchteach;

/// Central finite differences of a tape loss, one coordinate at a time.
inline Eigen::VectorXd fd_gradient(const LossFn& loss, const ParamVector& params, double h = 1e-5) {
  Eigen::VectorXd g(params.size());
  ParamVector p = params;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double x0 = p.values()(i);
    p.values()(i) = x0 + h;
    const double up = evaluate(loss, p);
    p.values()(i) = x0 - h;
    const double down = evaluate(loss, p);
    p.values()(i) = x0;
    g(i) = (up - down) / (2 * h);
  }
  return g;
}

/// Largest componentwise relative error; `floor` keeps near-zero components comparable.
inline double max_rel_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-6) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a(i)), std::abs(b(i)), floor});
    worst = std::max(worst, std::abs(a(i) - b(i)) / denom);
  }
  return worst;
}

/// Identity-initialized flow with every parameter perturbed, so all layers act.
inline FlowModel random_flow(std::uint64_t seed, int layers = 6, int hidden = 16, double std = 0.3) {
  FlowConfig cfg;
  cfg.layer_count = layers;
  cfg.hidden_width = hidden;
  cfg.seed = seed;
  FlowModel m = FlowModel::create(cfg);
  std::mt19937_64 rng(seed * 7919 + 1);
  std::normal_distribution<double> n(0.0, std);
  for (Eigen::Index i = 0; i < m.params.size(); ++i) m.params.values()(i) += n(rng);
  return m;
}

inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized().toRotationMatrix();
}

inline ViewCamera random_camera(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_real_distribution<double> f(0.5, 2.0);
  ViewCamera c;
  c.id = "cam";
  c.origin = Vec3(u(rng), u(rng), u(rng));
  c.orientation = random_rotation(rng);
  c.fx = f(rng);
  c.fy = f(rng);
  c.cx = 0.5 + 0.1 * u(rng) / 2.0;
  c.cy = 0.5 + 0.1 * u(rng) / 2.0;
  c.d_near = 0.2;
  c.d_far = 5.0;
  return c;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  const auto p = std::filesystem::temp_directory_path() / ("sketchteach-" + tag + "-" + std::to_string(rng()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testsupport
