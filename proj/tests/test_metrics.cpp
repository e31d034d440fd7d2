#include "sketchteach/metrics.hpp"
#include "metric_oracle.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace sketchteach;
using namespace testsupport;

namespace {

Polyline poly(std::initializer_list<std::initializer_list<double>> rows) {
  Polyline p(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double x : row) p(r, c++) = x;
    ++r;
  }
  return p;
}

ViewCamera forward_camera(const std::string& id, const Vec3& origin = Vec3::Zero()) {
  ViewCamera c;
  c.id = id;
  c.origin = origin;
  c.fx = c.fy = 1.0;
  c.d_near = 0.1;
  c.d_far = 20.0;
  c.image_width_px = 640;
  c.image_height_px = 480;
  return c;
}

TrajectoryDistribution curve_dist(double log_std) {
  TrajectoryDistribution d;
  d.basis = BasisConfig::make(20, 200.0);
  d.means.resize(20, 3);
  for (int m = 0; m < 20; ++m) {
    const double c = d.basis.centers[static_cast<std::size_t>(m)];
    d.means.row(m) << 0.15 * std::sin(3 * c), 0.2 * c - 0.1, 1.0;
  }
  d.log_stds = WeightMatrix::Constant(20, 3, log_std);
  return d;
}

// Held-out sketch tracing the projected mean curve exactly.
SketchTrajectory sketch_of_mean(const TrajectoryDistribution& d, const ViewCamera& cam, int n) {
  SketchTrajectory s{cam.id, {}};
  for (const TimedPoint& p : mean_trajectory(d, n)) {
    const Projection pr = project(cam, p.x);
    s.points.push_back({p.t, pr.u, pr.v});
  }
  return s;
}

}  // namespace

TEST_CASE("frechet analytic cases") {
  const Polyline a = poly({{0, 0}, {1, 0}, {2, 0.5}});
  CHECK(frechet(a, a) == 0.0);
  CHECK(frechet(poly({{0, 0}, {1, 0}}), poly({{0, 0.3}, {1, 0.3}})) == doctest::Approx(0.3).epsilon(1e-15));
  const Polyline p = poly({{0, 0}, {1, 0}}), q = poly({{0, 1}, {2, 1}});
  CHECK(frechet(p, q) == doctest::Approx(coupling_oracle(p, q)).epsilon(1e-15));
  CHECK(frechet(p, q) == doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS_AS(frechet(Polyline(0, 2), a), std::invalid_argument);
  CHECK_THROWS_AS(frechet(a, Polyline::Zero(2, 3)), std::invalid_argument);
}

TEST_CASE("property: frechet equals the exhaustive coupling oracle on small polylines") {
  std::mt19937_64 rng(1);
  for (int n = 1; n <= 5; ++n)
    for (int m = 1; m <= 5; ++m)
      for (int trial = 0; trial < 8; ++trial) {
        const Polyline a = random_poly(rng, n, 1 + trial % 3), b = random_poly(rng, m, 1 + trial % 3);
        const double d = frechet(a, b);
        CHECK(d == coupling_oracle(a, b));
        CHECK(d == frechet(b, a));
        CHECK(d >= (a.row(0) - b.row(0)).norm());
        CHECK(d >= (a.row(n - 1) - b.row(m - 1)).norm());
        if (a != b) CHECK(d > 0.0);
      }
}

TEST_CASE("wasserstein2 analytic cases") {
  const Matrix a = poly({{0, 0}, {1, 2}, {3, 1}});
  CHECK(wasserstein2(WeightedPoints::uniform(a), WeightedPoints::uniform(a)) == doctest::Approx(0.0));
  CHECK(wasserstein2(WeightedPoints::uniform(poly({{0, 0, 0}})), WeightedPoints::uniform(poly({{1, 2, 2}}))) ==
        doctest::Approx(3.0));
  // One point against a weighted pair: every unit of mass goes to the single point.
  WeightedPoints pair{poly({{1, 0}, {0, 2}}), Eigen::Vector2d(0.25, 0.75)};
  CHECK(wasserstein2(WeightedPoints::uniform(poly({{0, 0}})), pair) ==
        doctest::Approx(std::sqrt(0.25 * 1 + 0.75 * 4)).epsilon(1e-14));
  WeightedPoints bad{poly({{1, 0}, {0, 2}}), Eigen::Vector2d(0.5, 0.6)};
  CHECK_THROWS_AS(wasserstein2(bad, pair), std::invalid_argument);
  bad.weights << 1.5, -0.5;
  CHECK_THROWS_AS(wasserstein2(bad, pair), std::invalid_argument);
}

TEST_CASE("property: wasserstein2 equals the permutation oracle on uniform sets up to 8 points") {
  std::mt19937_64 rng(2);
  for (int n = 1; n <= 8; ++n)
    for (int trial = 0; trial < 4; ++trial) {
      const Matrix a = random_poly(rng, n, 2 + trial % 2), b = random_poly(rng, n, 2 + trial % 2);
      CHECK(std::abs(wasserstein2(WeightedPoints::uniform(a), WeightedPoints::uniform(b)) -
                     permutation_oracle(a, b)) < 1e-9);
    }
}

TEST_CASE("wasserstein2 handles unequal set sizes") {
  std::mt19937_64 rng(3);
  const Matrix a = random_poly(rng, 5), b = random_poly(rng, 5);
  Matrix doubled(10, 2);
  doubled << b, b;
  CHECK(std::abs(wasserstein2(WeightedPoints::uniform(a), WeightedPoints::uniform(doubled)) -
                 permutation_oracle(a, b)) < 1e-9);
}

TEST_CASE("property: wasserstein2 satisfies the triangle inequality") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> size(1, 12);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = WeightedPoints::uniform(random_poly(rng, size(rng)));
    const auto b = WeightedPoints::uniform(random_poly(rng, size(rng)));
    const auto c = WeightedPoints::uniform(random_poly(rng, size(rng)));
    CHECK(wasserstein2(a, c) <= wasserstein2(a, b) + wasserstein2(b, c) + 1e-12);
    CHECK(std::abs(wasserstein2(a, b) - wasserstein2(b, a)) < 1e-12);
  }
}

TEST_CASE("linear baseline") {
  const std::vector<Polyline> one{poly({{0.1, 0.2}, {0.5, 0.5}, {0.9, 0.3}})};
  const Polyline l1 = linear_baseline(one, 10);
  REQUIRE(l1.rows() == 10);
  CHECK((l1.row(0) - one[0].row(0)).norm() < 1e-15);
  CHECK((l1.row(9) - one[0].row(2)).norm() < 1e-15);
  const std::vector<Polyline> two{poly({{0, 0}, {2, 0}}), poly({{0, 2}, {1, 5}, {2, 2}})};
  const Polyline l2 = linear_baseline(two, 3);
  CHECK((l2 - poly({{0, 1}, {1, 1}, {2, 1}})).norm() < 1e-15);
  CHECK_THROWS(linear_baseline(std::vector<Polyline>{}, 10));
}

TEST_CASE("nearest-neighbour baseline") {
  TrainingView near{forward_camera("near", Vec3(1, 0, 0)), {poly({{0.1, 0.1}, {0.2, 0.2}})}};
  TrainingView far{forward_camera("far", Vec3(0, 2, 0)), {poly({{0.9, 0.9}, {0.8, 0.8}})}};
  const std::vector<TrainingView> both{far, near};
  CHECK(nn_baseline(both, forward_camera("test"))[0] == near.sketches[0]);
  CHECK(nn_baseline(both, far.camera)[0] == far.sketches[0]);
  CHECK(nn_baseline(std::vector<TrainingView>{far}, forward_camera("test"))[0] == far.sketches[0]);
  CHECK_THROWS(nn_baseline(std::vector<TrainingView>{}, forward_camera("test")));
}

TEST_CASE("width units scale v by the image aspect") {
  ViewCamera cam = forward_camera("w");
  const SketchTrajectory s{"w", {{0, 0.2, 0.4}, {1, 0.6, 0.8}}};
  const Polyline p = sketch_to_width_units(s, cam);
  CHECK(p(0, 0) == 0.2);
  CHECK(p(0, 1) == doctest::Approx(0.4 * 480 / 640));
}

TEST_CASE("held-out sketches equal to the projected mean give zero MFD and WD") {
  const TrajectoryDistribution d = curve_dist(-40.0);
  const ViewCamera cam = forward_camera("heldout");
  const std::vector<SketchTrajectory> tests{sketch_of_mean(d, cam, 100)};
  const EvaluationReport r = evaluate_heldout(d, cam, tests, {});
  CHECK(r.method("RPTL").mfd_mean < 1e-12);
  CHECK(r.method("RPTL").mfd_std < 1e-12);
  CHECK(r.method("RPTL").wd < 1e-9);
  CHECK(r.method("Linear").mfd_mean > 0.01);
  CHECK(r.dropped_fraction == 0.0);
  CHECK(r.methods.size() == 2);
  CHECK_THROWS(r.method("NN"));
}

TEST_CASE("evaluation reports NN when training views are given") {
  const TrajectoryDistribution d = curve_dist(-3.0);
  const ViewCamera cam = forward_camera("heldout");
  const std::vector<SketchTrajectory> tests{sketch_of_mean(d, cam, 80), sketch_of_mean(d, cam, 60)};
  const std::vector<TrainingView> train{{forward_camera("a", Vec3(0.1, 0, 0)), {sketch_to_width_units(tests[0], cam)}}};
  const EvaluationReport r = evaluate_heldout(d, cam, tests, train);
  REQUIRE(r.methods.size() == 3);
  CHECK(r.methods[0].method == "RPTL");
  CHECK(r.methods[2].method == "NN");
  CHECK(r.method("NN").mfd_mean < 1e-2);
  for (const auto& m : r.methods) {
    CHECK(m.mfd_mean >= 0.0);
    CHECK(m.wd >= 0.0);
  }
  EvalConfig cfg;
  cfg.timestamped_wd = true;
  const EvaluationReport timed = evaluate_heldout(d, cam, tests, train, cfg);
  CHECK(timed.method("RPTL").mfd_mean == r.method("RPTL").mfd_mean);
  CHECK(timed.method("RPTL").wd != r.method("RPTL").wd);
}

TEST_CASE("points behind the held-out camera are dropped and counted") {
  TrajectoryDistribution d = curve_dist(-40.0);
  const ViewCamera cam = forward_camera("heldout");
  const std::vector<SketchTrajectory> tests{sketch_of_mean(d, cam, 100)};
  d.means.col(2) = Eigen::VectorXd::LinSpaced(20, 1.0, -1.0);  // the curve crosses the image plane
  const EvaluationReport r = evaluate_heldout(d, cam, tests, {});
  CHECK(r.dropped_fraction > 0.2);
  CHECK(r.dropped_fraction < 0.8);
}

TEST_CASE("property: MFD is invariant to image resolution") {
  const TrajectoryDistribution d = curve_dist(-3.0);
  ViewCamera cam = forward_camera("heldout");
  const std::vector<SketchTrajectory> tests{sketch_of_mean(curve_dist(-2.0), cam, 70)};
  const EvaluationReport base = evaluate_heldout(d, cam, tests, {});
  cam.image_width_px *= 2;
  cam.image_height_px *= 2;
  const EvaluationReport doubled = evaluate_heldout(d, cam, tests, {});
  CHECK(std::abs(base.method("RPTL").mfd_mean - doubled.method("RPTL").mfd_mean) < 1e-12);
  CHECK(std::abs(base.method("Linear").mfd_mean - doubled.method("Linear").mfd_mean) < 1e-12);
}

TEST_CASE("mean_frechet") {
  const Polyline c = poly({{0, 0}, {1, 0}});
  const std::vector<Polyline> tests{poly({{0, 0.1}, {1, 0.1}}), poly({{0, 0.3}, {1, 0.3}})};
  const auto [mean, sd] = mean_frechet(c, tests);
  CHECK(mean == doctest::Approx(0.2));
  CHECK(sd == doctest::Approx(0.1));
}
