// Acceptance run: one PASS/FAIL line per criterion, with the measured value
// and the wall time of the check.

#include "intersect_oracle.hpp"
#include "metric_oracle.hpp"
#include "sketchteach/pipeline.hpp"
#include "sketchteach/synth.hpp"
#include "support.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>

using namespace sketchteach;
using namespace testsupport;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool ok = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, double limit_s, const std::function<Outcome()>& check) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const bool ok = o.ok && secs < limit_s;
  if (!ok) ++failures;
  std::printf("%s  %-34s %s  [%.1f s, limit %.0f s]\n", ok ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs,
              limit_s);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

Scene fixture_scene(FixtureKind kind) {
  SynthOptions opt;
  opt.kind = kind;
  const SynthFixture f = synth_fixture(opt);
  return make_scene(f.views, f.sketch_files);
}

struct Run {
  Scene scene;
  PipelineConfig config;
  PipelineResult result;
  double seconds = 0.0;
};

Run run_fixture(FixtureKind kind) {
  Run r{fixture_scene(kind), PipelineConfig{}, {}, 0.0};
  const auto t0 = Clock::now();
  r.result = run_pipeline(r.scene, r.config);
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

double inversion_error(const FlowModel& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.25, 1.25);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const Vec3 y(u(rng), u(rng), u(rng));
    worst = std::max(worst, (flow_inverse(m, flow_forward(m, y).latent) - y).lpNorm<Eigen::Infinity>());
  }
  return worst;
}

double trapezoid_mass(const FlowModel& m, int n) {
  Matrix pts(n * n * n, 3);
  Eigen::VectorXd w(n * n * n);
  const double h = 1.0 / (n - 1);
  Eigen::Index r = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k, ++r) {
        pts.row(r) << i * h, j * h, k * h;
        const auto end = [n](int a) { return a == 0 || a == n - 1 ? 0.5 : 1.0; };
        w(r) = end(i) * end(j) * end(k) * h * h * h;
      }
  return w.dot(log_density_batch(m, pts).array().exp().matrix());
}

int sign_changes(const std::vector<double>& x) {
  int changes = 0, last = 0;
  for (std::size_t k = 1; k < x.size(); ++k) {
    const double d = x[k] - x[k - 1];
    if (d == 0.0) continue;
    const int s = d > 0 ? 1 : -1;
    if (last != 0 && s != last) ++changes;
    last = s;
  }
  return changes;
}

// Derivative sign changes, where a new direction only counts once the curve has
// moved more than `band` away from the last extremum.
int reversals(const std::vector<double>& x, double band) {
  int changes = 0, dir = 0;
  double lo = x.front(), hi = x.front(), ext = x.front();
  for (double v : x) {
    if (dir == 0) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      if (v - lo > band) dir = 1;
      if (hi - v > band) dir = -1;
      ext = v;
    } else if (dir * (v - ext) > 0) {
      ext = v;
    } else if (std::abs(v - ext) > band) {
      ++changes;
      dir = -dir;
      ext = v;
    }
  }
  return changes;
}

std::vector<Polyline> heldout_polylines(const Scene& scene, const std::string& id) {
  std::vector<Polyline> out;
  for (const auto& s : scene.sketches.at(id)) out.push_back(sketch_to_width_units(s, scene.view(id)));
  return out;
}

}  // namespace

int main() {
  std::printf("running the arc fixture pipeline...\n");
  std::fflush(stdout);
  const Run arc = run_fixture(FixtureKind::kArc);

  report("flow invertibility", 10, [&] {
    double worst = inversion_error(FlowModel::create(FlowConfig{}), 1);
    for (std::uint64_t s = 0; s < 3; ++s) worst = std::max(worst, inversion_error(random_flow(s), 10 + s));
    for (const auto& f : arc.result.flows) worst = std::max(worst, inversion_error(f.model, 20));
    return Outcome{worst < 1e-6, fmt("max err %.2e (< 1e-6)", worst)};
  });

  report("flow normalization", 60, [&] {
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& f : arc.result.flows) {
      const double m = trapezoid_mass(f.model, 32);
      lo = std::min(lo, m);
      hi = std::max(hi, m);
    }
    return Outcome{lo >= 0.9 && hi <= 1.1, fmt("mass in [%.4f, %.4f] (within [0.9, 1.1])", lo, hi)};
  });

  report("gradient correctness", 30, [&] {
    double worst_flow = 0.0, worst_traj = 0.0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const FlowModel m = random_flow(seed, 6, 8);
      std::mt19937_64 rng(seed + 100);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      Matrix pts(10, 3);
      for (Eigen::Index k = 0; k < pts.size(); ++k) pts.data()[k] = u(rng);
      const LossFn fl = [&](Tape& t, const BoundParams& b) { return flow_nll(t, b, m, pts); };
      // Components near 1e-7 sit at the roundoff floor of a 1e-5 step.
      worst_flow = std::max(worst_flow, max_rel_error(grad(fl, m.params).values(), fd_gradient(fl, m.params, 1e-4)));

      std::normal_distribution<double> g(0.0, 1.0);
      const BasisConfig basis = BasisConfig::make(6, 20.0);
      ParamVector p;
      Matrix means(6, 3), log_stds(6, 3);
      for (Eigen::Index k = 0; k < means.size(); ++k) {
        means.data()[k] = g(rng);
        log_stds.data()[k] = -0.5 + 0.3 * g(rng);
      }
      p.add_block("means", means);
      p.add_block("log_stds", log_stds);
      std::vector<TimedPoint> samples;
      for (int k = 0; k < 60; ++k) samples.push_back({(k % 9) / 8.0, Vec3(g(rng), g(rng), g(rng))});
      const GroupedSamples grouped = GroupedSamples::from_points(samples);
      const LossFn tl = [&](Tape& t, const BoundParams& b) { return trajectory_nll(t, b, grouped, basis); };
      worst_traj = std::max(worst_traj, max_rel_error(grad(tl, p).values(), fd_gradient(tl, p)));
    }
    return Outcome{worst_flow < 1e-4 && worst_traj < 1e-4,
                   fmt("flow %.2e, trajectory %.2e (< 1e-4)", worst_flow, worst_traj)};
  });

  report("intersection oracle equivalence", 120, [&] {
    const ViewCamera& c1 = arc.scene.view(arc.scene.train_ids()[0]);
    const ViewCamera& c2 = arc.scene.view(arc.scene.train_ids()[1]);
    const FlowModel& m1 = arc.result.flows[0].model;
    const FlowModel& m2 = arc.result.flows[1].model;
    std::ostringstream out;
    bool ok = true;
    for (const auto& [grid, depth, times] : std::vector<std::array<int, 3>>{{16, 16, 4}, {32, 32, 8}, {64, 64, 8}}) {
      IntersectionConfig cfg;
      cfg.grid = grid;
      cfg.depth_samples = depth;
      cfg.time_samples = times;
      const IntersectionSamples fast = sample_intersections(m1, m2, c1, c2, cfg);
      const auto slow = oracle_samples(m1, m2, c1, c2, cfg, fast.delta);
      const bool same = sorted_keys(fast.samples) == sorted_keys(slow);
      ok = ok && same && !slow.empty();
      out << grid << "x" << grid << "x" << depth << "x" << times << ":" << (same ? "equal" : "DIFFER") << "("
          << slow.size() << ") ";
    }
    return Outcome{ok, out.str()};
  });

  report("conditioning exactness", 5, [&] {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_int_distribution<int> count(2, 30);
    std::uniform_real_distribution<double> gamma(5.0, 400.0);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
      const BasisConfig basis = BasisConfig::make(count(rng), gamma(rng));
      WeightMatrix w(basis.count, 3);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = g(rng);
      const Vec3 x(g(rng), g(rng), g(rng));
      worst = std::max(worst, (eval_trajectory(condition_start(w, basis, x), basis, 0.0) - x).norm());
    }
    return Outcome{worst < 1e-9, fmt("max |xi(0) - x| %.2e (< 1e-9)", worst)};
  });

  report("metric oracles", 30, [&] {
    std::mt19937_64 rng(3);
    int frechet_mismatch = 0, pairs = 0;
    for (int n = 1; n <= 5; ++n)
      for (int m = 1; m <= 5; ++m)
        for (int trial = 0; trial < 20; ++trial, ++pairs) {
          const int dim = 1 + trial % 3;
          const Polyline a = random_poly(rng, n, dim), b = random_poly(rng, m, dim);
          if (frechet(a, b) != coupling_oracle(a, b)) ++frechet_mismatch;
        }
    double worst = 0.0;
    for (int n = 1; n <= 8; ++n)
      for (int trial = 0; trial < 10; ++trial) {
        const int dim = 2 + trial % 2;
        const Matrix a = random_poly(rng, n, dim), b = random_poly(rng, n, dim);
        worst = std::max(worst, std::abs(wasserstein2(WeightedPoints::uniform(a), WeightedPoints::uniform(b)) -
                                         permutation_oracle(a, b)));
      }
    return Outcome{frechet_mismatch == 0 && worst < 1e-9,
                   fmt("frechet mismatches %.0f/%.0f, W2 max err %.2e (< 1e-9)", frechet_mismatch, pairs, worst)};
  });

  report("arc end-to-end", 300, [&] {
    const EvaluationReport& r = arc.result.reports.at(0);
    const MethodScores &rptl = r.method("RPTL"), &lin = r.method("Linear"), &nn = r.method("NN");
    const bool ok = rptl.mfd_mean < 5e-2 && rptl.mfd_mean < lin.mfd_mean && rptl.wd < lin.wd &&
                    rptl.mfd_mean < nn.mfd_mean && rptl.wd < nn.wd && arc.seconds < 300;
    std::ostringstream out;
    out << fmt("MFD RPTL %.4f (< 0.05) Linear %.4f NN %.4f; ", rptl.mfd_mean, lin.mfd_mean, nn.mfd_mean)
        << fmt("WD RPTL %.4f Linear %.4f NN %.4f; ", rptl.wd, lin.wd, nn.wd) << fmt("pipeline %.0f s", arc.seconds);
    return Outcome{ok, out.str()};
  });

  std::printf("running the letter fixture pipeline...\n");
  std::fflush(stdout);
  report("letter fixture", 300, [&] {
    const Run letter = run_fixture(FixtureKind::kLetterU);
    const TrajectoryDistribution& dist = letter.result.fit.dist;
    const std::vector<TimedPoint> mean = mean_trajectory(dist, letter.config.eval.timesteps);

    int dominant = 0;
    double best_range = -1.0;
    std::vector<double> coord;
    for (int c = 0; c < 3; ++c) {
      double lo = INFINITY, hi = -INFINITY;
      for (const auto& p : mean) {
        lo = std::min(lo, p.x(c));
        hi = std::max(hi, p.x(c));
      }
      if (hi - lo > best_range) {
        best_range = hi - lo;
        dominant = c;
      }
    }
    for (const auto& p : mean) coord.push_back(p.x(dominant));
    const int changes = reversals(coord, 0.05 * best_range);
    const int raw = sign_changes(coord);

    const std::string id = letter.scene.heldout_ids().at(0);
    const ViewCamera& cam = letter.scene.view(id);
    const std::vector<Polyline> tests = heldout_polylines(letter.scene, id);
    const double base = mean_frechet(project_curve(mean, cam), tests).first;
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int k = 0; k < 5; ++k) {
      const Vec3 dir = Vec3(g(rng), g(rng), g(rng)).normalized();
      const Vec3 start = mean.front().x + 0.01 * std::cbrt(u(rng)) * dir;
      const WeightMatrix w = condition_start(dist.means, dist.basis, start);
      const auto curve = evaluate_on_grid(w, dist.basis, letter.config.eval.timesteps);
      worst = std::max(worst, mean_frechet(project_curve(curve, cam), tests).first);
    }
    const bool ok = changes == 2 && worst <= 1.5 * base && letter.seconds < 300;
    return Outcome{ok, fmt("reversals %.0f (== 2, raw %.0f); conditioned MFD max %.4f vs unconditioned %.4f", changes,
                           raw, worst, base) + fmt(" (ratio %.2f <= 1.5)", worst / base)};
  });

  std::printf("running the arc fixture pipeline again...\n");
  std::fflush(stdout);
  report("determinism", 600, [&] {
    const Run again = run_fixture(FixtureKind::kArc);
    const auto a = pipeline_artifacts(arc.scene, arc.config, arc.result);
    const auto b = pipeline_artifacts(again.scene, again.config, again.result);
    int differ = 0;
    for (const auto& [name, content] : a)
      if (!b.count(name) || b.at(name) != content) ++differ;
    return Outcome{differ == 0 && a.size() == b.size(),
                   fmt("%.0f of %.0f artifacts differ", differ, static_cast<double>(a.size()))};
  });

  std::printf("%s: %d failing criteria\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
