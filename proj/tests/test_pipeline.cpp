#include "sketchteach/pipeline.hpp"
#include "sketchteach/synth.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace sketchteach;
using namespace testsupport;

namespace {

// Sign changes of the finite-difference derivative, ignoring steps below `dead_band`.
int derivative_sign_changes(const std::vector<double>& x, double dead_band) {
  int changes = 0, last = 0;
  for (std::size_t k = 1; k < x.size(); ++k) {
    const double d = x[k] - x[k - 1];
    if (std::abs(d) <= dead_band) continue;
    const int s = d > 0 ? 1 : -1;
    if (last != 0 && s != last) ++changes;
    last = s;
  }
  return changes;
}

PipelineConfig quick_config() {
  PipelineConfig c;
  c.flow.hidden_width = 16;
  c.flow.epochs = 150;
  c.flow.learning_rate = 1e-2;
  c.intersection.grid = 24;
  c.intersection.depth_samples = 24;
  c.intersection.time_samples = 8;
  c.intersection.threads = 2;
  c.fit.steps = 200;
  return c;
}

Scene fixture_scene(FixtureKind kind = FixtureKind::kArc, std::uint64_t seed = 0) {
  SynthOptions opt;
  opt.kind = kind;
  opt.seed = seed;
  const SynthFixture f = synth_fixture(opt);
  return make_scene(f.views, f.sketch_files);
}

}  // namespace

TEST_CASE("noise-free fixture sketches are exact projections of the curve") {
  SynthOptions opt;
  opt.noise = 0.0;
  opt.points_per_sketch = 40;
  const SynthFixture f = synth_fixture(opt);
  REQUIRE(f.views.size() == 3);
  CHECK(f.heldout_ids == std::vector<std::string>{"view3"});
  for (std::size_t v = 0; v < 3; ++v)
    for (const auto& stroke : f.sketch_files[v].strokes) {
      REQUIRE(stroke.size() == 40);
      for (std::size_t k = 0; k < stroke.size(); ++k) {
        const Projection p = project(f.views[v], fixture_curve(FixtureKind::kArc, stroke[k][0]));
        CHECK(stroke[k][1] == p.u);
        CHECK(stroke[k][2] == p.v);
      }
    }
}

TEST_CASE("fixture generation is reproducible per seed") {
  SynthOptions opt;
  opt.seed = 7;
  const SynthFixture a = synth_fixture(opt), b = synth_fixture(opt);
  CHECK(a.sketch_files[1].strokes == b.sketch_files[1].strokes);
  opt.seed = 8;
  CHECK(synth_fixture(opt).sketch_files[1].strokes != a.sketch_files[1].strokes);
  CHECK_THROWS(synth_fixture(SynthOptions{FixtureKind::kArc, -1.0}));
}

TEST_CASE("the letter fixture reverses direction at least twice in one coordinate") {
  SynthOptions opt;
  opt.kind = FixtureKind::kLetterU;
  const SynthFixture f = synth_fixture(opt);
  int best = 0;
  for (int d = 0; d < 3; ++d) {
    std::vector<double> x;
    for (const Vec3& p : f.truth_points) x.push_back(p(d));
    best = std::max(best, derivative_sign_changes(x, 1e-9));
  }
  CHECK(best >= 2);
  CHECK(fixture_kind_from_string("letter") == FixtureKind::kLetterU);
  CHECK_THROWS(fixture_kind_from_string("spiral"));
}

TEST_CASE("fixture directories round trip into a scene") {
  const auto dir = temp_dir("fixture");
  SynthOptions opt;
  opt.sketches_per_view = 2;
  const SynthFixture f = synth_fixture(opt);
  write_fixture_dir(dir, f, opt);
  CHECK(std::filesystem::exists(dir / "truth.json"));
  CHECK(std::filesystem::exists(dir / "images" / "view1.svg"));
  const Scene s = load_scene_dir(dir);
  CHECK(s.views.size() == 3);
  CHECK(s.train_ids() == std::vector<std::string>{"view1", "view2"});
  CHECK(s.heldout_ids() == std::vector<std::string>{"view3"});
  CHECK(s.sketches.at("view2").size() == 2);
  CHECK_NOTHROW(s.validate_for_training());
  std::filesystem::remove_all(dir);
}

TEST_CASE("scenes reject sketches for unknown views and untrained views") {
  const SynthFixture f = synth_fixture(SynthOptions{});
  std::vector<RawSketchFile> files = f.sketch_files;
  files[0].view_id = "nowhere";
  CHECK_THROWS_AS(make_scene(f.views, files), ValidationError);
  Scene s = make_scene(f.views, {f.sketch_files[0]});
  CHECK_THROWS_AS(s.validate_for_training(), ValidationError);
}

TEST_CASE("pipeline config JSON") {
  PipelineConfig c = quick_config();
  c.set_seed(41);
  CHECK(c.flow.seed == 41);
  CHECK(c.fit.seed == 41);
  CHECK(c.eval.seed == 41);
  const PipelineConfig back = pipeline_config_from_json(pipeline_config_to_json(c));
  CHECK(dump_json(pipeline_config_to_json(back)) == dump_json(pipeline_config_to_json(c)));
  CHECK(back.intersection.grid == 24);
  const PipelineConfig seeded = pipeline_config_from_json(Json{{"seed", 5}, {"flow", {{"epochs", 3}}}});
  CHECK(seeded.flow.seed == 5);
  CHECK(seeded.flow.epochs == 3);
  CHECK(seeded.flow.hidden_width == 64);
  const auto errs = [] {
    try {
      pipeline_config_from_json(Json{{"flows", 1}, {"eval", {{"n_sample", 2}}}});
    } catch (const ValidationError& e) {
      return e.errors();
    }
    return std::vector<std::string>{};
  }();
  CHECK(errs.size() == 2);
}

TEST_CASE("a quick pipeline run is deterministic and evaluates the held-out view") {
  const Scene scene = fixture_scene();
  const PipelineConfig cfg = quick_config();
  int calls = 0;
  std::mutex m;
  const PipelineResult a = run_pipeline(scene, cfg, [&](int, int, double) {
    std::lock_guard lock(m);
    ++calls;
  });
  CHECK(calls == 2 * cfg.flow.epochs);
  CHECK(a.flows.size() == 2);
  CHECK(!a.samples.samples.empty());
  REQUIRE(a.reports.size() == 1);
  CHECK(a.reports[0].view_id == "view3");
  CHECK(a.reports[0].methods.size() == 3);

  const auto files_a = pipeline_artifacts(scene, cfg, a);
  const auto files_b = pipeline_artifacts(scene, cfg, run_pipeline(scene, cfg));
  CHECK(files_a == files_b);
  for (const char* name : {"flow_view1.json", "flow_view2.json", "trajectory_model.json", "intersections.json",
                           "losses.json", "report.json", "config.json"})
    CHECK(files_a.count(name) == 1);
  const Json tm = Json::parse(files_a.at("trajectory_model.json"));
  CHECK(tm["pipeline_config"] == pipeline_config_to_json(cfg));

  const std::string table = render_report_table(a.reports, "desk");
  CHECK(table.find("RPTL") != std::string::npos);
  CHECK(table.find("desk/view3") != std::string::npos);
}
