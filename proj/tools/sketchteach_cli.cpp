#include "sketchteach/http_api.hpp"
#include "sketchteach/pipeline.hpp"
#include "sketchteach/session.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <optional>

using namespace sketchteach;
namespace fs = std::filesystem;

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<int> hidden_width;
  std::optional<int> grid;
  std::optional<int> depth_samples;
  std::optional<int> time_samples;
  std::optional<double> epsilon;
  std::optional<std::string> threshold_mode;
  std::optional<double> relative_fraction;
  std::optional<double> delta;
  std::optional<std::string> pair_mode;
  std::optional<int> threads;
  std::optional<int> basis_count;
  std::optional<double> gamma;
  std::optional<int> fit_steps;
  std::optional<int> eval_samples;
  bool timestamped_wd = false;

  void add_to(CLI::App* app) {
    app->add_option("--seed", seed, "Seed for every stochastic stage");
    app->add_option("--epochs", epochs, "Flow training epochs");
    app->add_option("--hidden-width", hidden_width, "Flow subnetwork width");
    app->add_option("--grid", grid, "Pixel grid side for thresholding");
    app->add_option("--depth-samples", depth_samples, "Depths per ray");
    app->add_option("--time-samples", time_samples, "Time slices");
    app->add_option("--epsilon", epsilon, "Density threshold");
    app->add_option("--threshold-mode", threshold_mode, "absolute or relative");
    app->add_option("--relative-fraction", relative_fraction, "Fraction of the slice maximum in relative mode");
    app->add_option("--delta", delta, "Intersection distance (0 picks it from the depth step)");
    app->add_option("--pair-mode", pair_mode, "both or midpoint");
    app->add_option("--threads", threads, "Worker threads for intersection (0 = all cores)");
    app->add_option("--basis-count", basis_count, "Number of basis functions");
    app->add_option("--gamma", gamma, "Basis bandwidth");
    app->add_option("--fit-steps", fit_steps, "Trajectory fit iterations");
    app->add_option("--eval-samples", eval_samples, "Trajectories sampled for WD");
    app->add_flag("--timestamped-wd", timestamped_wd, "Include time in WD operands");
  }

  void apply(PipelineConfig& c) const {
    if (seed) c.set_seed(*seed);
    if (epochs) c.flow.epochs = *epochs;
    if (hidden_width) c.flow.hidden_width = *hidden_width;
    if (grid) c.intersection.grid = *grid;
    if (depth_samples) c.intersection.depth_samples = *depth_samples;
    if (time_samples) c.intersection.time_samples = *time_samples;
    if (epsilon) c.intersection.epsilon = *epsilon;
    if (threshold_mode) c.intersection.threshold_mode = threshold_mode_from_string(*threshold_mode);
    if (relative_fraction) c.intersection.relative_fraction = *relative_fraction;
    if (delta) c.intersection.delta = *delta;
    if (pair_mode) c.intersection.pair_mode = pair_mode_from_string(*pair_mode);
    if (threads) c.intersection.threads = *threads;
    if (basis_count || gamma) c.basis = BasisConfig::make(basis_count.value_or(c.basis.count), gamma.value_or(c.basis.gamma));
    if (fit_steps) c.fit.steps = *fit_steps;
    if (eval_samples) c.eval.n_samples = *eval_samples;
    if (timestamped_wd) c.eval.timestamped_wd = true;
    c.validate();
  }
};

struct SceneArgs {
  std::string scene_dir;
  std::string manifest;
  std::vector<std::string> sketches;

  void add_to(CLI::App* app) {
    app->add_option("--scene", scene_dir, "Directory with manifest.json and sketches_*.json");
    app->add_option("--manifest", manifest, "Scene manifest (instead of --scene)");
    app->add_option("--sketch", sketches, "Sketch file (repeatable, with --manifest)");
  }

  Scene load() const {
    if (!scene_dir.empty()) return load_scene_dir(scene_dir);
    if (manifest.empty()) throw std::invalid_argument("either --scene or --manifest is required");
    std::vector<RawSketchFile> files;
    for (const auto& s : sketches) files.push_back(sketch_file_from_json(read_json_file(s)));
    return make_scene(manifest_from_json(read_json_file(manifest)), files);
  }
};

void print_validation(const ValidationError& e) {
  std::cerr << "error: invalid input\n";
  for (const auto& msg : e.errors()) std::cerr << "  " << msg << "\n";
}

int cmd_synth(const std::string& kind, double noise, std::uint64_t seed, int per_view, int points, const std::string& out) {
  SynthOptions o;
  o.kind = fixture_kind_from_string(kind);
  o.noise = noise;
  o.seed = seed;
  o.sketches_per_view = per_view;
  o.points_per_sketch = points;
  const SynthFixture fx = synth_fixture(o);
  write_fixture_dir(out, fx, o);
  std::cout << "wrote " << to_string(o.kind) << " fixture with " << fx.views.size() << " views to " << out << "\n";
  return 0;
}

int cmd_train(const SceneArgs& scene_args, const std::string& config_path, const Overrides& ov, const std::string& out,
              const std::string& environment) {
  PipelineConfig config;
  if (!config_path.empty()) config = pipeline_config_from_json(read_json_file(config_path));
  ov.apply(config);
  const Scene scene = scene_args.load();
  int last_reported[2] = {-1, -1};
  const int step = std::max(1, config.flow.epochs / 10);
  std::mutex print_mutex;
  const PipelineResult result = run_pipeline(scene, config, [&](int view, int epoch, double loss) {
    if ((epoch + 1) % step != 0) return;
    std::lock_guard lock(print_mutex);
    if (epoch == last_reported[view]) return;
    last_reported[view] = epoch;
    std::cerr << "flow " << scene.train_ids()[static_cast<std::size_t>(view)] << " epoch " << epoch + 1 << "/"
              << config.flow.epochs << " nll " << loss << "\n";
  });
  for (const auto& [name, content] : pipeline_artifacts(scene, config, result))
    write_file_atomic(fs::path(out) / name, content);
  std::cout << "intersection samples: " << result.samples.samples.size() << "\n";
  std::cout << "trajectory fit loss: " << result.fit.initial_loss << " -> " << result.fit.final_loss << "\n";
  if (result.fit.narrow_time_support) std::cout << "warning: intersection samples cover less than half of [0,1]\n";
  std::cout << render_report_table(result.reports, environment);
  std::cout << "artifacts written to " << out << "\n";
  return 0;
}

int cmd_sample(const std::string& model, int n, const std::string& start, std::uint64_t seed, int timesteps,
               const std::string& format, const std::string& out) {
  if (n < 0) throw std::invalid_argument("--n must be >= 0");
  const TrajectoryDistribution dist = trajectory_model_from_json(read_json_file(model));
  std::optional<Vec3> x0;
  if (!start.empty()) x0 = parse_point(start);
  std::vector<std::vector<TimedPoint>> trajs;
  for (int k = 0; k < n; ++k) trajs.push_back(sample_trajectory(dist, seed + static_cast<std::uint64_t>(k), x0, timesteps));
  std::string text;
  if (format == "csv")
    text = trajectories_to_csv(trajs);
  else
    text = dump_json(Json{{"seed", seed}, {"columns", {"t", "x", "y", "z"}}, {"trajectories", trajectories_to_json(trajs)}});
  if (out.empty())
    std::cout << text;
  else
    write_file_atomic(out, text);
  return 0;
}

int cmd_evaluate(const std::string& model, const SceneArgs& scene_args, const std::string& config_path,
                 const Overrides& ov, const std::string& out, const std::string& environment) {
  PipelineConfig config;
  if (!config_path.empty()) config = pipeline_config_from_json(read_json_file(config_path));
  ov.apply(config);
  const TrajectoryDistribution dist = trajectory_model_from_json(read_json_file(model));
  const Scene scene = scene_args.load();
  const std::vector<TrainingView> tv = training_views(scene);
  std::vector<EvaluationReport> reports;
  for (const auto& id : scene.heldout_ids()) {
    const auto it = scene.sketches.find(id);
    if (it == scene.sketches.end() || it->second.empty()) continue;
    reports.push_back(evaluate_heldout(dist, scene.view(id), it->second, tv, config.eval));
  }
  if (reports.empty()) {
    std::cerr << "error: no held-out view with sketches\n";
    return 1;
  }
  std::cout << render_report_table(reports, environment);
  if (!out.empty()) write_file_atomic(out, dump_json(reports_to_json(reports, config)));
  return 0;
}

httplib::Server* g_server = nullptr;

int cmd_serve(const std::string& host, int port, const std::string& data_root) {
  SessionStore store(data_root.empty() ? SessionStore::default_root() : fs::path(data_root));
  httplib::Server server;
  register_routes(server, store);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  std::cout << "serving sessions from " << store.root() << " on http://" << host << ":" << port << std::endl;
  if (!server.listen(host, port)) {
    std::cerr << "error: cannot listen on " << host << ":" << port << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn 3D trajectory distributions from 2D sketches over posed views"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic fixture scene");
  std::string kind = "arc", synth_out;
  double noise = 0.005;
  std::uint64_t synth_seed = 0;
  int per_view = 3, points = 100;
  synth->add_option("--kind", kind, "arc, letter or line")->capture_default_str();
  synth->add_option("--noise", noise, "Gaussian std on normalized pixel coordinates")->capture_default_str();
  synth->add_option("--seed", synth_seed)->capture_default_str();
  synth->add_option("--sketches-per-view", per_view)->capture_default_str();
  synth->add_option("--points", points, "Points per sketch")->capture_default_str();
  synth->add_option("--out", synth_out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train flows, intersect, fit and evaluate");
  SceneArgs train_scene;
  Overrides train_ov;
  std::string train_config, train_out, train_env = "scene";
  train_scene.add_to(train);
  train_ov.add_to(train);
  train->add_option("--config", train_config, "Pipeline config JSON (flags override it)");
  train->add_option("--out", train_out, "Artifact directory")->required();
  train->add_option("--environment", train_env, "Column label in the results table")->capture_default_str();

  auto* sample = app.add_subcommand("sample", "Draw trajectories from a trained model");
  std::string sample_model, sample_start, sample_format = "json", sample_out;
  int sample_n = 5, sample_timesteps = 100;
  std::uint64_t sample_seed = 0;
  sample->add_option("--model", sample_model, "trajectory_model.json")->required();
  sample->add_option("--n", sample_n)->capture_default_str();
  sample->add_option("--start", sample_start, "Start position x,y,z");
  sample->add_option("--seed", sample_seed)->capture_default_str();
  sample->add_option("--timesteps", sample_timesteps)->capture_default_str();
  sample->add_option("--format", sample_format)->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
  sample->add_option("--out", sample_out, "Output file (default stdout)");

  auto* evaluate = app.add_subcommand("evaluate", "Score a trained model on held-out views");
  SceneArgs eval_scene;
  Overrides eval_ov;
  std::string eval_model, eval_config, eval_out, eval_env = "scene";
  eval_scene.add_to(evaluate);
  eval_ov.add_to(evaluate);
  evaluate->add_option("--model", eval_model, "trajectory_model.json")->required();
  evaluate->add_option("--config", eval_config, "Pipeline config JSON");
  evaluate->add_option("--out", eval_out, "Report JSON path");
  evaluate->add_option("--environment", eval_env)->capture_default_str();

  auto* serve = app.add_subcommand("serve", "Run the HTTP session service");
  std::string host = "127.0.0.1", data_root;
  int port = 8080;
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--data-root", data_root, "Session storage (default $SKETCHTEACH_DATA)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(kind, noise, synth_seed, per_view, points, synth_out);
    if (*train) return cmd_train(train_scene, train_config, train_ov, train_out, train_env);
    if (*sample)
      return cmd_sample(sample_model, sample_n, sample_start, sample_seed, sample_timesteps, sample_format, sample_out);
    if (*evaluate) return cmd_evaluate(eval_model, eval_scene, eval_config, eval_ov, eval_out, eval_env);
    if (*serve) return cmd_serve(host, port, data_root);
  } catch (const ValidationError& e) {
    print_validation(e);
    return 1;
  } catch (const NoIntersectionsError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const TrainingDivergedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
