#include "sketchteach/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <future>
#include <set>
#include <sstream>

namespace sketchteach {

void PipelineConfig::set_seed(std::uint64_t seed) {
  flow.seed = seed;
  fit.seed = seed;
  eval.seed = seed;
}

void PipelineConfig::validate() const {
  std::vector<std::string> errors;
  if (flow.layer_count < 1) errors.push_back("flow.layer_count: must be >= 1");
  if (flow.hidden_width < 1) errors.push_back("flow.hidden_width: must be >= 1");
  if (!(flow.log_scale_bound > 0.0)) errors.push_back("flow.log_scale_bound: must be > 0");
  if (!(flow.init_weight_std >= 0.0)) errors.push_back("flow.init_weight_std: must be >= 0");
  if (!(flow.noise_sigma >= 0.0)) errors.push_back("flow.noise_sigma: must be >= 0");
  if (flow.epochs < 0) errors.push_back("flow.epochs: must be >= 0");
  if (flow.batch_size < 0) errors.push_back("flow.batch_size: must be >= 0");
  if (!(flow.learning_rate > 0.0)) errors.push_back("flow.learning_rate: must be > 0");
  try {
    intersection.validate();
  } catch (const std::invalid_argument& e) {
    errors.push_back(e.what());
  }
  try {
    basis.validate();
  } catch (const std::invalid_argument& e) {
    errors.push_back(e.what());
  }
  if (fit.steps < 0) errors.push_back("fit.steps: must be >= 0");
  if (!(fit.adam.learning_rate > 0.0)) errors.push_back("fit.learning_rate: must be > 0");
  if (!(fit.init_std > 0.0)) errors.push_back("fit.init_std: must be > 0");
  if (eval.n_samples < 1) errors.push_back("eval.n_samples: must be >= 1");
  if (eval.timesteps < 2) errors.push_back("eval.timesteps: must be >= 2");
  if (!errors.empty()) throw ValidationError(errors);
}

namespace {

Json eval_config_to_json(const EvalConfig& c) {
  return Json{{"n_samples", c.n_samples},
              {"timesteps", c.timesteps},
              {"seed", c.seed},
              {"timestamped_wd", c.timestamped_wd}};
}

EvalConfig eval_config_from_json(const Json& j, EvalConfig c) {
  if (!j.is_object()) throw ValidationError({"eval: expected object"});
  std::vector<std::string> errors;
  for (const auto& [key, v] : j.items()) {
    if (key == "n_samples" && v.is_number_integer())
      c.n_samples = v.get<int>();
    else if (key == "timesteps" && v.is_number_integer())
      c.timesteps = v.get<int>();
    else if (key == "seed" && is_non_negative_integer(v))
      c.seed = v.get<std::uint64_t>();
    else if (key == "timestamped_wd" && v.is_boolean())
      c.timestamped_wd = v.get<bool>();
    else
      errors.push_back("eval." + key + ": unknown field or wrong type");
  }
  if (!errors.empty()) throw ValidationError(errors);
  return c;
}

}  // namespace

Json pipeline_config_to_json(const PipelineConfig& c) {
  return Json{{"flow", flow_config_to_json(c.flow)},
              {"intersection", intersection_config_to_json(c.intersection)},
              {"basis", basis_to_json(c.basis)},
              {"fit", fit_config_to_json(c.fit)},
              {"eval", eval_config_to_json(c.eval)}};
}

PipelineConfig pipeline_config_from_json(const Json& j, PipelineConfig c) {
  if (!j.is_object()) throw ValidationError({"config: expected object"});
  std::vector<std::string> errors;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "flow")
        c.flow = flow_config_from_json(v, c.flow);
      else if (key == "intersection")
        c.intersection = intersection_config_from_json(v, c.intersection);
      else if (key == "basis") {
        Json merged = basis_to_json(c.basis);
        if (v.is_object()) merged.update(v);
        c.basis = basis_from_json(v.is_object() ? merged : v);
      } else if (key == "fit")
        c.fit = fit_config_from_json(v, c.fit);
      else if (key == "eval")
        c.eval = eval_config_from_json(v, c.eval);
      else if (key == "seed" && is_non_negative_integer(v))
        c.set_seed(v.get<std::uint64_t>());
      else
        errors.push_back(key + ": unknown field");
    } catch (const ValidationError& e) {
      errors.insert(errors.end(), e.errors().begin(), e.errors().end());
    }
  }
  if (!errors.empty()) throw ValidationError(errors);
  c.validate();
  return c;
}

std::vector<std::string> Scene::train_ids() const {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < views.size() && k < 2; ++k) out.push_back(views[k].id);
  return out;
}

std::vector<std::string> Scene::heldout_ids() const {
  std::vector<std::string> out;
  for (std::size_t k = 2; k < views.size(); ++k) out.push_back(views[k].id);
  return out;
}

const ViewCamera& Scene::view(const std::string& id) const {
  for (const auto& v : views)
    if (v.id == id) return v;
  throw std::out_of_range("unknown view \"" + id + "\"");
}

void Scene::validate_for_training() const {
  if (views.size() < 2) throw ValidationError({"views: at least 2 views required"});
  std::vector<std::string> errors;
  for (const auto& id : train_ids()) {
    const auto it = sketches.find(id);
    if (it == sketches.end() || it->second.empty()) errors.push_back("view " + id + ": no sketches");
  }
  if (!errors.empty()) throw ValidationError(errors);
}

Scene make_scene(std::vector<ViewCamera> views, const std::vector<RawSketchFile>& files) {
  Scene scene;
  scene.views = std::move(views);
  std::set<std::string> ids;
  for (const auto& v : scene.views) ids.insert(v.id);
  for (const RawSketchFile& f : files) {
    if (!ids.count(f.view_id)) throw ValidationError({"view_id: unknown view \"" + f.view_id + "\""});
    auto normalized = normalize_sketch_file(f);
    auto& dst = scene.sketches[f.view_id];
    dst.insert(dst.end(), normalized.begin(), normalized.end());
  }
  return scene;
}

std::vector<TrainingView> training_views(const Scene& scene) {
  std::vector<TrainingView> out;
  for (const auto& id : scene.train_ids()) {
    TrainingView tv{scene.view(id), {}};
    const auto it = scene.sketches.find(id);
    if (it != scene.sketches.end())
      for (const auto& s : it->second) tv.sketches.push_back(sketch_to_width_units(s, tv.camera));
    out.push_back(std::move(tv));
  }
  return out;
}

PipelineResult run_pipeline(const Scene& scene, const PipelineConfig& config, const ProgressFn& progress) {
  config.validate();
  scene.validate_for_training();
  const std::vector<std::string> train = scene.train_ids();

  // The two flows are independent; train them concurrently.
  std::vector<std::future<FlowTrainResult>> jobs;
  for (std::size_t k = 0; k < train.size(); ++k) {
    FlowConfig fc = config.flow;
    fc.seed = config.flow.seed + k;
    const auto& sketches = scene.sketches.at(train[k]);
    jobs.push_back(std::async(std::launch::async, [&sketches, fc, k, &progress] {
      EpochCallback cb;
      if (progress) cb = [&progress, k](int epoch, double loss) { progress(static_cast<int>(k), epoch, loss); };
      return train_flow(sketches, fc, cb);
    }));
  }
  PipelineResult result;
  for (auto& j : jobs) result.flows.push_back(j.get());

  result.samples = sample_intersections(result.flows[0].model, result.flows[1].model, scene.view(train[0]),
                                        scene.view(train[1]), config.intersection);
  result.fit = fit_distribution(result.samples, config.basis, config.fit);

  const std::vector<TrainingView> tv = training_views(scene);
  for (const auto& id : scene.heldout_ids()) {
    const auto it = scene.sketches.find(id);
    if (it == scene.sketches.end() || it->second.empty()) continue;
    result.reports.push_back(evaluate_heldout(result.fit.dist, scene.view(id), it->second, tv, config.eval));
  }
  return result;
}

Json reports_to_json(const std::vector<EvaluationReport>& reports, const PipelineConfig& config) {
  Json views = Json::array();
  for (const auto& r : reports) views.push_back(report_to_json(r));
  return Json{{"format_version", kFormatVersion},
              {"kind", "evaluation_summary"},
              {"pipeline_config", pipeline_config_to_json(config)},
              {"reports", views}};
}

std::map<std::string, std::string> pipeline_artifacts(const Scene& scene, const PipelineConfig& config,
                                                      const PipelineResult& result) {
  std::map<std::string, std::string> files;
  const Json cfg = pipeline_config_to_json(config);
  const std::vector<std::string> train = scene.train_ids();
  Json losses = Json::object();
  for (std::size_t k = 0; k < result.flows.size(); ++k) {
    Json model = flow_model_to_json(result.flows[k].model);
    model["view_id"] = train[k];
    model["initial_nll"] = result.flows[k].initial_nll;
    model["final_nll"] = result.flows[k].final_nll;
    files["flow_" + train[k] + ".json"] = dump_json(model);
    losses["flow_" + train[k]] = result.flows[k].loss_curve;
  }
  losses["trajectory"] = result.fit.loss_curve;
  Json traj = trajectory_model_to_json(result.fit, config.fit);
  traj["pipeline_config"] = cfg;
  files["trajectory_model.json"] = dump_json(traj);
  Json inter = intersection_debug_json(result.samples);
  inter["pipeline_config"] = cfg;
  files["intersections.json"] = dump_json(inter);
  files["losses.json"] = dump_json(Json{{"format_version", kFormatVersion}, {"kind", "loss_curves"}, {"curves", losses}});
  files["report.json"] = dump_json(reports_to_json(result.reports, config));
  files["config.json"] = dump_json(cfg);
  return files;
}

std::string render_report_table(const std::vector<EvaluationReport>& reports, const std::string& environment) {
  if (reports.empty()) return "no held-out views with sketches; nothing evaluated\n";
  std::ostringstream os;
  char buf[128];
  std::vector<std::string> methods;
  for (const auto& m : reports.front().methods) methods.push_back(m.method);

  os << "Distances x1e-2 (normalized by image width)\n";
  std::snprintf(buf, sizeof buf, "%-8s", "Method");
  os << buf;
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, " | %-28s", (environment + "/" + r.view_id).c_str());
    os << buf;
  }
  os << "\n";
  std::snprintf(buf, sizeof buf, "%-8s", "");
  os << buf;
  for (std::size_t k = 0; k < reports.size(); ++k) {
    std::snprintf(buf, sizeof buf, " | %-17s %-10s", "MFD", "WD");
    os << buf;
  }
  os << "\n";
  for (const auto& name : methods) {
    std::snprintf(buf, sizeof buf, "%-8s", name.c_str());
    os << buf;
    for (const auto& r : reports) {
      const MethodScores& m = r.method(name);
      std::snprintf(buf, sizeof buf, " | %6.2f +- %-7.2f %-10.2f", 100 * m.mfd_mean, 100 * m.mfd_std, 100 * m.wd);
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

Scene load_scene_dir(const std::filesystem::path& dir) {
  std::vector<ViewCamera> views = manifest_from_json(read_json_file(dir / "manifest.json"));
  std::vector<std::filesystem::path> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && name.rfind("sketches_", 0) == 0 && entry.path().extension() == ".json")
      paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<RawSketchFile> files;
  for (const auto& p : paths) {
    try {
      files.push_back(sketch_file_from_json(read_json_file(p)));
    } catch (const ValidationError& e) {
      std::vector<std::string> errors;
      for (const auto& msg : e.errors()) errors.push_back(p.filename().string() + ": " + msg);
      throw ValidationError(errors);
    }
  }
  return make_scene(std::move(views), files);
}

namespace {

std::string placeholder_svg(const ViewCamera& v) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << v.image_width_px << "\" height=\""
     << v.image_height_px << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"#f4f4f0\"/>\n";
  for (int k = 1; k < 10; ++k) {
    os << "<line x1=\"" << v.image_width_px * k / 10 << "\" y1=\"0\" x2=\"" << v.image_width_px * k / 10 << "\" y2=\""
       << v.image_height_px << "\" stroke=\"#ddd\"/>\n";
    os << "<line x1=\"0\" y1=\"" << v.image_height_px * k / 10 << "\" x2=\"" << v.image_width_px << "\" y2=\""
       << v.image_height_px * k / 10 << "\" stroke=\"#ddd\"/>\n";
  }
  os << "<text x=\"10\" y=\"24\" font-family=\"sans-serif\" font-size=\"18\">" << v.id << "</text>\n</svg>\n";
  return os.str();
}

}  // namespace

void write_fixture_dir(const std::filesystem::path& dir, const SynthFixture& fixture, const SynthOptions& options) {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "manifest.json", dump_json(manifest_to_json(fixture.views)));
  for (const auto& f : fixture.sketch_files)
    write_file_atomic(dir / ("sketches_" + f.view_id + ".json"), dump_json(sketch_file_to_json(f)));
  for (const auto& v : fixture.views)
    if (!v.image_path.empty()) write_file_atomic(dir / v.image_path, placeholder_svg(v));
  Json pts = Json::array();
  for (std::size_t k = 0; k < fixture.truth_points.size(); ++k) {
    const Vec3& x = fixture.truth_points[k];
    pts.push_back({fixture.truth_t[k], x.x(), x.y(), x.z()});
  }
  write_file_atomic(dir / "truth.json",
                    dump_json(Json{{"format_version", kFormatVersion},
                                   {"kind", "fixture_truth"},
                                   {"fixture", to_string(options.kind)},
                                   {"noise", options.noise},
                                   {"seed", options.seed},
                                   {"heldout", fixture.heldout_ids},
                                   {"columns", {"t", "x", "y", "z"}},
                                   {"points", pts}}));
}

}  // namespace sketchteach
