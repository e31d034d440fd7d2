#include "sketchteach/io.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <system_error>

namespace sketchteach {

namespace {

std::string join_errors(const std::vector<std::string>& errors) {
  std::string out = "validation failed";
  for (const auto& e : errors) out += "; " + e;
  return out;
}

// Collects per-field faults instead of stopping at the first one.
class FieldReader {
 public:
  FieldReader(const Json& j, std::string path, std::vector<std::string>& errors)
      : j_(j), path_(std::move(path)), errors_(errors) {
    if (!j_.is_object()) fail("", "expected object");
  }

  bool ok() const { return j_.is_object(); }

  const Json* find(const std::string& key, bool required) {
    seen_.insert(key);
    if (!j_.is_object()) return nullptr;
    const auto it = j_.find(key);
    if (it == j_.end()) {
      if (required) fail(key, "missing");
      return nullptr;
    }
    return &*it;
  }

  bool number(const std::string& key, double& out, bool required = true) {
    const Json* v = find(key, required);
    if (!v) return false;
    if (!v->is_number()) return fail(key, "expected number");
    out = v->get<double>();
    return true;
  }

  bool integer(const std::string& key, int& out, bool required = true) {
    const Json* v = find(key, required);
    if (!v) return false;
    if (!v->is_number_integer()) return fail(key, "expected integer");
    out = v->get<int>();
    return true;
  }

  bool unsigned_integer(const std::string& key, std::uint64_t& out, bool required = true) {
    const Json* v = find(key, required);
    if (!v) return false;
    if (!is_non_negative_integer(*v)) return fail(key, "expected non-negative integer");
    out = v->get<std::uint64_t>();
    return true;
  }

  bool boolean(const std::string& key, bool& out, bool required = true) {
    const Json* v = find(key, required);
    if (!v) return false;
    if (!v->is_boolean()) return fail(key, "expected boolean");
    out = v->get<bool>();
    return true;
  }

  bool string(const std::string& key, std::string& out, bool required = true) {
    const Json* v = find(key, required);
    if (!v) return false;
    if (!v->is_string()) return fail(key, "expected string");
    out = v->get<std::string>();
    return true;
  }

  bool numbers(const std::string& key, std::vector<double>& out, std::size_t expected, bool required = true) {
    const Json* v = find(key, required);
    if (!v) return false;
    if (!v->is_array()) return fail(key, "expected array");
    if (expected && v->size() != expected) return fail(key, "expected " + std::to_string(expected) + " numbers");
    out.clear();
    for (const Json& e : *v) {
      if (!e.is_number()) return fail(key, "expected numbers");
      out.push_back(e.get<double>());
    }
    return true;
  }

  void reject_unknown() {
    if (!j_.is_object()) return;
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) fail(key, "unknown field");
  }

  bool fail(const std::string& key, const std::string& what) {
    errors_.push_back((key.empty() ? path_ : (path_.empty() ? key : path_ + "." + key)) + ": " + what);
    return false;
  }

 private:
  const Json& j_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

void throw_if(const std::vector<std::string>& errors) {
  if (!errors.empty()) throw ValidationError(errors);
}

Json matrix_rows(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Matrix matrix_from_rows(const Json& j, Eigen::Index cols, const std::string& path) {
  if (!j.is_array()) throw ValidationError({path + ": expected array of rows"});
  Matrix m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Json& row = j[r];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw ValidationError({path + "[" + std::to_string(r) + "]: expected " + std::to_string(cols) + " numbers"});
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!row[static_cast<std::size_t>(c)].is_number())
        throw ValidationError({path + "[" + std::to_string(r) + "]: expected numbers"});
      m(static_cast<Eigen::Index>(r), c) = row[static_cast<std::size_t>(c)].get<double>();
    }
  }
  return m;
}

void require_kind(const Json& j, const std::string& kind) {
  if (!j.is_object()) throw ValidationError({"expected object"});
  if (!j.contains("format_version") || !j["format_version"].is_number_integer() ||
      j["format_version"].get<int>() != kFormatVersion)
    throw ValidationError({"format_version: expected " + std::to_string(kFormatVersion)});
  if (!j.contains("kind") || j["kind"] != kind) throw ValidationError({"kind: expected \"" + kind + "\""});
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> errors)
    : std::invalid_argument(join_errors(errors)), errors_(std::move(errors)) {}

Json camera_to_json(const ViewCamera& c) {
  Json rows = Json::array();
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 3; ++k) rows.push_back(c.orientation(r, k));
  return Json{{"id", c.id},
              {"image_path", c.image_path},
              {"origin", {c.origin.x(), c.origin.y(), c.origin.z()}},
              {"orientation_rows", rows},
              {"fx", c.fx},
              {"fy", c.fy},
              {"cx", c.cx},
              {"cy", c.cy},
              {"d_near", c.d_near},
              {"d_far", c.d_far},
              {"image_width_px", c.image_width_px},
              {"image_height_px", c.image_height_px}};
}

std::vector<ViewCamera> manifest_from_json(const Json& j) {
  const Json* views = &j;
  if (j.is_object()) {
    if (!j.contains("views")) throw ValidationError({"views: missing"});
    views = &j["views"];
  }
  if (!views->is_array()) throw ValidationError({"views: expected array"});

  std::vector<std::string> errors;
  std::vector<ViewCamera> out;
  std::set<std::string> ids;
  for (std::size_t k = 0; k < views->size(); ++k) {
    const std::string path = "views[" + std::to_string(k) + "]";
    FieldReader f((*views)[k], path, errors);
    if (!f.ok()) continue;
    const std::size_t before = errors.size();
    ViewCamera c;
    std::vector<double> origin, rows;
    f.string("id", c.id);
    f.string("image_path", c.image_path, false);
    if (f.numbers("origin", origin, 3)) c.origin = Vec3(origin[0], origin[1], origin[2]);
    if (f.numbers("orientation_rows", rows, 9))
      for (int r = 0; r < 3; ++r)
        for (int i = 0; i < 3; ++i) c.orientation(r, i) = rows[static_cast<std::size_t>(3 * r + i)];
    f.number("fx", c.fx);
    f.number("fy", c.fy);
    f.number("cx", c.cx);
    f.number("cy", c.cy);
    f.number("d_near", c.d_near);
    f.number("d_far", c.d_far);
    f.integer("image_width_px", c.image_width_px);
    f.integer("image_height_px", c.image_height_px);
    f.reject_unknown();
    if (errors.size() != before) continue;
    for (const auto& e : c.validation_errors()) errors.push_back(path + ": " + e);
    if (!ids.insert(c.id).second) errors.push_back(path + ".id: duplicate view id \"" + c.id + "\"");
    out.push_back(c);
  }
  throw_if(errors);
  return out;
}

Json manifest_to_json(const std::vector<ViewCamera>& views) {
  Json j = Json::array();
  for (const auto& v : views) j.push_back(camera_to_json(v));
  return j;
}

RawSketchFile sketch_file_from_json(const Json& j) {
  std::vector<std::string> errors;
  FieldReader f(j, "", errors);
  RawSketchFile file;
  file.time_mode = TimeMode::kArcLength;
  std::string mode;
  f.string("view_id", file.view_id);
  if (f.string("time_mode", mode, false)) {
    try {
      file.time_mode = time_mode_from_string(mode);
    } catch (const std::invalid_argument& e) {
      f.fail("time_mode", e.what());
    }
  }
  if (const Json* strokes = f.find("strokes", true)) {
    if (!strokes->is_array()) {
      f.fail("strokes", "expected array");
    } else {
      for (std::size_t s = 0; s < strokes->size(); ++s) {
        const Json& stroke = (*strokes)[s];
        const std::string path = "strokes[" + std::to_string(s) + "]";
        if (!stroke.is_array()) {
          errors.push_back(path + ": expected array of [t,u,v]");
          continue;
        }
        std::vector<std::array<double, 3>> pts;
        bool good = true;
        for (std::size_t p = 0; p < stroke.size() && good; ++p) {
          const Json& row = stroke[p];
          if (!row.is_array() || row.size() != 3 || !row[0].is_number() || !row[1].is_number() ||
              !row[2].is_number()) {
            errors.push_back(path + "[" + std::to_string(p) + "]: expected [t,u,v] numbers");
            good = false;
            break;
          }
          pts.push_back({row[0].get<double>(), row[1].get<double>(), row[2].get<double>()});
        }
        if (good) file.strokes.push_back(std::move(pts));
      }
      if (strokes->empty()) f.fail("strokes", "at least one stroke required");
    }
  }
  f.reject_unknown();
  throw_if(errors);
  return file;
}

Json sketch_file_to_json(const RawSketchFile& file) {
  Json strokes = Json::array();
  for (const auto& stroke : file.strokes) {
    Json s = Json::array();
    for (const auto& p : stroke) s.push_back({p[0], p[1], p[2]});
    strokes.push_back(s);
  }
  return Json{{"view_id", file.view_id}, {"time_mode", to_string(file.time_mode)}, {"strokes", strokes}};
}

std::vector<SketchTrajectory> normalize_sketch_file(const RawSketchFile& file) {
  std::vector<std::string> errors;
  std::vector<SketchTrajectory> out;
  for (std::size_t s = 0; s < file.strokes.size(); ++s) {
    try {
      out.push_back(normalize_stroke(file.view_id, file.strokes[s], file.time_mode));
    } catch (const std::invalid_argument& e) {
      errors.push_back("strokes[" + std::to_string(s) + "]: " + e.what());
    }
  }
  throw_if(errors);
  return out;
}

Json sketches_to_json(const std::vector<SketchTrajectory>& sketches) {
  Json j = Json::array();
  for (const auto& s : sketches) {
    Json pts = Json::array();
    for (const auto& p : s.points) pts.push_back({p.t, p.u, p.v});
    j.push_back({{"view_id", s.view_id}, {"points", pts}});
  }
  return j;
}

std::vector<SketchTrajectory> sketches_from_json(const Json& j) {
  if (!j.is_array()) throw ValidationError({"sketches: expected array"});
  std::vector<SketchTrajectory> out;
  for (std::size_t k = 0; k < j.size(); ++k) {
    const std::string path = "sketches[" + std::to_string(k) + "]";
    if (!j[k].is_object() || !j[k].contains("view_id") || !j[k].contains("points"))
      throw ValidationError({path + ": expected {view_id, points}"});
    SketchTrajectory s;
    s.view_id = j[k]["view_id"].get<std::string>();
    const Matrix pts = matrix_from_rows(j[k]["points"], 3, path + ".points");
    for (Eigen::Index r = 0; r < pts.rows(); ++r) s.points.push_back({pts(r, 0), pts(r, 1), pts(r, 2)});
    try {
      s.validate();
    } catch (const std::invalid_argument& e) {
      throw ValidationError({path + ": " + e.what()});
    }
    out.push_back(std::move(s));
  }
  return out;
}

Json flow_config_to_json(const FlowConfig& c) {
  return Json{{"layer_count", c.layer_count},   {"hidden_width", c.hidden_width},
              {"log_scale_bound", c.log_scale_bound}, {"init_weight_std", c.init_weight_std},
              {"noise_sigma", c.noise_sigma},   {"epochs", c.epochs},
              {"batch_size", c.batch_size},     {"learning_rate", c.learning_rate},
              {"seed", c.seed}};
}

FlowConfig flow_config_from_json(const Json& j, FlowConfig c) {
  std::vector<std::string> errors;
  FieldReader f(j, "flow", errors);
  f.integer("layer_count", c.layer_count, false);
  f.integer("hidden_width", c.hidden_width, false);
  f.number("log_scale_bound", c.log_scale_bound, false);
  f.number("init_weight_std", c.init_weight_std, false);
  f.number("noise_sigma", c.noise_sigma, false);
  f.integer("epochs", c.epochs, false);
  f.integer("batch_size", c.batch_size, false);
  f.number("learning_rate", c.learning_rate, false);
  f.unsigned_integer("seed", c.seed, false);
  f.reject_unknown();
  throw_if(errors);
  return c;
}

Json intersection_config_to_json(const IntersectionConfig& c) {
  return Json{{"epsilon", c.epsilon},
              {"threshold_mode", to_string(c.threshold_mode)},
              {"relative_fraction", c.relative_fraction},
              {"delta", c.delta},
              {"grid", c.grid},
              {"depth_samples", c.depth_samples},
              {"time_samples", c.time_samples},
              {"pair_mode", to_string(c.pair_mode)},
              {"threads", c.threads}};
}

IntersectionConfig intersection_config_from_json(const Json& j, IntersectionConfig c) {
  std::vector<std::string> errors;
  FieldReader f(j, "intersection", errors);
  std::string s;
  f.number("epsilon", c.epsilon, false);
  if (f.string("threshold_mode", s, false)) {
    try {
      c.threshold_mode = threshold_mode_from_string(s);
    } catch (const std::invalid_argument& e) {
      f.fail("threshold_mode", e.what());
    }
  }
  f.number("relative_fraction", c.relative_fraction, false);
  f.number("delta", c.delta, false);
  f.integer("grid", c.grid, false);
  f.integer("depth_samples", c.depth_samples, false);
  f.integer("time_samples", c.time_samples, false);
  if (f.string("pair_mode", s, false)) {
    try {
      c.pair_mode = pair_mode_from_string(s);
    } catch (const std::invalid_argument& e) {
      f.fail("pair_mode", e.what());
    }
  }
  f.integer("threads", c.threads, false);
  f.reject_unknown();
  throw_if(errors);
  return c;
}

Json fit_config_to_json(const FitConfig& c) {
  return Json{{"learning_rate", c.adam.learning_rate},
              {"beta1", c.adam.beta1},
              {"beta2", c.adam.beta2},
              {"adam_epsilon", c.adam.epsilon},
              {"steps", c.steps},
              {"final_lr_fraction", c.final_lr_fraction},
              {"ridge", c.ridge},
              {"init_std", c.init_std},
              {"seed", c.seed}};
}

FitConfig fit_config_from_json(const Json& j, FitConfig c) {
  std::vector<std::string> errors;
  FieldReader f(j, "fit", errors);
  f.number("learning_rate", c.adam.learning_rate, false);
  f.number("beta1", c.adam.beta1, false);
  f.number("beta2", c.adam.beta2, false);
  f.number("adam_epsilon", c.adam.epsilon, false);
  f.integer("steps", c.steps, false);
  f.number("final_lr_fraction", c.final_lr_fraction, false);
  f.number("ridge", c.ridge, false);
  f.number("init_std", c.init_std, false);
  f.unsigned_integer("seed", c.seed, false);
  f.reject_unknown();
  throw_if(errors);
  return c;
}

Json basis_to_json(const BasisConfig& b) { return Json{{"count", b.count}, {"gamma", b.gamma}}; }

BasisConfig basis_from_json(const Json& j) {
  std::vector<std::string> errors;
  FieldReader f(j, "basis", errors);
  int count = 20;
  double gamma = 200.0;
  f.integer("count", count, false);
  f.number("gamma", gamma, false);
  f.reject_unknown();
  throw_if(errors);
  try {
    return BasisConfig::make(count, gamma);
  } catch (const std::invalid_argument& e) {
    throw ValidationError({e.what()});
  }
}

Json flow_model_to_json(const FlowModel& model) {
  Json masks = Json::array();
  for (const auto& m : model.masks) masks.push_back({m[0], m[1], m[2]});
  Json params = Json::array();
  for (std::size_t i = 0; i < model.params.blocks().size(); ++i) {
    const auto& b = model.params.blocks()[i];
    const auto values = model.params.values().segment(b.offset, b.size());
    params.push_back({{"name", b.name},
                      {"rows", b.rows},
                      {"cols", b.cols},
                      {"values", std::vector<double>(values.begin(), values.end())}});
  }
  return Json{{"format_version", kFormatVersion},
              {"kind", "flow_model"},
              {"layout", "column_major"},
              {"config", flow_config_to_json(model.config)},
              {"masks", masks},
              {"params", params}};
}

namespace {

FlowModel parse_flow_model(const Json& j) {
  FlowModel model;
  model.config = flow_config_from_json(j.value("config", Json::object()));
  if (!j.contains("masks") || !j["masks"].is_array()) throw ValidationError({"masks: expected array"});
  for (const Json& m : j["masks"]) {
    if (!m.is_array() || m.size() != 3) throw ValidationError({"masks: expected rows of 3 numbers"});
    model.masks.push_back({m[0].get<double>(), m[1].get<double>(), m[2].get<double>()});
  }
  if (!j.contains("params") || !j["params"].is_array()) throw ValidationError({"params: expected array"});
  for (const Json& p : j["params"]) {
    const auto rows = p.at("rows").get<Eigen::Index>();
    const auto cols = p.at("cols").get<Eigen::Index>();
    const auto values = p.at("values").get<std::vector<double>>();
    if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(values.size()) != rows * cols)
      throw ValidationError({"params." + p.at("name").get<std::string>() + ": size mismatch"});
    model.params.add_block(p.at("name").get<std::string>(), Eigen::Map<const Matrix>(values.data(), rows, cols));
  }
  model.validate();
  return model;
}

}  // namespace

FlowModel flow_model_from_json(const Json& j) {
  require_kind(j, "flow_model");
  try {
    return parse_flow_model(j);
  } catch (const Json::exception& e) {
    throw ValidationError({std::string("flow model: ") + e.what()});
  }
}

Json trajectory_model_to_json(const FitResult& fit, const FitConfig& config) {
  const std::size_t tail = std::min<std::size_t>(fit.loss_curve.size(), 50);
  const std::vector<double> loss_tail(fit.loss_curve.end() - static_cast<std::ptrdiff_t>(tail), fit.loss_curve.end());
  return Json{{"format_version", kFormatVersion},
              {"kind", "trajectory_distribution"},
              {"basis", basis_to_json(fit.dist.basis)},
              {"means", matrix_rows(fit.dist.means)},
              {"log_stds", matrix_rows(fit.dist.log_stds)},
              {"fit",
               {{"config", fit_config_to_json(config)},
                {"initial_loss", fit.initial_loss},
                {"final_loss", fit.final_loss},
                {"loss_tail", loss_tail},
                {"sample_count", fit.sample_count},
                {"narrow_time_support", fit.narrow_time_support}}}};
}

TrajectoryDistribution trajectory_model_from_json(const Json& j) {
  require_kind(j, "trajectory_distribution");
  TrajectoryDistribution d;
  d.basis = basis_from_json(j.value("basis", Json::object()));
  d.means = matrix_from_rows(j.value("means", Json::array()), 3, "means");
  d.log_stds = matrix_from_rows(j.value("log_stds", Json::array()), 3, "log_stds");
  try {
    d.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError({e.what()});
  }
  return d;
}

Json slice_diagnostics_to_json(const std::vector<SliceDiagnostics>& diags) {
  Json out = Json::array();
  for (const auto& d : diags) {
    Json row{{"t", d.t},
             {"pixels1", d.pixels1},
             {"pixels2", d.pixels2},
             {"region1", d.region1},
             {"region2", d.region2},
             {"samples", d.samples}};
    // Only computed for empty slices; infinity has no JSON form.
    row["min_distance"] = std::isfinite(d.min_distance) ? Json(d.min_distance) : Json(nullptr);
    out.push_back(row);
  }
  return out;
}

Json intersection_debug_json(const IntersectionSamples& s) {
  Json points = Json::array();
  for (const Sample& p : s.samples) points.push_back({p.t, p.x.x(), p.x.y(), p.x.z(), p.source_view});
  return Json{{"format_version", kFormatVersion},
              {"kind", "intersection_samples"},
              {"delta", s.delta},
              {"times", s.times},
              {"slice_offsets", s.slice_offsets},
              {"slices", slice_diagnostics_to_json(s.diagnostics)},
              {"point_columns", {"t", "x", "y", "z", "source_view"}},
              {"points", points}};
}

Json report_to_json(const EvaluationReport& r) {
  Json methods = Json::array();
  for (const auto& m : r.methods)
    methods.push_back({{"method", m.method}, {"mfd_mean", m.mfd_mean}, {"mfd_std", m.mfd_std}, {"wd", m.wd}});
  return Json{{"format_version", kFormatVersion},
              {"kind", "evaluation_report"},
              {"view_id", r.view_id},
              {"dropped_fraction", r.dropped_fraction},
              {"config",
               {{"n_samples", r.config.n_samples},
                {"timesteps", r.config.timesteps},
                {"seed", r.config.seed},
                {"timestamped_wd", r.config.timestamped_wd}}},
              {"methods", methods}};
}

Json trajectories_to_json(const std::vector<std::vector<TimedPoint>>& trajs) {
  Json out = Json::array();
  for (const auto& traj : trajs) {
    Json rows = Json::array();
    for (const auto& p : traj) rows.push_back({p.t, p.x.x(), p.x.y(), p.x.z()});
    out.push_back(rows);
  }
  return out;
}

std::string trajectories_to_csv(const std::vector<std::vector<TimedPoint>>& trajs) {
  std::string out = "trajectory,t,x,y,z\n";
  char buf[160];
  for (std::size_t k = 0; k < trajs.size(); ++k)
    for (const auto& p : trajs[k]) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", k, p.t, p.x.x(), p.x.y(), p.x.z());
      out += buf;
    }
  return out;
}

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ValidationError({path.string() + ": " + e.what()});
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::FILE* f = std::fopen(tmp.c_str(), "wb");
    if (!f) throw std::system_error(errno, std::generic_category(), "open " + tmp.string());
    const bool ok = std::fwrite(content.data(), 1, content.size(), f) == content.size() && std::fflush(f) == 0;
    std::fclose(f);
    if (!ok) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace sketchteach
