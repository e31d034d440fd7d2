#include "sketchteach/session.hpp"

#include <cstdlib>
#include <random>

namespace sketchteach {

namespace fs = std::filesystem;

std::string to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::kEmpty: return "empty";
    case SessionStatus::kSketching: return "sketching";
    case SessionStatus::kTraining: return "training";
    case SessionStatus::kTrained: return "trained";
    case SessionStatus::kFailed: return "failed";
  }
  return "unknown";
}

SessionStatus session_status_from_string(const std::string& s) {
  for (auto v : {SessionStatus::kEmpty, SessionStatus::kSketching, SessionStatus::kTraining, SessionStatus::kTrained,
                 SessionStatus::kFailed})
    if (to_string(v) == s) return v;
  throw std::invalid_argument("unknown session status \"" + s + "\"");
}

namespace {

bool safe_name(const std::string& s) {
  if (s.empty() || s.size() > 64 || s == "." || s == "..") return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) return false;
  return true;
}

std::string new_session_id() {
  std::random_device rd;
  std::uniform_int_distribution<int> hex(0, 15);
  std::string id;
  for (int k = 0; k < 16; ++k) id += "0123456789abcdef"[hex(rd)];
  return id;
}

SessionStatus status_of(const Json& status) { return session_status_from_string(status.at("status").get<std::string>()); }

}  // namespace

SessionStore::SessionStore(fs::path root) : root_(std::move(root)) { fs::create_directories(root_ / "sessions"); }

SessionStore::~SessionStore() {
  std::lock_guard lock(map_mutex_);
  for (auto& [id, l] : live_)
    if (l->job.joinable()) l->job.join();
}

fs::path SessionStore::default_root() {
  if (const char* env = std::getenv("SKETCHTEACH_DATA"); env && *env) return env;
  return fs::current_path() / "sketchteach-data";
}

fs::path SessionStore::session_dir(const std::string& id) const {
  if (!safe_name(id)) throw ServiceError(404, "unknown session \"" + id + "\"");
  return root_ / "sessions" / id;
}

SessionStore::Live& SessionStore::live(const std::string& id) {
  std::lock_guard lock(map_mutex_);
  auto& slot = live_[id];
  if (!slot) slot = std::make_unique<Live>();
  return *slot;
}

Json SessionStore::load_status(const std::string& id) const {
  const fs::path p = session_dir(id) / "status.json";
  if (!fs::exists(p)) throw ServiceError(404, "unknown session \"" + id + "\"");
  return read_json_file(p);
}

void SessionStore::save_status(const std::string& id, const Json& status) {
  write_file_atomic(session_dir(id) / "status.json", dump_json(status));
}

namespace {

// Writes an artifact and records it under `name` in the (not yet saved) status.
void put_artifact(Json& status, const fs::path& dir, const std::string& name, const std::string& rel,
                  const std::string& content) {
  write_file_atomic(dir / rel, content);
  status["artifacts"][name] = Json{{"path", rel}, {"fnv1a", fnv1a_hex(content)}};
}

}  // namespace

Json SessionStore::create(const Json& manifest) {
  std::vector<ViewCamera> views;
  try {
    views = manifest_from_json(manifest);
  } catch (const ValidationError& e) {
    throw ServiceError(400, "invalid manifest", Json{{"errors", e.errors()}});
  }
  std::vector<std::string> errors;
  if (views.size() < 2) errors.push_back("views: at least 2 views required");
  for (std::size_t k = 0; k < views.size(); ++k)
    if (!safe_name(views[k].id))
      errors.push_back("views[" + std::to_string(k) + "].id: only letters, digits, '-', '_' and '.' allowed");
  if (!errors.empty()) throw ServiceError(400, "invalid manifest", Json{{"errors", errors}});

  std::string id;
  fs::path dir;
  do {
    id = new_session_id();
    dir = session_dir(id);
  } while (!fs::create_directory(dir));

  Live& l = live(id);
  std::lock_guard lock(l.write);
  Json status{{"format_version", kFormatVersion},
              {"kind", "session_status"},
              {"id", id},
              {"status", to_string(SessionStatus::kEmpty)},
              {"reason", nullptr},
              {"details", nullptr},
              {"views", Json::array()},
              {"sketch_counts", Json::object()},
              {"artifacts", Json::object()},
              {"idempotency", Json::object()},
              {"sketch_revision", 0},
              {"generation", 0}};
  save_status(id, status);
  for (std::size_t k = 0; k < views.size(); ++k) {
    status["views"].push_back({{"id", views[k].id}, {"heldout", k >= 2}});
    status["sketch_counts"][views[k].id] = 0;
  }
  put_artifact(status, dir, "manifest", "manifest.json", dump_json(manifest_to_json(views)));
  status["status"] = to_string(SessionStatus::kSketching);
  save_status(id, status);
  return get(id);
}

Json SessionStore::get(const std::string& id) {
  Json status = load_status(id);
  Live& l = live(id);
  const bool busy = l.busy.load();
  Json out{{"id", id},
           {"status", status["status"]},
           {"reason", status["reason"]},
           {"details", status["details"]},
           {"views", status["views"]},
           {"sketch_counts", status["sketch_counts"]},
           {"generation", status["generation"]},
           {"artifacts", Json::array()}};
  for (const auto& [name, a] : status["artifacts"].items()) out["artifacts"].push_back(name);
  if (status_of(status) == SessionStatus::kTraining) {
    out["progress"] = {{"flow_epochs", {l.epochs[0].load(), l.epochs[1].load()}},
                       {"total_epochs", l.total_epochs.load()}};
    // Left over from a process that died mid-run; training may be restarted.
    out["stale"] = !busy;
  }
  return out;
}

Scene SessionStore::load_scene(const std::string& id, const Json& status) const {
  const fs::path dir = session_dir(id);
  Scene scene;
  scene.views = manifest_from_json(read_json_file(dir / status["artifacts"]["manifest"]["path"].get<std::string>()));
  for (const auto& v : scene.views) {
    const std::string key = "sketches/" + v.id;
    if (!status["artifacts"].contains(key)) continue;
    scene.sketches[v.id] = sketches_from_json(read_json_file(dir / status["artifacts"][key]["path"].get<std::string>()));
  }
  return scene;
}

Json SessionStore::submit_sketches(const std::string& id, const std::string& view_id, const Json& sketch_file,
                                   const std::optional<std::string>& idempotency_key) {
  Live& l = live(id);
  std::lock_guard lock(l.write);
  Json status = load_status(id);
  const std::string body_hash = fnv1a_hex(sketch_file.dump());
  if (idempotency_key) {
    const auto& seen = status["idempotency"];
    if (seen.contains(*idempotency_key)) {
      const Json& prior = seen[*idempotency_key];
      if (prior["view_id"] != view_id || prior["body_fnv1a"] != body_hash)
        throw ServiceError(409, "idempotency key reused with a different request");
      return prior["response"];
    }
  }
  if (l.busy || status_of(status) == SessionStatus::kTraining)
    throw ServiceError(409, "session is training; sketches cannot be added now");

  Scene scene = load_scene(id, status);
  const bool known = std::any_of(scene.views.begin(), scene.views.end(), [&](const ViewCamera& v) { return v.id == view_id; });
  if (!known) throw ServiceError(404, "unknown view \"" + view_id + "\"");

  std::vector<SketchTrajectory> added;
  try {
    RawSketchFile file = sketch_file_from_json(sketch_file);
    if (file.view_id != view_id)
      throw ValidationError({"view_id: \"" + file.view_id + "\" does not match URL view \"" + view_id + "\""});
    added = normalize_sketch_file(file);
  } catch (const ValidationError& e) {
    throw ServiceError(400, "invalid sketch file", Json{{"errors", e.errors()}});
  }

  auto& all = scene.sketches[view_id];
  all.insert(all.end(), added.begin(), added.end());
  const int revision = status["sketch_revision"].get<int>() + 1;
  status["sketch_revision"] = revision;
  put_artifact(status, session_dir(id), "sketches/" + view_id, "sketches/" + view_id + "-" + std::to_string(revision) + ".json",
               dump_json(sketches_to_json(all)));
  status["sketch_counts"][view_id] = all.size();
  // New data invalidates an earlier result; the session goes back to collecting sketches.
  status["status"] = to_string(SessionStatus::kSketching);
  status["reason"] = nullptr;
  status["details"] = nullptr;

  Json response{{"session", id}, {"view_id", view_id}, {"stored", added.size()}, {"total", all.size()}};
  if (idempotency_key)
    status["idempotency"][*idempotency_key] = {{"view_id", view_id}, {"body_fnv1a", body_hash}, {"response", response}};
  save_status(id, status);
  return response;
}

Json SessionStore::start_training(const std::string& id, const Json& config_overrides) {
  Live& l = live(id);
  std::lock_guard lock(l.write);
  Json status = load_status(id);
  if (l.busy) throw ServiceError(409, "a training job is already running for this session");
  if (status_of(status) == SessionStatus::kEmpty) throw ServiceError(409, "session has no manifest yet");

  PipelineConfig config;
  try {
    config = pipeline_config_from_json(config_overrides.is_null() ? Json::object() : config_overrides);
  } catch (const ValidationError& e) {
    throw ServiceError(400, "invalid pipeline config", Json{{"errors", e.errors()}});
  }
  Scene scene = load_scene(id, status);
  try {
    scene.validate_for_training();
  } catch (const ValidationError& e) {
    throw ServiceError(409, "training views need sketches", Json{{"errors", e.errors()}});
  }

  const int generation = status["generation"].get<int>() + 1;
  status["generation"] = generation;
  status["status"] = to_string(SessionStatus::kTraining);
  status["reason"] = nullptr;
  status["details"] = nullptr;
  put_artifact(status, session_dir(id), "config.json", "runs/" + std::to_string(generation) + "/config.json",
               dump_json(pipeline_config_to_json(config)));
  save_status(id, status);

  if (l.job.joinable()) l.job.join();
  l.epochs[0] = 0;
  l.epochs[1] = 0;
  l.total_epochs = config.flow.epochs;
  l.busy = true;
  l.job = std::thread([this, id, scene = std::move(scene), config, generation]() mutable {
    run_training(id, std::move(scene), config, generation);
  });
  return get(id);
}

void SessionStore::run_training(const std::string& id, Scene scene, PipelineConfig config, int generation) {
  Live& l = live(id);
  Json outcome{{"status", to_string(SessionStatus::kFailed)}, {"reason", nullptr}, {"details", nullptr}};
  std::map<std::string, std::string> files;
  try {
    const PipelineResult result = run_pipeline(scene, config, [&l](int view, int epoch, double) {
      if (view >= 0 && view < 2) l.epochs[view] = epoch + 1;
    });
    files = pipeline_artifacts(scene, config, result);
    outcome["status"] = to_string(SessionStatus::kTrained);
  } catch (const NoIntersectionsError& e) {
    outcome["reason"] = "no intersections";
    outcome["details"] = {{"message", e.what()}, {"slices", slice_diagnostics_to_json(e.diagnostics())}};
  } catch (const TrainingDivergedError& e) {
    outcome["reason"] = "training diverged";
    outcome["details"] = {{"message", e.what()}, {"epoch", e.epoch()}, {"batch", e.batch()}};
  } catch (const std::exception& e) {
    outcome["reason"] = "training failed";
    outcome["details"] = {{"message", e.what()}};
  }

  {
    std::lock_guard lock(l.write);
    try {
      Json status = load_status(id);
      // Drop results of earlier runs, keep inputs and this run's config.
      Json kept = Json::object();
      for (const auto& [name, a] : status["artifacts"].items())
        if (name == "manifest" || name.rfind("sketches/", 0) == 0 || name == "config.json") kept[name] = a;
      status["artifacts"] = kept;
      const fs::path dir = session_dir(id);
      for (const auto& [name, content] : files)
        if (name != "config.json") put_artifact(status, dir, name, "runs/" + std::to_string(generation) + "/" + name, content);
      status["status"] = outcome["status"];
      status["reason"] = outcome["reason"];
      status["details"] = outcome["details"];
      save_status(id, status);
    } catch (...) {
      // Nothing more can be persisted; the session stays in its last committed state.
    }
  }
  l.busy = false;
}

void SessionStore::wait(const std::string& id) {
  Live& l = live(id);
  std::thread job;
  {
    std::lock_guard lock(l.write);
    job.swap(l.job);
  }
  if (job.joinable()) job.join();
}

Json SessionStore::require_trained(const std::string& id) const {
  Json status = load_status(id);
  if (status_of(status) != SessionStatus::kTrained)
    throw ServiceError(409, "session is not trained (status " + status["status"].get<std::string>() + ")");
  return status;
}

TrajectoryDistribution SessionStore::load_trajectory(const std::string& id, const Json& status) const {
  return trajectory_model_from_json(
      read_json_file(session_dir(id) / status["artifacts"]["trajectory_model.json"]["path"].get<std::string>()));
}

Json SessionStore::sample(const std::string& id, int n, const std::optional<Vec3>& start,
                          std::optional<std::uint64_t> seed, int timesteps) {
  if (n < 0) throw ServiceError(400, "n must be >= 0");
  if (timesteps < 2) throw ServiceError(400, "timesteps must be >= 2");
  const Json status = require_trained(id);
  const TrajectoryDistribution dist = load_trajectory(id, status);
  const std::uint64_t used = seed.value_or(0);
  std::vector<std::vector<TimedPoint>> trajs;
  for (int k = 0; k < n; ++k) trajs.push_back(sample_trajectory(dist, used + static_cast<std::uint64_t>(k), start, timesteps));
  Json out{{"seed", used}, {"n", n}, {"timesteps", timesteps}, {"columns", {"t", "x", "y", "z"}},
           {"trajectories", trajectories_to_json(trajs)}};
  out["start"] = start ? Json{start->x(), start->y(), start->z()} : Json(nullptr);
  return out;
}

Json SessionStore::overlay(const std::string& id, const std::string& view_id, int n, const std::optional<Vec3>& start,
                           std::optional<std::uint64_t> seed, int timesteps) {
  if (n < 0) throw ServiceError(400, "n must be >= 0");
  if (timesteps < 2) throw ServiceError(400, "timesteps must be >= 2");
  const Json status = require_trained(id);
  const Scene scene = load_scene(id, status);
  const ViewCamera* cam = nullptr;
  for (const auto& v : scene.views)
    if (v.id == view_id) cam = &v;
  if (!cam) throw ServiceError(404, "unknown view \"" + view_id + "\"");
  const TrajectoryDistribution dist = load_trajectory(id, status);
  const std::uint64_t used = seed.value_or(0);

  std::size_t dropped = 0;
  auto to_polyline = [&](const std::vector<TimedPoint>& traj) {
    Json line = Json::array();
    for (const TimedPoint& p : traj) {
      try {
        const Projection pr = project(*cam, p.x);
        line.push_back({pr.u, pr.v});
      } catch (const BehindCameraError&) {
        ++dropped;
      }
    }
    return line;
  };
  Json polylines = Json::array();
  for (int k = 0; k < n; ++k)
    polylines.push_back(to_polyline(sample_trajectory(dist, used + static_cast<std::uint64_t>(k), start, timesteps)));
  const Json mean = to_polyline(mean_trajectory(dist, timesteps));
  return Json{{"view_id", view_id}, {"seed", used}, {"n", n}, {"polylines", polylines},
              {"mean", mean}, {"dropped_points", dropped}};
}

Json SessionStore::report(const std::string& id) {
  const Json status = require_trained(id);
  const Json summary =
      read_json_file(session_dir(id) / status["artifacts"]["report.json"]["path"].get<std::string>());
  if (summary["reports"].empty()) throw ServiceError(404, "no held-out view has sketches; nothing was evaluated");
  return summary;
}

fs::path SessionStore::image_path(const std::string& id, const std::string& view_id) {
  const Json status = load_status(id);
  const Scene scene = load_scene(id, status);
  for (const auto& v : scene.views) {
    if (v.id != view_id) continue;
    if (v.image_path.empty()) throw ServiceError(404, "view \"" + view_id + "\" has no image");
    const fs::path p(v.image_path);
    for (const fs::path& candidate : {p.is_absolute() ? p : session_dir(id) / p, root_ / p, fs::current_path() / p})
      if (fs::is_regular_file(candidate)) return candidate;
    throw ServiceError(404, "image for view \"" + view_id + "\" not found");
  }
  throw ServiceError(404, "unknown view \"" + view_id + "\"");
}

bool SessionStore::verify(const std::string& id) {
  const Json status = load_status(id);
  const fs::path dir = session_dir(id);
  for (const auto& [name, a] : status["artifacts"].items()) {
    const fs::path p = dir / a["path"].get<std::string>();
    if (!fs::exists(p) || fnv1a_hex(read_text_file(p)) != a["fnv1a"]) return false;
  }
  return true;
}

fs::path SessionStore::artifact_path(const std::string& id, const std::string& name) {
  const Json status = load_status(id);
  if (!status["artifacts"].contains(name)) throw ServiceError(404, "no artifact \"" + name + "\"");
  return session_dir(id) / status["artifacts"][name]["path"].get<std::string>();
}

}  // namespace sketchteach
