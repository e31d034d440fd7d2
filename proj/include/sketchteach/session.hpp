#pragma once

// Directory-backed sessions: one folder per session holding the manifest,
// revisioned sketch sets, per-run artifact folders and a status file that
// names every live artifact with its checksum. The status file is written
// last, so it is the commit point of every transition.

#include "sketchteach/io.hpp"
#include "sketchteach/pipeline.hpp"

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

namespace sketchteach {

enum class SessionStatus { kEmpty, kSketching, kTraining, kTrained, kFailed };

std::string to_string(SessionStatus s);
SessionStatus session_status_from_string(const std::string& s);

/// Error with the HTTP status it maps to and an optional JSON detail payload.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int http_status, const std::string& what, Json details = Json::object())
      : std::runtime_error(what), http_status_(http_status), details_(std::move(details)) {}
  int http_status() const { return http_status_; }
  const Json& details() const { return details_; }

 private:
  int http_status_;
  Json details_;
};

class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path root);
  ~SessionStore();
  SessionStore(const SessionStore&) = delete;
  SessionStore& operator=(const SessionStore&) = delete;

  /// $SKETCHTEACH_DATA, else ./sketchteach-data.
  static std::filesystem::path default_root();

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path session_dir(const std::string& id) const;

  Json create(const Json& manifest);
  /// Last persisted status plus live training progress.
  Json get(const std::string& id);
  Json submit_sketches(const std::string& id, const std::string& view_id, const Json& sketch_file,
                       const std::optional<std::string>& idempotency_key = std::nullopt);
  /// Validates and persists the training transition, then trains in the background.
  Json start_training(const std::string& id, const Json& config_overrides = Json::object());
  /// Blocks until the background job of `id` (if any) has finished.
  void wait(const std::string& id);

  Json sample(const std::string& id, int n, const std::optional<Vec3>& start, std::optional<std::uint64_t> seed,
              int timesteps = 100);
  Json overlay(const std::string& id, const std::string& view_id, int n, const std::optional<Vec3>& start,
               std::optional<std::uint64_t> seed, int timesteps = 100);
  Json report(const std::string& id);
  std::filesystem::path image_path(const std::string& id, const std::string& view_id);

  /// True when every artifact named in the status file matches its checksum.
  bool verify(const std::string& id);
  /// Path of a live artifact, e.g. "trajectory_model.json", relative to the session folder.
  std::filesystem::path artifact_path(const std::string& id, const std::string& name);

 private:
  struct Live {
    std::mutex write;
    std::atomic<bool> busy{false};
    std::atomic<int> epochs[2] = {0, 0};
    std::atomic<int> total_epochs{0};
    std::thread job;
  };

  Live& live(const std::string& id);
  Json load_status(const std::string& id) const;
  void save_status(const std::string& id, const Json& status);
  Scene load_scene(const std::string& id, const Json& status) const;
  Json require_trained(const std::string& id) const;
  TrajectoryDistribution load_trajectory(const std::string& id, const Json& status) const;
  void run_training(const std::string& id, Scene scene, PipelineConfig config, int generation);

  std::filesystem::path root_;
  std::mutex map_mutex_;
  std::map<std::string, std::unique_ptr<Live>> live_;
};

}  // namespace sketchteach
