#pragma once

// Two-view training pipeline: per-view flows, ray-traced intersections,
// trajectory-distribution fit and held-out evaluation.

#include "sketchteach/flow.hpp"
#include "sketchteach/intersect.hpp"
#include "sketchteach/io.hpp"
#include "sketchteach/metrics.hpp"
#include "sketchteach/trajdist.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sketchteach {

struct PipelineConfig {
  FlowConfig flow;
  IntersectionConfig intersection;
  BasisConfig basis = BasisConfig::make(20, 200.0);
  FitConfig fit;
  EvalConfig eval;

  /// One seed for every stochastic stage: flow of training view k uses seed + k.
  void set_seed(std::uint64_t seed);
  void validate() const;
};

Json pipeline_config_to_json(const PipelineConfig& c);
/// Missing keys keep the values in `base`; unknown keys are rejected.
PipelineConfig pipeline_config_from_json(const Json& j, PipelineConfig base = {});

struct Scene {
  std::vector<ViewCamera> views;
  std::map<std::string, std::vector<SketchTrajectory>> sketches;  // by view id

  /// First two views train; later views are held out.
  std::vector<std::string> train_ids() const;
  std::vector<std::string> heldout_ids() const;
  const ViewCamera& view(const std::string& id) const;
  void validate_for_training() const;
};

/// Manifest plus raw sketch files, normalized and checked against the views.
Scene make_scene(std::vector<ViewCamera> views, const std::vector<RawSketchFile>& files);

struct PipelineResult {
  std::vector<FlowTrainResult> flows;  // one per training view
  IntersectionSamples samples;
  FitResult fit;
  std::vector<EvaluationReport> reports;  // held-out views that have sketches
};

/// Called from worker threads; `view` is the training-view index.
using ProgressFn = std::function<void(int view, int epoch, double loss)>;

PipelineResult run_pipeline(const Scene& scene, const PipelineConfig& config, const ProgressFn& progress = {});

/// Artifact file name -> serialized content, deterministic for fixed inputs.
std::map<std::string, std::string> pipeline_artifacts(const Scene& scene, const PipelineConfig& config,
                                                      const PipelineResult& result);

Json reports_to_json(const std::vector<EvaluationReport>& reports, const PipelineConfig& config);

/// Plain-text table with methods as rows and MFD/WD per held-out view as columns.
std::string render_report_table(const std::vector<EvaluationReport>& reports, const std::string& environment);

std::vector<TrainingView> training_views(const Scene& scene);

/// Reads `dir`/manifest.json and every `dir`/sketches_*.json (in name order).
Scene load_scene_dir(const std::filesystem::path& dir);

/// Writes manifest.json, sketches_<view>.json, truth.json and a placeholder
/// SVG image per view into `dir`.
void write_fixture_dir(const std::filesystem::path& dir, const SynthFixture& fixture, const SynthOptions& options);

}  // namespace sketchteach
