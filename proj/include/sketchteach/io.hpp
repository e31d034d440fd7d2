#pragma once

// JSON schemas for manifests, sketch files, model artifacts and reports.
// Every dump is deterministic: keys are sorted and doubles round-trip exactly.

#include "sketchteach/flow.hpp"
#include "sketchteach/geometry.hpp"
#include "sketchteach/intersect.hpp"
#include "sketchteach/metrics.hpp"
#include "sketchteach/sketch.hpp"
#include "sketchteach/synth.hpp"
#include "sketchteach/trajdist.hpp"

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

namespace sketchteach {

using Json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

/// Parsed text yields unsigned numbers, programmatic literals signed ones.
inline bool is_non_negative_integer(const Json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

/// Input rejected by a schema; `errors()` holds one "path: problem" entry per fault.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

Json camera_to_json(const ViewCamera& camera);
/// Accepts a bare array of views or an object with a "views" array.
std::vector<ViewCamera> manifest_from_json(const Json& j);
Json manifest_to_json(const std::vector<ViewCamera>& views);

RawSketchFile sketch_file_from_json(const Json& j);
Json sketch_file_to_json(const RawSketchFile& file);
/// One normalized SketchTrajectory per stroke. Errors name the stroke index.
std::vector<SketchTrajectory> normalize_sketch_file(const RawSketchFile& file);

Json sketches_to_json(const std::vector<SketchTrajectory>& sketches);
std::vector<SketchTrajectory> sketches_from_json(const Json& j);

Json flow_config_to_json(const FlowConfig& c);
FlowConfig flow_config_from_json(const Json& j, FlowConfig base = {});
Json intersection_config_to_json(const IntersectionConfig& c);
IntersectionConfig intersection_config_from_json(const Json& j, IntersectionConfig base = {});
Json fit_config_to_json(const FitConfig& c);
FitConfig fit_config_from_json(const Json& j, FitConfig base = {});
Json basis_to_json(const BasisConfig& b);
BasisConfig basis_from_json(const Json& j);

Json flow_model_to_json(const FlowModel& model);
FlowModel flow_model_from_json(const Json& j);

Json trajectory_model_to_json(const FitResult& fit, const FitConfig& config);
TrajectoryDistribution trajectory_model_from_json(const Json& j);

/// Per-slice thresholded pixel counts, region sizes and the sample list.
Json intersection_debug_json(const IntersectionSamples& samples);
Json slice_diagnostics_to_json(const std::vector<SliceDiagnostics>& diags);

Json report_to_json(const EvaluationReport& report);

Json trajectories_to_json(const std::vector<std::vector<TimedPoint>>& trajs);
/// Header "trajectory,t,x,y,z"; one row per point.
std::string trajectories_to_csv(const std::vector<std::vector<TimedPoint>>& trajs);

/// Pretty-printed with a trailing newline.
std::string dump_json(const Json& j);
Json read_json_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file, flushes, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(const std::string& data);

}  // namespace sketchteach
