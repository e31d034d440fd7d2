#pragma once

#include <array>
#include <string>
#include <vector>

namespace sketchteach {

/// How timestamps are assigned to stroke points before training.
enum class TimeMode {
  kArcLength,  // normalized cumulative 2D arc length along the stroke
  kRecorded,   // recorded capture times, affinely rescaled to [0,1]
};

std::string to_string(TimeMode mode);
TimeMode time_mode_from_string(const std::string& s);

struct SketchPoint {
  double t;
  double u;
  double v;
};

/// One user-drawn demonstration in a view: (t, u, v) with t running 0..1.
struct SketchTrajectory {
  std::string view_id;
  std::vector<SketchPoint> points;

  /// Throws std::invalid_argument unless l >= 2, t strictly increasing from 0 to 1,
  /// and every coordinate in [0,1].
  void validate() const;
};

/// Converts a raw stroke (t, u, v rows; t ignored in arc-length mode) into a
/// normalized SketchTrajectory. Throws std::invalid_argument on strokes that
/// cannot satisfy the SketchTrajectory invariants.
SketchTrajectory normalize_stroke(const std::string& view_id, const std::vector<std::array<double, 3>>& raw,
                                  TimeMode mode);

}  // namespace sketchteach
