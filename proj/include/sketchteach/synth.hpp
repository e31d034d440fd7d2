#pragma once

// Synthetic demonstration scenes: a known 3D curve, three virtual cameras and
// noisy per-view sketches obtained by projecting the curve.

#include "sketchteach/geometry.hpp"
#include "sketchteach/sketch.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace sketchteach {

enum class FixtureKind { kArc, kLetterU, kLine };

std::string to_string(FixtureKind kind);
FixtureKind fixture_kind_from_string(const std::string& s);

struct SynthOptions {
  FixtureKind kind = FixtureKind::kArc;
  /// Std of the Gaussian added to each normalized pixel coordinate.
  double noise = 0.005;
  std::uint64_t seed = 0;
  int sketches_per_view = 3;
  int points_per_sketch = 100;
};

struct RawSketchFile {
  std::string view_id;
  TimeMode time_mode = TimeMode::kRecorded;
  std::vector<std::vector<std::array<double, 3>>> strokes;  // rows of (t, u, v)
};

struct SynthFixture {
  std::vector<ViewCamera> views;        // first two train, third held out
  std::vector<std::string> heldout_ids;
  std::vector<RawSketchFile> sketch_files;  // one per view
  std::vector<double> truth_t;
  std::vector<Vec3> truth_points;
};

/// Ground-truth curve position at normalized time t in [0,1].
Vec3 fixture_curve(FixtureKind kind, double t);

SynthFixture synth_fixture(const SynthOptions& options);

}  // namespace sketchteach
