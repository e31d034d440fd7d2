#include "sketchteach/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace sketchteach {

std::string to_string(FixtureKind kind) {
  switch (kind) {
    case FixtureKind::kArc:
      return "arc";
    case FixtureKind::kLetterU:
      return "letter";
    case FixtureKind::kLine:
      return "line";
  }
  return "arc";
}

FixtureKind fixture_kind_from_string(const std::string& s) {
  if (s == "arc") return FixtureKind::kArc;
  if (s == "letter" || s == "U" || s == "u") return FixtureKind::kLetterU;
  if (s == "line") return FixtureKind::kLine;
  throw std::invalid_argument("fixture kind: expected arc, letter or line, got \"" + s + "\"");
}

namespace {

using std::numbers::pi;

// Handwritten "u": down the left stem, around the bowl, up the right side and
// back down the right stem. Parameterized by arc length.
Vec3 letter_u(double t) {
  constexpr double kHalfWidth = 0.1;
  constexpr double kTop = 0.35;
  constexpr double kBowlCenter = 0.15;
  constexpr double kStemEnd = 0.2;
  const double stem = kTop - kBowlCenter;
  const double bowl = pi * kHalfWidth;
  const double tail = kTop - kStemEnd;
  const double total = stem + bowl + stem + tail;
  double s = t * total;
  double y = 0.0, z = 0.0;
  if (s <= stem) {
    y = -kHalfWidth;
    z = kTop - s;
  } else if ((s -= stem) <= bowl) {
    const double a = pi + s / kHalfWidth;  // pi .. 2 pi, sweeping through the bottom
    y = kHalfWidth * std::cos(a);
    z = kBowlCenter + kHalfWidth * std::sin(a);
  } else if ((s -= bowl) <= stem) {
    y = kHalfWidth;
    z = kBowlCenter + s;
  } else {
    s -= stem;
    y = kHalfWidth;
    z = kTop - s;
  }
  // Drawn on a slightly tilted board in front of the robot.
  return {0.05 + 0.15 * y, y, z};
}

}  // namespace

Vec3 fixture_curve(FixtureKind kind, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::out_of_range("fixture_curve: t outside [0,1]");
  switch (kind) {
    case FixtureKind::kArc:
      return {0.12 * std::sin(pi * t), -0.25 + 0.5 * t, 0.05 + 0.25 * std::sin(pi * t)};
    case FixtureKind::kLetterU:
      return letter_u(t);
    case FixtureKind::kLine:
      return {-0.1 + 0.2 * t, -0.2 + 0.4 * t, 0.1 + 0.1 * t};
  }
  return Vec3::Zero();
}

SynthFixture synth_fixture(const SynthOptions& options) {
  if (options.sketches_per_view < 1) throw std::invalid_argument("synth: sketches_per_view must be >= 1");
  if (options.points_per_sketch < 2) throw std::invalid_argument("synth: points_per_sketch must be >= 2");
  if (!(options.noise >= 0.0)) throw std::invalid_argument("synth: noise must be >= 0");

  SynthFixture fx;
  const Vec3 target(0.0, 0.0, 0.2);
  const std::array<Vec3, 3> eyes = {Vec3(1.3, -0.55, 0.75), Vec3(1.2, 0.75, 0.6), Vec3(0.35, -1.35, 0.9)};
  for (std::size_t i = 0; i < eyes.size(); ++i) {
    ViewCamera cam;
    cam.id = "view" + std::to_string(i + 1);
    cam.image_path = "images/" + cam.id + ".svg";
    cam.origin = eyes[i];
    cam.orientation = look_at_orientation(eyes[i], target);
    cam.image_width_px = 640;
    cam.image_height_px = 480;
    cam.fx = 1.0;
    cam.fy = 1.0 * cam.image_width_px / cam.image_height_px;
    cam.cx = 0.5;
    cam.cy = 0.5;
    cam.d_near = 0.5;
    cam.d_far = 2.5;
    fx.views.push_back(cam);
  }
  fx.heldout_ids = {fx.views[2].id};

  const int l = options.points_per_sketch;
  for (int k = 0; k < l; ++k) {
    const double t = static_cast<double>(k) / (l - 1);
    fx.truth_t.push_back(t);
    fx.truth_points.push_back(fixture_curve(options.kind, t));
  }

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const ViewCamera& cam : fx.views) {
    RawSketchFile file;
    file.view_id = cam.id;
    file.time_mode = TimeMode::kRecorded;
    for (int s = 0; s < options.sketches_per_view; ++s) {
      std::vector<std::array<double, 3>> stroke;
      stroke.reserve(static_cast<std::size_t>(l));
      for (int k = 0; k < l; ++k) {
        const Projection p = project(cam, fx.truth_points[static_cast<std::size_t>(k)]);
        double u = p.u, v = p.v;
        if (options.noise > 0.0) {
          u += options.noise * normal(rng);
          v += options.noise * normal(rng);
        }
        stroke.push_back({fx.truth_t[static_cast<std::size_t>(k)], std::clamp(u, 0.0, 1.0), std::clamp(v, 0.0, 1.0)});
      }
      file.strokes.push_back(std::move(stroke));
    }
    fx.sketch_files.push_back(std::move(file));
  }
  return fx;
}

}  // namespace sketchteach
