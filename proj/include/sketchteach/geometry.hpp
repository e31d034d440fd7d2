#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>
#include <vector>

namespace sketchteach {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Thrown by project() when a point does not lie in front of the camera.
class BehindCameraError : public std::domain_error {
 public:
  explicit BehindCameraError(double depth)
      : std::domain_error("point is behind camera (camera-frame z = " + std::to_string(depth) + ")"),
        depth_(depth) {}
  double depth() const { return depth_; }

 private:
  double depth_;
};

/// Pinhole camera for one posed view.
///
/// Image convention: u grows rightward, v grows downward, both normalized to
/// [0,1] by image width and height. The camera looks along +z of its own
/// frame; `orientation` maps camera-frame vectors to world frame.
struct ViewCamera {
  std::string id;
  std::string image_path;
  Vec3 origin = Vec3::Zero();
  Mat3 orientation = Mat3::Identity();
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.5;
  double cy = 0.5;
  double d_near = 0.1;
  double d_far = 10.0;
  int image_width_px = 640;
  int image_height_px = 480;

  /// Empty when every invariant holds; otherwise one message per violated field.
  std::vector<std::string> validation_errors() const;
  /// Throws std::invalid_argument listing all violations.
  void validate() const;
};

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length
  double d_near;
  double d_far;
};

struct Projection {
  double u;
  double v;
  double depth;
};

Ray pixel_ray(const ViewCamera& camera, double u, double v);

Vec3 ray_point(const Ray& ray, double d);

/// Inverse of ray_point(pixel_ray(...)). Throws BehindCameraError when the
/// camera-frame depth is <= 1e-12.
Projection project(const ViewCamera& camera, const Vec3& point);

/// Rotation that points the camera +z axis from `eye` toward `target`, with
/// camera +v (image down) roughly along -`up`.
Mat3 look_at_orientation(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ());

}  // namespace sketchteach
