#include "sketchteach/geometry.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <cmath>
#include <sstream>

namespace sketchteach {

namespace {

constexpr double kOrthonormalTol = 1e-9;
constexpr double kBehindCameraEps = 1e-12;

bool finite3(const Vec3& p) { return p.allFinite(); }

}  // namespace

std::vector<std::string> ViewCamera::validation_errors() const {
  std::vector<std::string> errs;
  if (!finite3(origin)) errs.push_back("origin: non-finite coordinate");
  if (!orientation.allFinite()) {
    errs.push_back("orientation: non-finite entry");
  } else {
    const double ortho = (orientation.transpose() * orientation - Mat3::Identity()).cwiseAbs().maxCoeff();
    const double det = orientation.determinant();
    if (ortho > kOrthonormalTol || std::abs(det - 1.0) > kOrthonormalTol)
      errs.push_back("orientation not orthonormal");
  }
  if (!(fx > 0.0) || !std::isfinite(fx)) errs.push_back("fx: must be > 0");
  if (!(fy > 0.0) || !std::isfinite(fy)) errs.push_back("fy: must be > 0");
  if (!(cx >= 0.0 && cx <= 1.0)) errs.push_back("cx: must lie in [0,1]");
  if (!(cy >= 0.0 && cy <= 1.0)) errs.push_back("cy: must lie in [0,1]");
  if (!(d_near > 0.0)) errs.push_back("d_near: must be > 0");
  if (!(d_far > d_near) || !std::isfinite(d_far)) errs.push_back("d_far: must exceed d_near");
  if (image_width_px <= 0) errs.push_back("image_width_px: must be positive");
  if (image_height_px <= 0) errs.push_back("image_height_px: must be positive");
  return errs;
}

void ViewCamera::validate() const {
  const auto errs = validation_errors();
  if (errs.empty()) return;
  std::ostringstream os;
  os << "view '" << id << "':";
  for (const auto& e : errs) os << ' ' << e << ';';
  throw std::invalid_argument(os.str());
}

Ray pixel_ray(const ViewCamera& camera, double u, double v) {
  if (!(u >= 0.0 && u <= 1.0) || !(v >= 0.0 && v <= 1.0))
    throw std::out_of_range("pixel_ray: (u, v) must lie in [0,1]^2");
  const Vec3 local((u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0);
  Vec3 dir = camera.orientation * local.normalized();
  // Re-normalize so rotation round-off never leaks into |direction|.
  dir.normalize();
  return Ray{camera.origin, dir, camera.d_near, camera.d_far};
}

Vec3 ray_point(const Ray& ray, double d) {
  if (!(d >= ray.d_near && d <= ray.d_far))
    throw std::out_of_range("ray_point: depth outside [d_near, d_far]");
  return ray.origin + ray.direction * d;
}

Projection project(const ViewCamera& camera, const Vec3& point) {
  const Vec3 local = camera.orientation.transpose() * (point - camera.origin);
  if (!(local.z() > kBehindCameraEps)) throw BehindCameraError(local.z());
  return Projection{camera.cx + camera.fx * local.x() / local.z(),
                    camera.cy + camera.fy * local.y() / local.z(), local.z()};
}

Mat3 look_at_orientation(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-9) x = z.cross(Vec3::UnitX());
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return r;
}

}  // namespace sketchteach
