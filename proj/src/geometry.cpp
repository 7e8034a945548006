#include "nldf/geometry.hpp"

#include <cmath>
#include <string>

#include "nldf/errors.hpp"
#include "nldf/rng.hpp"

namespace nldf::geom {

double Pose::orthonormality_error() const {
  const Mat3 gram = rotation.transpose() * rotation;
  const double ortho = (gram - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det = std::abs(rotation.determinant() - 1.0);
  return std::max(ortho, det);
}

Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  // Camera z points backward (away from the target) so that -z is forward.
  Vec3 z = (eye - target).normalized();
  Vec3 x = up.cross(z).normalized();
  Vec3 y = z.cross(x);
  Pose pose;
  pose.rotation.col(0) = x;
  pose.rotation.col(1) = y;
  pose.rotation.col(2) = z;
  pose.translation = eye;
  return pose;
}

Ray pixel_ray(const Camera& camera, double px, double py, double t_near, double t_far) {
  if (camera.focal <= 0.0) throw ConfigError("camera focal length must be > 0");
  if (camera.width <= 0 || camera.height <= 0)
    throw ConfigError("camera dimensions must be positive");
  if (!(t_near >= 0.0) || !(t_near < t_far))
    throw ConfigError("ray bounds require 0 <= t_near < t_far");
  if (px < 0.0 || px >= camera.width || py < 0.0 || py >= camera.height)
    throw DomainError("pixel (" + std::to_string(px) + ", " + std::to_string(py) +
                      ") outside " + std::to_string(camera.width) + "x" +
                      std::to_string(camera.height) + " frame");

  const Vec3 dir_cam((px - camera.cx) / camera.focal, -(py - camera.cy) / camera.focal, -1.0);
  Ray ray;
  ray.origin = camera.pose.translation;
  ray.direction = (camera.pose.rotation * dir_cam).normalized();
  ray.t_near = t_near;
  ray.t_far = t_far;
  return ray;
}

BeamFeature encode_beam(const Ray& ray, int k) {
  if (k < 2) throw ConfigError("encode_beam requires K >= 2, got " + std::to_string(k));
  BeamFeature feature;
  feature.k = k;
  feature.coords.resize(static_cast<size_t>(3 * k));
  const double span = ray.t_far - ray.t_near;
  for (int i = 0; i < k; ++i) {
    const double t = ray.t_near + span * static_cast<double>(i) / static_cast<double>(k - 1);
    const Vec3 p = ray.at(t);
    feature.coords[3 * i + 0] = p.x();
    feature.coords[3 * i + 1] = p.y();
    feature.coords[3 * i + 2] = p.z();
  }
  return feature;
}

std::vector<SamplePoint> place_samples(const Ray& ray, int n, SampleMode mode,
                                       std::uint64_t seed) {
  if (n < 1) throw ConfigError("place_samples requires N >= 1, got " + std::to_string(n));
  const double width = (ray.t_far - ray.t_near) / static_cast<double>(n);
  std::vector<double> depths(static_cast<size_t>(n));
  if (mode == SampleMode::kMidpoint) {
    for (int i = 0; i < n; ++i)
      depths[i] = ray.t_near + (static_cast<double>(i) + 0.5) * width;
  } else {
    Rng rng(seed);
    for (int i = 0; i < n; ++i)
      depths[i] = ray.t_near + (static_cast<double>(i) + rng.uniform()) * width;
  }
  std::vector<SamplePoint> samples(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    samples[i].depth = depths[i];
    samples[i].position = ray.at(depths[i]);
    samples[i].delta = (i + 1 < n) ? depths[i + 1] - depths[i] : width;
  }
  return samples;
}

}  // namespace nldf::geom
