#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace nldf::geom {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Rigid camera/head transform {R, t}. R must be a proper rotation.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  /// Max deviation of R^T R from the identity plus |det(R) - 1|; 0 for a
  /// perfect rotation. Used by validation and property tests.
  double orthonormality_error() const;
};

/// Camera looking along -z in its own frame, y up. Pixel (cx, cy) maps to
/// the optical axis.
struct Camera {
  Pose pose;
  double focal = 0.0;  // pixels
  double cx = 0.0, cy = 0.0;
  int width = 0, height = 0;
};

/// Pose at `eye` looking toward `target` under the -z-forward convention.
Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3(0, 1, 0));

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();  // unit norm
  double t_near = 0.0;
  double t_far = 1.0;

  Vec3 at(double t) const { return origin + t * direction; }
};

/// Concatenated positions of K points along a ray, the network's view of the
/// beam: coords = (p_0 | p_1 | ... | p_{K-1}), 3K values.
struct BeamFeature {
  std::vector<double> coords;
  int k = 0;
};

/// One render sample: position, depth along the ray, and the interval to the
/// next sample.
struct SamplePoint {
  Vec3 position = Vec3::Zero();
  double depth = 0.0;
  double delta = 0.0;
};

enum class SampleMode { kMidpoint, kStratified };

/// Ray through pixel (px, py). Throws DomainError if the pixel is outside
/// the frame, ConfigError if the camera or bounds are invalid.
Ray pixel_ray(const Camera& camera, double px, double py, double t_near, double t_far);

/// K points uniform in t over [t_near, t_far], endpoints included. K >= 2.
BeamFeature encode_beam(const Ray& ray, int k);

/// N samples over [t_near, t_far] split into N equal bins: bin centers in
/// midpoint mode, one seeded uniform draw per bin in stratified mode.
/// delta_k = t_{k+1} - t_k, with the last delta equal to the bin width.
std::vector<SamplePoint> place_samples(const Ray& ray, int n, SampleMode mode,
                                       std::uint64_t seed = 0);

}  // namespace nldf::geom
