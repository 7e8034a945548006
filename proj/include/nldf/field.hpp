#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "nldf/geometry.hpp"

namespace nldf::field {

using geom::Vec3;
using ConditioningVector = Eigen::VectorXd;

/// Teacher output at a point: emitted color and volumetric density.
struct RadianceSample {
  Vec3 color = Vec3::Zero();  // each channel in [0, 1]
  double sigma = 0.0;         // >= 0
};

/// Gaussian density blob whose center shifts linearly with the conditioning
/// vector: mu(a) = mu0 + A a.
struct Blob {
  Vec3 center = Vec3::Zero();          // mu0
  Eigen::MatrixXd drive;               // A, 3 x D (D may be 0)
  double radius = 0.1;                 // > 0
  double amplitude = 1.0;              // >= 0
  Vec3 color = Vec3::Ones();           // in [0,1]^3
};

/// Analytic dynamic scene standing in for a trained radiance-field teacher.
/// Immutable after construction; background density is zero everywhere.
struct AnalyticScene {
  std::vector<Blob> blobs;
  int conditioning_dim = 0;

  void validate() const;  // throws ConfigError on a bad blob
};

/// F(a, d, p) -> (c, sigma). Density is the sum of blob Gaussians, color the
/// density-weighted average of blob colors ((0,0,0) where sigma is 0). The
/// direction is accepted for interface parity; the scene is isotropic.
RadianceSample eval_field(const AnalyticScene& scene, const ConditioningVector& a,
                          const Vec3& p, const Vec3& d);

/// Desk-scale head analog: one static "head" blob plus conditioning-driven
/// "mouth" and "brow" blobs. Deterministic for a given seed.
AnalyticScene default_talking_scene(std::uint64_t seed, int conditioning_dim);

}  // namespace nldf::field
