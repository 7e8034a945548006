#include "nldf/field.hpp"

#include <cmath>
#include <string>

#include "nldf/errors.hpp"
#include "nldf/rng.hpp"

namespace nldf::field {

void AnalyticScene::validate() const {
  for (size_t i = 0; i < blobs.size(); ++i) {
    const Blob& b = blobs[i];
    const std::string tag = "blob " + std::to_string(i) + ": ";
    if (!(b.radius > 0.0)) throw ConfigError(tag + "radius must be > 0");
    if (!(b.amplitude >= 0.0)) throw ConfigError(tag + "amplitude must be >= 0");
    for (int c = 0; c < 3; ++c)
      if (!(b.color[c] >= 0.0 && b.color[c] <= 1.0))
        throw ConfigError(tag + "color channels must lie in [0,1]");
    if (b.drive.size() > 0 && (b.drive.rows() != 3 || b.drive.cols() != conditioning_dim))
      throw ConfigError(tag + "drive matrix must be 3 x " + std::to_string(conditioning_dim));
  }
}

RadianceSample eval_field(const AnalyticScene& scene, const ConditioningVector& a,
                          const Vec3& p, const Vec3& /*d*/) {
  RadianceSample out;
  Vec3 weighted = Vec3::Zero();
  double sigma = 0.0;
  for (const Blob& b : scene.blobs) {
    Vec3 mu = b.center;
    if (b.drive.size() > 0) mu += b.drive * a;
    const double q = (p - mu).squaredNorm() / (2.0 * b.radius * b.radius);
    const double s = b.amplitude * std::exp(-q);
    sigma += s;
    weighted += s * b.color;
  }
  out.sigma = sigma;
  if (sigma > 0.0) out.color = weighted / sigma;
  return out;
}

AnalyticScene default_talking_scene(std::uint64_t seed, int conditioning_dim) {
  if (conditioning_dim < 0) throw ConfigError("conditioning_dim must be >= 0");
  Rng rng(substream(seed, "talking-scene"));
  const int d = conditioning_dim;

  auto seeded_drive = [&](double frobenius) {
    Eigen::MatrixXd drive(3, d);
    if (d == 0) return drive;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < d; ++c) drive(r, c) = rng.uniform(-1.0, 1.0);
    const double norm = drive.norm();
    if (norm > 0.0) drive *= frobenius / norm;
    return drive;
  };

  AnalyticScene scene;
  scene.conditioning_dim = d;

  Blob head;
  head.center = Vec3(0.0, 0.0, 0.0);
  head.drive = Eigen::MatrixXd::Zero(3, d);
  head.radius = 0.45;
  head.amplitude = 3.0;
  head.color = Vec3(0.85, 0.70, 0.60);
  scene.blobs.push_back(head);

  Blob mouth;
  mouth.center = Vec3(0.0, -0.22, 0.25);
  mouth.drive = seeded_drive(0.35);
  mouth.radius = 0.13;
  mouth.amplitude = 6.0;
  mouth.color = Vec3(0.75, 0.15, 0.20);
  scene.blobs.push_back(mouth);

  Blob brow_left;
  brow_left.center = Vec3(-0.16, 0.18, 0.28);
  brow_left.drive = seeded_drive(0.18);
  brow_left.radius = 0.07;
  brow_left.amplitude = 5.0;
  brow_left.color = Vec3(0.20, 0.30, 0.80);
  scene.blobs.push_back(brow_left);

  Blob brow_right;
  brow_right.center = Vec3(0.16, 0.18, 0.28);
  brow_right.drive = seeded_drive(0.18);
  brow_right.radius = 0.07;
  brow_right.amplitude = 5.0;
  brow_right.color = Vec3(0.90, 0.65, 0.15);
  scene.blobs.push_back(brow_right);

  scene.validate();
  return scene;
}

}  // namespace nldf::field
