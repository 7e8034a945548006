#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nldf/field.hpp"
#include "nldf/geometry.hpp"
#include "nldf/image.hpp"

namespace nldf::render {

using field::AnalyticScene;
using field::ConditioningVector;
using field::RadianceSample;
using geom::Camera;
using geom::Ray;
using geom::SampleMode;
using geom::Vec3;

/// RGB pixel value in [0, 1].
struct PixelColor {
  Vec3 rgb = Vec3::Zero();
};

/// M per-segment RGB contributions, segment-major. Segment i of an N-sample
/// ray covers sample indices [i*N/M, (i+1)*N/M).
struct SegmentColors {
  Eigen::Matrix<double, Eigen::Dynamic, 3> colors;  // M x 3
  int segments() const { return static_cast<int>(colors.rows()); }
};

/// Prefix transmittance: T_0 = 1, T_k = exp(-sum_{j<k} sigma_j delta_j).
/// Throws DomainError on negative sigma or delta.
std::vector<double> transmittance_prefix(std::span<const double> sigmas,
                                         std::span<const double> deltas);

/// Full-ray compositing sum_k T_k (1 - exp(-sigma_k delta_k)) c_k without the
/// final clamp, plus the accumulated opacity sum_k T_k alpha_k.
struct CompositeRaw {
  Vec3 rgb = Vec3::Zero();
  double opacity = 0.0;
};
CompositeRaw composite_full_raw(std::span<const RadianceSample> samples,
                                std::span<const double> deltas);

/// Full-ray pixel color, clamped to [0, 1].
PixelColor composite_full(std::span<const RadianceSample> samples,
                          std::span<const double> deltas);

/// Per-segment compositing under the global prefix transmittance, so the
/// segment colors sum exactly to the full-ray composite. M must divide N.
SegmentColors composite_segments(std::span<const RadianceSample> samples,
                                 std::span<const double> deltas, int m);

/// Pixel from segment colors: per-channel sum clamped to [0, 1]. When
/// `saturated` is non-null it reports whether any channel exceeded 1.
PixelColor accumulate_segments(const SegmentColors& seg, bool* saturated = nullptr);

struct TeacherRender {
  Image image;
  std::vector<double> opacity;   // per pixel, row-major
  std::uint64_t field_evals = 0;
};

/// Renders one teacher frame: per pixel, place N samples, evaluate the field
/// at each, composite. Performs exactly width * height * N field evaluations
/// (counted in the result). Deterministic in midpoint mode; stratified mode
/// derives each pixel's stream from (seed, pixel index).
TeacherRender render_frame_teacher(const AnalyticScene& scene, const Camera& camera,
                                   const ConditioningVector& a, int n_samples,
                                   double t_near, double t_far,
                                   SampleMode mode = SampleMode::kMidpoint,
                                   std::uint64_t seed = 0, int threads = 1);

}  // namespace nldf::render
