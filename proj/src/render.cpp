#include "nldf/render.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "nldf/errors.hpp"
#include "nldf/parallel.hpp"
#include "nldf/rng.hpp"

namespace nldf::render {

std::vector<double> transmittance_prefix(std::span<const double> sigmas,
                                         std::span<const double> deltas) {
  if (sigmas.size() != deltas.size())
    throw DomainError("transmittance_prefix: sigma/delta length mismatch");
  std::vector<double> t(sigmas.size());
  double optical_depth = 0.0;
  for (size_t k = 0; k < sigmas.size(); ++k) {
    if (sigmas[k] < 0.0) throw DomainError("transmittance_prefix: negative density");
    if (deltas[k] < 0.0) throw DomainError("transmittance_prefix: negative delta");
    t[k] = std::exp(-optical_depth);
    optical_depth += sigmas[k] * deltas[k];
  }
  return t;
}

CompositeRaw composite_full_raw(std::span<const RadianceSample> samples,
                                std::span<const double> deltas) {
  if (samples.size() != deltas.size())
    throw DomainError("composite_full: sample/delta length mismatch");
  CompositeRaw out;
  double transmittance = 1.0;
  for (size_t k = 0; k < samples.size(); ++k) {
    if (samples[k].sigma < 0.0) throw DomainError("composite_full: negative density");
    if (deltas[k] < 0.0) throw DomainError("composite_full: negative delta");
    const double alpha = 1.0 - std::exp(-samples[k].sigma * deltas[k]);
    out.rgb += transmittance * alpha * samples[k].color;
    out.opacity += transmittance * alpha;
    transmittance *= 1.0 - alpha;
  }
  return out;
}

namespace {
Vec3 clamp01(const Vec3& v) {
  return v.cwiseMax(0.0).cwiseMin(1.0);
}
}  // namespace

PixelColor composite_full(std::span<const RadianceSample> samples,
                          std::span<const double> deltas) {
  return {clamp01(composite_full_raw(samples, deltas).rgb)};
}

SegmentColors composite_segments(std::span<const RadianceSample> samples,
                                 std::span<const double> deltas, int m) {
  const int n = static_cast<int>(samples.size());
  if (m < 1) throw ConfigError("composite_segments requires M >= 1");
  if (n % m != 0)
    throw ConfigError("composite_segments: M = " + std::to_string(m) +
                      " does not divide N = " + std::to_string(n));
  if (samples.size() != deltas.size())
    throw DomainError("composite_segments: sample/delta length mismatch");

  SegmentColors seg;
  seg.colors.setZero(m, 3);
  const int per_segment = n / m;
  double transmittance = 1.0;  // global across segment boundaries
  for (int i = 0; i < m; ++i) {
    Vec3 acc = Vec3::Zero();
    for (int k = i * per_segment; k < (i + 1) * per_segment; ++k) {
      if (samples[k].sigma < 0.0) throw DomainError("composite_segments: negative density");
      if (deltas[k] < 0.0) throw DomainError("composite_segments: negative delta");
      const double alpha = 1.0 - std::exp(-samples[k].sigma * deltas[k]);
      acc += transmittance * alpha * samples[k].color;
      transmittance *= 1.0 - alpha;
    }
    seg.colors.row(i) = acc.transpose();
  }
  return seg;
}

PixelColor accumulate_segments(const SegmentColors& seg, bool* saturated) {
  Vec3 sum = Vec3::Zero();
  for (int i = 0; i < seg.segments(); ++i) sum += seg.colors.row(i).transpose();
  if (saturated) *saturated = sum.maxCoeff() > 1.0;
  return {clamp01(sum)};
}

TeacherRender render_frame_teacher(const AnalyticScene& scene, const Camera& camera,
                                   const ConditioningVector& a, int n_samples,
                                   double t_near, double t_far, SampleMode mode,
                                   std::uint64_t seed, int threads) {
  if (n_samples < 1) throw ConfigError("render_frame_teacher requires N >= 1");
  TeacherRender out;
  out.image = Image(camera.width, camera.height);
  out.opacity.assign(out.image.pixel_count(), 0.0);

  const std::int64_t pixel_count = static_cast<std::int64_t>(out.image.pixel_count());
  std::atomic<std::uint64_t> evals{0};

  parallel_chunks(pixel_count, threads, [&](std::int64_t begin, std::int64_t end) {
    std::vector<RadianceSample> samples(static_cast<size_t>(n_samples));
    std::vector<double> deltas(static_cast<size_t>(n_samples));
    std::uint64_t local_evals = 0;
    for (std::int64_t idx = begin; idx < end; ++idx) {
      const int px = static_cast<int>(idx % camera.width);
      const int py = static_cast<int>(idx / camera.width);
      const Ray ray = geom::pixel_ray(camera, px + 0.5, py + 0.5, t_near, t_far);
      const auto points = geom::place_samples(
          ray, n_samples, mode, substream(seed, "render", static_cast<std::uint64_t>(idx)));
      for (int k = 0; k < n_samples; ++k) {
        samples[k] = field::eval_field(scene, a, points[k].position, ray.direction);
        deltas[k] = points[k].delta;
        ++local_evals;
      }
      const CompositeRaw raw = composite_full_raw(samples, deltas);
      const Vec3 rgb = raw.rgb.cwiseMax(0.0).cwiseMin(1.0);
      double* px_out = out.image.at(px, py);
      px_out[0] = rgb.x();
      px_out[1] = rgb.y();
      px_out[2] = rgb.z();
      out.opacity[static_cast<size_t>(idx)] = raw.opacity;
    }
    evals.fetch_add(local_evals, std::memory_order_relaxed);
  });

  out.field_evals = evals.load();
  return out;
}

}  // namespace nldf::render
