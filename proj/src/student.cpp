#include "nldf/student.hpp"

#include <atomic>
#include <string>

#include "nldf/parallel.hpp"

namespace nldf::student {

void NldfConfig::validate() const {
  std::string problems;
  auto require = [&](bool ok, const std::string& msg) {
    if (!ok) problems += (problems.empty() ? "" : "; ") + msg;
  };
  require(beam_points >= 2, "beam_points must be >= 2");
  require(segments >= 1, "segments must be >= 1");
  require(blocks >= 1, "blocks must be >= 1");
  require(width >= 3 * segments, "width must be >= 3 * segments");
  require(conditioning_dim >= 0, "conditioning_dim must be >= 0");
  if (!problems.empty()) throw ConfigError("model config: " + problems);
}

namespace {
constexpr std::int64_t kRenderChunk = 256;
}

template <typename S>
StudentRender render_frame_student(const NldfModel<S>& model,
                                   const cond::FusionModule<S>& fusion,
                                   const cond::DrivingSignal& signal, int frame,
                                   const geom::Camera& camera, double t_near, double t_far,
                                   int threads) {
  const Eigen::VectorXd a = fusion.empty() ? Eigen::VectorXd(0)
                                           : cond::fuse_window(fusion, signal, frame);
  if (static_cast<int>(a.size()) != model.config.conditioning_dim)
    throw DomainError("render_frame_student: conditioning dimension mismatch");

  StudentRender out;
  out.image = Image(camera.width, camera.height);
  const std::int64_t pixel_count = static_cast<std::int64_t>(out.image.pixel_count());
  const std::int64_t chunk_count = (pixel_count + kRenderChunk - 1) / kRenderChunk;
  std::atomic<std::uint64_t> forwards{0};
  std::atomic<std::uint64_t> saturated_count{0};

  const int in_dim = model.config.input_dim();
  const int k3 = 3 * model.config.beam_points;
  const int m = model.config.segments;

  parallel_chunks(chunk_count, threads, [&](std::int64_t chunk_begin, std::int64_t chunk_end) {
    std::uint64_t local_forwards = 0;
    std::uint64_t local_saturated = 0;
    for (std::int64_t chunk = chunk_begin; chunk < chunk_end; ++chunk) {
      const std::int64_t begin = chunk * kRenderChunk;
      const std::int64_t end = std::min(begin + kRenderChunk, pixel_count);
      const int rows = static_cast<int>(end - begin);
      nn::EMat<S> input(rows, in_dim);
      for (int r = 0; r < rows; ++r) {
        const std::int64_t idx = begin + r;
        const int px = static_cast<int>(idx % camera.width);
        const int py = static_cast<int>(idx / camera.width);
        const geom::Ray ray = geom::pixel_ray(camera, px + 0.5, py + 0.5, t_near, t_far);
        model.write_beam_row(ray, input.row(r).data());
        for (int c = 0; c < model.config.conditioning_dim; ++c)
          input(r, k3 + c) = static_cast<S>(a[c]);
      }
      const nn::EMat<S> seg = model.infer(input);
      local_forwards += static_cast<std::uint64_t>(rows);
      for (int r = 0; r < rows; ++r) {
        double rgb[3] = {0.0, 0.0, 0.0};
        for (int i = 0; i < m; ++i)
          for (int c = 0; c < 3; ++c) rgb[c] += static_cast<double>(seg(r, 3 * i + c));
        bool clamped = false;
        for (double& v : rgb) {
          if (v > 1.0) {
            v = 1.0;
            clamped = true;
          }
          if (v < 0.0) v = 0.0;
        }
        if (clamped) ++local_saturated;
        const std::int64_t idx = begin + r;
        double* dst = out.image.pixels.data() + 3 * idx;
        dst[0] = rgb[0];
        dst[1] = rgb[1];
        dst[2] = rgb[2];
      }
    }
    forwards.fetch_add(local_forwards, std::memory_order_relaxed);
    saturated_count.fetch_add(local_saturated, std::memory_order_relaxed);
  });

  out.forward_count = forwards.load();
  out.saturation_rate =
      static_cast<double>(saturated_count.load()) / static_cast<double>(pixel_count);
  return out;
}

template StudentRender render_frame_student<float>(const NldfModel<float>&,
                                                   const cond::FusionModule<float>&,
                                                   const cond::DrivingSignal&, int,
                                                   const geom::Camera&, double, double, int);
template StudentRender render_frame_student<double>(const NldfModel<double>&,
                                                    const cond::FusionModule<double>&,
                                                    const cond::DrivingSignal&, int,
                                                    const geom::Camera&, double, double, int);

}  // namespace nldf::student
