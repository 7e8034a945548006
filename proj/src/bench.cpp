#include "nldf/bench.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <vector>

#include "nldf/checkpoint.hpp"
#include "nldf/errors.hpp"
#include "nldf/training.hpp"

namespace nldf::bench {

namespace {
using Clock = std::chrono::steady_clock;

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string cpu_model() {
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto pos = line.find(": ");
      if (pos != std::string::npos) return line.substr(pos + 2);
    }
  }
  return "unknown cpu";
}
}  // namespace

BenchReport run_bench(const io::RunConfig& cfg, const std::filesystem::path& checkpoint,
                      int frames) {
  if (frames < 1) throw ConfigError("bench requires at least one frame");
  train::Workspace ws = train::make_workspace(cfg);
  if (cfg.total_frames() < frames)
    throw ConfigError("bench needs at least " + std::to_string(frames) + " configured frames");

  student::NldfModel<float> model(cfg.model);
  cond::FusionModule<float> fusion;
  bool untrained = checkpoint.empty();
  if (!untrained) {
    auto bundle = io::load_checkpoint<float>(checkpoint);
    model = std::move(bundle.model);
    fusion = std::move(bundle.fusion);
  } else {
    model.norm_center = ws.scene.bbox_center;
    model.norm_half_extent = ws.scene.bbox_half;
    model.init(cfg.seed);
    if (cfg.model.conditioning_dim > 0) {
      fusion = cond::FusionModule<float>(cfg.model.conditioning_dim, ws.signal.raw_dim(),
                                         cfg.fusion_half_width);
      Rng rng(substream(cfg.seed, "init.fusion"));
      fusion.init(rng);
    }
  }

  BenchReport report;
  report.frames = frames;
  report.width = ws.scene.camera.width;
  report.height = ws.scene.camera.height;
  report.samples = cfg.render_samples;
  report.threads = ws.threads;
  report.untrained = untrained;
  report.hardware = cpu_model() + " (" + std::to_string(ws.threads) + " threads)";

  // Warm-up frame for each path, excluded from the medians and totals.
  ws.render_teacher(0);
  student::render_frame_student(model, fusion, ws.signal, 0, ws.cameras[0], ws.scene.t_near,
                                ws.scene.t_far, ws.threads);

  const std::uint64_t pixels =
      static_cast<std::uint64_t>(report.width) * static_cast<std::uint64_t>(report.height);
  std::vector<double> teacher_ms, student_ms;
  for (int f = 0; f < frames; ++f) {
    auto t0 = Clock::now();
    const auto teacher = ws.render_teacher(f);
    teacher_ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
    if (teacher.field_evals != pixels * static_cast<std::uint64_t>(cfg.render_samples))
      throw DomainError("bench: teacher evaluation count deviates from W*H*N");
    report.teacher_field_evals += teacher.field_evals;

    t0 = Clock::now();
    const auto student = student::render_frame_student(model, fusion, ws.signal, f,
                                                       ws.cameras[static_cast<size_t>(f)],
                                                       ws.scene.t_near, ws.scene.t_far, ws.threads);
    student_ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
    if (student.forward_count != pixels)
      throw DomainError("bench: student forward count deviates from W*H");
    report.student_forward_calls += student.forward_count;
  }

  report.teacher_ms_per_frame = median(teacher_ms);
  report.student_ms_per_frame = median(student_ms);
  report.eval_ratio = static_cast<double>(report.teacher_field_evals) /
                      static_cast<double>(report.student_forward_calls);
  report.wallclock_speedup = report.teacher_ms_per_frame / report.student_ms_per_frame;
  return report;
}

nlohmann::json bench_to_json(const BenchReport& r) {
  return nlohmann::json{
      {"teacher", {{"field_evals", r.teacher_field_evals}, {"wall_ms_per_frame", r.teacher_ms_per_frame}}},
      {"student",
       {{"forward_calls", r.student_forward_calls}, {"wall_ms_per_frame", r.student_ms_per_frame}}},
      {"eval_ratio", r.eval_ratio},
      {"wallclock_speedup", r.wallclock_speedup},
      {"frames", r.frames},
      {"width", r.width},
      {"height", r.height},
      {"samples", r.samples},
      {"threads", r.threads},
      {"untrained", r.untrained},
      {"hardware", r.hardware}};
}

}  // namespace nldf::bench
