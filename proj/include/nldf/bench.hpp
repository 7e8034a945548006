#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "nldf/config.hpp"

namespace nldf::bench {

/// Teacher-vs-student rendering cost comparison. Evaluation counts are
/// structural (teacher: W*H*N per frame, student: W*H) and asserted exactly;
/// wall times are measured medians with a warm-up frame excluded.
struct BenchReport {
  std::uint64_t teacher_field_evals = 0;   // total over measured frames
  std::uint64_t student_forward_calls = 0; // total over measured frames
  double teacher_ms_per_frame = 0.0;       // median
  double student_ms_per_frame = 0.0;       // median
  double eval_ratio = 0.0;                 // teacher evals / student forwards
  double wallclock_speedup = 0.0;          // teacher ms / student ms
  int frames = 0;
  int width = 0, height = 0, samples = 0;
  int threads = 1;
  bool untrained = false;
  std::string hardware;
};

/// Renders `frames` frames (default 10) with both paths; checkpoint empty
/// means an untrained (structural accounting) run.
BenchReport run_bench(const io::RunConfig& cfg, const std::filesystem::path& checkpoint = {},
                      int frames = 10);

nlohmann::json bench_to_json(const BenchReport& report);

}  // namespace nldf::bench
