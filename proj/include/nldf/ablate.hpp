#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "nldf/config.hpp"

namespace nldf::ablate {

using json = nlohmann::json;

/// lambda = base vs lambda = 0 at equal iterations over 3 consecutive seeds.
/// Reports held-out per-segment MSE (expected lower with distillation) and
/// the PSNR difference (reported without a pinned direction).
json run_distill_ablation(const io::RunConfig& base);

/// Active pool on vs off at an equal optimizer-step budget over 3 seeds,
/// comparing probe total loss at the 25% / 50% / 100% checkpoints.
json run_pool_ablation(const io::RunConfig& base);

/// Depth sweep B in {2, 4, 8} over 3 seeds at equal steps; reports held-out
/// PSNR/SSIM/loss per run plus the deep-vs-shallow loss comparison.
json run_depth_ablation(const io::RunConfig& base);

/// Writes report.json and table.csv for any of the protocols.
void write_ablation_outputs(const json& report, const std::filesystem::path& out_dir);

}  // namespace nldf::ablate
