#include "nldf/ablate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <vector>

#include "nldf/errors.hpp"
#include "nldf/training.hpp"

namespace nldf::ablate {

namespace {

double median3(double a, double b, double c) {
  return std::max(std::min(a, b), std::min(std::max(a, b), c));
}

std::vector<std::uint64_t> ablation_seeds(const io::RunConfig& base) {
  return {base.seed, base.seed + 1, base.seed + 2};
}

}  // namespace

json run_distill_ablation(const io::RunConfig& base) {
  if (!(base.lambda > 0.0))
    throw ConfigError("distill ablation needs a base config with lambda > 0");
  json runs = json::array();
  std::vector<double> mse_with, mse_without, psnr_with, psnr_without;
  for (const auto seed : ablation_seeds(base)) {
    for (const double lambda : {base.lambda, 0.0}) {
      io::RunConfig cfg = base;
      cfg.seed = seed;
      cfg.lambda = lambda;
      cfg.pool.enabled = false;  // isolate the distillation term
      cfg.eval_heldout = true;
      const auto artifacts = train::train<float>(cfg);
      const double segment_mse =
          artifacts.result.heldout_loss_rs / (3.0 * cfg.model.segments);
      runs.push_back({{"seed", seed},
                      {"lambda", lambda},
                      {"heldout_segment_mse", segment_mse},
                      {"heldout_psnr", artifacts.result.heldout_psnr},
                      {"heldout_ssim", artifacts.result.heldout_ssim},
                      {"heldout_total", artifacts.result.heldout_total}});
      (lambda > 0.0 ? mse_with : mse_without).push_back(segment_mse);
      (lambda > 0.0 ? psnr_with : psnr_without).push_back(artifacts.result.heldout_psnr);
    }
  }
  const double med_mse_with = median3(mse_with[0], mse_with[1], mse_with[2]);
  const double med_mse_without = median3(mse_without[0], mse_without[1], mse_without[2]);
  const double med_psnr_with = median3(psnr_with[0], psnr_with[1], psnr_with[2]);
  const double med_psnr_without = median3(psnr_without[0], psnr_without[1], psnr_without[2]);
  return json{{"protocol", "distill"},
              {"iterations", base.iterations},
              {"lambda", base.lambda},
              {"runs", runs},
              {"median_segment_mse_with", med_mse_with},
              {"median_segment_mse_without", med_mse_without},
              {"median_psnr_with", med_psnr_with},
              {"median_psnr_without", med_psnr_without},
              {"psnr_difference", med_psnr_with - med_psnr_without},
              {"segment_mse_lower_with_distillation", med_mse_with < med_mse_without}};
}

json run_pool_ablation(const io::RunConfig& base) {
  const std::int64_t budget = base.step_budget > 0 ? base.step_budget : base.iterations;
  const std::vector<std::int64_t> checkpoints = {budget / 4, budget / 2, budget};

  json runs = json::array();
  int wins = 0;
  for (const auto seed : ablation_seeds(base)) {
    std::vector<std::vector<double>> probe_totals;  // [arm][checkpoint]
    for (const bool pool_on : {true, false}) {
      io::RunConfig cfg = base;
      cfg.seed = seed;
      cfg.pool.enabled = pool_on;
      cfg.step_budget = budget;
      cfg.iterations = budget;  // fresh-iteration cap can't bind before the budget
      cfg.probe.at_steps = checkpoints;
      cfg.eval_heldout = false;
      const auto artifacts = train::train<float>(cfg);
      std::vector<double> totals;
      for (const auto checkpoint : checkpoints) {
        double value = std::numeric_limits<double>::quiet_NaN();
        for (const auto& p : artifacts.result.probes)
          if (p.step >= checkpoint && std::isnan(value)) value = p.train_total;
        totals.push_back(value);
        runs.push_back({{"seed", seed},
                        {"pool", pool_on},
                        {"checkpoint_step", checkpoint},
                        {"probe_total", value}});
      }
      probe_totals.push_back(std::move(totals));
    }
    const double d0 = probe_totals[0][0] - probe_totals[1][0];
    const double d1 = probe_totals[0][1] - probe_totals[1][1];
    const double d2 = probe_totals[0][2] - probe_totals[1][2];
    if (median3(d0, d1, d2) <= 0.0) ++wins;
  }
  return json{{"protocol", "pool"},
              {"step_budget", budget},
              {"checkpoints", checkpoints},
              {"runs", runs},
              {"seed_wins", wins},
              {"pool_not_worse_in_majority", wins >= 2}};
}

json run_depth_ablation(const io::RunConfig& base) {
  const std::vector<int> depths = {2, 4, 8};
  json runs = json::array();
  std::vector<std::vector<double>> losses(depths.size());  // [depth][seed]
  for (size_t di = 0; di < depths.size(); ++di) {
    for (const auto seed : ablation_seeds(base)) {
      io::RunConfig cfg = base;
      cfg.seed = seed;
      cfg.model.blocks = depths[di];
      cfg.pool.enabled = false;  // one optimizer step per iteration => equal steps
      cfg.eval_heldout = true;
      const auto artifacts = train::train<float>(cfg);
      runs.push_back({{"blocks", depths[di]},
                      {"seed", seed},
                      {"heldout_psnr", artifacts.result.heldout_psnr},
                      {"heldout_ssim", artifacts.result.heldout_ssim},
                      {"heldout_total", artifacts.result.heldout_total},
                      {"optimizer_steps", artifacts.result.optimizer_steps}});
      losses[di].push_back(artifacts.result.heldout_total);
    }
  }
  std::vector<double> medians;
  for (auto& l : losses) medians.push_back(median3(l[0], l[1], l[2]));
  return json{{"protocol", "depth"},
              {"iterations", base.iterations},
              {"depths", depths},
              {"runs", runs},
              {"median_heldout_loss", medians},
              {"deepest_not_worse_than_shallowest", medians.back() <= medians.front()}};
}

void write_ablation_outputs(const json& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream out(out_dir / "report.json");
    if (!out) throw DomainError("cannot write ablation report");
    out << report.dump(2) << "\n";
  }
  std::ofstream csv(out_dir / "table.csv");
  if (!csv) throw DomainError("cannot write ablation table");
  const auto& runs = report.at("runs");
  if (runs.empty()) return;
  std::vector<std::string> columns;
  for (auto it = runs.front().begin(); it != runs.front().end(); ++it)
    columns.push_back(it.key());
  for (size_t i = 0; i < columns.size(); ++i) csv << (i ? "," : "") << columns[i];
  csv << "\n";
  for (const auto& run : runs) {
    for (size_t i = 0; i < columns.size(); ++i) {
      csv << (i ? "," : "");
      const auto& v = run.at(columns[i]);
      if (v.is_number_float()) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.9g", v.get<double>());
        csv << buf;
      } else {
        csv << v.dump();
      }
    }
    csv << "\n";
  }
}

}  // namespace nldf::ablate
