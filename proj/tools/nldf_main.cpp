#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "nldf/ablate.hpp"
#include "nldf/bench.hpp"
#include "nldf/checkpoint.hpp"
#include "nldf/config.hpp"
#include "nldf/hash.hpp"
#include "nldf/metrics.hpp"
#include "nldf/training.hpp"

namespace fs = std::filesystem;
using nldf::io::json;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  int threads = -1;          // -1 = keep config value
  bool deterministic = false;
  bool png = false;
};

nldf::io::RunConfig load_config(const CommonOpts& opts) {
  nldf::io::RunConfig cfg = nldf::io::load_run_config(opts.config_path);
  if (opts.threads >= 0) cfg.threads = opts.threads;
  if (opts.deterministic) cfg.deterministic = true;
  return cfg;
}

/// Copies the config and records git-style blob hashes of every input file,
/// so a run directory is self-describing.
void describe_run_dir(const nldf::io::RunConfig& cfg, const CommonOpts& opts) {
  fs::create_directories(opts.out_dir);
  nldf::io::save_run_config(cfg, fs::path(opts.out_dir) / "config.json");
  std::ofstream hashes(fs::path(opts.out_dir) / "inputs.sha1");
  hashes << nldf::io::git_blob_sha1_file(opts.config_path) << "  config "
         << opts.config_path << "\n";
  if (!cfg.scene_path.empty())
    hashes << nldf::io::git_blob_sha1_file(cfg.scene_path) << "  scene " << cfg.scene_path << "\n";
  if (!cfg.signal_path.empty())
    hashes << nldf::io::git_blob_sha1_file(cfg.signal_path) << "  signal " << cfg.signal_path
           << "\n";
}

void write_frame(const nldf::Image& image, const fs::path& dir, int frame, bool png) {
  char name[32];
  std::snprintf(name, sizeof(name), "frame_%04d.ppm", frame);
  nldf::write_ppm(image, dir / name);
  if (png) {
    std::snprintf(name, sizeof(name), "frame_%04d.png", frame);
    nldf::write_png(image, dir / name);
  }
}

int cmd_scene_gen(const std::string& out_path, std::uint64_t seed, int dim) {
  const auto scene = nldf::io::default_scene(seed, dim);
  nldf::io::save_scene(scene, out_path);
  std::printf("wrote scene with %zu blobs to %s\n", scene.field.blobs.size(), out_path.c_str());
  return 0;
}

int cmd_render_teacher(const CommonOpts& opts, int frame_limit) {
  const auto cfg = load_config(opts);
  describe_run_dir(cfg, opts);
  const auto ws = nldf::train::make_workspace(cfg);
  const fs::path frames_dir = fs::path(opts.out_dir) / "frames";
  fs::create_directories(frames_dir);
  const int count = frame_limit > 0 ? std::min(frame_limit, cfg.total_frames())
                                    : cfg.total_frames();
  std::uint64_t evals = 0;
  for (int f = 0; f < count; ++f) {
    const auto render = ws.render_teacher(f);
    evals += render.field_evals;
    write_frame(render.image, frames_dir, f, opts.png);
  }
  std::printf("rendered %d teacher frames (%llu field evaluations) to %s\n", count,
              static_cast<unsigned long long>(evals), frames_dir.c_str());
  return 0;
}

template <typename S>
int render_student_frames(const nldf::io::RunConfig& cfg, const CommonOpts& opts,
                          const std::string& checkpoint, int frame_limit) {
  auto bundle = nldf::io::load_checkpoint<S>(checkpoint);
  const auto ws = nldf::train::make_workspace(cfg);
  const fs::path frames_dir = fs::path(opts.out_dir) / "frames";
  fs::create_directories(frames_dir);
  const int count = frame_limit > 0 ? std::min(frame_limit, cfg.total_frames())
                                    : cfg.total_frames();
  std::uint64_t forwards = 0;
  for (int f = 0; f < count; ++f) {
    const auto render = nldf::student::render_frame_student<S>(
        bundle.model, bundle.fusion, ws.signal, f, ws.cameras[static_cast<size_t>(f)],
        ws.scene.t_near, ws.scene.t_far, ws.threads);
    forwards += render.forward_count;
    write_frame(render.image, frames_dir, f, opts.png);
  }
  std::printf("rendered %d student frames (%llu forward passes) to %s\n", count,
              static_cast<unsigned long long>(forwards), frames_dir.c_str());
  return 0;
}

int cmd_render_student(const CommonOpts& opts, const std::string& checkpoint, int frame_limit) {
  const auto cfg = load_config(opts);
  describe_run_dir(cfg, opts);
  if (nldf::io::checkpoint_dtype(checkpoint) == "float64")
    return render_student_frames<double>(cfg, opts, checkpoint, frame_limit);
  return render_student_frames<float>(cfg, opts, checkpoint, frame_limit);
}

json result_to_json(const nldf::train::TrainResult& result) {
  json probes = json::array();
  for (const auto& p : result.probes)
    probes.push_back(
        {{"step", p.step}, {"train_total", p.train_total}, {"heldout_total", p.heldout_total}});
  json j{{"optimizer_steps", result.optimizer_steps},
         {"fresh_iterations", result.fresh_iterations},
         {"wall_seconds", result.wall_seconds},
         {"final_saturation_rate", result.final_saturation_rate},
         {"probes", probes}};
  if (!result.log.empty()) {
    j["final_loss_r"] = result.log.back().loss_r;
    j["final_loss_rs"] = result.log.back().loss_rs;
    j["final_total"] = result.log.back().total;
  }
  if (!std::isnan(result.heldout_total)) {
    j["heldout"] = {{"loss_r", result.heldout_loss_r},
                    {"loss_rs", result.heldout_loss_rs},
                    {"total", result.heldout_total},
                    {"psnr", result.heldout_psnr},
                    {"ssim", result.heldout_ssim}};
  }
  return j;
}

int cmd_distill(const CommonOpts& opts) {
  const auto cfg = load_config(opts);
  describe_run_dir(cfg, opts);
  nldf::train::TrainResult result;
  if (cfg.dtype == "float64")
    result = nldf::train::train<double>(cfg, opts.out_dir).result;
  else
    result = nldf::train::train<float>(cfg, opts.out_dir).result;
  std::ofstream report(fs::path(opts.out_dir) / "report.json");
  report << result_to_json(result).dump(2) << "\n";
  std::printf("distilled %lld iterations (%lld optimizer steps) in %.1f s\n",
              static_cast<long long>(result.fresh_iterations),
              static_cast<long long>(result.optimizer_steps), result.wall_seconds);
  if (!std::isnan(result.heldout_psnr))
    std::printf("held-out: psnr %.2f dB ssim %.4f\n", result.heldout_psnr, result.heldout_ssim);
  return 0;
}

std::vector<nldf::Image> load_frames(const std::string& path) {
  std::vector<nldf::Image> frames;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    const fs::path dir = fs::is_directory(fs::path(path) / "frames") ? fs::path(path) / "frames"
                                                                     : fs::path(path);
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.path().extension() == ".ppm") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) frames.push_back(nldf::read_ppm(f));
  } else {
    frames.push_back(nldf::read_ppm(path));
  }
  if (frames.empty()) throw nldf::DomainError("no .ppm frames found under " + path);
  return frames;
}

int cmd_eval(const std::string& path_a, const std::string& path_b, const std::string& out_dir) {
  const auto frames_a = load_frames(path_a);
  const auto frames_b = load_frames(path_b);
  if (frames_a.size() != frames_b.size())
    throw nldf::DomainError("frame count mismatch: " + std::to_string(frames_a.size()) + " vs " +
                            std::to_string(frames_b.size()));
  const auto report = nldf::metrics::compare_frames(frames_a, frames_b);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    json per_frame = json::array();
    for (size_t i = 0; i < report.psnr_db.size(); ++i)
      per_frame.push_back({{"frame", i},
                           {"psnr_db", report.psnr_db[i]},
                           {"ssim", report.ssim_val[i]},
                           {"identical", static_cast<bool>(report.identical[i])}});
    std::ofstream jr(fs::path(out_dir) / "report.json");
    jr << json{{"psnr_mean", report.psnr_mean},
               {"ssim_mean", report.ssim_mean},
               {"frames", per_frame}}
              .dump(2)
       << "\n";
    std::ofstream csv(fs::path(out_dir) / "metrics.csv");
    csv << "frame,psnr_db,ssim,identical\n";
    for (size_t i = 0; i < report.psnr_db.size(); ++i) {
      char line[128];
      std::snprintf(line, sizeof(line), "%zu,%.6f,%.6f,%d\n", i, report.psnr_db[i],
                    report.ssim_val[i], report.identical[i] ? 1 : 0);
      csv << line;
    }
  }
  std::printf("psnr %.2f dB  ssim %.4f  (%zu frames)\n", report.psnr_mean, report.ssim_mean,
              report.psnr_db.size());
  return 0;
}

int cmd_bench(const CommonOpts& opts, const std::string& checkpoint, int frames) {
  const auto cfg = load_config(opts);
  const auto report = nldf::bench::run_bench(cfg, checkpoint, frames);
  const json j = nldf::bench::bench_to_json(report);
  if (!opts.out_dir.empty()) {
    describe_run_dir(cfg, opts);
    std::ofstream out(fs::path(opts.out_dir) / "bench.json");
    out << j.dump(2) << "\n";
  }
  std::printf("%s\n", j.dump(2).c_str());
  return 0;
}

int cmd_gradcheck(int blocks, int width, int rays, std::uint64_t seed) {
  const double err = nldf::train::end_to_end_grad_check(blocks, width, rays, seed);
  std::printf("max relative gradient error: %.3e (threshold 1e-4)\n", err);
  return err < 1e-4 ? 0 : 1;
}

int cmd_ablate(const CommonOpts& opts, const std::string& kind) {
  const auto cfg = load_config(opts);
  json report;
  if (kind == "distill")
    report = nldf::ablate::run_distill_ablation(cfg);
  else if (kind == "pool")
    report = nldf::ablate::run_pool_ablation(cfg);
  else if (kind == "depth")
    report = nldf::ablate::run_depth_ablation(cfg);
  else
    throw nldf::ConfigError("unknown ablation '" + kind + "' (expected distill|pool|depth)");
  if (!opts.out_dir.empty()) {
    describe_run_dir(cfg, opts);
    nldf::ablate::write_ablation_outputs(report, opts.out_dir);
  }
  std::printf("%s\n", report.dump(2).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Per-ray light-field distillation engine"};
  app.require_subcommand(1);

  CommonOpts opts;
  auto add_common = [&](CLI::App* sub, bool with_out = true) {
    sub->add_option("-c,--config", opts.config_path, "run config (json)")->required();
    if (with_out) sub->add_option("-o,--out", opts.out_dir, "output directory")->required();
    sub->add_option("--threads", opts.threads, "worker thread cap (0 = auto)");
    sub->add_flag("--deterministic", opts.deterministic,
                  "single-threaded, zeroed timing columns");
  };

  // scene gen
  auto* scene = app.add_subcommand("scene", "scene utilities");
  auto* scene_gen = scene->add_subcommand("gen", "generate the default talking scene");
  std::string scene_out = "scene.json";
  std::uint64_t scene_seed = 1;
  int scene_dim = 16;
  scene_gen->add_option("-o,--out", scene_out, "output scene json");
  scene_gen->add_option("--seed", scene_seed, "scene seed");
  scene_gen->add_option("--dim", scene_dim, "conditioning dimension");

  auto* rt = app.add_subcommand("render-teacher", "render teacher frames");
  int rt_frames = 0;
  add_common(rt);
  rt->add_option("--frames", rt_frames, "limit frame count");
  rt->add_flag("--png", opts.png, "also write png");

  auto* rs = app.add_subcommand("render-student", "render student frames from a checkpoint");
  std::string rs_checkpoint;
  int rs_frames = 0;
  add_common(rs);
  rs->add_option("--checkpoint", rs_checkpoint, "checkpoint file")->required();
  rs->add_option("--frames", rs_frames, "limit frame count");
  rs->add_flag("--png", opts.png, "also write png");

  auto* dist = app.add_subcommand("distill", "train the student against the teacher");
  add_common(dist);

  auto* ev = app.add_subcommand("eval", "psnr/ssim between two frames dirs or files");
  std::string eval_a, eval_b, eval_out;
  ev->add_option("-a", eval_a, "first frames dir or .ppm")->required();
  ev->add_option("-b", eval_b, "second frames dir or .ppm")->required();
  ev->add_option("-o,--out", eval_out, "output directory for report.json/metrics.csv");

  auto* bench = app.add_subcommand("bench", "teacher-vs-student speed benchmark");
  std::string bench_checkpoint;
  int bench_frames = 10;
  bench->add_option("-c,--config", opts.config_path, "run config (json)")->required();
  bench->add_option("-o,--out", opts.out_dir, "output directory");
  bench->add_option("--checkpoint", bench_checkpoint, "checkpoint (omit for --untrained run)");
  bench->add_option("--frames", bench_frames, "frames per path");
  bench->add_option("--threads", opts.threads, "worker thread cap");

  auto* gc = app.add_subcommand("gradcheck", "end-to-end finite-difference gradient check");
  int gc_blocks = 2, gc_width = 32, gc_rays = 8;
  std::uint64_t gc_seed = 7;
  gc->add_option("--blocks", gc_blocks, "residual blocks");
  gc->add_option("--width", gc_width, "hidden width");
  gc->add_option("--rays", gc_rays, "batch rays");
  gc->add_option("--seed", gc_seed, "seed");

  auto* ab = app.add_subcommand("ablate", "run an ablation protocol");
  std::string ab_kind;
  ab->add_option("kind", ab_kind, "distill | pool | depth")->required();
  add_common(ab);

  CLI11_PARSE(app, argc, argv);

  try {
    if (scene_gen->parsed()) return cmd_scene_gen(scene_out, scene_seed, scene_dim);
    if (rt->parsed()) return cmd_render_teacher(opts, rt_frames);
    if (rs->parsed()) return cmd_render_student(opts, rs_checkpoint, rs_frames);
    if (dist->parsed()) return cmd_distill(opts);
    if (ev->parsed()) return cmd_eval(eval_a, eval_b, eval_out);
    if (bench->parsed()) return cmd_bench(opts, bench_checkpoint, bench_frames);
    if (gc->parsed()) return cmd_gradcheck(gc_blocks, gc_width, gc_rays, gc_seed);
    if (ab->parsed()) return cmd_ablate(opts, ab_kind);
    std::fprintf(stderr, "error: no subcommand\n");
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
