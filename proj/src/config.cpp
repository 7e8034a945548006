#include "nldf/config.hpp"

#include <cmath>
#include <fstream>

#include "nldf/errors.hpp"
#include "nldf/rng.hpp"

namespace nldf::io {

namespace {

json vec3_to_json(const geom::Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

geom::Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

void SceneSpec::validate() const {
  field.validate();
  if (!(t_near >= 0.0) || !(t_near < t_far))
    throw ConfigError("scene bounds require 0 <= t_near < t_far");
  if (camera.focal <= 0.0 || camera.width <= 0 || camera.height <= 0)
    throw ConfigError("scene camera is invalid");
  if (camera.pose.orthonormality_error() > 1e-9)
    throw ConfigError("scene camera rotation is not orthonormal");
  if (bbox_half.minCoeff() <= 0.0) throw ConfigError("scene bbox half extents must be > 0");
}

SceneSpec default_scene(std::uint64_t seed, int conditioning_dim) {
  SceneSpec scene;
  scene.field = field::default_talking_scene(seed, conditioning_dim);
  scene.camera.pose = geom::look_at({0.0, 0.0, 2.4}, {0.0, 0.0, 0.0});
  scene.camera.width = 64;
  scene.camera.height = 64;
  scene.camera.focal = 80.0;
  scene.camera.cx = 32.0;
  scene.camera.cy = 32.0;
  scene.t_near = 1.2;
  scene.t_far = 3.6;
  scene.bbox_center = geom::Vec3::Zero();
  scene.bbox_half = geom::Vec3(1.5, 1.5, 1.5);
  return scene;
}

json scene_to_json(const SceneSpec& scene) {
  json blobs = json::array();
  for (const auto& b : scene.field.blobs) {
    json drive = json::array();
    for (int r = 0; r < 3; ++r) {
      json row = json::array();
      for (int c = 0; c < b.drive.cols(); ++c) row.push_back(b.drive(r, c));
      drive.push_back(row);
    }
    blobs.push_back({{"center", vec3_to_json(b.center)},
                     {"drive", drive},
                     {"radius", b.radius},
                     {"amplitude", b.amplitude},
                     {"color", vec3_to_json(b.color)}});
  }
  json rotation = json::array();
  for (int r = 0; r < 3; ++r) {
    json row = json::array();
    for (int c = 0; c < 3; ++c) row.push_back(scene.camera.pose.rotation(r, c));
    rotation.push_back(row);
  }
  return json{{"conditioning_dim", scene.field.conditioning_dim},
              {"bounds", {{"t_near", scene.t_near}, {"t_far", scene.t_far}}},
              {"bbox",
               {{"center", vec3_to_json(scene.bbox_center)},
                {"half_extent", vec3_to_json(scene.bbox_half)}}},
              {"camera",
               {{"focal", scene.camera.focal},
                {"cx", scene.camera.cx},
                {"cy", scene.camera.cy},
                {"width", scene.camera.width},
                {"height", scene.camera.height},
                {"pose", {{"rotation", rotation}, {"translation", vec3_to_json(scene.camera.pose.translation)}}}}},
              {"blobs", blobs}};
}

SceneSpec scene_from_json(const json& j) {
  SceneSpec scene;
  scene.field.conditioning_dim = j.at("conditioning_dim").get<int>();
  scene.t_near = j.at("bounds").at("t_near").get<double>();
  scene.t_far = j.at("bounds").at("t_far").get<double>();
  scene.bbox_center = vec3_from_json(j.at("bbox").at("center"));
  scene.bbox_half = vec3_from_json(j.at("bbox").at("half_extent"));
  const json& cam = j.at("camera");
  scene.camera.focal = cam.at("focal").get<double>();
  scene.camera.cx = cam.at("cx").get<double>();
  scene.camera.cy = cam.at("cy").get<double>();
  scene.camera.width = cam.at("width").get<int>();
  scene.camera.height = cam.at("height").get<int>();
  const json& pose = cam.at("pose");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      scene.camera.pose.rotation(r, c) = pose.at("rotation").at(r).at(c).get<double>();
  scene.camera.pose.translation = vec3_from_json(pose.at("translation"));
  for (const json& jb : j.at("blobs")) {
    field::Blob b;
    b.center = vec3_from_json(jb.at("center"));
    b.radius = jb.at("radius").get<double>();
    b.amplitude = jb.at("amplitude").get<double>();
    b.color = vec3_from_json(jb.at("color"));
    const json& drive = jb.at("drive");
    b.drive.resize(3, scene.field.conditioning_dim);
    for (int r = 0; r < 3; ++r) {
      if (static_cast<int>(drive.at(r).size()) != scene.field.conditioning_dim)
        throw ConfigError("blob drive row width must equal conditioning_dim");
      for (int c = 0; c < scene.field.conditioning_dim; ++c)
        b.drive(r, c) = drive.at(r).at(c).get<double>();
    }
    scene.field.blobs.push_back(std::move(b));
  }
  scene.validate();
  return scene;
}

void save_scene(const SceneSpec& scene, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot open " + path.string() + " for writing");
  out << scene_to_json(scene).dump(2) << "\n";
}

SceneSpec load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scene file " + path.string());
  json j;
  in >> j;
  return scene_from_json(j);
}

geom::Camera camera_for_frame(const SceneSpec& scene, const TrajectoryConfig& traj, int frame,
                              int total_frames) {
  if (traj.kind == "static") return scene.camera;
  if (traj.kind != "orbit") throw ConfigError("unknown trajectory kind '" + traj.kind + "'");
  geom::Camera camera = scene.camera;
  const double phase =
      total_frames > 1 ? static_cast<double>(frame) / static_cast<double>(total_frames) : 0.0;
  const double angle = traj.orbit_amplitude_deg * (3.14159265358979323846 / 180.0) *
                       std::sin(2.0 * 3.14159265358979323846 * traj.orbit_cycles * phase);
  Eigen::AngleAxisd yaw(angle, geom::Vec3::UnitY());
  const geom::Vec3 eye = yaw * scene.camera.pose.translation;
  camera.pose = geom::look_at(eye, scene.bbox_center);
  return camera;
}

void RunConfig::validate() const {
  std::vector<std::string> problems;
  auto require = [&](bool ok, const std::string& msg) {
    if (!ok) problems.push_back(msg);
  };
  require(dtype == "float32" || dtype == "float64", "dtype must be float32 or float64");
  require(threads >= 0, "threads must be >= 0");
  require(scene_conditioning_dim >= 0, "scene.conditioning_dim must be >= 0");
  require(image_size >= 0, "image_size must be >= 0");
  require(signal_dim >= 1, "signal.dim must be >= 1");
  require(signal_fps > 0.0, "signal.fps must be > 0");
  require(train_frames >= 1, "frames.train must be >= 1");
  require(heldout_frames >= 0, "frames.heldout must be >= 0");
  require(model.beam_points >= 2, "model.beam_points must be >= 2");
  require(model.segments >= 1, "model.segments must be >= 1");
  require(model.blocks >= 1, "model.blocks must be >= 1");
  require(model.width >= 3 * model.segments, "model.width must be >= 3 * model.segments");
  require(model.conditioning_dim >= 0, "model.conditioning_dim must be >= 0");
  require(model.conditioning_dim == scene_conditioning_dim || !scene_path.empty(),
          "model.conditioning_dim must match scene.conditioning_dim");
  require(fusion_half_width >= 0, "fusion.window_half_width must be >= 0");
  require(render_samples >= 1, "render.samples must be >= 1");
  require(model.segments == 0 || render_samples % std::max(1, model.segments) == 0,
          "render.samples must be divisible by model.segments");
  require(render_mode == "midpoint" || render_mode == "stratified",
          "render.mode must be midpoint or stratified");
  require(batch_size >= 1, "batch.size must be >= 1");
  require(foreground_fraction >= 0.0 && foreground_fraction <= 1.0,
          "batch.foreground_fraction must lie in [0, 1]");
  require(lambda >= 0.0, "batch.lambda must be >= 0");
  require(pool.fraction >= 0.0 && pool.fraction <= 1.0, "pool.fraction must lie in [0, 1]");
  require(pool.capacity >= 0, "pool.capacity must be >= 0");
  require(pool.cadence >= 1, "pool.cadence must be >= 1");
  require(iterations >= 1, "train.iterations must be >= 1");
  require(step_budget >= 0, "train.step_budget must be >= 0");
  require(lr > 0.0, "train.lr must be > 0");
  require(checkpoint_every >= 0, "train.checkpoint_every must be >= 0");
  require(probe.rays >= 1, "probe.rays must be >= 1");
  if (!problems.empty()) {
    std::string msg = "invalid run config:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
}

json run_config_to_json(const RunConfig& cfg) {
  return json{
      {"seed", cfg.seed},
      {"threads", cfg.threads},
      {"deterministic", cfg.deterministic},
      {"dtype", cfg.dtype},
      {"scene",
       {{"path", cfg.scene_path},
        {"conditioning_dim", cfg.scene_conditioning_dim},
        {"image_size", cfg.image_size}}},
      {"signal",
       {{"kind", cfg.signal_kind},
        {"path", cfg.signal_path},
        {"dim", cfg.signal_dim},
        {"fps", cfg.signal_fps}}},
      {"frames", {{"train", cfg.train_frames}, {"heldout", cfg.heldout_frames}}},
      {"trajectory",
       {{"kind", cfg.trajectory.kind},
        {"orbit_amplitude_deg", cfg.trajectory.orbit_amplitude_deg},
        {"orbit_cycles", cfg.trajectory.orbit_cycles}}},
      {"model",
       {{"beam_points", cfg.model.beam_points},
        {"segments", cfg.model.segments},
        {"blocks", cfg.model.blocks},
        {"width", cfg.model.width},
        {"conditioning_dim", cfg.model.conditioning_dim}}},
      {"fusion", {{"window_half_width", cfg.fusion_half_width}}},
      {"render", {{"samples", cfg.render_samples}, {"mode", cfg.render_mode}}},
      {"batch",
       {{"size", cfg.batch_size},
        {"foreground_fraction", cfg.foreground_fraction},
        {"lambda", cfg.lambda}}},
      {"pool",
       {{"enabled", cfg.pool.enabled},
        {"fraction", cfg.pool.fraction},
        {"capacity", cfg.pool.capacity},
        {"cadence", cfg.pool.cadence}}},
      {"train",
       {{"iterations", cfg.iterations},
        {"step_budget", cfg.step_budget},
        {"lr", cfg.lr},
        {"cosine_decay", cfg.cosine_decay},
        {"checkpoint_every", cfg.checkpoint_every},
        {"eval_heldout", cfg.eval_heldout}}},
      {"probe", {{"rays", cfg.probe.rays}, {"at_steps", cfg.probe.at_steps}}}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig cfg;
  auto get = [&](const json& obj, const char* key, auto& out) {
    if (obj.contains(key)) out = obj.at(key).get<std::remove_reference_t<decltype(out)>>();
  };
  get(j, "seed", cfg.seed);
  get(j, "threads", cfg.threads);
  get(j, "deterministic", cfg.deterministic);
  get(j, "dtype", cfg.dtype);
  if (j.contains("scene")) {
    get(j["scene"], "path", cfg.scene_path);
    get(j["scene"], "conditioning_dim", cfg.scene_conditioning_dim);
    get(j["scene"], "image_size", cfg.image_size);
  }
  if (j.contains("signal")) {
    get(j["signal"], "kind", cfg.signal_kind);
    get(j["signal"], "path", cfg.signal_path);
    get(j["signal"], "dim", cfg.signal_dim);
    get(j["signal"], "fps", cfg.signal_fps);
  }
  if (j.contains("frames")) {
    get(j["frames"], "train", cfg.train_frames);
    get(j["frames"], "heldout", cfg.heldout_frames);
  }
  if (j.contains("trajectory")) {
    get(j["trajectory"], "kind", cfg.trajectory.kind);
    get(j["trajectory"], "orbit_amplitude_deg", cfg.trajectory.orbit_amplitude_deg);
    get(j["trajectory"], "orbit_cycles", cfg.trajectory.orbit_cycles);
  }
  if (j.contains("model")) {
    get(j["model"], "beam_points", cfg.model.beam_points);
    get(j["model"], "segments", cfg.model.segments);
    get(j["model"], "blocks", cfg.model.blocks);
    get(j["model"], "width", cfg.model.width);
    get(j["model"], "conditioning_dim", cfg.model.conditioning_dim);
  }
  if (j.contains("fusion")) get(j["fusion"], "window_half_width", cfg.fusion_half_width);
  if (j.contains("render")) {
    get(j["render"], "samples", cfg.render_samples);
    get(j["render"], "mode", cfg.render_mode);
  }
  if (j.contains("batch")) {
    get(j["batch"], "size", cfg.batch_size);
    get(j["batch"], "foreground_fraction", cfg.foreground_fraction);
    get(j["batch"], "lambda", cfg.lambda);
  }
  if (j.contains("pool")) {
    get(j["pool"], "enabled", cfg.pool.enabled);
    get(j["pool"], "fraction", cfg.pool.fraction);
    get(j["pool"], "capacity", cfg.pool.capacity);
    get(j["pool"], "cadence", cfg.pool.cadence);
  }
  if (j.contains("train")) {
    get(j["train"], "iterations", cfg.iterations);
    get(j["train"], "step_budget", cfg.step_budget);
    get(j["train"], "lr", cfg.lr);
    get(j["train"], "cosine_decay", cfg.cosine_decay);
    get(j["train"], "checkpoint_every", cfg.checkpoint_every);
    get(j["train"], "eval_heldout", cfg.eval_heldout);
  }
  if (j.contains("probe")) {
    get(j["probe"], "rays", cfg.probe.rays);
    get(j["probe"], "at_steps", cfg.probe.at_steps);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot open " + path.string() + " for writing");
  out << run_config_to_json(cfg).dump(2) << "\n";
}

SceneSpec resolve_scene(const RunConfig& cfg) {
  SceneSpec scene = cfg.scene_path.empty()
                        ? default_scene(substream(cfg.seed, "scene"), cfg.scene_conditioning_dim)
                        : load_scene(cfg.scene_path);
  if (cfg.image_size > 0 && cfg.image_size != scene.camera.width) {
    const double scale = static_cast<double>(cfg.image_size) / scene.camera.width;
    scene.camera.focal *= scale;
    scene.camera.width = cfg.image_size;
    scene.camera.height = cfg.image_size;
    scene.camera.cx = cfg.image_size / 2.0;
    scene.camera.cy = cfg.image_size / 2.0;
  }
  if (scene.field.conditioning_dim != cfg.model.conditioning_dim)
    throw ConfigError("scene conditioning_dim " + std::to_string(scene.field.conditioning_dim) +
                      " does not match model conditioning_dim " +
                      std::to_string(cfg.model.conditioning_dim));
  return scene;
}

}  // namespace nldf::io
