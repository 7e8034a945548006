#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "nldf/field.hpp"
#include "nldf/geometry.hpp"
#include "nldf/student.hpp"

namespace nldf::io {

using json = nlohmann::json;

/// Scene file contents: the analytic field plus the camera, ray bounds and
/// normalization box that belong to it.
struct SceneSpec {
  field::AnalyticScene field;
  geom::Camera camera;
  double t_near = 1.0;
  double t_far = 3.0;
  geom::Vec3 bbox_center = geom::Vec3::Zero();
  geom::Vec3 bbox_half = geom::Vec3::Ones();

  void validate() const;
};

/// Default talking scene with a matching camera 2.4 units out on +z.
SceneSpec default_scene(std::uint64_t seed, int conditioning_dim);

json scene_to_json(const SceneSpec& scene);
SceneSpec scene_from_json(const json& j);
void save_scene(const SceneSpec& scene, const std::filesystem::path& path);
SceneSpec load_scene(const std::filesystem::path& path);

struct TrajectoryConfig {
  std::string kind = "static";  // static | orbit
  double orbit_amplitude_deg = 10.0;
  double orbit_cycles = 1.0;
};

/// Camera pose for a frame under the trajectory (static returns the scene
/// camera unchanged).
geom::Camera camera_for_frame(const SceneSpec& scene, const TrajectoryConfig& traj, int frame,
                              int total_frames);

struct PoolConfig {
  bool enabled = true;
  double fraction = 0.25;       // j: share of each batch eligible for the pool
  int capacity = 0;             // 0 = 4 * batch size
  int cadence = 1;              // pool step every `cadence` fresh iterations
};

struct ProbeConfig {
  int rays = 1024;
  std::vector<std::int64_t> at_steps;  // optimizer steps to evaluate at
};

struct RunConfig {
  std::uint64_t seed = 1;
  int threads = 0;              // 0 = NLDF_THREADS env or hardware
  bool deterministic = false;
  std::string dtype = "float32";  // float32 | float64

  std::string scene_path;       // empty = generate from seed stream "scene"
  int scene_conditioning_dim = 16;
  int image_size = 0;           // 0 = scene camera size, else square override

  std::string signal_kind = "sinusoid-mixture";
  std::string signal_path;      // optional CSV; overrides generation
  int signal_dim = 16;
  double signal_fps = 25.0;

  int train_frames = 100;
  int heldout_frames = 20;
  TrajectoryConfig trajectory;

  student::NldfConfig model;
  int fusion_half_width = 1;

  int render_samples = 64;
  std::string render_mode = "midpoint";

  int batch_size = 4096;
  double foreground_fraction = 0.9;
  double lambda = 0.2;
  PoolConfig pool;

  std::int64_t iterations = 2000;
  std::int64_t step_budget = 0;  // 0 = unlimited; else total optimizer steps
  double lr = 5e-4;
  bool cosine_decay = true;
  std::int64_t checkpoint_every = 0;  // 0 = final only
  bool eval_heldout = true;
  ProbeConfig probe;

  int total_frames() const { return train_frames + heldout_frames; }
  /// Throws ConfigError listing every violated constraint.
  void validate() const;
};

json run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const json& j);
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

/// Scene resolved from the config: loaded from scene_path or generated from
/// the "scene" seed stream, with the optional square image-size override
/// applied (focal and principal point rescale with it).
SceneSpec resolve_scene(const RunConfig& cfg);

}  // namespace nldf::io
