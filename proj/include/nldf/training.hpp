#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "nldf/conditioning.hpp"
#include "nldf/config.hpp"
#include "nldf/render.hpp"
#include "nldf/student.hpp"

namespace nldf::train {

/// One supervised ray: the teacher's per-segment colors and full-pixel value
/// at this (ray, frame). By construction accumulate_segments(segments)
/// equals gt to float tolerance.
struct TrainingSample {
  geom::Ray ray;
  int frame = 0;
  int pixel_index = 0;  // py * width + px, used for pool dedup
  render::PixelColor gt;
  render::SegmentColors teacher_segments;
  bool is_foreground = false;
};

// ---------------------------------------------------------------------------
// Losses (value domain; the training tape computes the same quantities for
// gradients and the two paths are unit-tested to agree).
// ---------------------------------------------------------------------------

/// Mean over rays of the summed squared segment error, Eq-style sums over
/// segments and channels with a batch-mean reduction. Inputs are [n x 3M].
double loss_rs_value(const Eigen::MatrixXd& pred_segments,
                     const Eigen::MatrixXd& target_segments);

/// Mean over rays of the squared pixel error. Inputs are [n x 3].
double loss_r_value(const Eigen::MatrixXd& pred_pixels, const Eigen::MatrixXd& gt_pixels);

/// loss_r + lambda * loss_rs.
inline double total_loss(double loss_r, double loss_rs, double lambda) {
  return loss_r + lambda * loss_rs;
}

/// Per-ray total losses used for active-pool ranking.
std::vector<double> per_ray_total_losses(const Eigen::MatrixXd& pred_segments,
                                         const Eigen::MatrixXd& target_segments,
                                         const Eigen::MatrixXd& pred_pixels,
                                         const Eigen::MatrixXd& gt_pixels, double lambda);

// ---------------------------------------------------------------------------
// Active light-beam pool
// ---------------------------------------------------------------------------

struct PoolEntry {
  TrainingSample sample;
  double loss = 0.0;
};

/// Bounded buffer of the highest-loss rays, kept sorted by loss descending.
/// Entries are keyed on (frame, pixel); re-inserting a key updates it in
/// place.
class ActivePool {
 public:
  explicit ActivePool(size_t capacity) : capacity_(capacity) {}

  size_t size() const { return entries_.size(); }
  size_t capacity() const { return capacity_; }
  const std::vector<PoolEntry>& entries() const { return entries_; }
  double min_loss() const { return entries_.empty() ? 0.0 : entries_.back().loss; }

  void insert(std::vector<PoolEntry> candidates);
  void update_losses(std::span<const size_t> indices, std::span<const double> losses);

 private:
  void sort_and_truncate();
  std::vector<PoolEntry> entries_;
  size_t capacity_ = 0;
};

/// Inserts the ceil(j * batch size) highest-loss rays of the batch; when the
/// pool is full they displace its lowest-loss entries.
void update_active_pool(ActivePool& pool, const std::vector<TrainingSample>& batch,
                        std::span<const double> losses, double j);

// ---------------------------------------------------------------------------
// Dataset workspace and batch sampling
// ---------------------------------------------------------------------------

/// Everything derived from the run config that training, rendering and the
/// benchmark share: the scene, the signal, the frozen fusion module that
/// drives the teacher, the per-frame teacher conditioning and cameras.
struct Workspace {
  io::RunConfig cfg;
  io::SceneSpec scene;
  cond::DrivingSignal signal;
  cond::FusionModule<double> teacher_fusion;  // frozen
  std::vector<Eigen::VectorXd> teacher_a;     // per frame
  std::vector<geom::Camera> cameras;          // per frame
  int threads = 1;

  render::TeacherRender render_teacher(int frame) const;
};

Workspace make_workspace(const io::RunConfig& cfg);

/// Pixels whose accumulated teacher opacity exceeds 0.01.
std::vector<std::uint8_t> foreground_mask(const field::AnalyticScene& scene,
                                          const geom::Camera& camera,
                                          const Eigen::VectorXd& a, int n_samples,
                                          double t_near, double t_far, int threads = 1);

struct FrameMask {
  std::vector<std::uint8_t> fg;  // per pixel
  std::vector<int> fg_indices;
  std::vector<int> bg_indices;
};

FrameMask frame_mask(const Workspace& ws, int frame);

struct Batch {
  int frame = 0;
  std::vector<TrainingSample> samples;
};

/// Fresh batch: picks a training frame, draws floor(fg_fraction * N) rays
/// from foreground pixels and the rest from background (uniform fallback
/// with a warning when a mask side is empty), and computes deterministic
/// midpoint teacher targets for each ray.
Batch sample_batch(const Workspace& ws, const std::vector<FrameMask>& masks, Rng& rng);

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

struct MetricsRow {
  std::int64_t iter = 0;
  double loss_r = 0.0;
  double loss_rs = 0.0;
  double total = 0.0;
  double saturation_rate = 0.0;
  size_t pool_size = 0;
  double ms_per_iter = 0.0;  // written as 0 under --deterministic
};

struct ProbePoint {
  std::int64_t step = 0;
  double train_total = 0.0;
  double heldout_total = 0.0;
};

struct TrainResult {
  std::vector<MetricsRow> log;
  std::vector<ProbePoint> probes;
  std::int64_t optimizer_steps = 0;
  std::int64_t fresh_iterations = 0;
  double wall_seconds = 0.0;
  // Held-out evaluation (render comparison + probe losses); NaN if skipped.
  double heldout_psnr = std::numeric_limits<double>::quiet_NaN();
  double heldout_ssim = std::numeric_limits<double>::quiet_NaN();
  double heldout_loss_r = std::numeric_limits<double>::quiet_NaN();
  double heldout_loss_rs = std::numeric_limits<double>::quiet_NaN();
  double heldout_total = std::numeric_limits<double>::quiet_NaN();
  double final_saturation_rate = 0.0;
};

template <typename S>
class Trainer {
 public:
  explicit Trainer(const io::RunConfig& cfg);
  ~Trainer();

  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  const Workspace& workspace() const;
  student::NldfModel<S>& model();
  cond::FusionModule<S>& fusion();
  const ActivePool& pool() const;
  std::int64_t optimizer_steps() const;

  /// One fresh-batch step: sample, forward, backward, Adam over all
  /// parameters (fusion included), pool update.
  MetricsRow fresh_step();

  /// One pool-replay step: conditioning detached, Adam over the student
  /// parameters only; the fusion module is untouched. Returns false when the
  /// pool is empty or disabled.
  bool pool_step();

  /// Total loss on the fixed probe batch for the given split.
  double probe_loss(bool heldout);

  /// Runs the configured schedule; writes metrics.csv, checkpoints and
  /// report fields under out_dir when non-empty.
  TrainResult run(const std::filesystem::path& out_dir = {});

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

template <typename S>
struct TrainArtifacts {
  student::NldfModel<S> model;
  cond::FusionModule<S> fusion;
  TrainResult result;
};

template <typename S>
TrainArtifacts<S> train(const io::RunConfig& cfg, const std::filesystem::path& out_dir = {});

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path);

/// End-to-end central-difference gradient check in float64: real scene rays
/// and teacher targets, the fusion module on the tape, the full loss
/// (loss_r + lambda loss_rs), every parameter perturbed with epsilon = 1e-5.
/// Layers are fully randomly initialized so gradients flow through every
/// path. Returns the max relative error.
double end_to_end_grad_check(int blocks, int width, int rays, std::uint64_t seed);

}  // namespace nldf::train
