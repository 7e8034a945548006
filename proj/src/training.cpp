#include "nldf/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <unordered_map>

#include "nldf/checkpoint.hpp"
#include "nldf/errors.hpp"
#include "nldf/metrics.hpp"
#include "nldf/parallel.hpp"

namespace nldf::train {

namespace {
using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::int64_t pool_key(const TrainingSample& s) {
  return (static_cast<std::int64_t>(s.frame) << 32) | static_cast<std::uint32_t>(s.pixel_index);
}
}  // namespace

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

double loss_rs_value(const Eigen::MatrixXd& pred_segments,
                     const Eigen::MatrixXd& target_segments) {
  if (pred_segments.rows() != target_segments.rows() ||
      pred_segments.cols() != target_segments.cols())
    throw DomainError("loss_rs: shape mismatch");
  return (pred_segments - target_segments).squaredNorm() /
         static_cast<double>(pred_segments.rows());
}

double loss_r_value(const Eigen::MatrixXd& pred_pixels, const Eigen::MatrixXd& gt_pixels) {
  if (pred_pixels.rows() != gt_pixels.rows() || pred_pixels.cols() != gt_pixels.cols())
    throw DomainError("loss_r: shape mismatch");
  return (pred_pixels - gt_pixels).squaredNorm() / static_cast<double>(pred_pixels.rows());
}

std::vector<double> per_ray_total_losses(const Eigen::MatrixXd& pred_segments,
                                         const Eigen::MatrixXd& target_segments,
                                         const Eigen::MatrixXd& pred_pixels,
                                         const Eigen::MatrixXd& gt_pixels, double lambda) {
  const auto n = pred_segments.rows();
  std::vector<double> losses(static_cast<size_t>(n));
  for (Eigen::Index r = 0; r < n; ++r) {
    const double rs = (pred_segments.row(r) - target_segments.row(r)).squaredNorm();
    const double lr = (pred_pixels.row(r) - gt_pixels.row(r)).squaredNorm();
    losses[static_cast<size_t>(r)] = lr + lambda * rs;
  }
  return losses;
}

// ---------------------------------------------------------------------------
// Active pool
// ---------------------------------------------------------------------------

void ActivePool::sort_and_truncate() {
  std::stable_sort(entries_.begin(), entries_.end(),
                   [](const PoolEntry& a, const PoolEntry& b) { return a.loss > b.loss; });
  if (entries_.size() > capacity_) entries_.resize(capacity_);
}

void ActivePool::insert(std::vector<PoolEntry> candidates) {
  std::unordered_map<std::int64_t, size_t> index;
  index.reserve(entries_.size());
  for (size_t i = 0; i < entries_.size(); ++i) index[pool_key(entries_[i].sample)] = i;
  for (auto& c : candidates) {
    const auto it = index.find(pool_key(c.sample));
    if (it != index.end()) {
      entries_[it->second] = std::move(c);
    } else {
      entries_.push_back(std::move(c));
    }
  }
  sort_and_truncate();
}

void ActivePool::update_losses(std::span<const size_t> indices, std::span<const double> losses) {
  for (size_t i = 0; i < indices.size(); ++i) entries_[indices[i]].loss = losses[i];
  sort_and_truncate();
}

void update_active_pool(ActivePool& pool, const std::vector<TrainingSample>& batch,
                        std::span<const double> losses, double j) {
  if (j < 0.0 || j > 1.0) throw ConfigError("pool fraction j must lie in [0, 1]");
  if (batch.size() != losses.size())
    throw DomainError("update_active_pool: batch/loss size mismatch");
  const size_t take = static_cast<size_t>(
      std::ceil(j * static_cast<double>(batch.size())) + 0.5);
  if (take == 0) return;
  std::vector<size_t> order(batch.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return losses[a] > losses[b]; });
  std::vector<PoolEntry> candidates;
  candidates.reserve(take);
  for (size_t i = 0; i < std::min(take, order.size()); ++i)
    candidates.push_back({batch[order[i]], losses[order[i]]});
  pool.insert(std::move(candidates));
}

// ---------------------------------------------------------------------------
// Workspace
// ---------------------------------------------------------------------------

render::TeacherRender Workspace::render_teacher(int frame) const {
  const geom::SampleMode mode = cfg.render_mode == "stratified" ? geom::SampleMode::kStratified
                                                                : geom::SampleMode::kMidpoint;
  return render::render_frame_teacher(
      scene.field, cameras[static_cast<size_t>(frame)], teacher_a[static_cast<size_t>(frame)],
      cfg.render_samples, scene.t_near, scene.t_far, mode,
      substream(cfg.seed, "render.stratified", static_cast<std::uint64_t>(frame)), threads);
}

Workspace make_workspace(const io::RunConfig& cfg) {
  cfg.validate();
  Workspace ws;
  ws.cfg = cfg;
  ws.scene = io::resolve_scene(cfg);
  ws.threads = cfg.deterministic ? 1 : resolve_threads(cfg.threads);

  if (!cfg.signal_path.empty()) {
    ws.signal = cond::load_signal_csv(cfg.signal_path);
    if (ws.signal.frame_count() < cfg.total_frames())
      throw ConfigError("signal file has fewer frames than the run needs");
  } else {
    ws.signal = cond::generate_signal(cond::parse_signal_kind(cfg.signal_kind),
                                      cfg.total_frames(), cfg.signal_dim,
                                      substream(cfg.seed, "signal"), cfg.signal_fps);
  }

  const int d = ws.scene.field.conditioning_dim;
  if (d > 0) {
    ws.teacher_fusion = cond::FusionModule<double>(d, ws.signal.raw_dim(), cfg.fusion_half_width);
    Rng rng(substream(cfg.seed, "teacher-fusion"));
    ws.teacher_fusion.init(rng);
  }

  ws.teacher_a.reserve(static_cast<size_t>(cfg.total_frames()));
  ws.cameras.reserve(static_cast<size_t>(cfg.total_frames()));
  for (int f = 0; f < cfg.total_frames(); ++f) {
    ws.teacher_a.push_back(d > 0 ? cond::fuse_window(ws.teacher_fusion, ws.signal, f)
                                 : Eigen::VectorXd(0));
    ws.cameras.push_back(io::camera_for_frame(ws.scene, cfg.trajectory, f, cfg.total_frames()));
  }
  return ws;
}

std::vector<std::uint8_t> foreground_mask(const field::AnalyticScene& scene,
                                          const geom::Camera& camera,
                                          const Eigen::VectorXd& a, int n_samples,
                                          double t_near, double t_far, int threads) {
  const render::TeacherRender r = render::render_frame_teacher(
      scene, camera, a, n_samples, t_near, t_far, geom::SampleMode::kMidpoint, 0, threads);
  std::vector<std::uint8_t> mask(r.opacity.size());
  for (size_t i = 0; i < mask.size(); ++i) mask[i] = r.opacity[i] > 0.01 ? 1 : 0;
  return mask;
}

FrameMask frame_mask(const Workspace& ws, int frame) {
  FrameMask out;
  out.fg = foreground_mask(ws.scene.field, ws.cameras[static_cast<size_t>(frame)],
                           ws.teacher_a[static_cast<size_t>(frame)], ws.cfg.render_samples,
                           ws.scene.t_near, ws.scene.t_far, ws.threads);
  for (size_t i = 0; i < out.fg.size(); ++i)
    (out.fg[i] ? out.fg_indices : out.bg_indices).push_back(static_cast<int>(i));
  return out;
}

namespace {

/// Deterministic midpoint teacher targets for a set of pixel indices.
std::vector<TrainingSample> make_samples(const Workspace& ws, int frame,
                                         const std::vector<int>& pixels,
                                         const std::vector<std::uint8_t>& fg_mask) {
  const auto& cfg = ws.cfg;
  const geom::Camera& camera = ws.cameras[static_cast<size_t>(frame)];
  const Eigen::VectorXd& a = ws.teacher_a[static_cast<size_t>(frame)];
  std::vector<TrainingSample> samples(pixels.size());
  parallel_chunks(static_cast<std::int64_t>(pixels.size()), ws.threads,
                  [&](std::int64_t begin, std::int64_t end) {
    std::vector<render::RadianceSample> rad(static_cast<size_t>(cfg.render_samples));
    std::vector<double> deltas(static_cast<size_t>(cfg.render_samples));
    for (std::int64_t i = begin; i < end; ++i) {
      const int pixel = pixels[static_cast<size_t>(i)];
      const int px = pixel % camera.width;
      const int py = pixel / camera.width;
      TrainingSample& s = samples[static_cast<size_t>(i)];
      s.frame = frame;
      s.pixel_index = pixel;
      s.is_foreground = !fg_mask.empty() && fg_mask[static_cast<size_t>(pixel)] != 0;
      s.ray = geom::pixel_ray(camera, px + 0.5, py + 0.5, ws.scene.t_near, ws.scene.t_far);
      const auto points =
          geom::place_samples(s.ray, cfg.render_samples, geom::SampleMode::kMidpoint);
      for (int k = 0; k < cfg.render_samples; ++k) {
        rad[static_cast<size_t>(k)] =
            field::eval_field(ws.scene.field, a, points[static_cast<size_t>(k)].position,
                              s.ray.direction);
        deltas[static_cast<size_t>(k)] = points[static_cast<size_t>(k)].delta;
      }
      s.teacher_segments = render::composite_segments(rad, deltas, cfg.model.segments);
      s.gt = render::accumulate_segments(s.teacher_segments);
    }
  });
  return samples;
}

}  // namespace

Batch sample_batch(const Workspace& ws, const std::vector<FrameMask>& masks, Rng& rng) {
  const auto& cfg = ws.cfg;
  Batch batch;
  batch.frame = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(cfg.train_frames)));
  const FrameMask& mask = masks[static_cast<size_t>(batch.frame)];
  const int n = cfg.batch_size;
  const int pixel_count = ws.cameras[static_cast<size_t>(batch.frame)].width *
                          ws.cameras[static_cast<size_t>(batch.frame)].height;

  std::vector<int> pixels;
  pixels.reserve(static_cast<size_t>(n));
  const bool degenerate = mask.fg_indices.empty() || mask.bg_indices.empty();
  if (degenerate) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true))
      std::fprintf(stderr,
                   "warning: degenerate foreground mask on frame %d; "
                   "falling back to uniform pixel sampling\n",
                   batch.frame);
    for (int i = 0; i < n; ++i)
      pixels.push_back(static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(pixel_count))));
  } else {
    const int n_fg = static_cast<int>(std::floor(cfg.foreground_fraction * n));
    for (int i = 0; i < n_fg; ++i)
      pixels.push_back(mask.fg_indices[rng.uniform_index(mask.fg_indices.size())]);
    for (int i = n_fg; i < n; ++i)
      pixels.push_back(mask.bg_indices[rng.uniform_index(mask.bg_indices.size())]);
  }
  batch.samples = make_samples(ws, batch.frame, pixels, mask.fg);
  return batch;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

template <typename S>
struct Trainer<S>::Impl {
  io::RunConfig cfg;
  Workspace ws;
  std::vector<FrameMask> masks;
  student::NldfModel<S> model;
  cond::FusionModule<S> fusion;
  std::vector<nn::Parameter<S>*> model_params;
  std::vector<nn::Parameter<S>*> all_params;
  ActivePool pool;
  Rng batch_rng;
  Rng pool_rng;
  nn::Tape<S> tape;

  std::int64_t steps = 0;
  std::int64_t fresh_iters = 0;
  std::int64_t planned_steps = 0;
  std::filesystem::path out_dir;

  struct ProbeBatch {
    std::vector<TrainingSample> samples;
    Eigen::MatrixXd target_seg;
    Eigen::MatrixXd target_pix;
  };
  std::optional<ProbeBatch> probe_train;
  std::optional<ProbeBatch> probe_heldout;

  explicit Impl(const io::RunConfig& config)
      : cfg(config), ws(make_workspace(config)), model(config.model),
        pool(config.pool.capacity > 0 ? static_cast<size_t>(config.pool.capacity)
                                      : static_cast<size_t>(4) * config.batch_size),
        batch_rng(substream(config.seed, "batch")), pool_rng(substream(config.seed, "pool")) {
    masks.reserve(static_cast<size_t>(cfg.train_frames));
    for (int f = 0; f < cfg.train_frames; ++f) masks.push_back(frame_mask(ws, f));

    model.norm_center = ws.scene.bbox_center;
    model.norm_half_extent = ws.scene.bbox_half;
    model.init(cfg.seed);
    model_params = model.params();
    all_params = model_params;
    if (cfg.model.conditioning_dim > 0) {
      fusion = cond::FusionModule<S>(cfg.model.conditioning_dim, ws.signal.raw_dim(),
                                     cfg.fusion_half_width);
      Rng rng(substream(cfg.seed, "init.fusion"));
      fusion.init(rng);
      fusion.collect(all_params);
    }

    const double pool_factor =
        cfg.pool.enabled ? 1.0 + 1.0 / static_cast<double>(cfg.pool.cadence) : 1.0;
    planned_steps = cfg.step_budget > 0
                        ? cfg.step_budget
                        : static_cast<std::int64_t>(
                              std::llround(static_cast<double>(cfg.iterations) * pool_factor));
  }

  double current_lr() const {
    return cfg.cosine_decay ? nn::cosine_lr(cfg.lr, steps, planned_steps) : cfg.lr;
  }

  /// Targets of a sample list as [n x 3M] / [n x 3] matrices.
  static void targets_to_matrices(const std::vector<TrainingSample>& samples,
                                  Eigen::MatrixXd& seg, Eigen::MatrixXd& pix) {
    const auto n = static_cast<Eigen::Index>(samples.size());
    const int m = samples.empty() ? 0 : samples.front().teacher_segments.segments();
    seg.resize(n, 3 * m);
    pix.resize(n, 3);
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto& s = samples[static_cast<size_t>(r)];
      for (int i = 0; i < m; ++i)
        for (int c = 0; c < 3; ++c) seg(r, 3 * i + c) = s.teacher_segments.colors(i, c);
      pix.row(r) = s.gt.rgb.transpose();
    }
  }

  nn::Tensor<S> beam_tensor(const std::vector<TrainingSample>& samples) const {
    const int n = static_cast<int>(samples.size());
    nn::Tensor<S> beams(n, 3 * cfg.model.beam_points);
    for (int r = 0; r < n; ++r)
      model.write_beam_row(samples[static_cast<size_t>(r)].ray,
                           beams.data.data() + static_cast<size_t>(r) * beams.cols);
    return beams;
  }

  /// Constant input matrix (detached conditioning) for pool and probe passes.
  nn::EMat<S> assemble_detached(const std::vector<TrainingSample>& samples) {
    const int n = static_cast<int>(samples.size());
    const int k3 = 3 * cfg.model.beam_points;
    nn::EMat<S> input(n, cfg.model.input_dim());
    std::unordered_map<int, Eigen::VectorXd> fused;
    for (int r = 0; r < n; ++r) {
      const auto& s = samples[static_cast<size_t>(r)];
      model.write_beam_row(s.ray, input.row(r).data());
      if (cfg.model.conditioning_dim > 0) {
        auto it = fused.find(s.frame);
        if (it == fused.end())
          it = fused.emplace(s.frame, cond::fuse_window(fusion, ws.signal, s.frame)).first;
        for (int c = 0; c < cfg.model.conditioning_dim; ++c)
          input(r, k3 + c) = static_cast<S>(it->second[c]);
      }
    }
    return input;
  }

  struct StepValues {
    double loss_r = 0.0;
    double loss_rs = 0.0;
    double total = 0.0;
    double saturation = 0.0;
    std::vector<double> per_ray;
  };

  void abort_on_nan(const StepValues& v, int frame, const char* what) {
    if (std::isfinite(v.total)) return;
    if (!out_dir.empty()) {
      std::ofstream dump(out_dir / "nan_dump.json");
      dump << "{\"iteration\": " << fresh_iters << ", \"step\": " << steps
           << ", \"kind\": \"" << what << "\", \"frame\": " << frame
           << ", \"loss_r\": " << v.loss_r << ", \"loss_rs\": " << v.loss_rs << "}\n";
    }
    throw DomainError("non-finite loss in " + std::string(what) + " at iteration " +
                      std::to_string(fresh_iters));
  }

  /// Forward/backward/update shared by fresh and pool steps. `input_id` must
  /// already be on the tape; targets are constants.
  StepValues optimize_batch(nn::NodeId input_id, const Eigen::MatrixXd& target_seg,
                            const Eigen::MatrixXd& target_pix,
                            std::span<nn::Parameter<S>* const> params_to_step) {
    const auto n = target_seg.rows();
    nn::Tensor<S> tseg(static_cast<int>(n), static_cast<int>(target_seg.cols()));
    tseg.mat() = target_seg.cast<S>();
    nn::Tensor<S> tpix(static_cast<int>(n), 3);
    tpix.mat() = target_pix.cast<S>();

    const nn::NodeId out = model.forward(tape, input_id);
    const nn::NodeId pix = tape.group_sum_cols(out, cfg.model.segments);
    const nn::NodeId l_rs = tape.row_sumsq_mean(tape.sub(out, tape.leaf(std::move(tseg))));
    const nn::NodeId l_r = tape.row_sumsq_mean(tape.sub(pix, tape.leaf(std::move(tpix))));
    const nn::NodeId total = tape.add(l_r, tape.scale(l_rs, cfg.lambda));

    StepValues v;
    v.loss_r = static_cast<double>(tape.value(l_r).data[0]);
    v.loss_rs = static_cast<double>(tape.value(l_rs).data[0]);
    v.total = static_cast<double>(tape.value(total).data[0]);

    const auto& pred_seg = tape.value(out);
    const auto& pred_pix = tape.value(pix);
    v.per_ray.resize(static_cast<size_t>(n));
    std::int64_t saturated = 0;
    for (Eigen::Index r = 0; r < n; ++r) {
      double rs = 0.0;
      for (int c = 0; c < pred_seg.cols; ++c) {
        const double d = static_cast<double>(pred_seg.data[static_cast<size_t>(r) * pred_seg.cols + c]) -
                         target_seg(r, c);
        rs += d * d;
      }
      double lr = 0.0;
      bool sat = false;
      for (int c = 0; c < 3; ++c) {
        const double p = static_cast<double>(pred_pix.data[static_cast<size_t>(r) * 3 + c]);
        const double d = p - target_pix(r, c);
        lr += d * d;
        sat = sat || p > 1.0;
      }
      v.per_ray[static_cast<size_t>(r)] = lr + cfg.lambda * rs;
      saturated += sat ? 1 : 0;
    }
    v.saturation = static_cast<double>(saturated) / static_cast<double>(n);

    for (auto* p : all_params) p->zero_grad();
    tape.backward(total);
    nn::AdamConfig adam;
    adam.lr = current_lr();
    nn::adam_step<S>(params_to_step, adam);
    steps += 1;
    return v;
  }

  MetricsRow do_fresh_step() {
    Batch batch = sample_batch(ws, masks, batch_rng);
    Eigen::MatrixXd target_seg, target_pix;
    targets_to_matrices(batch.samples, target_seg, target_pix);

    tape.reset();
    nn::NodeId input;
    const nn::NodeId beams = tape.leaf(beam_tensor(batch.samples));
    if (cfg.model.conditioning_dim > 0) {
      const nn::NodeId a = cond::fuse_window_on_tape(tape, fusion, ws.signal, batch.frame);
      input = tape.concat_cols(beams, tape.broadcast_rows(a, static_cast<int>(batch.samples.size())));
    } else {
      input = beams;
    }
    StepValues v = optimize_batch(input, target_seg, target_pix, all_params);
    abort_on_nan(v, batch.frame, "fresh batch");
    fresh_iters += 1;

    if (cfg.pool.enabled && cfg.pool.fraction > 0.0)
      update_active_pool(pool, batch.samples, v.per_ray, cfg.pool.fraction);

    MetricsRow row;
    row.iter = fresh_iters;
    row.loss_r = v.loss_r;
    row.loss_rs = v.loss_rs;
    row.total = v.total;
    row.saturation_rate = v.saturation;
    row.pool_size = pool.size();
    return row;
  }

  bool do_pool_step() {
    if (!cfg.pool.enabled || pool.size() == 0) return false;
    const size_t n = std::min(static_cast<size_t>(cfg.batch_size), pool.size());
    // Partial Fisher-Yates draw without replacement.
    std::vector<size_t> order(pool.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (size_t i = 0; i < n; ++i) {
      const size_t j = i + static_cast<size_t>(pool_rng.uniform_index(order.size() - i));
      std::swap(order[i], order[j]);
    }
    std::vector<size_t> indices(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n));
    std::vector<TrainingSample> samples;
    samples.reserve(n);
    for (size_t i : indices) samples.push_back(pool.entries()[i].sample);

    Eigen::MatrixXd target_seg, target_pix;
    targets_to_matrices(samples, target_seg, target_pix);

    tape.reset();
    nn::Tensor<S> input_t(static_cast<int>(n), cfg.model.input_dim());
    input_t.mat() = assemble_detached(samples);
    const nn::NodeId input = tape.leaf(std::move(input_t));
    StepValues v = optimize_batch(input, target_seg, target_pix, model_params);
    abort_on_nan(v, samples.front().frame, "pool batch");
    pool.update_losses(indices, v.per_ray);
    return true;
  }

  ProbeBatch make_probe(bool heldout) {
    const int frame_lo = heldout ? cfg.train_frames : 0;
    const int frame_hi = heldout ? cfg.total_frames() : cfg.train_frames;
    Rng rng(substream(cfg.seed, heldout ? "probe.heldout" : "probe.train"));
    std::map<int, std::vector<int>> pixels_by_frame;  // ordered for determinism
    for (int i = 0; i < cfg.probe.rays; ++i) {
      const int f = frame_lo + static_cast<int>(rng.uniform_index(
                                   static_cast<std::uint64_t>(frame_hi - frame_lo)));
      const auto& cam = ws.cameras[static_cast<size_t>(f)];
      pixels_by_frame[f].push_back(
          static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(cam.width * cam.height))));
    }
    ProbeBatch probe;
    for (auto& [frame, pixels] : pixels_by_frame) {
      auto frame_samples = make_samples(ws, frame, pixels, {});
      probe.samples.insert(probe.samples.end(), frame_samples.begin(), frame_samples.end());
    }
    targets_to_matrices(probe.samples, probe.target_seg, probe.target_pix);
    return probe;
  }

  struct ProbeEval {
    double loss_r = 0.0, loss_rs = 0.0, total = 0.0;
  };

  ProbeEval eval_probe(ProbeBatch& probe) {
    const nn::EMat<S> input = assemble_detached(probe.samples);
    const nn::EMat<S> out = model.infer(input);
    Eigen::MatrixXd pred_seg = out.template cast<double>();
    Eigen::MatrixXd pred_pix(pred_seg.rows(), 3);
    pred_pix.setZero();
    for (int i = 0; i < cfg.model.segments; ++i)
      pred_pix += pred_seg.middleCols(3 * i, 3);
    ProbeEval e;
    e.loss_r = loss_r_value(pred_pix, probe.target_pix);
    e.loss_rs = loss_rs_value(pred_seg, probe.target_seg);
    e.total = total_loss(e.loss_r, e.loss_rs, cfg.lambda);
    return e;
  }

  double probe_total(bool heldout) {
    auto& slot = heldout ? probe_heldout : probe_train;
    if (!slot) slot = make_probe(heldout);
    return eval_probe(*slot).total;
  }
};

template <typename S>
Trainer<S>::Trainer(const io::RunConfig& cfg) : impl_(std::make_unique<Impl>(cfg)) {}
template <typename S>
Trainer<S>::~Trainer() = default;

template <typename S>
const Workspace& Trainer<S>::workspace() const { return impl_->ws; }
template <typename S>
student::NldfModel<S>& Trainer<S>::model() { return impl_->model; }
template <typename S>
cond::FusionModule<S>& Trainer<S>::fusion() { return impl_->fusion; }
template <typename S>
const ActivePool& Trainer<S>::pool() const { return impl_->pool; }
template <typename S>
std::int64_t Trainer<S>::optimizer_steps() const { return impl_->steps; }

template <typename S>
MetricsRow Trainer<S>::fresh_step() { return impl_->do_fresh_step(); }
template <typename S>
bool Trainer<S>::pool_step() { return impl_->do_pool_step(); }
template <typename S>
double Trainer<S>::probe_loss(bool heldout) { return impl_->probe_total(heldout); }

template <typename S>
TrainResult Trainer<S>::run(const std::filesystem::path& out_dir) {
  Impl& im = *impl_;
  im.out_dir = out_dir;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    if (im.cfg.checkpoint_every > 0) std::filesystem::create_directories(out_dir / "checkpoints");
  }

  std::vector<std::int64_t> probe_steps = im.cfg.probe.at_steps;
  std::sort(probe_steps.begin(), probe_steps.end());
  size_t next_probe = 0;

  TrainResult result;
  const auto run_t0 = Clock::now();
  auto maybe_probe = [&] {
    while (next_probe < probe_steps.size() && im.steps >= probe_steps[next_probe]) {
      ProbePoint point;
      point.step = im.steps;
      point.train_total = im.probe_total(false);
      point.heldout_total =
          im.cfg.heldout_frames > 0 ? im.probe_total(true) : std::numeric_limits<double>::quiet_NaN();
      result.probes.push_back(point);
      ++next_probe;
    }
  };

  const std::int64_t budget = im.cfg.step_budget;
  while (im.fresh_iters < im.cfg.iterations && (budget == 0 || im.steps < budget)) {
    const auto iter_t0 = Clock::now();
    MetricsRow row = im.do_fresh_step();
    maybe_probe();
    if (im.cfg.pool.enabled && im.pool.size() > 0 &&
        im.fresh_iters % im.cfg.pool.cadence == 0 && (budget == 0 || im.steps < budget)) {
      im.do_pool_step();
      maybe_probe();
    }
    row.pool_size = im.pool.size();
    row.ms_per_iter = im.cfg.deterministic ? 0.0 : elapsed_ms(iter_t0);
    result.log.push_back(row);

    if (!out_dir.empty() && im.cfg.checkpoint_every > 0 &&
        im.fresh_iters % im.cfg.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "ckpt_%08lld.nldf",
                    static_cast<long long>(im.fresh_iters));
      io::save_checkpoint<S>(out_dir / "checkpoints" / name, im.model, im.fusion, im.cfg.seed,
                             im.steps);
    }
  }

  result.optimizer_steps = im.steps;
  result.fresh_iterations = im.fresh_iters;
  if (!result.log.empty()) result.final_saturation_rate = result.log.back().saturation_rate;

  if (im.cfg.heldout_frames > 0) {
    if (!im.probe_heldout) im.probe_heldout = im.make_probe(true);
    auto heldout_eval = im.eval_probe(*im.probe_heldout);
    result.heldout_loss_r = heldout_eval.loss_r;
    result.heldout_loss_rs = heldout_eval.loss_rs;
    result.heldout_total = heldout_eval.total;
    if (im.cfg.eval_heldout) {
      std::vector<Image> teacher_frames, student_frames;
      for (int f = im.cfg.train_frames; f < im.cfg.total_frames(); ++f) {
        teacher_frames.push_back(im.ws.render_teacher(f).image);
        student_frames.push_back(student::render_frame_student<S>(
                                     im.model, im.fusion, im.ws.signal, f,
                                     im.ws.cameras[static_cast<size_t>(f)], im.ws.scene.t_near,
                                     im.ws.scene.t_far, im.ws.threads)
                                     .image);
      }
      const auto report = metrics::compare_frames(student_frames, teacher_frames);
      result.heldout_psnr = report.psnr_mean;
      result.heldout_ssim = report.ssim_mean;
    }
  }
  result.wall_seconds = std::chrono::duration<double>(Clock::now() - run_t0).count();

  if (!out_dir.empty()) {
    write_metrics_csv(result.log, out_dir / "metrics.csv");
    io::save_checkpoint<S>(out_dir / "final.nldf", im.model, im.fusion, im.cfg.seed, im.steps);
  }
  return result;
}

template <typename S>
TrainArtifacts<S> train(const io::RunConfig& cfg, const std::filesystem::path& out_dir) {
  Trainer<S> trainer(cfg);
  TrainResult result = trainer.run(out_dir);
  return {std::move(trainer.model()), std::move(trainer.fusion()), std::move(result)};
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot open " + path.string() + " for writing");
  out << "iter,loss_r,loss_rs,total,saturation_rate,pool_size,ms_per_iter\n";
  char line[256];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%lld,%.9e,%.9e,%.9e,%.6f,%zu,%.3f\n",
                  static_cast<long long>(r.iter), r.loss_r, r.loss_rs, r.total,
                  r.saturation_rate, r.pool_size, r.ms_per_iter);
    out << line;
  }
}

double end_to_end_grad_check(int blocks, int width, int rays, std::uint64_t seed) {
  io::RunConfig cfg;
  cfg.seed = seed;
  cfg.dtype = "float64";
  cfg.image_size = 16;
  cfg.scene_conditioning_dim = 8;
  cfg.signal_dim = 8;
  cfg.train_frames = 4;
  cfg.heldout_frames = 0;
  cfg.model.beam_points = 8;
  cfg.model.segments = 4;
  cfg.model.blocks = blocks;
  cfg.model.width = width;
  cfg.model.conditioning_dim = 8;
  cfg.render_samples = 32;
  cfg.batch_size = rays;
  cfg.foreground_fraction = 0.5;
  cfg.validate();

  Workspace ws = make_workspace(cfg);
  ws.threads = 1;

  student::NldfModel<double> model(cfg.model);
  model.norm_center = ws.scene.bbox_center;
  model.norm_half_extent = ws.scene.bbox_half;
  model.init(cfg.seed, /*full_random=*/true);
  cond::FusionModule<double> fusion(cfg.model.conditioning_dim, ws.signal.raw_dim(),
                                    cfg.fusion_half_width);
  Rng fusion_rng(substream(cfg.seed, "init.fusion"));
  fusion.init(fusion_rng);

  std::vector<nn::Parameter<double>*> params = model.params();
  fusion.collect(params);

  std::vector<FrameMask> masks;
  for (int f = 0; f < cfg.train_frames; ++f) masks.push_back(frame_mask(ws, f));
  Rng batch_rng(substream(cfg.seed, "batch"));
  const Batch batch = sample_batch(ws, masks, batch_rng);

  Eigen::MatrixXd target_seg, target_pix;
  {
    const auto n = static_cast<Eigen::Index>(batch.samples.size());
    target_seg.resize(n, 3 * cfg.model.segments);
    target_pix.resize(n, 3);
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto& s = batch.samples[static_cast<size_t>(r)];
      for (int i = 0; i < cfg.model.segments; ++i)
        for (int c = 0; c < 3; ++c) target_seg(r, 3 * i + c) = s.teacher_segments.colors(i, c);
      target_pix.row(r) = s.gt.rgb.transpose();
    }
  }
  nn::Tensor<double> beams(static_cast<int>(batch.samples.size()), 3 * cfg.model.beam_points);
  for (size_t r = 0; r < batch.samples.size(); ++r)
    model.write_beam_row(batch.samples[r].ray, beams.data.data() + r * beams.cols);

  nn::Tape<double> tape;
  auto loss_fn = [&](bool with_grad) -> double {
    tape.reset();
    const nn::NodeId beams_id = tape.leaf(beams);
    const nn::NodeId a = cond::fuse_window_on_tape(tape, fusion, ws.signal, batch.frame);
    const nn::NodeId input =
        tape.concat_cols(beams_id, tape.broadcast_rows(a, static_cast<int>(batch.samples.size())));
    const nn::NodeId out = model.forward(tape, input);
    const nn::NodeId pix = tape.group_sum_cols(out, cfg.model.segments);
    nn::Tensor<double> tseg(static_cast<int>(target_seg.rows()),
                            static_cast<int>(target_seg.cols()));
    tseg.mat() = target_seg;
    nn::Tensor<double> tpix(static_cast<int>(target_pix.rows()), 3);
    tpix.mat() = target_pix;
    const nn::NodeId l_rs = tape.row_sumsq_mean(tape.sub(out, tape.leaf(std::move(tseg))));
    const nn::NodeId l_r = tape.row_sumsq_mean(tape.sub(pix, tape.leaf(std::move(tpix))));
    const nn::NodeId total = tape.add(l_r, tape.scale(l_rs, cfg.lambda));
    if (with_grad) tape.backward(total);
    return static_cast<double>(tape.value(total).data[0]);
  };

  nn::GradCheckConfig gc;
  gc.epsilon = 1e-5;
  gc.max_coords_per_param = 20;
  gc.seed = substream(seed, "gradcheck");
  return nn::grad_check<double>(loss_fn, params, gc);
}

template class Trainer<float>;
template class Trainer<double>;
template TrainArtifacts<float> train<float>(const io::RunConfig&, const std::filesystem::path&);
template TrainArtifacts<double> train<double>(const io::RunConfig&, const std::filesystem::path&);

}  // namespace nldf::train
