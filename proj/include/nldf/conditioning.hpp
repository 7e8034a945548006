#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nldf/autodiff.hpp"
#include "nldf/errors.hpp"
#include "nldf/layers.hpp"
#include "nldf/rng.hpp"

namespace nldf::cond {

/// Per-frame raw driving features (the stand-in for an upstream audio
/// feature extractor): T frames by D_raw channels, values in [-1, 1].
struct DrivingSignal {
  Eigen::MatrixXd frames;  // T x D_raw
  double fps = 25.0;

  int frame_count() const { return static_cast<int>(frames.rows()); }
  int raw_dim() const { return static_cast<int>(frames.cols()); }
};

enum class SignalKind { kSinusoidMixture, kBandlimitedNoise };

SignalKind parse_signal_kind(const std::string& name);

/// Frequency cap (Hz) for generated signals; adjacent frames differ per
/// channel by less than 2*pi*kMaxSignalHz/fps.
inline constexpr double kMaxSignalHz = 2.0;

/// Deterministic synthetic signal. Each sinusoid-mixture channel is the mean
/// of 3 seeded sinusoids (bandlimited noise: 8), so every value is in [-1, 1].
DrivingSignal generate_signal(SignalKind kind, int frames, int raw_dim, std::uint64_t seed,
                              double fps = 25.0);

/// One row per frame, full-precision; first line records the fps.
void save_signal_csv(const DrivingSignal& signal, const std::filesystem::path& path);
DrivingSignal load_signal_csv(const std::filesystem::path& path);

/// Raw features of the 2w+1 frames centered on `frame`, clamped at the
/// sequence ends by edge replication.
Eigen::MatrixXd signal_window(const DrivingSignal& signal, int frame, int half_width);

/// Single-head dot-product attention over a temporal window: the center
/// frame provides the query, every window frame a key and value, and the
/// output is the attention-weighted sum of value projections. Trains jointly
/// with the student on fresh batches; a frozen instance drives the teacher
/// scene.
template <typename S>
struct FusionModule {
  nn::Parameter<S> query;  // [D x D_raw]
  nn::Parameter<S> key;    // [D x D_raw]
  nn::Parameter<S> value;  // [D x D_raw]
  int half_width = 1;
  int out_dim = 0;
  int raw_dim = 0;

  FusionModule() = default;
  FusionModule(int d_out, int d_raw, int w)
      : query("fusion.query", d_out, d_raw), key("fusion.key", d_out, d_raw),
        value("fusion.value", d_out, d_raw), half_width(w), out_dim(d_out), raw_dim(d_raw) {}

  /// Projections scaled to 1/sqrt(D_raw) so fused outputs stay O(1) for
  /// signals in [-1, 1].
  void init(Rng& rng) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(std::max(1, raw_dim)));
    for (auto* p : {&query, &key, &value})
      for (auto& v : p->value.data) v = static_cast<S>(rng.uniform(-scale, scale));
  }

  void collect(std::vector<nn::Parameter<S>*>& out) {
    out.push_back(&query);
    out.push_back(&key);
    out.push_back(&value);
  }

  bool empty() const { return out_dim == 0; }
};

namespace detail {
template <typename S>
nn::EMat<S> to_mat(const Eigen::MatrixXd& m) {
  return m.cast<S>();
}
}  // namespace detail

/// Attention weights over the window (nonnegative, summing to 1).
template <typename S>
Eigen::VectorXd attention_weights(const FusionModule<S>& module, const DrivingSignal& signal,
                                  int frame) {
  const Eigen::MatrixXd window = signal_window(signal, frame, module.half_width);
  const int m = static_cast<int>(window.rows());
  const Eigen::MatrixXd q = module.query.value.mat().template cast<double>();
  const Eigen::MatrixXd k = module.key.value.mat().template cast<double>();
  const Eigen::VectorXd query = q * window.row(module.half_width).transpose();
  Eigen::VectorXd scores(m);
  for (int j = 0; j < m; ++j)
    scores(j) = query.dot(k * window.row(j).transpose()) /
                std::sqrt(static_cast<double>(module.out_dim));
  const double max_s = scores.maxCoeff();
  Eigen::VectorXd weights = (scores.array() - max_s).exp();
  return weights / weights.sum();
}

/// Pure fused conditioning vector for one frame (no tape).
template <typename S>
Eigen::VectorXd fuse_window(const FusionModule<S>& module, const DrivingSignal& signal,
                            int frame) {
  if (module.empty()) return Eigen::VectorXd(0);
  if (frame < 0 || frame >= signal.frame_count())
    throw DomainError("fuse_window: frame index out of range");
  const Eigen::MatrixXd window = signal_window(signal, frame, module.half_width);
  const Eigen::VectorXd weights = attention_weights(module, signal, frame);
  const Eigen::MatrixXd v = module.value.value.mat().template cast<double>();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(module.out_dim);
  for (int j = 0; j < window.rows(); ++j) out += weights(j) * (v * window.row(j).transpose());
  return out;
}

/// Tape version of fuse_window; gradients flow to the projection matrices.
/// Returns a [1 x D] node.
template <typename S>
nn::NodeId fuse_window_on_tape(nn::Tape<S>& tape, FusionModule<S>& module,
                               const DrivingSignal& signal, int frame) {
  if (frame < 0 || frame >= signal.frame_count())
    throw DomainError("fuse_window: frame index out of range");
  const Eigen::MatrixXd window_d = signal_window(signal, frame, module.half_width);
  const int m = static_cast<int>(window_d.rows());

  nn::Tensor<S> window(m, module.raw_dim);
  window.mat() = window_d.cast<S>();
  nn::Tensor<S> center(1, module.raw_dim);
  center.mat() = window_d.row(module.half_width).template cast<S>();

  const nn::NodeId win_id = tape.leaf(std::move(window));
  const nn::NodeId center_id = tape.leaf(std::move(center));
  const nn::NodeId keys = tape.matmul_nt(win_id, tape.param(module.key));       // [m x D]
  const nn::NodeId values = tape.matmul_nt(win_id, tape.param(module.value));   // [m x D]
  const nn::NodeId q = tape.matmul_nt(center_id, tape.param(module.query));     // [1 x D]
  const nn::NodeId scores =
      tape.scale(tape.matmul_nt(keys, q), 1.0 / std::sqrt(static_cast<double>(module.out_dim)));
  const nn::NodeId weights = tape.softmax_col(scores);  // [m x 1]
  return tape.matmul_tn(weights, values);               // [1 x D]
}

}  // namespace nldf::cond
