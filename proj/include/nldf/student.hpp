#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nldf/conditioning.hpp"
#include "nldf/geometry.hpp"
#include "nldf/image.hpp"
#include "nldf/layers.hpp"
#include "nldf/render.hpp"

namespace nldf::student {

using render::PixelColor;
using render::SegmentColors;

struct NldfConfig {
  int beam_points = 16;      // K
  int segments = 4;          // M
  int blocks = 4;            // B residual blocks
  int width = 128;
  int conditioning_dim = 16; // D (0 = unconditioned)

  int input_dim() const { return 3 * beam_points + conditioning_dim; }
  int output_dim() const { return 3 * segments; }
  void validate() const;  // throws ConfigError listing every violation
};

/// The per-ray student: beam feature + conditioning in, M segment colors out.
/// Architecture: input projection -> B residual blocks -> head -> sigmoid.
/// Beam coordinates are normalized to the scene bounding box before entering
/// the network.
template <typename S>
struct NldfModel {
  NldfConfig config;
  geom::Vec3 norm_center = geom::Vec3::Zero();
  geom::Vec3 norm_half_extent = geom::Vec3::Ones();
  nn::Dense<S> input_proj;
  std::vector<nn::ResBlock<S>> blocks;
  nn::Dense<S> head;

  NldfModel() = default;
  explicit NldfModel(const NldfConfig& cfg) : config(cfg) {
    cfg.validate();
    input_proj = nn::Dense<S>("input_proj", cfg.input_dim(), cfg.width);
    for (int b = 0; b < cfg.blocks; ++b)
      blocks.emplace_back("block" + std::to_string(b), cfg.width);
    head = nn::Dense<S>("head", cfg.width, cfg.output_dim());
  }

  /// Seeded init: He-uniform weights, zero biases, residual tails and the
  /// head zero-initialized so the untrained model outputs sigmoid(0) = 0.5
  /// everywhere. `full_random` randomizes the tails and head too (used by
  /// gradient-check fixtures to exercise every path).
  void init(std::uint64_t seed, bool full_random = false) {
    Rng rng(substream(seed, "init"));
    input_proj.init(rng);
    for (auto& block : blocks) block.init(rng, !full_random);
    head.init(rng, !full_random);
  }

  std::vector<nn::Parameter<S>*> params() {
    std::vector<nn::Parameter<S>*> out;
    input_proj.collect(out);
    for (auto& block : blocks) block.collect(out);
    head.collect(out);
    return out;
  }

  /// Normalized beam coordinates for one ray, as one input row (without the
  /// conditioning columns).
  void write_beam_row(const geom::Ray& ray, S* dst) const {
    const geom::BeamFeature feature = geom::encode_beam(ray, config.beam_points);
    for (int i = 0; i < config.beam_points; ++i)
      for (int axis = 0; axis < 3; ++axis)
        dst[3 * i + axis] = static_cast<S>(
            (feature.coords[3 * i + axis] - norm_center[axis]) / norm_half_extent[axis]);
  }

  /// [n x (3K+D)] -> [n x 3M] segment-color logits through sigmoid.
  nn::NodeId forward(nn::Tape<S>& tape, nn::NodeId input) {
    nn::NodeId h = input_proj.forward(tape, input);
    for (auto& block : blocks) h = block.forward(tape, h);
    return tape.sigmoid(head.forward(tape, h));
  }

  /// Tape-free forward pass for rendering; bit-identical to the tape path.
  nn::EMat<S> infer(const Eigen::Ref<const nn::EMat<S>>& input) const {
    nn::EMat<S> h = input_proj.infer(input);
    for (const auto& block : blocks) h = block.infer(h);
    return nn::sigmoid_infer<S>(head.infer(h));
  }
};

/// Single-ray forward: M segment colors, each strictly inside (0, 1).
template <typename S>
SegmentColors nldf_forward(const NldfModel<S>& model, const geom::Ray& ray,
                           const Eigen::VectorXd& a) {
  if (static_cast<int>(a.size()) != model.config.conditioning_dim)
    throw DomainError("nldf_forward: conditioning dimension mismatch");
  nn::EMat<S> input(1, model.config.input_dim());
  model.write_beam_row(ray, input.data());
  for (int i = 0; i < model.config.conditioning_dim; ++i)
    input(0, 3 * model.config.beam_points + i) = static_cast<S>(a[i]);
  const nn::EMat<S> out = model.infer(input);
  SegmentColors seg;
  seg.colors.resize(model.config.segments, 3);
  for (int i = 0; i < model.config.segments; ++i)
    for (int c = 0; c < 3; ++c) seg.colors(i, c) = static_cast<double>(out(0, 3 * i + c));
  return seg;
}

/// Pixel color: per-channel sum of segment colors, clamped to [0, 1].
template <typename S>
PixelColor nldf_pixel(const NldfModel<S>& model, const geom::Ray& ray, const Eigen::VectorXd& a,
                      bool* saturated = nullptr) {
  return render::accumulate_segments(nldf_forward(model, ray, a), saturated);
}

struct StudentRender {
  Image image;
  std::uint64_t forward_count = 0;  // always exactly width * height
  double saturation_rate = 0.0;     // fraction of pixels clamped
};

/// Renders a frame with exactly one network forward per pixel. The fused
/// conditioning is computed once for the frame. Rows are processed in fixed
/// 256-ray chunks so the output does not depend on the thread count.
template <typename S>
StudentRender render_frame_student(const NldfModel<S>& model,
                                   const cond::FusionModule<S>& fusion,
                                   const cond::DrivingSignal& signal, int frame,
                                   const geom::Camera& camera, double t_near, double t_far,
                                   int threads = 1);

}  // namespace nldf::student
