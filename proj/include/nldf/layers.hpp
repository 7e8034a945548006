#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nldf/autodiff.hpp"
#include "nldf/rng.hpp"

namespace nldf::nn {

/// y = x W^T + b. He-uniform weights, zero bias; `zero_weights` makes the
/// layer start as the zero map (used for residual-block tails and the
/// output head).
template <typename S>
struct Dense {
  Parameter<S> weight;  // [out x in]
  Parameter<S> bias;    // [1 x out]

  Dense() = default;
  Dense(const std::string& name, int in, int out)
      : weight(name + ".weight", out, in), bias(name + ".bias", 1, out) {}

  void init(Rng& rng, bool zero_weights = false) {
    if (!zero_weights) {
      const double limit = std::sqrt(6.0 / weight.value.cols);
      for (auto& v : weight.value.data) v = static_cast<S>(rng.uniform(-limit, limit));
    } else {
      weight.value.set_zero();
    }
    bias.value.set_zero();
  }

  NodeId forward(Tape<S>& tape, NodeId x) {
    return tape.add_rowvec(tape.matmul_nt(x, tape.param(weight)), tape.param(bias));
  }

  EMat<S> infer(const Eigen::Ref<const EMat<S>>& x) const {
    return (x * weight.value.mat().transpose()).rowwise() + bias.value.mat().row(0);
  }

  void collect(std::vector<Parameter<S>*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

inline constexpr double kLeakySlope = 0.01;

template <typename S>
EMat<S> leaky_relu_infer(EMat<S> x) {
  for (int i = 0; i < x.size(); ++i) {
    S* p = x.data() + i;
    if (*p < S(0)) *p *= static_cast<S>(kLeakySlope);
  }
  return x;
}

template <typename S>
EMat<S> sigmoid_infer(EMat<S> x) {
  for (int i = 0; i < x.size(); ++i) {
    const double v = static_cast<double>(x.data()[i]);
    x.data()[i] = static_cast<S>(v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                          : std::exp(v) / (1.0 + std::exp(v)));
  }
  return x;
}

/// y = x + Dense2(leaky_relu(Dense1(x))). Dense2 starts as zero so the block
/// is initially the identity, which keeps deep stacks trainable.
template <typename S>
struct ResBlock {
  Dense<S> dense1;
  Dense<S> dense2;

  ResBlock() = default;
  ResBlock(const std::string& name, int width)
      : dense1(name + ".dense1", width, width), dense2(name + ".dense2", width, width) {}

  void init(Rng& rng, bool zero_tail = true) {
    dense1.init(rng);
    dense2.init(rng, zero_tail);
  }

  NodeId forward(Tape<S>& tape, NodeId x) {
    const NodeId hidden = tape.leaky_relu(dense1.forward(tape, x), kLeakySlope);
    return tape.add(x, dense2.forward(tape, hidden));
  }

  EMat<S> infer(const Eigen::Ref<const EMat<S>>& x) const {
    return x + dense2.infer(leaky_relu_infer<S>(dense1.infer(x)));
  }

  void collect(std::vector<Parameter<S>*>& out) {
    dense1.collect(out);
    dense2.collect(out);
  }
};

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Standard bias-corrected Adam update from each parameter's own gradient
/// and step count. No RNG; two identical steps from identical state are
/// bit-identical.
template <typename S>
void adam_step(std::span<Parameter<S>* const> params, const AdamConfig& cfg) {
  for (Parameter<S>* p : params) {
    p->step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p->step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p->step));
    const S b1 = static_cast<S>(cfg.beta1);
    const S b2 = static_cast<S>(cfg.beta2);
    for (size_t i = 0; i < p->value.size(); ++i) {
      const S g = p->grad.data[i];
      p->adam_m.data[i] = b1 * p->adam_m.data[i] + (S(1) - b1) * g;
      p->adam_v.data[i] = b2 * p->adam_v.data[i] + (S(1) - b2) * g * g;
      const double m_hat = static_cast<double>(p->adam_m.data[i]) / bc1;
      const double v_hat = static_cast<double>(p->adam_v.data[i]) / bc2;
      p->value.data[i] -= static_cast<S>(cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
    }
  }
}

/// Cosine decay from lr0 to floor_fraction * lr0 over total steps.
inline double cosine_lr(double lr0, std::int64_t step, std::int64_t total,
                        double floor_fraction = 0.01) {
  if (total <= 1) return lr0;
  const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total - 1));
  const double lo = lr0 * floor_fraction;
  return lo + 0.5 * (lr0 - lo) * (1.0 + std::cos(3.14159265358979323846 * t));
}

struct GradCheckConfig {
  double epsilon = 1e-5;
  int max_coords_per_param = 25;
  std::uint64_t seed = 12345;
};

/// Central-difference gradient check. `loss_fn(true)` must zero nothing
/// itself: it builds a fresh tape, runs forward + backward (populating
/// Parameter::grad), and returns the loss; `loss_fn(false)` evaluates the
/// loss only. Returns the max relative error over a seeded subsample of
/// coordinates; the denominator is floored at 1% of the largest analytic
/// gradient so that near-zero coordinates are compared absolutely.
template <typename S>
double grad_check(const std::function<double(bool)>& loss_fn,
                  std::span<Parameter<S>* const> params, const GradCheckConfig& cfg = {}) {
  static_assert(sizeof(S) == 8, "grad_check requires float64 mode");
  for (Parameter<S>* p : params) p->zero_grad();
  loss_fn(true);

  std::vector<std::vector<S>> analytic;
  analytic.reserve(params.size());
  double g_max = 0.0;
  for (Parameter<S>* p : params) {
    analytic.push_back(p->grad.data);
    for (S g : p->grad.data) g_max = std::max(g_max, std::abs(static_cast<double>(g)));
  }

  Rng rng(cfg.seed);
  const double denom_floor = std::max(0.01 * g_max, 1e-12);
  double max_rel = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Parameter<S>* p = params[pi];
    const size_t count = p->value.size();
    std::vector<size_t> coords;
    if (static_cast<int>(count) <= cfg.max_coords_per_param) {
      for (size_t i = 0; i < count; ++i) coords.push_back(i);
    } else {
      for (int i = 0; i < cfg.max_coords_per_param; ++i)
        coords.push_back(static_cast<size_t>(rng.uniform_index(count)));
    }
    for (size_t c : coords) {
      const S saved = p->value.data[c];
      p->value.data[c] = saved + static_cast<S>(cfg.epsilon);
      const double loss_hi = loss_fn(false);
      p->value.data[c] = saved - static_cast<S>(cfg.epsilon);
      const double loss_lo = loss_fn(false);
      p->value.data[c] = saved;
      const double fd = (loss_hi - loss_lo) / (2.0 * cfg.epsilon);
      const double ad = static_cast<double>(analytic[pi][c]);
      const double rel = std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), denom_floor});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace nldf::nn
