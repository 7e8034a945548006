#pragma once

#include <vector>

#include "nldf/image.hpp"

namespace nldf::metrics {

/// 10 log10(peak^2 / MSE), MSE over all channels. Returns +inf for
/// identical images (CSV/JSON writers cap it at 99 dB and flag "identical").
double psnr(const Image& a, const Image& b, double peak = 1.0);

inline constexpr double kPsnrCapDb = 99.0;

/// Mean local SSIM over valid 11x11 windows (Gaussian weights, sigma 1.5,
/// C1 = (0.01 peak)^2, C2 = (0.03 peak)^2), averaged over the three
/// channels. Images must be at least 11x11.
double ssim(const Image& a, const Image& b, double peak = 1.0);

struct MetricReport {
  std::vector<double> psnr_db;  // per frame
  std::vector<double> ssim_val;
  double psnr_mean = 0.0;  // capped values
  double ssim_mean = 0.0;
  std::vector<bool> identical;
};

MetricReport compare_frames(const std::vector<Image>& a, const std::vector<Image>& b);

}  // namespace nldf::metrics
