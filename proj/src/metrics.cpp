#include "nldf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nldf/errors.hpp"

namespace nldf::metrics {

double psnr(const Image& a, const Image& b, double peak) {
  if (a.width != b.width || a.height != b.height)
    throw DomainError("psnr: image dimensions differ");
  if (a.pixels.empty()) throw DomainError("psnr: empty image");
  double acc = 0.0;
  for (size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.pixels.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

namespace {

constexpr int kWin = 11;
constexpr int kRadius = kWin / 2;

const std::vector<double>& gaussian_kernel() {
  static const std::vector<double> kernel = [] {
    std::vector<double> k(kWin);
    const double sigma = 1.5;
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i) {
      const double x = i - kRadius;
      k[i] = std::exp(-x * x / (2.0 * sigma * sigma));
      sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
  }();
  return kernel;
}

// Separable valid-window convolution of one channel plane.
std::vector<double> conv_valid(const std::vector<double>& plane, int w, int h, int& ow, int& oh) {
  const auto& k = gaussian_kernel();
  ow = w - kWin + 1;
  oh = h - kWin + 1;
  std::vector<double> rows(static_cast<size_t>(ow) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWin; ++i) acc += k[i] * plane[static_cast<size_t>(y) * w + x + i];
      rows[static_cast<size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWin; ++i) acc += k[i] * rows[static_cast<size_t>(y + i) * ow + x];
      out[static_cast<size_t>(y) * ow + x] = acc;
    }
  return out;
}

std::vector<double> channel_plane(const Image& img, int channel) {
  std::vector<double> plane(img.pixel_count());
  for (size_t i = 0; i < plane.size(); ++i) plane[i] = img.pixels[3 * i + channel];
  return plane;
}

}  // namespace

double ssim(const Image& a, const Image& b, double peak) {
  if (a.width != b.width || a.height != b.height)
    throw DomainError("ssim: image dimensions differ");
  if (a.width < kWin || a.height < kWin)
    throw DomainError("ssim: images must be at least 11x11");

  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);

  double total = 0.0;
  for (int channel = 0; channel < 3; ++channel) {
    const auto pa = channel_plane(a, channel);
    const auto pb = channel_plane(b, channel);
    std::vector<double> paa(pa.size()), pbb(pa.size()), pab(pa.size());
    for (size_t i = 0; i < pa.size(); ++i) {
      paa[i] = pa[i] * pa[i];
      pbb[i] = pb[i] * pb[i];
      pab[i] = pa[i] * pb[i];
    }
    int ow = 0, oh = 0;
    const auto mu_a = conv_valid(pa, a.width, a.height, ow, oh);
    const auto mu_b = conv_valid(pb, a.width, a.height, ow, oh);
    const auto e_aa = conv_valid(paa, a.width, a.height, ow, oh);
    const auto e_bb = conv_valid(pbb, a.width, a.height, ow, oh);
    const auto e_ab = conv_valid(pab, a.width, a.height, ow, oh);
    double acc = 0.0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
      const double var_a = e_aa[i] - mu_a[i] * mu_a[i];
      const double var_b = e_bb[i] - mu_b[i] * mu_b[i];
      const double cov = e_ab[i] - mu_a[i] * mu_b[i];
      const double num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
      const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (var_a + var_b + c2);
      acc += num / den;
    }
    total += acc / static_cast<double>(mu_a.size());
  }
  return total / 3.0;
}

MetricReport compare_frames(const std::vector<Image>& a, const std::vector<Image>& b) {
  if (a.size() != b.size() || a.empty())
    throw DomainError("compare_frames: need equal nonempty frame lists");
  MetricReport report;
  double psnr_acc = 0.0, ssim_acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double p = psnr(a[i], b[i]);
    const bool ident = std::isinf(p);
    if (ident) p = kPsnrCapDb;
    const double s = ssim(a[i], b[i]);
    report.psnr_db.push_back(p);
    report.ssim_val.push_back(s);
    report.identical.push_back(ident);
    psnr_acc += p;
    ssim_acc += s;
  }
  report.psnr_mean = psnr_acc / static_cast<double>(a.size());
  report.ssim_mean = ssim_acc / static_cast<double>(a.size());
  return report;
}

}  // namespace nldf::metrics
