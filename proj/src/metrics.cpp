// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#include "dvsr/metrics.hpp"

#include <cmath>
#include <vector>

#include "dvsr/errors.hpp"

namespace dvsr {
namespace {

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;  // (K1 * L)^2 with L = 1
constexpr double kC2 = 0.03 * 0.03;

double psnr_from_mse(double mse) {
  if (mse < 1e-10) return 100.0;  // identical inputs would otherwise hit +inf
  return 10.0 * std::log10(1.0 / mse);
}

double mse_frame_range(const VideoTensor& a, const VideoTensor& b, int f0, int f1) {
  double acc = 0.0;
  std::size_t n = 0;
  for (int f = f0; f < f1; ++f)
    for (int y = 0; y < a.height(); ++y)
      for (int x = 0; x < a.width(); ++x)
        for (int c = 0; c < a.channels(); ++c) {
          const double d = a.at(f, y, x, c) - b.at(f, y, x, c);
          acc += d * d;
          ++n;
        }
  return acc / static_cast<double>(n);
}

const std::vector<double>& window_taps() {
  static const std::vector<double> taps = [] {
    std::vector<double> t(kWindow);
    const int r = kWindow / 2;
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
      const double d = i - r;
      t[i] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
      sum += t[i];
    }
    for (double& v : t) v /= sum;
    return t;
  }();
  return taps;
}

// Separable valid-mode Gaussian filtering of an H*W plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int h, int w) {
  const auto& taps = window_taps();
  const int vw = w - kWindow + 1, vh = h - kWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * vw, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < vw; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += taps[k] * plane[y * w + x + k];
      rows[y * vw + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(vh) * vw, 0.0);
  for (int y = 0; y < vh; ++y)
    for (int x = 0; x < vw; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += taps[k] * rows[(y + k) * vw + x];
      out[y * vw + x] = s;
    }
  return out;
}

double ssim_plane(const std::vector<double>& pa, const std::vector<double>& pb, int h, int w) {
  const std::size_t n = pa.size();
  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = pa[i] * pa[i];
    bb[i] = pb[i] * pb[i];
    ab[i] = pa[i] * pb[i];
  }
  const auto mu_a = filter_valid(pa, h, w);
  const auto mu_b = filter_valid(pb, h, w);
  const auto m_aa = filter_valid(aa, h, w);
  const auto m_bb = filter_valid(bb, h, w);
  const auto m_ab = filter_valid(ab, h, w);

  double acc = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double va = m_aa[i] - mu_a[i] * mu_a[i];
    const double vb = m_bb[i] - mu_b[i] * mu_b[i];
    const double cov = m_ab[i] - mu_a[i] * mu_b[i];
    const double num = (2.0 * mu_a[i] * mu_b[i] + kC1) * (2.0 * cov + kC2);
    const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (va + vb + kC2);
    acc += num / den;
  }
  return acc / static_cast<double>(mu_a.size());
}

}  // namespace

double psnr(const VideoTensor& a, const VideoTensor& b) {
  VideoTensor::require_same_shape(a, b, "psnr");
  return psnr_from_mse(mse_frame_range(a, b, 0, a.frames()));
}

double psnr_frame(const VideoTensor& a, const VideoTensor& b, int frame) {
  VideoTensor::require_same_shape(a, b, "psnr_frame");
  return psnr_from_mse(mse_frame_range(a, b, frame, frame + 1));
}

double ssim_frame(const VideoTensor& a, const VideoTensor& b, int frame) {
  VideoTensor::require_same_shape(a, b, "ssim");
  if (a.height() < kWindow || a.width() < kWindow)
    throw ShapeError("ssim: frame smaller than the 11x11 window");
  std::vector<double> pa(static_cast<std::size_t>(a.height()) * a.width());
  std::vector<double> pb(pa.size());
  double acc = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    a.extract_plane(frame, c, pa.data());
    b.extract_plane(frame, c, pb.data());
    acc += ssim_plane(pa, pb, a.height(), a.width());
  }
  return acc / a.channels();
}

double ssim(const VideoTensor& a, const VideoTensor& b) {
  VideoTensor::require_same_shape(a, b, "ssim");
  double acc = 0.0;
  for (int f = 0; f < a.frames(); ++f) acc += ssim_frame(a, b, f);
  return acc / a.frames();
}

MetricReport evaluate_metrics(const VideoTensor& a, const VideoTensor& b) {
  VideoTensor::require_same_shape(a, b, "evaluate_metrics");
  MetricReport r;
  for (int f = 0; f < a.frames(); ++f) {
    r.psnr_frames.push_back(psnr_frame(a, b, f));
    r.ssim_frames.push_back(ssim_frame(a, b, f));
    r.psnr_mean += r.psnr_frames.back();
    r.ssim_mean += r.ssim_frames.back();
  }
  r.psnr_mean /= a.frames();
  r.ssim_mean /= a.frames();
  return r;
}

}  // namespace dvsr
