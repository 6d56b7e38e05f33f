// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "dvsr/tensor.hpp"

namespace dvsr {

/// Per-frame and averaged fidelity metrics for one (restored, reference) pair.
struct MetricReport {
  std::vector<double> psnr_frames;  // dB, capped at 100
  std::vector<double> ssim_frames;
  double psnr_mean = 0.0;  // arithmetic mean of per-frame values
  double ssim_mean = 0.0;
};

/// PSNR in dB over all elements of the pair; returns 100.0 when MSE < 1e-10.
double psnr(const VideoTensor& a, const VideoTensor& b);

/// Mean SSIM: Gaussian window 11x11 sigma 1.5, K1=0.01, K2=0.03, dynamic
/// range 1.0, computed per frame per channel over the valid (unpadded) window
/// positions, then averaged.
double ssim(const VideoTensor& a, const VideoTensor& b);

/// SSIM of a single frame (mean over channels).
double ssim_frame(const VideoTensor& a, const VideoTensor& b, int frame);

/// PSNR of a single frame.
double psnr_frame(const VideoTensor& a, const VideoTensor& b, int frame);

MetricReport evaluate_metrics(const VideoTensor& a, const VideoTensor& b);

}  // namespace dvsr
