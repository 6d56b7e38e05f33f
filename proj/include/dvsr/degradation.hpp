// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "dvsr/rng.hpp"
#include "dvsr/tensor.hpp"

namespace dvsr {

/// Isotropic Gaussian blur kernel sampled at integer offsets. Stored in
/// separable 1D form; the 2D taps are the outer product, which for a square
/// grid equals the directly-normalized 2D Gaussian.
struct BlurKernel {
  double sigma_h = 0.0;
  int radius = 0;                // taps span [-radius, radius] in each axis
  std::vector<double> taps1d;    // length 2*radius+1, sums to 1

  int size() const { return 2 * radius + 1; }
  double tap2d(int i, int j) const { return taps1d[i] * taps1d[j]; }
  /// Full 2D tap matrix, row-major (size x size).
  std::vector<double> taps2d() const;
};

/// Truncated at radius max(1, ceil(3*sigma_h)) and renormalized; sigma_h = 0
/// yields the 1x1 delta kernel. Throws ConfigError for negative sigma.
BlurKernel gaussian_kernel(double sigma_h);

/// Forward observation model: per-frame blur, decimation by `scale`, frame
/// masking, and additive Gaussian sensing noise.
struct DegradationSpec {
  BlurKernel kernel;
  int scale = 1;
  std::vector<bool> frame_mask;  // length = HR frame count, true = observed
  double noise_sigma = 0.0;

  int frames() const { return static_cast<int>(frame_mask.size()); }
  int observed_count() const;
  std::vector<int> observed_indices() const;

  /// JSON object {sigma_h, scale, mask, noise_sigma}; mask entries may be
  /// booleans or 0/1 numbers. Throws ConfigError on violations.
  static DegradationSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Observed low-resolution frames only; masked-out frames are absent rather
/// than zero-filled. frames.frames() == frame_indices.size() and
/// frame_indices is the ascending list of observed HR frame indices.
struct Observation {
  std::vector<int> frame_indices;
  VideoTensor frames;
};

/// Separable 2D convolution with reflect padding (mirror about the edge
/// sample, edge not repeated), per channel per frame. Requires the frame to
/// be at least kernel-sized in both axes.
VideoTensor blur(const VideoTensor& x, const BlurKernel& k);

/// Keeps samples at grid positions (i*scale, j*scale), anchored at the
/// top-left. Pure subsampling, no anti-aliasing.
VideoTensor decimate(const VideoTensor& x, int scale);

/// Full forward model. With rng null the output is noiseless; otherwise each
/// observed frame receives i.i.d. N(0, noise_sigma^2) noise, drawn in
/// ascending frame order, elements in memory order.
Observation degrade(const VideoTensor& x, const DegradationSpec& spec, Rng* rng = nullptr);

/// The linear part A: HR video -> packed observed LR frames (noiseless).
VideoTensor degrade_apply(const VideoTensor& x, const DegradationSpec& spec);

/// Exact adjoint A^T: packed observed-frame residual -> HR-shaped gradient
/// (zero in masked-out frames). hr_height/hr_width give the HR grid size.
VideoTensor degrade_vjp(const VideoTensor& residual, const DegradationSpec& spec, int hr_height,
                        int hr_width);

}  // namespace dvsr
