// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#include "dvsr/degradation.hpp"

#include <cmath>

#include "dvsr/errors.hpp"

namespace dvsr {
namespace {

// Mirror about the edge sample without repeating it: -1 -> 1, n -> n-2.
// Valid whenever |overshoot| < n, which the kernel-size precondition ensures.
int reflect(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

void require_frame_fits(const VideoTensor& x, const BlurKernel& k) {
  if (x.height() < k.size() || x.width() < k.size())
    throw ShapeError("blur: frame " + x.shape_str() + " smaller than kernel size " +
                     std::to_string(k.size()));
}

// One separable pass over a plane: axis 0 filters rows (vertical), 1 columns.
void conv1d_pass(const std::vector<double>& in, std::vector<double>& out, int h, int w,
                 const std::vector<double>& taps, int radius, int axis) {
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      if (axis == 0) {
        for (int t = -radius; t <= radius; ++t)
          s += taps[t + radius] * in[reflect(y + t, h) * w + x];
      } else {
        for (int t = -radius; t <= radius; ++t)
          s += taps[t + radius] * in[y * w + reflect(x + t, w)];
      }
      out[y * w + x] = s;
    }
}

// Adjoint of conv1d_pass: scatter with the same reflected indexing.
void conv1d_adjoint_pass(const std::vector<double>& in, std::vector<double>& out, int h, int w,
                         const std::vector<double>& taps, int radius, int axis) {
  std::fill(out.begin(), out.end(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = in[y * w + x];
      if (axis == 0) {
        for (int t = -radius; t <= radius; ++t)
          out[reflect(y + t, h) * w + x] += taps[t + radius] * v;
      } else {
        for (int t = -radius; t <= radius; ++t)
          out[y * w + reflect(x + t, w)] += taps[t + radius] * v;
      }
    }
}

void blur_plane(std::vector<double>& plane, std::vector<double>& scratch, int h, int w,
                const BlurKernel& k) {
  conv1d_pass(plane, scratch, h, w, k.taps1d, k.radius, 0);
  conv1d_pass(scratch, plane, h, w, k.taps1d, k.radius, 1);
}

void blur_adjoint_plane(std::vector<double>& plane, std::vector<double>& scratch, int h, int w,
                        const BlurKernel& k) {
  // (C_col . C_row)^T = C_row^T . C_col^T
  conv1d_adjoint_pass(plane, scratch, h, w, k.taps1d, k.radius, 1);
  conv1d_adjoint_pass(scratch, plane, h, w, k.taps1d, k.radius, 0);
}

void validate_spec(const DegradationSpec& spec) {
  if (spec.scale < 1) throw ConfigError("degradation: scale must be >= 1");
  if (spec.noise_sigma < 0) throw ConfigError("degradation: noise_sigma must be >= 0");
  if (spec.frame_mask.empty()) throw ConfigError("degradation: empty frame mask");
  if (spec.observed_count() == 0)
    throw ConfigError("degradation: mask must observe at least one frame");
}

void require_applicable(const VideoTensor& x, const DegradationSpec& spec) {
  validate_spec(spec);
  if (x.frames() != spec.frames())
    throw ShapeError("degradation: mask length " + std::to_string(spec.frames()) +
                     " != frame count " + std::to_string(x.frames()));
  if (x.height() % spec.scale != 0 || x.width() % spec.scale != 0)
    throw ShapeError("degradation: " + x.shape_str() + " not divisible by scale " +
                     std::to_string(spec.scale));
  require_frame_fits(x, spec.kernel);
}

}  // namespace

std::vector<double> BlurKernel::taps2d() const {
  std::vector<double> t(static_cast<std::size_t>(size()) * size());
  for (int i = 0; i < size(); ++i)
    for (int j = 0; j < size(); ++j) t[i * size() + j] = tap2d(i, j);
  return t;
}

BlurKernel gaussian_kernel(double sigma_h) {
  if (sigma_h < 0) throw ConfigError("gaussian_kernel: sigma_h must be >= 0");
  BlurKernel k;
  k.sigma_h = sigma_h;
  if (sigma_h == 0.0) {
    k.radius = 0;
    k.taps1d = {1.0};
    return k;
  }
  k.radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma_h)));
  k.taps1d.resize(2 * k.radius + 1);
  double sum = 0.0;
  for (int d = -k.radius; d <= k.radius; ++d) {
    const double v = std::exp(-(static_cast<double>(d) * d) / (2.0 * sigma_h * sigma_h));
    k.taps1d[d + k.radius] = v;
    sum += v;
  }
  for (double& v : k.taps1d) v /= sum;
  return k;
}

int DegradationSpec::observed_count() const {
  int n = 0;
  for (bool b : frame_mask) n += b;
  return n;
}

std::vector<int> DegradationSpec::observed_indices() const {
  std::vector<int> idx;
  for (int f = 0; f < frames(); ++f)
    if (frame_mask[f]) idx.push_back(f);
  return idx;
}

DegradationSpec DegradationSpec::from_json(const nlohmann::json& j) {
  DegradationSpec spec;
  if (!j.contains("sigma_h") || !j.contains("scale") || !j.contains("mask") ||
      !j.contains("noise_sigma"))
    throw ConfigError("degradation spec: required keys are sigma_h, scale, mask, noise_sigma");
  if (!j["sigma_h"].is_number() || j["sigma_h"].get<double>() < 0)
    throw ConfigError("degradation spec: sigma_h must be a non-negative number");
  spec.kernel = gaussian_kernel(j["sigma_h"].get<double>());
  if (!j["scale"].is_number_integer() || j["scale"].get<int>() < 1)
    throw ConfigError("degradation spec: scale must be an integer >= 1");
  spec.scale = j["scale"].get<int>();
  if (!j["mask"].is_array() || j["mask"].empty())
    throw ConfigError("degradation spec: mask must be a non-empty array");
  for (const auto& e : j["mask"]) {
    if (e.is_boolean())
      spec.frame_mask.push_back(e.get<bool>());
    else if (e.is_number_integer())
      spec.frame_mask.push_back(e.get<int>() != 0);
    else
      throw ConfigError("degradation spec: mask entries must be booleans or 0/1");
  }
  if (!j["noise_sigma"].is_number() || j["noise_sigma"].get<double>() < 0)
    throw ConfigError("degradation spec: noise_sigma must be a non-negative number");
  spec.noise_sigma = j["noise_sigma"].get<double>();
  validate_spec(spec);
  return spec;
}

nlohmann::json DegradationSpec::to_json() const {
  nlohmann::json j;
  j["sigma_h"] = kernel.sigma_h;
  j["scale"] = scale;
  j["mask"] = nlohmann::json::array();
  for (bool b : frame_mask) j["mask"].push_back(b);
  j["noise_sigma"] = noise_sigma;
  return j;
}

VideoTensor blur(const VideoTensor& x, const BlurKernel& k) {
  require_frame_fits(x, k);
  if (k.radius == 0) return x;
  VideoTensor out(x.frames(), x.height(), x.width(), x.channels());
  std::vector<double> plane(static_cast<std::size_t>(x.height()) * x.width());
  std::vector<double> scratch(plane.size());
  for (int f = 0; f < x.frames(); ++f)
    for (int c = 0; c < x.channels(); ++c) {
      x.extract_plane(f, c, plane.data());
      blur_plane(plane, scratch, x.height(), x.width(), k);
      out.insert_plane(f, c, plane.data());
    }
  return out;
}

VideoTensor decimate(const VideoTensor& x, int scale) {
  if (scale < 1) throw ConfigError("decimate: scale must be >= 1");
  if (x.height() % scale != 0 || x.width() % scale != 0)
    throw ShapeError("decimate: " + x.shape_str() + " not divisible by scale " +
                     std::to_string(scale));
  if (scale == 1) return x;
  VideoTensor out(x.frames(), x.height() / scale, x.width() / scale, x.channels());
  for (int f = 0; f < x.frames(); ++f)
    for (int y = 0; y < out.height(); ++y)
      for (int xx = 0; xx < out.width(); ++xx)
        for (int c = 0; c < x.channels(); ++c)
          out.at(f, y, xx, c) = x.at(f, y * scale, xx * scale, c);
  return out;
}

VideoTensor degrade_apply(const VideoTensor& x, const DegradationSpec& spec) {
  require_applicable(x, spec);
  const auto idx = spec.observed_indices();
  const int lh = x.height() / spec.scale, lw = x.width() / spec.scale;
  VideoTensor out(static_cast<int>(idx.size()), lh, lw, x.channels());
  std::vector<double> plane(static_cast<std::size_t>(x.height()) * x.width());
  std::vector<double> scratch(plane.size());
  for (std::size_t o = 0; o < idx.size(); ++o)
    for (int c = 0; c < x.channels(); ++c) {
      x.extract_plane(idx[o], c, plane.data());
      if (spec.kernel.radius > 0) blur_plane(plane, scratch, x.height(), x.width(), spec.kernel);
      for (int y = 0; y < lh; ++y)
        for (int xx = 0; xx < lw; ++xx)
          out.at(static_cast<int>(o), y, xx, c) = plane[(y * spec.scale) * x.width() +
                                                        xx * spec.scale];
    }
  return out;
}

Observation degrade(const VideoTensor& x, const DegradationSpec& spec, Rng* rng) {
  Observation obs;
  obs.frames = degrade_apply(x, spec);
  obs.frame_indices = spec.observed_indices();
  if (rng != nullptr && spec.noise_sigma > 0.0)
    for (double& v : obs.frames.values()) v += spec.noise_sigma * rng->normal();
  return obs;
}

VideoTensor degrade_vjp(const VideoTensor& residual, const DegradationSpec& spec, int hr_height,
                        int hr_width) {
  validate_spec(spec);
  const auto idx = spec.observed_indices();
  if (residual.frames() != static_cast<int>(idx.size()))
    throw ShapeError("degrade_vjp: residual has " + std::to_string(residual.frames()) +
                     " frames, mask observes " + std::to_string(idx.size()));
  if (hr_height % spec.scale != 0 || hr_width % spec.scale != 0 ||
      residual.height() != hr_height / spec.scale || residual.width() != hr_width / spec.scale)
    throw ShapeError("degrade_vjp: residual " + residual.shape_str() +
                     " inconsistent with HR grid " + std::to_string(hr_height) + "x" +
                     std::to_string(hr_width) + " at scale " + std::to_string(spec.scale));

  VideoTensor out(spec.frames(), hr_height, hr_width, residual.channels());
  std::vector<double> plane(static_cast<std::size_t>(hr_height) * hr_width);
  std::vector<double> scratch(plane.size());
  for (std::size_t o = 0; o < idx.size(); ++o)
    for (int c = 0; c < residual.channels(); ++c) {
      // adjoint of decimation: zero-upsample onto the HR grid
      std::fill(plane.begin(), plane.end(), 0.0);
      for (int y = 0; y < residual.height(); ++y)
        for (int xx = 0; xx < residual.width(); ++xx)
          plane[(y * spec.scale) * hr_width + xx * spec.scale] =
              residual.at(static_cast<int>(o), y, xx, c);
      if (spec.kernel.radius > 0)
        blur_adjoint_plane(plane, scratch, hr_height, hr_width, spec.kernel);
      out.insert_plane(idx[o], c, plane.data());
    }
  return out;
}

}  // namespace dvsr
