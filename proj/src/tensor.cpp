// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#include "dvsr/tensor.hpp"

#include <algorithm>

#include "dvsr/errors.hpp"

namespace dvsr {

VideoTensor::VideoTensor(int frames, int height, int width, int channels)
    : frames_(frames), height_(height), width_(width), channels_(channels) {
  if (frames <= 0 || height <= 0 || width <= 0)
    throw ShapeError("VideoTensor dims must be positive, got " + shape_str());
  if (channels != 1 && channels != 3)
    throw ShapeError("VideoTensor channels must be 1 or 3, got " + std::to_string(channels));
  data_.assign(static_cast<std::size_t>(frames) * height * width * channels, 0.0);
}

VideoTensor::VideoTensor(int frames, int height, int width, int channels,
                         const std::vector<int>& divisors)
    : VideoTensor(frames, height, width, channels) {
  for (int d : divisors) {
    if (d <= 0) throw ShapeError("divisor must be positive, got " + std::to_string(d));
    if (height % d != 0 || width % d != 0)
      throw ShapeError("VideoTensor " + shape_str() + " not divisible by " + std::to_string(d));
  }
}

VideoTensor VideoTensor::clamped01() const {
  VideoTensor out = *this;
  for (double& v : out.data_) v = std::clamp(v, 0.0, 1.0);
  return out;
}

void VideoTensor::extract_plane(int f, int c, double* out) const {
  const double* src = data_.data() + static_cast<std::size_t>(f) * height_ * width_ * channels_;
  for (int i = 0; i < height_ * width_; ++i) out[i] = src[i * channels_ + c];
}

void VideoTensor::insert_plane(int f, int c, const double* in) {
  double* dst = data_.data() + static_cast<std::size_t>(f) * height_ * width_ * channels_;
  for (int i = 0; i < height_ * width_; ++i) dst[i * channels_ + c] = in[i];
}

std::string VideoTensor::shape_str() const {
  return "(" + std::to_string(frames_) + "," + std::to_string(height_) + "," +
         std::to_string(width_) + "," + std::to_string(channels_) + ")";
}

void VideoTensor::require_same_shape(const VideoTensor& a, const VideoTensor& b,
                                     const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
}

LatentVideo::LatentVideo(int frames, int height, int width, int channels, int p,
                         std::string codec_id)
    : frames_(frames),
      height_(height),
      width_(width),
      channels_(channels),
      p_(p),
      codec_id_(std::move(codec_id)) {
  if (frames <= 0 || height <= 0 || width <= 0 || channels <= 0 || p <= 0)
    throw ShapeError("LatentVideo dims must be positive");
  data_.assign(static_cast<std::size_t>(frames) * height * width * channels, 0.0);
}

LatentVideo LatentVideo::like_zeros() const {
  return LatentVideo(frames_, height_, width_, channels_, p_, codec_id_);
}

}  // namespace dvsr
