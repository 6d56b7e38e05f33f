// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace dvsr {

/// Video clip as a dense (frame, row, col, channel) array, row-major, channel
/// innermost. Values are nominally in [0, 1]; intermediate arithmetic may
/// leave that range and is clamped only at export boundaries.
class VideoTensor {
 public:
  VideoTensor() = default;
  VideoTensor(int frames, int height, int width, int channels);
  /// Validates that height and width are divisible by every entry of
  /// `divisors` (the scale / compression factors used downstream).
  VideoTensor(int frames, int height, int width, int channels, const std::vector<int>& divisors);

  int frames() const { return frames_; }
  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }

  double& at(int f, int y, int x, int c) {
    return data_[((static_cast<std::size_t>(f) * height_ + y) * width_ + x) * channels_ + c];
  }
  double at(int f, int y, int x, int c) const {
    return data_[((static_cast<std::size_t>(f) * height_ + y) * width_ + x) * channels_ + c];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  /// Copy with every element clamped to [0, 1].
  VideoTensor clamped01() const;

  /// Contiguous H*W copy of one (frame, channel) plane.
  void extract_plane(int f, int c, double* out) const;
  void insert_plane(int f, int c, const double* in);

  bool same_shape(const VideoTensor& o) const {
    return frames_ == o.frames_ && height_ == o.height_ && width_ == o.width_ &&
           channels_ == o.channels_;
  }
  std::string shape_str() const;

  /// Throws ShapeError unless a and b have identical shapes.
  static void require_same_shape(const VideoTensor& a, const VideoTensor& b, const char* what);

 private:
  int frames_ = 0, height_ = 0, width_ = 0, channels_ = 0;
  std::vector<double> data_;
};

/// Latent-space counterpart of VideoTensor: (frame, row, col, channel) with
/// spatial dims already divided by the autoencoder's compression factor p.
/// codec_id binds the latent to the autoencoder that produced it.
class LatentVideo {
 public:
  LatentVideo() = default;
  LatentVideo(int frames, int height, int width, int channels, int p, std::string codec_id);

  int frames() const { return frames_; }
  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  int compression() const { return p_; }
  const std::string& codec_id() const { return codec_id_; }
  std::size_t size() const { return data_.size(); }

  double& at(int f, int y, int x, int c) {
    return data_[((static_cast<std::size_t>(f) * height_ + y) * width_ + x) * channels_ + c];
  }
  double at(int f, int y, int x, int c) const {
    return data_[((static_cast<std::size_t>(f) * height_ + y) * width_ + x) * channels_ + c];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const LatentVideo& o) const {
    return frames_ == o.frames_ && height_ == o.height_ && width_ == o.width_ &&
           channels_ == o.channels_;
  }
  LatentVideo like_zeros() const;

 private:
  int frames_ = 0, height_ = 0, width_ = 0, channels_ = 0;
  int p_ = 1;
  std::string codec_id_;
  std::vector<double> data_;
};

}  // namespace dvsr
