// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dvsr/tensor.hpp"

namespace dvsr {

// On-disk container (.vten): 8-byte little-endian header length, newline
// terminated UTF-8 JSON header {"axis_order","dtype","shape"}, then the raw
// payload as little-endian 32-bit floats.

void save_video(const VideoTensor& v, const std::string& path);
VideoTensor load_video(const std::string& path);

/// Low-level hooks used by other container-backed files (observations,
/// latents). shape is outermost-first; payload is row-major float32.
void save_tensor4(const std::string& path, const std::array<int, 4>& shape,
                  const std::vector<double>& data, const std::string& axis_order = "FHWC");
std::pair<std::array<int, 4>, std::vector<double>> load_tensor4(
    const std::string& path, const std::string& expect_axis_order = "FHWC");

/// Export each frame as an 8-bit PNG `frame_%04d.png` under dir (created if
/// missing). Lossy and export-only: values are clamped to [0,1] and quantized
/// with round-half-up to 255 levels.
void export_png_frames(const VideoTensor& v, const std::string& dir);

/// 8-bit PNG writer (grayscale when channels==1, RGB when channels==3).
void write_png(const std::string& path, int width, int height, int channels,
               const std::vector<std::uint8_t>& pixels);

}  // namespace dvsr
