// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#include "dvsr/container.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dvsr/errors.hpp"

namespace dvsr {
namespace {

constexpr std::uint64_t kMaxHeaderLen = 1 << 20;

void write_u64_le(std::ofstream& f, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  f.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64_le(std::ifstream& f) {
  unsigned char b[8];
  f.read(reinterpret_cast<char*>(b), 8);
  if (f.gcount() != 8) throw FormatError("container: truncated length prefix");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_tensor4(const std::string& path, const std::array<int, 4>& shape,
                  const std::vector<double>& data, const std::string& axis_order) {
  nlohmann::json header;
  header["axis_order"] = axis_order;
  header["dtype"] = "float32";
  header["shape"] = shape;
  std::string header_str = header.dump();
  header_str.push_back('\n');

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  write_u64_le(f, header_str.size());
  f.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));

  std::vector<float> payload(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) payload[i] = static_cast<float>(data[i]);
  // float32 little-endian; this build targets little-endian hosts only.
  f.write(reinterpret_cast<const char*>(payload.data()),
          static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!f) throw IoError("write failed: " + path);
}

std::pair<std::array<int, 4>, std::vector<double>> load_tensor4(
    const std::string& path, const std::string& expect_axis_order) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  const std::uint64_t header_len = read_u64_le(f);
  if (header_len == 0 || header_len > kMaxHeaderLen)
    throw FormatError("container: implausible header length " + std::to_string(header_len));

  std::string header_str(header_len, '\0');
  f.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (static_cast<std::uint64_t>(f.gcount()) != header_len)
    throw FormatError("container: truncated header");
  if (header_str.back() != '\n') throw FormatError("container: header not newline-terminated");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("container: bad header JSON: ") + e.what());
  }
  if (!header.contains("dtype") || !header.contains("shape") || !header.contains("axis_order"))
    throw FormatError("container: header missing required keys");
  if (header["dtype"] != "float32")
    throw DtypeError("container: unsupported dtype " + header["dtype"].dump());
  if (header["axis_order"] != expect_axis_order)
    throw DtypeError("container: axis_order " + header["axis_order"].dump() + " != expected " +
                     expect_axis_order);

  std::array<int, 4> shape{};
  try {
    auto v = header["shape"].get<std::vector<int>>();
    if (v.size() != 4) throw FormatError("container: shape rank != 4");
    std::copy(v.begin(), v.end(), shape.begin());
  } catch (const nlohmann::json::exception&) {
    throw FormatError("container: malformed shape");
  }
  std::size_t count = 1;
  for (int d : shape) {
    if (d <= 0) throw FormatError("container: non-positive shape entry");
    count *= static_cast<std::size_t>(d);
  }

  std::vector<float> payload(count);
  f.read(reinterpret_cast<char*>(payload.data()),
         static_cast<std::streamsize>(count * sizeof(float)));
  if (static_cast<std::size_t>(f.gcount()) != count * sizeof(float))
    throw FormatError("container: truncated payload");

  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i) data[i] = static_cast<double>(payload[i]);
  return {shape, std::move(data)};
}

void save_video(const VideoTensor& v, const std::string& path) {
  save_tensor4(path, {v.frames(), v.height(), v.width(), v.channels()}, v.values());
}

VideoTensor load_video(const std::string& path) {
  auto [shape, data] = load_tensor4(path);
  VideoTensor v(shape[0], shape[1], shape[2], shape[3]);
  v.values() = std::move(data);
  return v;
}

void write_png(const std::string& path, int width, int height, int channels,
               const std::vector<std::uint8_t>& pixels) {
  if (channels != 1 && channels != 3) throw ShapeError("write_png: channels must be 1 or 3");
  if (pixels.size() != static_cast<std::size_t>(width) * height * channels)
    throw ShapeError("write_png: pixel buffer size mismatch");

  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IoError("cannot open for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("libpng write failed: " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(pixels.data() +
                                             static_cast<std::size_t>(y) * width * channels));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

void export_png_frames(const VideoTensor& v, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory: " + dir);

  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(v.height()) * v.width() *
                                   v.channels());
  for (int f = 0; f < v.frames(); ++f) {
    std::size_t i = 0;
    for (int y = 0; y < v.height(); ++y)
      for (int x = 0; x < v.width(); ++x)
        for (int c = 0; c < v.channels(); ++c) {
          const double clamped = std::clamp(v.at(f, y, x, c), 0.0, 1.0);
          // round-half-up quantization: 0.5 maps to 128
          pixels[i++] = static_cast<std::uint8_t>(std::lround(clamped * 255.0));
        }
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04d.png", f);
    write_png(dir + "/" + name, v.width(), v.height(), v.channels(), pixels);
  }
}

}  // namespace dvsr
