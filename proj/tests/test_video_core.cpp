// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#include <png.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "dvsr/container.hpp"
#include "dvsr/errors.hpp"
#include "dvsr/metrics.hpp"
#include "dvsr/rng.hpp"
#include "dvsr/tensor.hpp"
#include "dvsr/util.hpp"

namespace fs = std::filesystem;
using namespace dvsr;

namespace {

fs::path tmp_dir() {
  const fs::path p = fs::current_path() / "tmp_test_video_core";
  fs::create_directories(p);
  return p;
}

VideoTensor random_video(Rng& rng, int f, int h, int w, int c) {
  VideoTensor v(f, h, w, c);
  for (double& x : v.values()) x = rng.uniform();
  return v;
}

std::vector<std::uint8_t> read_png_gray(const std::string& path, int* w, int* h) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  REQUIRE(png_image_begin_read_from_file(&image, path.c_str()) != 0);
  image.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  REQUIRE(png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr) != 0);
  *w = static_cast<int>(image.width);
  *h = static_cast<int>(image.height);
  return buf;
}

// Reference SSIM: dense 2D Gaussian window, textbook formula, no separable
// filtering tricks. Deliberately written independently of the production code.
double ssim_reference(const std::vector<double>& a, const std::vector<double>& b, int h, int w) {
  const int win = 11, r = win / 2;
  const double sigma = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  std::vector<double> kern(win * win);
  double ksum = 0.0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      const double dy = i - r, dx = j - r;
      kern[i * win + j] = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
      ksum += kern[i * win + j];
    }
  for (double& v : kern) v /= ksum;

  double acc = 0.0;
  int count = 0;
  for (int y = 0; y + win <= h; ++y)
    for (int x = 0; x + win <= w; ++x) {
      double mu_a = 0, mu_b = 0, m_aa = 0, m_bb = 0, m_ab = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double wgt = kern[i * win + j];
          const double va = a[(y + i) * w + (x + j)];
          const double vb = b[(y + i) * w + (x + j)];
          mu_a += wgt * va;
          mu_b += wgt * vb;
          m_aa += wgt * va * va;
          m_bb += wgt * vb * vb;
          m_ab += wgt * va * vb;
        }
      const double var_a = m_aa - mu_a * mu_a;
      const double var_b = m_bb - mu_b * mu_b;
      const double cov = m_ab - mu_a * mu_b;
      acc += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
             ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      ++count;
    }
  return acc / count;
}

}  // namespace

TEST_CASE("tensor shape validation") {
  CHECK_THROWS_AS(VideoTensor(0, 4, 4, 1), ShapeError);
  CHECK_THROWS_AS(VideoTensor(1, 4, 4, 2), ShapeError);
  CHECK_THROWS_AS(VideoTensor(1, 4, 4, 4), ShapeError);
  CHECK_NOTHROW(VideoTensor(1, 4, 4, 1));
  CHECK_NOTHROW(VideoTensor(2, 4, 4, 3));

  CHECK_NOTHROW(VideoTensor(1, 16, 24, 1, {2, 4, 8}));
  CHECK_THROWS_AS(VideoTensor(1, 16, 24, 1, {16}), ShapeError);
  CHECK_THROWS_AS(VideoTensor(1, 16, 16, 1, {0}), ShapeError);
}

TEST_CASE("tensor clamp and plane access") {
  VideoTensor v(1, 2, 2, 3);
  v.at(0, 0, 0, 0) = -0.5;
  v.at(0, 1, 1, 2) = 1.5;
  v.at(0, 0, 1, 1) = 0.25;
  const VideoTensor c = v.clamped01();
  CHECK(c.at(0, 0, 0, 0) == 0.0);
  CHECK(c.at(0, 1, 1, 2) == 1.0);
  CHECK(c.at(0, 0, 1, 1) == 0.25);
  CHECK(v.at(0, 0, 0, 0) == -0.5);  // original untouched

  std::vector<double> plane(4);
  v.extract_plane(0, 1, plane.data());
  CHECK(plane[1] == 0.25);
  plane[3] = 0.75;
  v.insert_plane(0, 1, plane.data());
  CHECK(v.at(0, 1, 1, 1) == 0.75);
}

TEST_CASE("container round-trip is bitwise at 32-bit precision") {
  const fs::path dir = tmp_dir();
  Rng rng(20260823, 1);
  const int channels[2] = {1, 3};
  for (int trial = 0; trial < 1000; ++trial) {
    const int f = 1 + static_cast<int>(rng.below(3));
    const int h = 2 + static_cast<int>(rng.below(7));
    const int w = 2 + static_cast<int>(rng.below(7));
    const int c = channels[rng.below(2)];
    VideoTensor v = random_video(rng, f, h, w, c);
    const std::string path = (dir / "roundtrip.vten").string();
    save_video(v, path);
    const VideoTensor u = load_video(path);
    REQUIRE(u.same_shape(v));
    for (std::size_t i = 0; i < v.size(); ++i) {
      const float expect = static_cast<float>(v.values()[i]);
      const float got = static_cast<float>(u.values()[i]);
      REQUIRE(std::memcmp(&expect, &got, sizeof(float)) == 0);
    }
  }
}

TEST_CASE("container error paths are distinct") {
  const fs::path dir = tmp_dir();
  const std::string path = (dir / "victim.vten").string();
  VideoTensor v(2, 4, 4, 1);
  for (std::size_t i = 0; i < v.size(); ++i) v.values()[i] = static_cast<double>(i) / 100.0;
  save_video(v, path);
  const auto full_size = fs::file_size(path);

  auto truncate_to = [&](std::uintmax_t n) {
    fs::copy_file(path, dir / "trunc.vten", fs::copy_options::overwrite_existing);
    fs::resize_file(dir / "trunc.vten", n);
    return (dir / "trunc.vten").string();
  };

  CHECK_THROWS_AS(load_video((dir / "does_not_exist.vten").string()), IoError);
  CHECK_THROWS_AS(load_video(truncate_to(4)), FormatError);  // inside length prefix
  CHECK_THROWS_AS(load_video(truncate_to(20)), FormatError);  // inside JSON header
  CHECK_THROWS_AS(load_video(truncate_to(full_size - 7)), FormatError);  // inside payload

  // Unsupported dtype and axis order are rejected before any payload read.
  {
    std::string hdr = R"({"axis_order":"FHWC","dtype":"float64","shape":[1,4,4,1]})";
    hdr.push_back('\n');
    std::ofstream f((dir / "dtype.vten").string(), std::ios::binary);
    std::uint64_t n = hdr.size();
    for (int i = 0; i < 8; ++i) f.put(static_cast<char>((n >> (8 * i)) & 0xFF));
    f << hdr;
  }
  CHECK_THROWS_AS(load_video((dir / "dtype.vten").string()), DtypeError);
  CHECK_THROWS_AS(load_tensor4(path, "CFHW"), DtypeError);

  {
    std::string hdr = "this is not json\n";
    std::ofstream f((dir / "nojson.vten").string(), std::ios::binary);
    std::uint64_t n = hdr.size();
    for (int i = 0; i < 8; ++i) f.put(static_cast<char>((n >> (8 * i)) & 0xFF));
    f << hdr;
  }
  CHECK_THROWS_AS(load_video((dir / "nojson.vten").string()), FormatError);
}

TEST_CASE("png export quantizes round-half-up") {
  const fs::path dir = tmp_dir() / "png_const";
  VideoTensor v(2, 6, 5, 1);
  for (double& x : v.values()) x = 0.5;
  export_png_frames(v, dir.string());

  for (int f = 0; f < 2; ++f) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04d.png", f);
    int w = 0, h = 0;
    const auto pix = read_png_gray((dir / name).string(), &w, &h);
    CHECK(w == 5);
    CHECK(h == 6);
    for (std::uint8_t p : pix) CHECK(p == 128);
  }
}

TEST_CASE("png export clamps out-of-range values") {
  const fs::path dir = tmp_dir() / "png_clamp";
  VideoTensor v(1, 6, 6, 1);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) v.at(0, y, x, 0) = (y < 3) ? -2.0 : 3.0;
  export_png_frames(v, dir.string());
  int w = 0, h = 0;
  const auto pix = read_png_gray((dir / "frame_0000.png").string(), &w, &h);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) CHECK(pix[y * 6 + x] == (y < 3 ? 0 : 255));
}

TEST_CASE("psnr examples") {
  Rng rng(7, 0);
  VideoTensor x = random_video(rng, 2, 8, 8, 3);
  CHECK(psnr(x, x) == 100.0);

  VideoTensor y = x;
  for (double& v : y.values()) v += 0.1;  // pre-clamp arithmetic, MSE = 0.01
  CHECK(psnr(x, y) == doctest::Approx(20.0).epsilon(1e-9));

  VideoTensor zeros(1, 8, 8, 1), ones(1, 8, 8, 1);
  for (double& v : ones.values()) v = 1.0;
  CHECK(psnr(zeros, ones) == doctest::Approx(0.0).epsilon(1e-12));

  VideoTensor b = random_video(rng, 2, 8, 8, 3);
  CHECK(psnr(x, b) == psnr(b, x));  // exact symmetry

  VideoTensor wrong(1, 8, 8, 3);
  CHECK_THROWS_AS(psnr(x, wrong), ShapeError);
}

TEST_CASE("ssim examples and reference oracle") {
  Rng rng(11, 0);
  VideoTensor x = random_video(rng, 1, 16, 16, 1);
  CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));

  VideoTensor half(1, 16, 16, 1);
  for (double& v : half.values()) v = 0.5;
  CHECK(ssim(half, half) == doctest::Approx(1.0).epsilon(1e-12));

  // 16x16 gradient and its negative: strong anticorrelation drives SSIM < 0.
  VideoTensor grad(1, 16, 16, 1), inv(1, 16, 16, 1);
  for (int y = 0; y < 16; ++y)
    for (int xx = 0; xx < 16; ++xx) {
      grad.at(0, y, xx, 0) = (y + xx) / 30.0;
      inv.at(0, y, xx, 0) = 1.0 - (y + xx) / 30.0;
    }
  const double got = ssim(grad, inv);
  CHECK(got < 0.0);

  std::vector<double> pa(256), pb(256);
  grad.extract_plane(0, 0, pa.data());
  inv.extract_plane(0, 0, pb.data());
  CHECK(got == doctest::Approx(ssim_reference(pa, pb, 16, 16)).epsilon(1e-9));

  VideoTensor r1 = random_video(rng, 2, 16, 16, 3);
  VideoTensor r2 = random_video(rng, 2, 16, 16, 3);
  CHECK(ssim(r1, r2) == doctest::Approx(ssim(r2, r1)).epsilon(1e-9));
  // cross-check the oracle on a generic pair: per-frame value is the channel mean
  double ref = 0.0;
  for (int c = 0; c < 3; ++c) {
    r1.extract_plane(1, c, pa.data());
    r2.extract_plane(1, c, pb.data());
    ref += ssim_reference(pa, pb, 16, 16);
  }
  CHECK(ssim_frame(r1, r2, 1) == doctest::Approx(ref / 3).epsilon(1e-9));

  VideoTensor small(1, 8, 8, 1);
  CHECK_THROWS_AS(ssim(small, small), ShapeError);
}

TEST_CASE("metric report averages per-frame values") {
  Rng rng(3, 0);
  VideoTensor a = random_video(rng, 3, 16, 16, 1);
  VideoTensor b = random_video(rng, 3, 16, 16, 1);
  const MetricReport r = evaluate_metrics(a, b);
  REQUIRE(r.psnr_frames.size() == 3);
  REQUIRE(r.ssim_frames.size() == 3);
  double ps = 0, ss = 0;
  for (int f = 0; f < 3; ++f) {
    CHECK(r.psnr_frames[f] == psnr_frame(a, b, f));
    CHECK(r.ssim_frames[f] == ssim_frame(a, b, f));
    ps += r.psnr_frames[f];
    ss += r.ssim_frames[f];
  }
  CHECK(r.psnr_mean == doctest::Approx(ps / 3).epsilon(1e-15));
  CHECK(r.ssim_mean == doctest::Approx(ss / 3).epsilon(1e-15));
}

TEST_CASE("rng reproducibility over one million draws") {
  Rng a(123456789ULL, 42);
  Rng b(123456789ULL, 42);
  for (int i = 0; i < 1000000; ++i) REQUIRE(a.next_u64() == b.next_u64());

  Rng c(123456789ULL, 43);
  int diff = 0;
  Rng a2(123456789ULL, 42);
  for (int i = 0; i < 64; ++i) diff += (a2.next_u64() != c.next_u64());
  CHECK(diff > 60);  // different streams decorrelate immediately
}

TEST_CASE("rng draws are sane") {
  Rng rng(99, 0);
  double sum = 0, sumsq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    REQUIRE(std::isfinite(v));
    sum += v;
    sumsq += v * v;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);

  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    REQUIRE(rng.below(7) < 7);
  }

  // child streams are deterministic functions of the parent identity
  Rng p1(5, 2), p2(5, 2);
  Rng c1 = p1.child(9), c2 = p2.child(9);
  for (int i = 0; i < 100; ++i) CHECK(c1.next_u64() == c2.next_u64());
}

TEST_CASE("sha256 matches published vectors") {
  CHECK(sha256_hex(std::string("")) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex(std::string("abc")) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex(std::string("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq")) ==
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");

  const fs::path p = tmp_dir() / "hashme.bin";
  {
    std::ofstream f(p, std::ios::binary);
    std::string payload(100000, '\0');
    for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<char>(i % 251);
    f << payload;
  }
  std::ifstream f(p, std::ios::binary);
  std::string contents((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  CHECK(sha256_file(p.string()) == sha256_hex(contents));
  CHECK_THROWS_AS(sha256_file((tmp_dir() / "missing.bin").string()), IoError);
}

TEST_CASE("json helpers") {
  const fs::path p = tmp_dir() / "cfg.json";
  nlohmann::json j = {{"alpha", 1.5}, {"name", "run"}, {"steps", 100}};
  save_json(j, p.string());
  const nlohmann::json k = load_json(p.string());
  CHECK(k == j);

  CHECK(json_require<double>(k, "alpha") == 1.5);
  CHECK(json_require<int>(k, "steps") == 100);
  CHECK(json_require<std::string>(k, "name") == "run");
  CHECK_THROWS_AS(json_require<double>(k, "missing"), ConfigError);
  CHECK_THROWS_AS(json_require<double>(k, "name"), ConfigError);
  CHECK(json_get<int>(k, "absent", 7) == 7);
  CHECK(json_get<int>(k, "steps", 7) == 100);

  CHECK_THROWS_AS(load_json((tmp_dir() / "missing.json").string()), IoError);
  {
    std::ofstream f(tmp_dir() / "bad.json");
    f << "{nope";
  }
  CHECK_THROWS_AS(load_json((tmp_dir() / "bad.json").string()), ConfigError);

  CHECK(format_double(3.14159265, 3) == "3.142");
  CHECK(format_double(2.0, 1) == "2.0");
}
