// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#include "dvsr/denoiser.hpp"

#include <cmath>
#include <filesystem>
#include <vector>

#include <doctest.h>

#include "dvsr/errors.hpp"
#include "dvsr/rng.hpp"

namespace fs = std::filesystem;
using namespace dvsr;

namespace {

fs::path tmp_dir() {
  const fs::path p = fs::current_path() / "tmp_test_denoiser";
  fs::create_directories(p);
  return p;
}

DenoiserConfig tiny_config() {
  DenoiserConfig c;
  c.patch_size = 1;
  c.embed_dim = 8;
  c.depth = 1;
  c.heads = 2;
  c.max_frames = 4;
  c.time_dim = 4;
  c.latent_channels = 2;
  return c;
}

LatentVideo random_latent(Rng& rng, int f, int h, int w, int c) {
  LatentVideo z(f, h, w, c, 1, "test-codec");
  for (double& v : z.values()) v = rng.normal();
  return z;
}

void randomize(ParamStore& ps, std::uint64_t seed, double std = 0.2) {
  Rng rng(seed);
  for (auto& p : ps.all()) normal_init(p->value, rng, std);
}

LatentVideo permute_frames(const LatentVideo& z, const std::vector<int>& order) {
  LatentVideo out = z.like_zeros();
  const std::size_t cols = z.size() / static_cast<std::size_t>(z.frames());
  for (std::size_t i = 0; i < order.size(); ++i)
    std::copy(z.data() + static_cast<std::size_t>(order[i]) * cols,
              z.data() + static_cast<std::size_t>(order[i] + 1) * cols, out.data() + i * cols);
  return out;
}

double max_abs_diff(const LatentVideo& a, const LatentVideo& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

}  // namespace

TEST_CASE("denoiser config validation and json round trip") {
  DenoiserConfig c = tiny_config();
  DenoiserConfig back = DenoiserConfig::from_json(c.to_json());
  CHECK(back.patch_size == c.patch_size);
  CHECK(back.embed_dim == c.embed_dim);
  CHECK(back.depth == c.depth);
  CHECK(back.heads == c.heads);
  CHECK(back.max_frames == c.max_frames);
  CHECK(back.time_dim == c.time_dim);
  CHECK(back.latent_channels == c.latent_channels);

  DenoiserConfig bad = c;
  bad.embed_dim = 10;  // not divisible by 4
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.heads = 3;  // 8 % 3 != 0
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.time_dim = 5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.depth = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("denoiser output shape matches input and is zero at init") {
  // Zero-initialized modulation gates every residual branch shut and the
  // zero-initialized head maps the identity trunk to exactly zero.
  Denoiser d(tiny_config(), 7);
  Rng rng(3);
  LatentVideo z = random_latent(rng, 3, 4, 2, 2);
  LatentVideo e = d.eps(z, 5);
  CHECK(e.frames() == 3);
  CHECK(e.height() == 4);
  CHECK(e.width() == 2);
  CHECK(e.channels() == 2);
  for (double v : e.values()) CHECK(v == 0.0);

  // Shape violations.
  CHECK_THROWS_AS(d.eps(random_latent(rng, 5, 4, 2, 2), 1), ShapeError);  // > max_frames
  CHECK_THROWS_AS(d.eps(random_latent(rng, 2, 4, 2, 3), 1), ShapeError);  // wrong channels
  DenoiserConfig c2 = tiny_config();
  c2.patch_size = 2;
  Denoiser d2(c2, 7);
  CHECK_THROWS_AS(d2.eps(random_latent(rng, 2, 3, 4, 2), 1), ShapeError);  // 3 % 2 != 0
  CHECK_THROWS_AS(d.eps(random_latent(rng, 2, 4, 2, 2), -1), ConfigError);
}

TEST_CASE("denoiser is deterministic bitwise") {
  Denoiser a(tiny_config(), 7), b(tiny_config(), 7);
  randomize(a.params(), 42);
  randomize(b.params(), 42);
  Rng rng(9);
  LatentVideo z = random_latent(rng, 3, 2, 2, 2);
  LatentVideo e1 = a.eps(z, 11);
  LatentVideo e2 = b.eps(z, 11);
  LatentVideo e3 = a.eps(z, 11);
  CHECK(e1.values() == e2.values());
  CHECK(e1.values() == e3.values());
  double mx = 0.0;
  for (double v : e1.values()) mx = std::max(mx, std::abs(v));
  CHECK(mx > 0.0);  // random weights produce a non-trivial output
}

TEST_CASE("denoiser is sensitive to frame order and timestep") {
  Denoiser d(tiny_config(), 7);
  randomize(d.params(), 42);
  Rng rng(9);
  LatentVideo z = random_latent(rng, 4, 2, 2, 2);
  const std::vector<int> order{3, 1, 0, 2};

  // Temporal position encodings break permutation symmetry: the permuted
  // input does not just produce a permuted output.
  LatentVideo e = d.eps(z, 10);
  LatentVideo ep = d.eps(permute_frames(z, order), 10);
  CHECK(max_abs_diff(permute_frames(e, order), ep) > 1e-6);

  // The timestep embedding reaches the output through modulation.
  LatentVideo e2 = d.eps(z, 200);
  CHECK(max_abs_diff(e, e2) > 1e-8);
}

TEST_CASE("spatial blocks confine information within frames") {
  Denoiser d(tiny_config(), 7);
  randomize(d.params(), 43);
  d.set_temporal_enabled(false);
  Rng rng(15);
  LatentVideo z = random_latent(rng, 3, 2, 2, 2);
  LatentVideo e = d.eps(z, 6);

  // Zero out frame 2; frames 0 and 1 have unchanged outputs, bitwise.
  LatentVideo z2 = z;
  const std::size_t cols = z.size() / 3;
  for (std::size_t i = 2 * cols; i < 3 * cols; ++i) z2.values()[i] = 0.0;
  LatentVideo e2 = d.eps(z2, 6);
  for (std::size_t i = 0; i < 2 * cols; ++i) CHECK(e.values()[i] == e2.values()[i]);

  // With temporal attention back on, the same edit leaks across frames.
  d.set_temporal_enabled(true);
  LatentVideo f1 = d.eps(z, 6);
  LatentVideo f2 = d.eps(z2, 6);
  double mx = 0.0;
  for (std::size_t i = 0; i < 2 * cols; ++i)
    mx = std::max(mx, std::abs(f1.values()[i] - f2.values()[i]));
  CHECK(mx > 1e-9);

  // With temporal blocks disabled, frame permutation commutes exactly.
  d.set_temporal_enabled(false);
  const std::vector<int> order{2, 0, 1};
  LatentVideo pe = d.eps(permute_frames(z, order), 6);
  LatentVideo ep = permute_frames(d.eps(z, 6), order);
  CHECK(pe.values() == ep.values());
}

TEST_CASE("denoiser eps_vjp matches finite differences") {
  Denoiser d(tiny_config(), 7);
  randomize(d.params(), 44, 0.15);
  Rng rng(25);
  LatentVideo z = random_latent(rng, 2, 2, 2, 2);
  LatentVideo cot = z.like_zeros();
  for (double& v : cot.values()) v = rng.normal();

  LatentVideo g = d.eps_vjp(z, 3, cot);
  auto dot = [&](const LatentVideo& zz) {
    LatentVideo e = d.eps(zz, 3);
    double s = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) s += e.values()[i] * cot.values()[i];
    return s;
  };
  const double h = 1e-5;
  double max_rel = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    LatentVideo zp = z, zm = z;
    zp.values()[i] += h;
    zm.values()[i] -= h;
    const double fd = (dot(zp) - dot(zm)) / (2.0 * h);
    const double denom = std::max(std::abs(fd), 1e-6);
    max_rel = std::max(max_rel, std::abs(fd - g.values()[i]) / denom);
  }
  CHECK(max_rel < 1e-4);
}

TEST_CASE("denoiser parameter count is a pure function of config") {
  DenoiserConfig c = tiny_config();
  Denoiser d(c, 1);
  const std::size_t dd = static_cast<std::size_t>(c.embed_dim);
  const std::size_t pc = static_cast<std::size_t>(c.patch_size) * c.patch_size * c.latent_channels;
  const std::size_t td = static_cast<std::size_t>(c.time_dim);
  std::size_t expect = 0;
  expect += td * dd + dd;       // time.fc1
  expect += dd * dd + dd;       // time.fc2
  expect += pc * dd + dd;       // embed
  const std::size_t per_block = (dd * 6 * dd + 6 * dd)  // modulation
                                + (dd * 3 * dd + 3 * dd) + (dd * dd + dd)  // attention
                                + (dd * 4 * dd + 4 * dd) + (4 * dd * dd + dd);  // mlp
  expect += 2 * static_cast<std::size_t>(c.depth) * per_block;
  expect += dd * 2 * dd + 2 * dd;  // final modulation
  expect += dd * pc + pc;          // head
  CHECK(d.param_count() == expect);

  Denoiser same(c, 999);
  CHECK(same.param_count() == expect);
}

TEST_CASE("denoiser checkpoint round trip preserves outputs and metadata") {
  Denoiser d(tiny_config(), 7);
  randomize(d.params(), 45);
  const fs::path p = tmp_dir() / "denoiser.ckpt";
  d.save(p.string(), {{"dataset_hash", "abc123"}, {"seed", 7}});

  nlohmann::json meta;
  auto back = Denoiser::load(p.string(), &meta);
  CHECK(meta.at("dataset_hash") == "abc123");
  CHECK(meta.at("param_count").get<std::size_t>() == d.param_count());
  CHECK(meta.at("config").at("embed_dim").get<int>() == 8);

  Rng rng(100);
  LatentVideo z = random_latent(rng, 2, 2, 2, 2);
  CHECK(back->eps(z, 9).values() == d.eps(z, 9).values());
}

TEST_CASE("analytic gaussian score closed forms") {
  GaussianWorld w;
  w.mu = Eigen::Vector2d(0.3, -0.7);
  w.sigma = Eigen::Matrix2d::Identity();
  Eigen::Vector2d x(1.0, 2.0);

  // Sigma = I, alpha_bar = 1: standard normal score -(x - mu).
  Eigen::VectorXd s = analytic_score(w, x, 1.0);
  CHECK(s(0) == doctest::Approx(-(x(0) - w.mu(0))).epsilon(1e-12));
  CHECK(s(1) == doctest::Approx(-(x(1) - w.mu(1))).epsilon(1e-12));

  // mu = 0, Sigma = I: marginal stays N(0, I) for every alpha_bar.
  GaussianWorld w0;
  w0.mu = Eigen::Vector2d::Zero();
  w0.sigma = Eigen::Matrix2d::Identity();
  for (double ab : {0.1, 0.5, 0.9}) {
    Eigen::VectorXd s0 = analytic_score(w0, x, ab);
    CHECK(s0(0) == doctest::Approx(-x(0)).epsilon(1e-12));
    CHECK(s0(1) == doctest::Approx(-x(1)).epsilon(1e-12));
  }

  // Non-SPD covariance rejected.
  GaussianWorld bad;
  bad.mu = Eigen::Vector2d::Zero();
  bad.sigma = (Eigen::Matrix2d() << 1.0, 2.0, 2.0, 1.0).finished();  // eigenvalues 3, -1
  CHECK_THROWS_AS(analytic_score(bad, x, 0.5), ConfigError);
  GaussianWorld asym;
  asym.mu = Eigen::Vector2d::Zero();
  asym.sigma = (Eigen::Matrix2d() << 1.0, 0.5, 0.0, 1.0).finished();
  CHECK_THROWS_AS(analytic_score(asym, x, 0.5), ConfigError);
}

TEST_CASE("analytic score matches finite differences of the log density") {
  // Anisotropic world diag(4, 0.25) at alpha_bar = 0.5: the noised marginal
  // is N(sqrt(0.5) mu, diag(2.5, 0.625)).
  GaussianWorld w;
  w.mu = Eigen::Vector2d(1.0, -2.0);
  w.sigma = Eigen::Vector2d(4.0, 0.25).asDiagonal();
  const double ab = 0.5;
  const Eigen::Vector2d m = std::sqrt(ab) * w.mu;
  const Eigen::Vector2d var(ab * 4.0 + (1.0 - ab), ab * 0.25 + (1.0 - ab));

  auto log_density = [&](const Eigen::Vector2d& x) {
    double s = 0.0;
    for (int i = 0; i < 2; ++i)
      s += -0.5 * (x(i) - m(i)) * (x(i) - m(i)) / var(i) - 0.5 * std::log(2.0 * M_PI * var(i));
    return s;
  };

  Eigen::Vector2d x(0.8, 0.3);
  Eigen::VectorXd s = analytic_score(w, x, ab);
  const double h = 1e-6;
  for (int i = 0; i < 2; ++i) {
    Eigen::Vector2d xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    const double fd = (log_density(xp) - log_density(xm)) / (2.0 * h);
    CHECK(std::abs(fd - s(i)) / std::abs(fd) < 1e-6);
  }
}

TEST_CASE("gaussian score model eps and vjp forms") {
  NoiseSchedule ns = make_schedule(100, 1e-4, 0.02);
  GaussianWorld w;
  w.mu = Eigen::Vector4d(0.2, -0.1, 0.4, 0.0);
  w.sigma = Eigen::Vector4d(2.0, 0.5, 1.0, 3.0).asDiagonal();
  GaussianScore gs(w, ns);

  LatentVideo z(1, 2, 2, 1, 1, "oracle");
  Rng rng(8);
  for (double& v : z.values()) v = rng.normal();

  const int t = 50;
  const double ab = ns.alpha_bar[t];
  LatentVideo e = gs.eps(z, t);
  for (int i = 0; i < 4; ++i) {
    const double var_i = ab * w.sigma(i, i) + (1.0 - ab);
    const double expect = std::sqrt(1.0 - ab) * (z.values()[i] - std::sqrt(ab) * w.mu(i)) / var_i;
    CHECK(e.values()[i] == doctest::Approx(expect).epsilon(1e-12));
  }

  // vjp against finite differences of <eps(z), cot>.
  LatentVideo cot = z.like_zeros();
  for (double& v : cot.values()) v = rng.normal();
  LatentVideo g = gs.eps_vjp(z, t, cot);
  const double h = 1e-6;
  for (std::size_t i = 0; i < z.size(); ++i) {
    LatentVideo zp = z, zm = z;
    zp.values()[i] += h;
    zm.values()[i] -= h;
    LatentVideo ep = gs.eps(zp, t), em = gs.eps(zm, t);
    double fd = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j)
      fd += (ep.values()[j] - em.values()[j]) / (2.0 * h) * cot.values()[j];
    CHECK(g.values()[i] == doctest::Approx(fd).epsilon(1e-5));
  }

  CHECK_THROWS_AS(gs.eps(z, -1), ConfigError);
  CHECK_THROWS_AS(gs.eps(z, 100), ConfigError);
  CHECK_THROWS_AS(gs.eps(LatentVideo(1, 3, 1, 1, 1, "oracle"), 5), ShapeError);
}
