// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#include "dvsr/denoiser.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <utility>

#include "dvsr/errors.hpp"
#include "dvsr/util.hpp"

namespace dvsr {
namespace {

// Broadcast helpers over token matrices (rows = tokens).
Eigen::MatrixXd row_scale(const Eigen::MatrixXd& m, const Eigen::RowVectorXd& s) {
  Eigen::MatrixXd out = m;
  for (Eigen::Index r = 0; r < out.rows(); ++r) out.row(r).array() *= s.array();
  return out;
}

Eigen::MatrixXd modulate(const Eigen::MatrixXd& u, const Eigen::RowVectorXd& shift,
                         const Eigen::RowVectorXd& scale) {
  Eigen::MatrixXd out = u;
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    out.row(r).array() = u.row(r).array() * (1.0 + scale.array()) + shift.array();
  return out;
}

Eigen::RowVectorXd col_dot(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.cwiseProduct(b).colwise().sum();
}

// Tokens are frame-major: row f*S + s. The temporal layout regroups them
// position-major (row s*F + f) so within-group attention spans frames.
Eigen::MatrixXd to_temporal(const Eigen::MatrixXd& x, int frames, int spatial) {
  Eigen::MatrixXd y(x.rows(), x.cols());
  for (int f = 0; f < frames; ++f)
    for (int s = 0; s < spatial; ++s) y.row(static_cast<Eigen::Index>(s) * frames + f) = x.row(static_cast<Eigen::Index>(f) * spatial + s);
  return y;
}

Eigen::MatrixXd from_temporal(const Eigen::MatrixXd& x, int frames, int spatial) {
  Eigen::MatrixXd y(x.rows(), x.cols());
  for (int f = 0; f < frames; ++f)
    for (int s = 0; s < spatial; ++s) y.row(static_cast<Eigen::Index>(f) * spatial + s) = x.row(static_cast<Eigen::Index>(s) * frames + f);
  return y;
}

std::vector<std::pair<int, int>> spatial_groups(int frames, int spatial) {
  std::vector<std::pair<int, int>> g;
  for (int f = 0; f < frames; ++f) g.emplace_back(f * spatial, spatial);
  return g;
}

std::vector<std::pair<int, int>> temporal_groups(int frames, int spatial) {
  std::vector<std::pair<int, int>> g;
  for (int s = 0; s < spatial; ++s) g.emplace_back(s * frames, frames);
  return g;
}

}  // namespace

void DenoiserConfig::validate() const {
  if (patch_size < 1) throw ConfigError("denoiser: patch_size must be >= 1");
  if (embed_dim < 4 || embed_dim % 4 != 0)
    throw ConfigError("denoiser: embed_dim must be a positive multiple of 4");
  if (heads < 1 || embed_dim % heads != 0)
    throw ConfigError("denoiser: embed_dim must be divisible by heads");
  if (depth < 1) throw ConfigError("denoiser: depth must be >= 1");
  if (max_frames < 1) throw ConfigError("denoiser: max_frames must be >= 1");
  if (time_dim < 2 || time_dim % 2 != 0)
    throw ConfigError("denoiser: time_dim must be a positive even number");
  if (latent_channels < 1) throw ConfigError("denoiser: latent_channels must be >= 1");
}

DenoiserConfig DenoiserConfig::from_json(const nlohmann::json& j) {
  DenoiserConfig c;
  c.patch_size = json_get<int>(j, "patch_size", c.patch_size);
  c.embed_dim = json_get<int>(j, "embed_dim", c.embed_dim);
  c.depth = json_get<int>(j, "depth", c.depth);
  c.heads = json_get<int>(j, "heads", c.heads);
  c.max_frames = json_get<int>(j, "max_frames", c.max_frames);
  c.time_dim = json_get<int>(j, "time_dim", c.time_dim);
  c.latent_channels = json_get<int>(j, "latent_channels", c.latent_channels);
  c.validate();
  return c;
}

nlohmann::json DenoiserConfig::to_json() const {
  return {{"patch_size", patch_size}, {"embed_dim", embed_dim},
          {"depth", depth},           {"heads", heads},
          {"max_frames", max_frames}, {"time_dim", time_dim},
          {"latent_channels", latent_channels}};
}

/// One transformer block with adaptive layer norm conditioning. The
/// modulation projection is zero-initialized, so at init both residual
/// branches are gated shut and the block is the identity map.
struct DenoiserBlock {
  bool temporal;
  Dense mod;
  SelfAttention attn;
  Dense fc1, fc2;
  LayerNorm ln1, ln2;
  Gelu gelu;

  int frames = 0, spatial = 0, d = 0;
  Eigen::MatrixXd u1, a, u2, mlp;
  Eigen::RowVectorXd sh1, sc1, g1, sh2, sc2, g2;
  Eigen::RowVectorXd dtemb;

  DenoiserBlock(ParamStore& ps, const std::string& name, int dim, int heads, bool is_temporal,
                Rng& rng)
      : temporal(is_temporal),
        mod(ps, name + ".mod", dim, 6 * dim, rng, 0.0),
        attn(ps, name + ".attn", dim, heads, rng),
        fc1(ps, name + ".fc1", dim, 4 * dim, rng),
        fc2(ps, name + ".fc2", 4 * dim, dim, rng),
        d(dim) {}

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& temb, int F, int S) {
    frames = F;
    spatial = S;
    const Eigen::RowVectorXd m = mod.forward(temb);
    sh1 = m.segment(0, d);
    sc1 = m.segment(d, d);
    g1 = m.segment(2 * d, d);
    sh2 = m.segment(3 * d, d);
    sc2 = m.segment(4 * d, d);
    g2 = m.segment(5 * d, d);

    u1 = ln1.forward(x);
    Eigen::MatrixXd m1 = modulate(u1, sh1, sc1);
    if (temporal)
      a = from_temporal(attn.forward(to_temporal(m1, F, S), temporal_groups(F, S)), F, S);
    else
      a = attn.forward(m1, spatial_groups(F, S));
    Eigen::MatrixXd h = x + row_scale(a, g1);

    u2 = ln2.forward(h);
    Eigen::MatrixXd m2 = modulate(u2, sh2, sc2);
    mlp = fc2.forward(gelu.forward(fc1.forward(m2)));
    return h + row_scale(mlp, g2);
  }

  Eigen::MatrixXd backward(const Eigen::MatrixXd& dy, bool pg) {
    const Eigen::RowVectorXd dg2 = col_dot(dy, mlp);
    Eigen::MatrixXd dmlp = row_scale(dy, g2);
    Eigen::MatrixXd dm2 = fc1.backward(gelu.backward(fc2.backward(dmlp, pg)), pg);
    const Eigen::RowVectorXd dsc2 = col_dot(dm2, u2);
    const Eigen::RowVectorXd dsh2 = dm2.colwise().sum();
    Eigen::RowVectorXd ones_sc2 = sc2;
    ones_sc2.array() += 1.0;
    Eigen::MatrixXd dh = dy + ln2.backward(row_scale(dm2, ones_sc2));

    const Eigen::RowVectorXd dg1 = col_dot(dh, a);
    Eigen::MatrixXd da = row_scale(dh, g1);
    Eigen::MatrixXd dm1;
    if (temporal)
      dm1 = from_temporal(attn.backward(to_temporal(da, frames, spatial), pg), frames, spatial);
    else
      dm1 = attn.backward(da, pg);
    const Eigen::RowVectorXd dsc1 = col_dot(dm1, u1);
    const Eigen::RowVectorXd dsh1 = dm1.colwise().sum();
    Eigen::RowVectorXd ones_sc1 = sc1;
    ones_sc1.array() += 1.0;
    Eigen::MatrixXd dx = dh + ln1.backward(row_scale(dm1, ones_sc1));

    Eigen::RowVectorXd dmod(6 * d);
    dmod << dsh1, dsc1, dg1, dsh2, dsc2, dg2;
    dtemb = mod.backward(dmod, pg);
    return dx;
  }
};

struct Denoiser::Impl {
  Dense time_fc1, time_fc2;
  Silu time_silu;
  Dense embed;
  std::vector<std::unique_ptr<DenoiserBlock>> blocks;
  LayerNorm ln_f;
  Dense mod_f, head;

  // forward caches
  int F = 0, gh = 0, gw = 0, lh = 0, lw = 0;
  Eigen::RowVectorXd temb, sh_f, sc_f;
  Eigen::MatrixXd u_f;
  std::string codec_id;
  int latent_p = 1;

  Impl(const DenoiserConfig& c, ParamStore& ps, Rng& rng)
      : time_fc1(ps, "time.fc1", c.time_dim, c.embed_dim, rng),
        time_fc2(ps, "time.fc2", c.embed_dim, c.embed_dim, rng),
        embed(ps, "embed", c.patch_size * c.patch_size * c.latent_channels, c.embed_dim, rng),
        ln_f(),
        mod_f(ps, "final.mod", c.embed_dim, 2 * c.embed_dim, rng, 0.0),
        head(ps, "final.head", c.embed_dim, c.patch_size * c.patch_size * c.latent_channels, rng,
             0.0) {
    for (int i = 0; i < c.depth; ++i) {
      blocks.push_back(std::make_unique<DenoiserBlock>(
          ps, "blk" + std::to_string(2 * i) + ".spatial", c.embed_dim, c.heads, false, rng));
      blocks.push_back(std::make_unique<DenoiserBlock>(
          ps, "blk" + std::to_string(2 * i + 1) + ".temporal", c.embed_dim, c.heads, true, rng));
    }
  }
};

Denoiser::Denoiser(const DenoiserConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  impl_ = std::make_unique<Impl>(cfg_, ps_, rng);
}

Denoiser::~Denoiser() = default;

namespace {

Eigen::MatrixXd patchify(const LatentVideo& z, int patch) {
  const int gh = z.height() / patch, gw = z.width() / patch, c = z.channels();
  const Eigen::Index n = static_cast<Eigen::Index>(z.frames()) * gh * gw;
  Eigen::MatrixXd tok(n, static_cast<Eigen::Index>(patch) * patch * c);
  for (int f = 0; f < z.frames(); ++f)
    for (int gy = 0; gy < gh; ++gy)
      for (int gx = 0; gx < gw; ++gx) {
        const Eigen::Index row = (static_cast<Eigen::Index>(f) * gh + gy) * gw + gx;
        Eigen::Index col = 0;
        for (int py = 0; py < patch; ++py)
          for (int px = 0; px < patch; ++px)
            for (int ch = 0; ch < c; ++ch)
              tok(row, col++) = z.at(f, gy * patch + py, gx * patch + px, ch);
      }
  return tok;
}

LatentVideo unpatchify(const Eigen::MatrixXd& tok, const LatentVideo& like, int patch) {
  const int gh = like.height() / patch, gw = like.width() / patch, c = like.channels();
  LatentVideo z = like.like_zeros();
  for (int f = 0; f < like.frames(); ++f)
    for (int gy = 0; gy < gh; ++gy)
      for (int gx = 0; gx < gw; ++gx) {
        const Eigen::Index row = (static_cast<Eigen::Index>(f) * gh + gy) * gw + gx;
        Eigen::Index col = 0;
        for (int py = 0; py < patch; ++py)
          for (int px = 0; px < patch; ++px)
            for (int ch = 0; ch < c; ++ch)
              z.at(f, gy * patch + py, gx * patch + px, ch) = tok(row, col++);
      }
  return z;
}

Eigen::MatrixXd position_encoding(int frames, int gh, int gw, int dim, bool with_temporal) {
  const int half = dim / 2;
  Eigen::MatrixXd pos(static_cast<Eigen::Index>(frames) * gh * gw, dim);
  std::vector<Eigen::RowVectorXd> rows(static_cast<std::size_t>(gh));
  std::vector<Eigen::RowVectorXd> cols(static_cast<std::size_t>(gw));
  for (int gy = 0; gy < gh; ++gy) rows[static_cast<std::size_t>(gy)] = sinusoidal_embedding(gy, half);
  for (int gx = 0; gx < gw; ++gx) cols[static_cast<std::size_t>(gx)] = sinusoidal_embedding(gx, half);
  for (int f = 0; f < frames; ++f) {
    const Eigen::RowVectorXd ft = sinusoidal_embedding(f, dim);
    for (int gy = 0; gy < gh; ++gy)
      for (int gx = 0; gx < gw; ++gx) {
        const Eigen::Index row = (static_cast<Eigen::Index>(f) * gh + gy) * gw + gx;
        pos.row(row).segment(0, half) = rows[static_cast<std::size_t>(gy)];
        pos.row(row).segment(half, half) = cols[static_cast<std::size_t>(gx)];
        if (with_temporal) pos.row(row) += ft;
      }
  }
  return pos;
}

}  // namespace

LatentVideo Denoiser::eps(const LatentVideo& z_t, int t) {
  const int patch = cfg_.patch_size;
  if (z_t.channels() != cfg_.latent_channels)
    throw ShapeError("denoiser: latent has " + std::to_string(z_t.channels()) +
                     " channels, config expects " + std::to_string(cfg_.latent_channels));
  if (z_t.height() % patch != 0 || z_t.width() % patch != 0)
    throw ShapeError("denoiser: latent dims " + std::to_string(z_t.height()) + "x" +
                     std::to_string(z_t.width()) + " not divisible by patch_size " +
                     std::to_string(patch));
  if (z_t.frames() < 1 || z_t.frames() > cfg_.max_frames)
    throw ShapeError("denoiser: frame count " + std::to_string(z_t.frames()) +
                     " outside [1, " + std::to_string(cfg_.max_frames) + "]");
  if (t < 0) throw ConfigError("denoiser: timestep must be >= 0");

  Impl& im = *impl_;
  im.F = z_t.frames();
  im.gh = z_t.height() / patch;
  im.gw = z_t.width() / patch;
  im.lh = z_t.height();
  im.lw = z_t.width();
  im.codec_id = z_t.codec_id();
  im.latent_p = z_t.compression();
  const int S = im.gh * im.gw;

  Eigen::MatrixXd x = im.embed.forward(patchify(z_t, patch));
  // With temporal blocks disabled (verification hook) the temporal position
  // term is dropped too, so frames are processed truly identically.
  x += position_encoding(im.F, im.gh, im.gw, cfg_.embed_dim, temporal_enabled_);

  const Eigen::RowVectorXd traw = sinusoidal_embedding(static_cast<double>(t), cfg_.time_dim);
  im.temb = im.time_fc2.forward(im.time_silu.forward(im.time_fc1.forward(traw)));

  for (auto& blk : im.blocks) {
    if (blk->temporal && !temporal_enabled_) continue;
    x = blk->forward(x, im.temb, im.F, S);
  }

  im.u_f = im.ln_f.forward(x);
  const Eigen::RowVectorXd mf = im.mod_f.forward(im.temb);
  im.sh_f = mf.segment(0, cfg_.embed_dim);
  im.sc_f = mf.segment(cfg_.embed_dim, cfg_.embed_dim);
  Eigen::MatrixXd out_tok = im.head.forward(modulate(im.u_f, im.sh_f, im.sc_f));

  eps_cache_z_ = z_t.values();
  eps_cache_t_ = t;
  eps_cache_f_ = z_t.frames();
  eps_cache_h_ = z_t.height();
  eps_cache_w_ = z_t.width();
  eps_cache_temporal_ = temporal_enabled_;
  return unpatchify(out_tok, z_t, patch);
}

LatentVideo Denoiser::backward(const LatentVideo& cot, bool need_param_grads) {
  Impl& im = *impl_;
  if (im.F == 0) throw ConfigError("denoiser: backward called before eps");
  if (cot.frames() != im.F || cot.height() != im.lh || cot.width() != im.lw ||
      cot.channels() != cfg_.latent_channels)
    throw ShapeError("denoiser backward: cotangent shape does not match last forward");

  const int S = im.gh * im.gw;
  Eigen::MatrixXd dtok = patchify(cot, cfg_.patch_size);
  Eigen::MatrixXd dmf = im.head.backward(dtok, need_param_grads);
  const Eigen::RowVectorXd dsc_f = col_dot(dmf, im.u_f);
  const Eigen::RowVectorXd dsh_f = dmf.colwise().sum();
  Eigen::RowVectorXd ones_sc = im.sc_f;
  ones_sc.array() += 1.0;
  Eigen::MatrixXd dx = im.ln_f.backward(row_scale(dmf, ones_sc));
  Eigen::RowVectorXd dmod_f(2 * cfg_.embed_dim);
  dmod_f << dsh_f, dsc_f;
  Eigen::RowVectorXd dtemb = im.mod_f.backward(dmod_f, need_param_grads);

  for (auto it = im.blocks.rbegin(); it != im.blocks.rend(); ++it) {
    DenoiserBlock& blk = **it;
    if (blk.temporal && !temporal_enabled_) continue;
    dx = blk.backward(dx, need_param_grads);
    dtemb += blk.dtemb;
  }

  Eigen::MatrixXd dt1 = im.time_fc2.backward(dtemb, need_param_grads);
  im.time_fc1.backward(im.time_silu.backward(dt1), need_param_grads);

  // Position encodings are additive constants, so the embedding sees dx as is.
  Eigen::MatrixXd dpatch = im.embed.backward(dx, need_param_grads);
  LatentVideo like(im.F, im.lh, im.lw, cfg_.latent_channels, im.latent_p, im.codec_id);
  return unpatchify(dpatch, like, cfg_.patch_size);
}

LatentVideo Denoiser::eps_vjp(const LatentVideo& z_t, int t, const LatentVideo& cot) {
  const bool cache_hit =
      eps_cache_t_ == t && eps_cache_temporal_ == temporal_enabled_ &&
      eps_cache_f_ == z_t.frames() && eps_cache_h_ == z_t.height() &&
      eps_cache_w_ == z_t.width() && eps_cache_z_.size() == z_t.values().size() &&
      std::memcmp(eps_cache_z_.data(), z_t.values().data(),
                  sizeof(double) * eps_cache_z_.size()) == 0;
  if (!cache_hit) eps(z_t, t);
  return backward(cot, false);
}

void Denoiser::save(const std::string& path, const nlohmann::json& extra_meta) const {
  nlohmann::json meta{{"kind", "denoiser"},
                      {"config", cfg_.to_json()},
                      {"param_count", ps_.count()}};
  meta.update(extra_meta);
  ps_.save(path, meta);
  std::printf("denoiser: saved %s (%zu params)\n", path.c_str(), ps_.count());
}

std::unique_ptr<Denoiser> Denoiser::load(const std::string& path, nlohmann::json* meta_out) {
  nlohmann::json meta = ParamStore::peek_meta(path);
  if (json_get<std::string>(meta, "kind", "") != "denoiser")
    throw FormatError("not a denoiser checkpoint: " + path);
  DenoiserConfig cfg = DenoiserConfig::from_json(meta.at("config"));
  auto d = std::make_unique<Denoiser>(cfg, 0);
  nlohmann::json loaded = d->ps_.load(path);
  if (meta_out) *meta_out = loaded;
  return d;
}

Eigen::VectorXd analytic_score(const GaussianWorld& world, const Eigen::VectorXd& x,
                               double alpha_bar) {
  const Eigen::Index n = world.mu.size();
  if (world.sigma.rows() != n || world.sigma.cols() != n || x.size() != n)
    throw ConfigError("analytic_score: dimension mismatch");
  if (!world.sigma.isApprox(world.sigma.transpose(), 1e-12))
    throw ConfigError("analytic_score: covariance is not symmetric");
  Eigen::MatrixXd marginal_cov =
      alpha_bar * world.sigma + (1.0 - alpha_bar) * Eigen::MatrixXd::Identity(n, n);
  Eigen::LLT<Eigen::MatrixXd> llt(marginal_cov);
  if (llt.info() != Eigen::Success)
    throw ConfigError("analytic_score: covariance is not positive definite");
  return -llt.solve(x - std::sqrt(alpha_bar) * world.mu);
}

GaussianScore::GaussianScore(GaussianWorld world, NoiseSchedule schedule)
    : world_(std::move(world)), ns_(std::move(schedule)) {
  // Validate SPD once up front.
  analytic_score(world_, world_.mu, 0.5);
}

LatentVideo GaussianScore::eps(const LatentVideo& z_t, int t) {
  if (t < 0 || t >= ns_.T) throw ConfigError("gaussian score: t out of range");
  if (static_cast<Eigen::Index>(z_t.size()) != world_.mu.size())
    throw ShapeError("gaussian score: latent size does not match world dimension");
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(z_t.data(), world_.mu.size());
  Eigen::VectorXd score = analytic_score(world_, x, ns_.alpha_bar[static_cast<std::size_t>(t)]);
  LatentVideo out = z_t.like_zeros();
  const double k = -std::sqrt(1.0 - ns_.alpha_bar[static_cast<std::size_t>(t)]);
  for (Eigen::Index i = 0; i < score.size(); ++i) out.values()[static_cast<std::size_t>(i)] = k * score(i);
  return out;
}

LatentVideo GaussianScore::eps_vjp(const LatentVideo& z_t, int t, const LatentVideo& cot) {
  if (t < 0 || t >= ns_.T) throw ConfigError("gaussian score: t out of range");
  if (static_cast<Eigen::Index>(cot.size()) != world_.mu.size())
    throw ShapeError("gaussian score: cotangent size does not match world dimension");
  // eps(z) = sqrt(1 - a) C^{-1} (z - sqrt(a) mu) with C the marginal
  // covariance; the Jacobian sqrt(1 - a) C^{-1} is symmetric.
  const double ab = ns_.alpha_bar[static_cast<std::size_t>(t)];
  const Eigen::Index n = world_.mu.size();
  Eigen::MatrixXd marginal_cov =
      ab * world_.sigma + (1.0 - ab) * Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd g = Eigen::Map<const Eigen::VectorXd>(cot.data(), n);
  Eigen::VectorXd out = std::sqrt(1.0 - ab) * Eigen::LLT<Eigen::MatrixXd>(marginal_cov).solve(g);
  LatentVideo r = z_t.like_zeros();
  for (Eigen::Index i = 0; i < n; ++i) r.values()[static_cast<std::size_t>(i)] = out(i);
  return r;
}

}  // namespace dvsr
