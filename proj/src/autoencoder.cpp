// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#include "dvsr/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <utility>

#include "dvsr/container.hpp"
#include "dvsr/errors.hpp"
#include "dvsr/util.hpp"

namespace dvsr {
namespace {

Eigen::MatrixXd video_rows(const VideoTensor& v) {
  Eigen::MatrixXd m(v.frames(), static_cast<Eigen::Index>(v.height()) * v.width() * v.channels());
  const double* src = v.data();
  for (int f = 0; f < v.frames(); ++f)
    for (Eigen::Index i = 0; i < m.cols(); ++i) m(f, i) = src[f * m.cols() + i];
  return m;
}

VideoTensor rows_to_video(const Eigen::MatrixXd& m, int h, int w, int c) {
  VideoTensor v(static_cast<int>(m.rows()), h, w, c);
  double* dst = v.data();
  for (Eigen::Index f = 0; f < m.rows(); ++f)
    for (Eigen::Index i = 0; i < m.cols(); ++i) dst[f * m.cols() + i] = m(f, i);
  return v;
}

Eigen::MatrixXd latent_rows(const LatentVideo& z) {
  Eigen::MatrixXd m(z.frames(), static_cast<Eigen::Index>(z.height()) * z.width() * z.channels());
  const double* src = z.data();
  for (int f = 0; f < z.frames(); ++f)
    for (Eigen::Index i = 0; i < m.cols(); ++i) m(f, i) = src[f * m.cols() + i];
  return m;
}

int int_log2(int p) {
  int n = 0, v = p;
  while (v > 1) {
    if (v % 2 != 0) throw ConfigError("autoencoder: p must be a power of two, got " +
                                      std::to_string(p));
    v /= 2;
    ++n;
  }
  return n;
}

/// Identity codec: latent space is pixel space (p = 1, c = C).
class IdentityAutoencoder final : public Autoencoder {
 public:
  explicit IdentityAutoencoder(int channels) : channels_(channels) {
    if (channels != 1 && channels != 3)
      throw ConfigError("identity autoencoder: channels must be 1 or 3");
    codec_id_ = "identity-c" + std::to_string(channels);
  }

  std::string kind() const override { return "identity"; }
  int p() const override { return 1; }
  int latent_channels() const override { return channels_; }
  std::string codec_id() const override { return codec_id_; }
  std::size_t param_count() const override { return 0; }

  LatentVideo encode(const VideoTensor& x) override {
    if (x.channels() != channels_)
      throw ShapeError("identity encode: expected " + std::to_string(channels_) +
                       " channels, got " + std::to_string(x.channels()));
    LatentVideo z(x.frames(), x.height(), x.width(), channels_, 1, codec_id_);
    z.values() = x.values();
    return z;
  }

  VideoTensor decode(const LatentVideo& z) override {
    require_codec(z);
    VideoTensor x(z.frames(), z.height(), z.width(), z.channels());
    x.values() = z.values();
    return x;
  }

  LatentVideo decode_vjp(const LatentVideo& z, const VideoTensor& cot) override {
    require_codec(z);
    if (cot.frames() != z.frames() || cot.height() != z.height() || cot.width() != z.width() ||
        cot.channels() != z.channels())
      throw ShapeError("identity decode_vjp: cotangent shape " + cot.shape_str() +
                       " does not match latent");
    LatentVideo g = z.like_zeros();
    g.values() = cot.values();
    return g;
  }

  void save(const std::string& path) const override {
    ParamStore empty;
    nlohmann::json meta{{"kind", "identity"}, {"channels", channels_}, {"codec_id", codec_id_}};
    empty.save(path, meta);
  }

 private:
  void require_codec(const LatentVideo& z) const {
    if (z.codec_id() != codec_id_)
      throw CodecError("latent codec '" + z.codec_id() + "' does not match autoencoder '" +
                       codec_id_ + "'");
  }

  int channels_;
  std::string codec_id_;
};

// Channel widths per resolution stage, finest first. Supports p up to 8.
// Kept deliberately thin: the full-resolution stages dominate decode cost,
// which in turn dominates guided-sampling runtime on a single core.
constexpr int kWidths[4] = {16, 32, 48, 48};

/// Convolutional VAE. Encoder: 3x3 conv stem then one stride-2 conv per
/// halving, SiLU throughout, and a 3x3 head emitting mean and log-variance.
/// Decoder mirrors it with nearest 2x upsampling and a linear output conv.
/// Per-channel latent statistics (shift/scale) measured after training are
/// folded into encode/decode so the diffusion model sees unit-scale latents.
class ConvVae final : public Autoencoder {
 public:
  ConvVae(int p, int c, int channels, std::uint64_t seed)
      : p_(p), c_(c), channels_(channels), n_down_(int_log2(p)) {
    if (p < 2 || p > 8) throw ConfigError("conv-vae: p must be 2, 4 or 8");
    if (c < 1 || c > 16) throw ConfigError("conv-vae: latent channels must be in [1, 16]");
    if (channels != 1 && channels != 3) throw ConfigError("conv-vae: channels must be 1 or 3");
    codec_id_ = "vae-p" + std::to_string(p) + "c" + std::to_string(c) + "-" +
                sha256_hex("vae/" + std::to_string(p) + "/" + std::to_string(c) + "/" +
                           std::to_string(channels) + "/" + std::to_string(seed))
                    .substr(0, 12);
    lat_shift_ = Eigen::VectorXd::Zero(c);
    lat_scale_ = Eigen::VectorXd::Ones(c);

    Rng rng(seed);
    enc_in_ = std::make_unique<Conv2d>(ps_, "enc.in", channels, kWidths[0], 3, 1, rng);
    for (int i = 0; i < n_down_; ++i)
      enc_down_.push_back(std::make_unique<Conv2d>(ps_, "enc.down" + std::to_string(i),
                                                   kWidths[i], kWidths[i + 1], 3, 2, rng));
    enc_head_ = std::make_unique<Conv2d>(ps_, "enc.head", kWidths[n_down_], 2 * c, 3, 1, rng);
    dec_in_ = std::make_unique<Conv2d>(ps_, "dec.in", c, kWidths[n_down_], 3, 1, rng);
    for (int i = n_down_ - 1; i >= 0; --i) {
      ups_.push_back(std::make_unique<Upsample2x>(kWidths[i + 1]));
      dec_convs_.push_back(std::make_unique<Conv2d>(ps_, "dec.up" + std::to_string(i),
                                                    kWidths[i + 1], kWidths[i], 3, 1, rng));
    }
    dec_out_ = std::make_unique<Conv2d>(ps_, "dec.out", kWidths[0], channels, 3, 1, rng);
    silus_enc_.resize(static_cast<std::size_t>(n_down_) + 1);
    silus_dec_.resize(static_cast<std::size_t>(n_down_) + 1);
  }

  std::string kind() const override { return "conv-vae"; }
  int p() const override { return p_; }
  int latent_channels() const override { return c_; }
  std::string codec_id() const override { return codec_id_; }
  std::size_t param_count() const override { return ps_.count(); }

  // Raw network passes over frame-batch matrices (one flattened plane per
  // row). Exposed for the training loop; encode/decode wrap them.
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> encode_raw(const Eigen::MatrixXd& x, int h, int w) {
    if (h % p_ != 0 || w % p_ != 0)
      throw ShapeError("conv-vae encode: spatial dims " + std::to_string(h) + "x" +
                       std::to_string(w) + " not divisible by p=" + std::to_string(p_));
    Eigen::MatrixXd a = silus_enc_[0].forward(enc_in_->forward(x, h, w));
    int ch = h, cw = w;
    for (int i = 0; i < n_down_; ++i) {
      a = silus_enc_[static_cast<std::size_t>(i) + 1].forward(enc_down_[i]->forward(a, ch, cw));
      ch /= 2;
      cw /= 2;
    }
    Eigen::MatrixXd head = enc_head_->forward(a, ch, cw);
    const Eigen::Index pix = static_cast<Eigen::Index>(ch) * cw;
    Eigen::MatrixXd mu(head.rows(), pix * c_), lv(head.rows(), pix * c_);
    for (Eigen::Index r = 0; r < head.rows(); ++r)
      for (Eigen::Index i = 0; i < pix; ++i)
        for (int j = 0; j < c_; ++j) {
          mu(r, i * c_ + j) = head(r, i * 2 * c_ + j);
          lv(r, i * c_ + j) = head(r, i * 2 * c_ + c_ + j);
        }
    return {mu, lv};
  }

  Eigen::MatrixXd encode_raw_backward(const Eigen::MatrixXd& dmu, const Eigen::MatrixXd& dlv,
                                      bool need_param_grads) {
    const Eigen::Index pix = dmu.cols() / c_;
    Eigen::MatrixXd dhead(dmu.rows(), pix * 2 * c_);
    for (Eigen::Index r = 0; r < dmu.rows(); ++r)
      for (Eigen::Index i = 0; i < pix; ++i)
        for (int j = 0; j < c_; ++j) {
          dhead(r, i * 2 * c_ + j) = dmu(r, i * c_ + j);
          dhead(r, i * 2 * c_ + c_ + j) = dlv(r, i * c_ + j);
        }
    Eigen::MatrixXd da = enc_head_->backward(dhead, need_param_grads);
    for (int i = n_down_ - 1; i >= 0; --i) {
      da = silus_enc_[static_cast<std::size_t>(i) + 1].backward(da);
      da = enc_down_[i]->backward(da, need_param_grads);
    }
    da = silus_enc_[0].backward(da);
    return enc_in_->backward(da, need_param_grads);
  }

  Eigen::MatrixXd decode_raw(const Eigen::MatrixXd& z, int lh, int lw) {
    dec_cache_valid_ = false;  // layer activations now belong to this input
    Eigen::MatrixXd b = silus_dec_[0].forward(dec_in_->forward(z, lh, lw));
    int ch = lh, cw = lw;
    for (int s = 0; s < n_down_; ++s) {
      Eigen::MatrixXd u = ups_[s]->forward(b, ch, cw);
      ch *= 2;
      cw *= 2;
      b = silus_dec_[static_cast<std::size_t>(s) + 1].forward(dec_convs_[s]->forward(u, ch, cw));
    }
    return dec_out_->forward(b, ch, cw);
  }

  Eigen::MatrixXd decode_raw_backward(const Eigen::MatrixXd& dx, bool need_param_grads) {
    Eigen::MatrixXd db = dec_out_->backward(dx, need_param_grads);
    for (int s = n_down_ - 1; s >= 0; --s) {
      db = silus_dec_[static_cast<std::size_t>(s) + 1].backward(db);
      db = dec_convs_[s]->backward(db, need_param_grads);
      db = ups_[s]->backward(db);
    }
    db = silus_dec_[0].backward(db);
    return dec_in_->backward(db, need_param_grads);
  }

  LatentVideo encode(const VideoTensor& x) override {
    if (x.channels() != channels_)
      throw ShapeError("conv-vae encode: expected " + std::to_string(channels_) +
                       " channels, got " + std::to_string(x.channels()));
    auto [mu, lv] = encode_raw(video_rows(x), x.height(), x.width());
    (void)lv;  // deterministic encode uses the posterior mean only
    const int lh = x.height() / p_, lw = x.width() / p_;
    LatentVideo z(x.frames(), lh, lw, c_, p_, codec_id_);
    double* dst = z.data();
    for (Eigen::Index f = 0; f < mu.rows(); ++f)
      for (Eigen::Index i = 0; i < mu.cols(); ++i) {
        const int ch = static_cast<int>(i % c_);
        dst[f * mu.cols() + i] = (mu(f, i) - lat_shift_(ch)) / lat_scale_(ch);
      }
    return z;
  }

  VideoTensor decode(const LatentVideo& z) override {
    require_codec(z);
    Eigen::MatrixXd zr = latent_rows(z);
    for (Eigen::Index f = 0; f < zr.rows(); ++f)
      for (Eigen::Index i = 0; i < zr.cols(); ++i) {
        const int ch = static_cast<int>(i % c_);
        zr(f, i) = zr(f, i) * lat_scale_(ch) + lat_shift_(ch);
      }
    Eigen::MatrixXd xr = decode_raw(zr, z.height(), z.width());
    // Remember this input: a following decode_vjp on the same latent can then
    // reuse the layer activations instead of re-running the forward pass.
    // Guided sampling always decodes before pulling the gradient back, so this
    // halves its decoder cost.
    dec_cache_zr_ = zr;
    dec_cache_lh_ = z.height();
    dec_cache_lw_ = z.width();
    dec_cache_valid_ = true;
    return rows_to_video(xr, z.height() * p_, z.width() * p_, channels_);
  }

  LatentVideo decode_vjp(const LatentVideo& z, const VideoTensor& cot) override {
    require_codec(z);
    if (cot.frames() != z.frames() || cot.height() != z.height() * p_ ||
        cot.width() != z.width() * p_ || cot.channels() != channels_)
      throw ShapeError("conv-vae decode_vjp: cotangent shape " + cot.shape_str() +
                       " does not match decoded latent shape");
    Eigen::MatrixXd zr = latent_rows(z);
    for (Eigen::Index f = 0; f < zr.rows(); ++f)
      for (Eigen::Index i = 0; i < zr.cols(); ++i) {
        const int ch = static_cast<int>(i % c_);
        zr(f, i) = zr(f, i) * lat_scale_(ch) + lat_shift_(ch);
      }
    // Re-run the forward pass only when the layer caches belong to some other
    // input; a bitwise match with the last decode() lets backward reuse them.
    const bool cache_hit =
        dec_cache_valid_ && dec_cache_lh_ == z.height() && dec_cache_lw_ == z.width() &&
        dec_cache_zr_.rows() == zr.rows() && dec_cache_zr_.cols() == zr.cols() &&
        std::memcmp(dec_cache_zr_.data(), zr.data(),
                    sizeof(double) * static_cast<std::size_t>(zr.size())) == 0;
    if (!cache_hit) {
      decode_raw(zr, z.height(), z.width());
      dec_cache_zr_ = zr;
      dec_cache_lh_ = z.height();
      dec_cache_lw_ = z.width();
      dec_cache_valid_ = true;
    }
    Eigen::MatrixXd dz = decode_raw_backward(video_rows(cot), false);
    LatentVideo g = z.like_zeros();
    double* dst = g.data();
    for (Eigen::Index f = 0; f < dz.rows(); ++f)
      for (Eigen::Index i = 0; i < dz.cols(); ++i) {
        const int ch = static_cast<int>(i % c_);
        dst[f * dz.cols() + i] = dz(f, i) * lat_scale_(ch);
      }
    return g;
  }

  void save(const std::string& path) const override {
    nlohmann::json meta{{"kind", "conv-vae"}, {"p", p_},
                        {"c", c_},           {"channels", channels_},
                        {"codec_id", codec_id_}};
    meta["latent_shift"] = std::vector<double>(lat_shift_.data(), lat_shift_.data() + c_);
    meta["latent_scale"] = std::vector<double>(lat_scale_.data(), lat_scale_.data() + c_);
    ps_.save(path, meta);
  }

  static std::unique_ptr<ConvVae> load_from(const std::string& path, const nlohmann::json& meta) {
    auto ae = std::make_unique<ConvVae>(json_require<int>(meta, "p"), json_require<int>(meta, "c"),
                                        json_require<int>(meta, "channels"), 0);
    ae->ps_.load(path);
    ae->codec_id_ = json_require<std::string>(meta, "codec_id");
    auto shift = json_require<std::vector<double>>(meta, "latent_shift");
    auto scale = json_require<std::vector<double>>(meta, "latent_scale");
    if (static_cast<int>(shift.size()) != ae->c_ || static_cast<int>(scale.size()) != ae->c_)
      throw FormatError("conv-vae checkpoint: latent stats length does not match c");
    for (int j = 0; j < ae->c_; ++j) {
      ae->lat_shift_(j) = shift[static_cast<std::size_t>(j)];
      ae->lat_scale_(j) = scale[static_cast<std::size_t>(j)];
    }
    return ae;
  }

  void set_latent_stats(const Eigen::VectorXd& shift, const Eigen::VectorXd& scale) {
    lat_shift_ = shift;
    lat_scale_ = scale;
  }
  ParamStore& params() { return ps_; }
  int pixel_channels() const { return channels_; }

 private:
  void require_codec(const LatentVideo& z) const {
    if (z.codec_id() != codec_id_)
      throw CodecError("latent codec '" + z.codec_id() + "' does not match autoencoder '" +
                       codec_id_ + "'");
    if (z.compression() != p_)
      throw CodecError("latent compression p=" + std::to_string(z.compression()) +
                       " does not match autoencoder p=" + std::to_string(p_));
  }

  int p_, c_, channels_, n_down_;
  std::string codec_id_;
  Eigen::VectorXd lat_shift_, lat_scale_;
  ParamStore ps_;
  std::unique_ptr<Conv2d> enc_in_, enc_head_, dec_in_, dec_out_;
  std::vector<std::unique_ptr<Conv2d>> enc_down_, dec_convs_;
  std::vector<std::unique_ptr<Upsample2x>> ups_;
  std::vector<Silu> silus_enc_, silus_dec_;
  // Last decode() input (post latent-stat unfolding); see decode_vjp.
  Eigen::MatrixXd dec_cache_zr_;
  int dec_cache_lh_ = -1, dec_cache_lw_ = -1;
  bool dec_cache_valid_ = false;
};

}  // namespace

std::unique_ptr<Autoencoder> Autoencoder::make_identity(int channels) {
  return std::make_unique<IdentityAutoencoder>(channels);
}

std::unique_ptr<Autoencoder> Autoencoder::make_conv_vae(int p, int c, int channels,
                                                        std::uint64_t seed) {
  return std::make_unique<ConvVae>(p, c, channels, seed);
}

std::unique_ptr<Autoencoder> Autoencoder::load(const std::string& path) {
  nlohmann::json meta = ParamStore::peek_meta(path);
  const std::string kind = json_require<std::string>(meta, "kind");
  if (kind == "identity") return make_identity(json_require<int>(meta, "channels"));
  if (kind == "conv-vae") return ConvVae::load_from(path, meta);
  throw FormatError("unknown autoencoder kind '" + kind + "' in " + path);
}

VaeTrainConfig VaeTrainConfig::from_json(const nlohmann::json& j) {
  VaeTrainConfig c;
  c.p = json_get<int>(j, "p", c.p);
  c.c = json_get<int>(j, "c", c.c);
  c.steps = json_get<int>(j, "steps", c.steps);
  c.batch_frames = json_get<int>(j, "batch_frames", c.batch_frames);
  c.lr = json_get<double>(j, "lr", c.lr);
  c.kl_weight = json_get<double>(j, "kl_weight", c.kl_weight);
  c.seed = json_get<std::uint64_t>(j, "seed", c.seed);
  c.log_every = json_get<int>(j, "log_every", c.log_every);
  if (c.steps <= 0 || c.batch_frames <= 0 || c.lr <= 0.0 || c.kl_weight < 0.0)
    throw ConfigError("vae train config: steps, batch_frames, lr must be positive");
  return c;
}

nlohmann::json VaeTrainConfig::to_json() const {
  return {{"p", p},           {"c", c},
          {"steps", steps},   {"batch_frames", batch_frames},
          {"lr", lr},         {"kl_weight", kl_weight},
          {"seed", seed},     {"log_every", log_every}};
}

std::unique_ptr<Autoencoder> train_vae(const std::vector<std::string>& clip_paths,
                                       const VaeTrainConfig& cfg, const std::string& out_path) {
  if (clip_paths.empty()) throw ConfigError("train_vae: no clips given");
  // Small load cache; clips are revisited many times across steps.
  std::map<std::size_t, VideoTensor> cache;
  auto get_clip = [&](std::size_t idx) -> const VideoTensor& {
    auto it = cache.find(idx);
    if (it != cache.end()) return it->second;
    if (cache.size() >= 256) cache.clear();
    return cache.emplace(idx, load_video(clip_paths[idx])).first->second;
  };

  const VideoTensor& first = get_clip(0);
  const int h = first.height(), w = first.width(), ch = first.channels();
  auto vae = std::make_unique<ConvVae>(cfg.p, cfg.c, ch, cfg.seed);
  const int lh = h / cfg.p, lw = w / cfg.p;
  const Eigen::Index cols = static_cast<Eigen::Index>(h) * w * ch;

  Rng root(cfg.seed);
  Rng pick_rng = root.child(1);
  Rng eps_rng = root.child(2);
  Adam opt(cfg.lr);

  std::printf("train_vae: %zu clips, %dx%dx%d frames, p=%d c=%d, %zu params\n", clip_paths.size(),
              h, w, ch, cfg.p, cfg.c, vae->param_count());
  for (int step = 0; step < cfg.steps; ++step) {
    Eigen::MatrixXd batch(cfg.batch_frames, cols);
    for (int b = 0; b < cfg.batch_frames; ++b) {
      const VideoTensor& clip = get_clip(pick_rng.below(clip_paths.size()));
      if (clip.height() != h || clip.width() != w || clip.channels() != ch)
        throw ShapeError("train_vae: clip shapes differ across dataset");
      const std::size_t fr = pick_rng.below(static_cast<std::size_t>(clip.frames()));
      const double* src = clip.data() + fr * cols;
      for (Eigen::Index i = 0; i < cols; ++i) batch(b, i) = src[i];
    }

    vae->params().zero_grads();
    auto [mu, lv] = vae->encode_raw(batch, h, w);
    Eigen::MatrixXd eps(mu.rows(), mu.cols());
    for (Eigen::Index r = 0; r < eps.rows(); ++r)
      for (Eigen::Index i = 0; i < eps.cols(); ++i) eps(r, i) = eps_rng.normal();
    const Eigen::MatrixXd std_half = (0.5 * lv).array().exp().matrix();
    Eigen::MatrixXd z = mu + std_half.cwiseProduct(eps);
    Eigen::MatrixXd xr = vae->decode_raw(z, lh, lw);

    const double n_rec = static_cast<double>(xr.size());
    const double n_lat = static_cast<double>(mu.size());
    Eigen::MatrixXd resid = xr - batch;
    const double rec_loss = resid.squaredNorm() / n_rec;
    const double kl =
        0.5 * (mu.array().square() + lv.array().exp() - 1.0 - lv.array()).sum() / n_lat;
    const double loss = rec_loss + cfg.kl_weight * kl;
    if (!std::isfinite(loss))
      throw DivergenceError("train_vae: non-finite loss at step " + std::to_string(step));

    Eigen::MatrixXd dxr = (2.0 / n_rec) * resid;
    Eigen::MatrixXd dz = vae->decode_raw_backward(dxr, true);
    Eigen::MatrixXd dmu = dz + (cfg.kl_weight / n_lat) * mu;
    Eigen::MatrixXd dlv = 0.5 * dz.cwiseProduct(eps).cwiseProduct(std_half) +
                          (0.5 * cfg.kl_weight / n_lat) * (lv.array().exp() - 1.0).matrix();
    vae->encode_raw_backward(dmu, dlv, true);
    opt.step(vae->params());

    if (cfg.log_every > 0 && (step % cfg.log_every == 0 || step == cfg.steps - 1)) {
      const double psnr = rec_loss < 1e-10 ? 100.0 : 10.0 * std::log10(1.0 / rec_loss);
      std::printf("train_vae: step %d loss %.6f rec_psnr %.2f kl %.4f\n", step, loss, psnr, kl);
      std::fflush(stdout);
    }
  }

  // Measure per-channel latent statistics on the mean path and fold them in.
  Rng stat_rng = root.child(3);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(cfg.c), sumsq = Eigen::VectorXd::Zero(cfg.c);
  const int stat_frames = 256;
  std::size_t count = 0;
  for (int s = 0; s < stat_frames; ++s) {
    const VideoTensor& clip = get_clip(stat_rng.below(clip_paths.size()));
    const std::size_t fr = stat_rng.below(static_cast<std::size_t>(clip.frames()));
    Eigen::MatrixXd one(1, cols);
    const double* src = clip.data() + fr * cols;
    for (Eigen::Index i = 0; i < cols; ++i) one(0, i) = src[i];
    auto [mu, lv] = vae->encode_raw(one, h, w);
    (void)lv;
    for (Eigen::Index i = 0; i < mu.cols(); ++i) {
      const int cch = static_cast<int>(i % cfg.c);
      sum(cch) += mu(0, i);
      sumsq(cch) += mu(0, i) * mu(0, i);
    }
    count += static_cast<std::size_t>(mu.cols()) / cfg.c;
  }
  Eigen::VectorXd shift(cfg.c), scale(cfg.c);
  for (int j = 0; j < cfg.c; ++j) {
    const double mean = sum(j) / static_cast<double>(count);
    const double var = sumsq(j) / static_cast<double>(count) - mean * mean;
    shift(j) = mean;
    scale(j) = std::sqrt(std::max(var, 1e-12));
  }
  vae->set_latent_stats(shift, scale);
  vae->save(out_path);
  std::printf("train_vae: saved %s\n", out_path.c_str());
  return Autoencoder::load(out_path);
}

}  // namespace dvsr
