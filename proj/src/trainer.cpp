// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#include "dvsr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "dvsr/container.hpp"
#include "dvsr/errors.hpp"
#include "dvsr/util.hpp"

namespace fs = std::filesystem;

namespace dvsr {
namespace {

constexpr int kGlyph = 12;

// 12x12 digit bitmaps; '#' is full intensity.
const char* const kGlyphRows[10][kGlyph] = {
    {"            ", "   ######   ", "  ########  ", "  ##    ##  ", "  ##    ##  ",
     "  ##    ##  ", "  ##    ##  ", "  ##    ##  ", "  ##    ##  ", "  ########  ",
     "   ######   ", "            "},
    {"            ", "     ##     ", "    ###     ", "   ####     ", "     ##     ",
     "     ##     ", "     ##     ", "     ##     ", "     ##     ", "  ########  ",
     "  ########  ", "            "},
    {"            ", "   ######   ", "  ########  ", "  ##    ##  ", "        ##  ",
     "       ##   ", "     ###    ", "    ##      ", "   ##       ", "  ########  ",
     "  ########  ", "            "},
    {"            ", "  ########  ", "  ########  ", "       ##   ", "      ##    ",
     "    ####    ", "      ###   ", "        ##  ", "  ##    ##  ", "  ########  ",
     "   ######   ", "            "},
    {"            ", "      ##    ", "     ###    ", "    ####    ", "   ## ##    ",
     "  ##  ##    ", "  ########  ", "  ########  ", "      ##    ", "      ##    ",
     "      ##    ", "            "},
    {"            ", "  ########  ", "  ########  ", "  ##        ", "  ##        ",
     "  #######   ", "  ########  ", "        ##  ", "  ##    ##  ", "  ########  ",
     "   ######   ", "            "},
    {"            ", "   #######  ", "  ########  ", "  ##        ", "  ##        ",
     "  #######   ", "  ########  ", "  ##    ##  ", "  ##    ##  ", "  ########  ",
     "   ######   ", "            "},
    {"            ", "  ########  ", "  ########  ", "        ##  ", "       ##   ",
     "      ##    ", "     ##     ", "    ##      ", "    ##      ", "    ##      ",
     "    ##      ", "            "},
    {"            ", "   ######   ", "  ##    ##  ", "  ##    ##  ", "  ##    ##  ",
     "   ######   ", "  ##    ##  ", "  ##    ##  ", "  ##    ##  ", "  ##    ##  ",
     "   ######   ", "            "},
    {"            ", "   ######   ", "  ########  ", "  ##    ##  ", "  ##    ##  ",
     "  ########  ", "   #######  ", "        ##  ", "        ##  ", "  ########  ",
     "  #######   ", "            "}};

std::string clip_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "clip_%06d.vten", i);
  return buf;
}

}  // namespace

int glyph_size() { return kGlyph; }

std::vector<double> glyph_bitmap(int digit) {
  if (digit < 0 || digit > 9) throw ConfigError("glyph_bitmap: digit must be in [0, 9]");
  std::vector<double> g(static_cast<std::size_t>(kGlyph) * kGlyph, 0.0);
  for (int r = 0; r < kGlyph; ++r)
    for (int c = 0; c < kGlyph; ++c)
      if (kGlyphRows[digit][r][c] == '#') g[static_cast<std::size_t>(r) * kGlyph + c] = 1.0;
  return g;
}

void WorldConfig::validate() const {
  if (height < kGlyph || width < kGlyph)
    throw ConfigError("world: canvas smaller than the " + std::to_string(kGlyph) +
                      "px sprite bitmap");
  if (frames < 1) throw ConfigError("world: frames must be >= 1");
  if (sprites_min < 1 || sprites_max < sprites_min)
    throw ConfigError("world: sprite count range invalid");
  if (speed_min < 0.0 || speed_max < speed_min)
    throw ConfigError("world: speed range invalid");
}

WorldConfig WorldConfig::from_json(const nlohmann::json& j) {
  WorldConfig w;
  w.height = json_get<int>(j, "height", w.height);
  w.width = json_get<int>(j, "width", w.width);
  w.frames = json_get<int>(j, "frames", w.frames);
  w.sprites_min = json_get<int>(j, "sprites_min", w.sprites_min);
  w.sprites_max = json_get<int>(j, "sprites_max", w.sprites_max);
  w.speed_min = json_get<double>(j, "speed_min", w.speed_min);
  w.speed_max = json_get<double>(j, "speed_max", w.speed_max);
  w.seed = json_get<std::uint64_t>(j, "seed", w.seed);
  w.validate();
  return w;
}

nlohmann::json WorldConfig::to_json() const {
  return {{"height", height},           {"width", width},
          {"frames", frames},           {"sprites_min", sprites_min},
          {"sprites_max", sprites_max}, {"speed_min", speed_min},
          {"speed_max", speed_max},     {"seed", seed}};
}

void advance_sprite(Sprite& s, const WorldConfig& w) {
  const double max_x = static_cast<double>(w.width - kGlyph);
  const double max_y = static_cast<double>(w.height - kGlyph);
  s.x += s.vx;
  s.y += s.vy;
  auto reflect = [](double& pos, double& vel, double max) {
    if (max <= 0.0) {  // sprite exactly fills the axis; nowhere to move
      pos = 0.0;
      vel = 0.0;
      return;
    }
    while (pos < 0.0 || pos > max) {
      if (pos < 0.0) {
        pos = -pos;
        vel = -vel;
      } else {
        pos = 2.0 * max - pos;
        vel = -vel;
      }
    }
  };
  reflect(s.x, s.vx, max_x);
  reflect(s.y, s.vy, max_y);
}

VideoTensor render_clip(const WorldConfig& w, std::vector<Sprite> sprites) {
  w.validate();
  for (const Sprite& s : sprites)
    if (s.glyph < 0 || s.glyph > 9) throw ConfigError("render_clip: glyph out of range");
  VideoTensor v(w.frames, w.height, w.width, 1);
  std::vector<std::vector<double>> bitmaps;
  bitmaps.reserve(sprites.size());
  for (const Sprite& s : sprites) bitmaps.push_back(glyph_bitmap(s.glyph));

  for (int f = 0; f < w.frames; ++f) {
    for (std::size_t i = 0; i < sprites.size(); ++i) {
      const Sprite& s = sprites[i];
      const int px = static_cast<int>(std::lround(s.x));
      const int py = static_cast<int>(std::lround(s.y));
      for (int gy = 0; gy < kGlyph; ++gy)
        for (int gx = 0; gx < kGlyph; ++gx) {
          const double val = bitmaps[i][static_cast<std::size_t>(gy) * kGlyph + gx];
          if (val > 0.0) v.at(f, py + gy, px + gx, 0) += val;
        }
    }
    for (int y = 0; y < w.height; ++y)
      for (int x = 0; x < w.width; ++x) v.at(f, y, x, 0) = std::min(1.0, v.at(f, y, x, 0));
    for (Sprite& s : sprites) advance_sprite(s, w);
  }
  return v;
}

VideoTensor generate_clip(const WorldConfig& w, Rng& rng) {
  w.validate();
  const int count =
      w.sprites_min + static_cast<int>(rng.below(
                          static_cast<std::uint64_t>(w.sprites_max - w.sprites_min) + 1));
  const double max_x = static_cast<double>(w.width - kGlyph);
  const double max_y = static_cast<double>(w.height - kGlyph);
  std::vector<Sprite> sprites;
  for (int i = 0; i < count; ++i) {
    Sprite s;
    s.glyph = static_cast<int>(rng.below(10));
    s.x = rng.uniform() * max_x;
    s.y = rng.uniform() * max_y;
    const double angle = rng.uniform() * 2.0 * std::numbers::pi;
    const double speed = w.speed_min + rng.uniform() * (w.speed_max - w.speed_min);
    s.vx = speed * std::cos(angle);
    s.vy = speed * std::sin(angle);
    sprites.push_back(s);
  }
  return render_clip(w, sprites);
}

std::vector<std::string> make_dataset(const WorldConfig& w, int n_clips, const std::string& dir) {
  w.validate();
  if (n_clips < 1) throw ConfigError("make_dataset: n_clips must be >= 1");
  fs::create_directories(dir);
  Rng root(w.seed);
  std::vector<std::string> paths;
  for (int i = 0; i < n_clips; ++i) {
    Rng child = root.child(static_cast<std::uint64_t>(i));
    VideoTensor clip = generate_clip(w, child);
    const fs::path p = fs::path(dir) / clip_name(i);
    save_video(clip, p.string());
    paths.push_back(p.string());
  }
  nlohmann::json manifest{{"world", w.to_json()},
                          {"n_clips", n_clips},
                          {"glyph_set", "builtin-12px-v1"},
                          {"format", "vten-f32-fhwc"}};
  save_json(manifest, (fs::path(dir) / "manifest.json").string());
  return paths;
}

std::vector<std::string> list_dataset(const std::string& dir, WorldConfig* world_out) {
  const nlohmann::json manifest = load_json((fs::path(dir) / "manifest.json").string());
  const int n = json_require<int>(manifest, "n_clips");
  if (world_out) *world_out = WorldConfig::from_json(manifest.at("world"));
  std::vector<std::string> paths;
  for (int i = 0; i < n; ++i) {
    const fs::path p = fs::path(dir) / clip_name(i);
    if (!fs::exists(p)) throw IoError("dataset clip missing: " + p.string());
    paths.push_back(p.string());
  }
  return paths;
}

void TrainConfig::validate() const {
  if (batch < 1 || steps < 1) throw ConfigError("train: batch and steps must be >= 1");
  if (lr <= 0.0) throw ConfigError("train: lr must be positive");
  if (ema_decay < 0.0 || ema_decay >= 1.0) throw ConfigError("train: ema_decay must be in [0, 1)");
  if (schedule.T < 2) throw ConfigError("train: schedule missing (T < 2)");
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.batch = json_get<int>(j, "batch", c.batch);
  c.steps = json_get<int>(j, "steps", c.steps);
  c.lr = json_get<double>(j, "lr", c.lr);
  c.ema_decay = json_get<double>(j, "ema_decay", c.ema_decay);
  c.seed = json_get<std::uint64_t>(j, "seed", c.seed);
  c.log_every = json_get<int>(j, "log_every", c.log_every);
  c.ckpt_every = json_get<int>(j, "ckpt_every", c.ckpt_every);
  if (!j.contains("schedule")) throw ConfigError("train config: missing 'schedule'");
  c.schedule = NoiseSchedule::from_json(j.at("schedule"));
  c.ae_path = json_get<std::string>(j, "ae_path", "");
  c.validate();
  return c;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"batch", batch},         {"steps", steps},           {"lr", lr},
          {"ema_decay", ema_decay}, {"seed", seed},             {"log_every", log_every},
          {"ckpt_every", ckpt_every}, {"schedule", schedule.to_json()}, {"ae_path", ae_path}};
}

TrainResult train_denoiser(const std::vector<std::string>& clip_paths, Autoencoder& ae,
                           const DenoiserConfig& dcfg, const TrainConfig& tcfg,
                           const std::string& out_dir, bool resume) {
  tcfg.validate();
  dcfg.validate();
  if (clip_paths.empty()) throw ConfigError("train_denoiser: no clips given");
  if (dcfg.latent_channels != ae.latent_channels())
    throw ConfigError("train_denoiser: denoiser latent_channels " +
                      std::to_string(dcfg.latent_channels) + " != autoencoder c " +
                      std::to_string(ae.latent_channels()));
  fs::create_directories(out_dir);
  const std::string ckpt_path = (fs::path(out_dir) / "denoiser.ckpt").string();
  const std::string ema_path = (fs::path(out_dir) / "denoiser_ema.ckpt").string();
  const std::string log_path = (fs::path(out_dir) / "train_log.csv").string();

  // Cheap dataset fingerprint for checkpoint provenance.
  std::string names;
  for (const auto& p : clip_paths) names += fs::path(p).filename().string() + "\n";
  const std::string dataset_hash = sha256_hex(names).substr(0, 16);

  std::unique_ptr<Denoiser> den;
  int start_step = 0;
  if (resume && fs::exists(ckpt_path)) {
    nlohmann::json meta;
    den = Denoiser::load(ckpt_path, &meta);
    start_step = json_get<int>(meta, "step", 0);
    std::printf("train: resuming from %s at step %d\n", ckpt_path.c_str(), start_step);
  } else {
    den = std::make_unique<Denoiser>(dcfg, tcfg.seed);
  }
  const NoiseSchedule& ns = tcfg.schedule;

  // Latent cache: clips are encoded once through the frozen autoencoder.
  std::vector<LatentVideo> latents(clip_paths.size());
  std::vector<char> cached(clip_paths.size(), 0);
  auto latent_of = [&](std::size_t i) -> const LatentVideo& {
    if (!cached[i]) {
      latents[i] = ae.encode(load_video(clip_paths[i]));
      if (latents[i].frames() > dcfg.max_frames)
        throw ShapeError("train_denoiser: clip has more frames than denoiser max_frames");
      cached[i] = 1;
    }
    return latents[i];
  };

  Adam opt(tcfg.lr);
  Ema ema(den->params(), tcfg.ema_decay);
  Rng root(tcfg.seed);

  std::ofstream log(log_path, resume && start_step > 0 ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot open " + log_path);
  if (!(resume && start_step > 0)) log << "step,loss\n";

  auto save_all = [&](int step, double loss) {
    nlohmann::json meta{{"step", step},
                        {"schedule", ns.to_json()},
                        {"dataset_hash", dataset_hash},
                        {"seed", tcfg.seed},
                        {"last_loss", loss},
                        {"ae_codec", ae.codec_id()},
                        {"ae_path", tcfg.ae_path}};
    den->save(ckpt_path, meta);
    Denoiser shadow(dcfg, 0);
    ema.copy_to(shadow.params());
    meta["ema"] = true;
    shadow.save(ema_path, meta);
  };

  double loss = 0.0;
  for (int step = start_step; step < tcfg.steps; ++step) {
    Rng srng = root.child(static_cast<std::uint64_t>(step));
    den->params().zero_grads();
    loss = 0.0;
    for (int b = 0; b < tcfg.batch; ++b) {
      const std::size_t idx = srng.below(clip_paths.size());
      const LatentVideo& z0 = latent_of(idx);
      const int t = static_cast<int>(srng.below(static_cast<std::uint64_t>(ns.T)));
      std::vector<double> eps(z0.size());
      for (double& e : eps) e = srng.normal();
      LatentVideo z_t(z0.frames(), z0.height(), z0.width(), z0.channels(), z0.compression(),
                      z0.codec_id());
      z_t.values() = forward_noise_with(z0.values(), t, ns, eps);

      LatentVideo pred = den->eps(z_t, t);
      LatentVideo cot = z0.like_zeros();
      double clip_loss = 0.0;
      const double n = static_cast<double>(pred.size());
      for (std::size_t i = 0; i < pred.size(); ++i) {
        const double r = pred.values()[i] - eps[i];
        clip_loss += r * r;
        cot.values()[i] = 2.0 * r / (n * tcfg.batch);
      }
      loss += clip_loss / n;
      den->backward(cot, true);
    }
    loss /= tcfg.batch;

    if (!std::isfinite(loss)) {
      // Weights are still the last good ones; the bad update was not applied.
      save_all(step, loss);
      throw DivergenceError("train_denoiser: non-finite loss at step " + std::to_string(step) +
                            "; last good checkpoint saved to " + ckpt_path);
    }
    opt.step(den->params());
    ema.update(den->params());

    log << step << "," << format_double(loss, 10) << "\n";
    if (tcfg.log_every > 0 && (step % tcfg.log_every == 0 || step == tcfg.steps - 1)) {
      std::printf("train: step %d loss %.6f\n", step, loss);
      std::fflush(stdout);
    }
    if ((tcfg.ckpt_every > 0 && (step + 1) % tcfg.ckpt_every == 0) || step == tcfg.steps - 1)
      save_all(step + 1, loss);
  }
  log.flush();

  TrainResult r;
  r.steps_done = tcfg.steps;
  r.final_loss = loss;
  r.ckpt_path = ckpt_path;
  r.ema_path = ema_path;
  r.log_path = log_path;
  return r;
}

std::vector<VideoTensor> sample_unconditional(Denoiser& den, Autoencoder& ae,
                                              const NoiseSchedule& ns, int n, int frames,
                                              int height, int width, std::uint64_t seed) {
  const int p = ae.p();
  if (height % p != 0 || width % p != 0)
    throw ShapeError("sample: output dims must be divisible by autoencoder p");
  const int lh = height / p, lw = width / p;
  Rng root(seed);
  std::vector<VideoTensor> out;
  for (int i = 0; i < n; ++i) {
    Rng rng = root.child(static_cast<std::uint64_t>(i));
    LatentVideo z(frames, lh, lw, ae.latent_channels(), p, ae.codec_id());
    for (double& v : z.values()) v = rng.normal();
    for (int t = ns.T - 1; t >= 0; --t) {
      LatentVideo pred = den.eps(z, t);
      std::vector<double> score = eps_to_score(pred.values(), t, ns);
      std::vector<double> x0 = predict_x0(z.values(), t, ns, score);
      z.values() = ancestral_step(z.values(), x0, t, ns, &rng);
    }
    out.push_back(ae.decode(z).clamped01());
  }
  return out;
}

}  // namespace dvsr
