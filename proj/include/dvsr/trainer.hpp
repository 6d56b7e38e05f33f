// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "dvsr/autoencoder.hpp"
#include "dvsr/denoiser.hpp"
#include "dvsr/rng.hpp"
#include "dvsr/schedule.hpp"
#include "dvsr/tensor.hpp"

namespace dvsr {

/// Bouncing-digit toy world: grayscale canvas, a few digit glyphs translating
/// with constant velocity and reflecting off the borders.
struct WorldConfig {
  int height = 64;
  int width = 64;
  int frames = 10;
  int sprites_min = 1;
  int sprites_max = 2;
  double speed_min = 1.0;
  double speed_max = 3.0;
  std::uint64_t seed = 1;

  void validate() const;
  static WorldConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// One moving glyph; position is the top-left corner of its bitmap in
/// real-valued pixels, rounded only at render time.
struct Sprite {
  int glyph = 0;
  double x = 0.0, y = 0.0;
  double vx = 0.0, vy = 0.0;
};

/// Bundled digit bitmaps (no external dataset dependency).
int glyph_size();
std::vector<double> glyph_bitmap(int digit);  // row-major glyph_size()^2, values in [0,1]

/// One physics step: translate, then reflect off walls so the sprite's
/// bounding box stays fully inside the canvas (angle of incidence equals
/// angle of reflection per axis).
void advance_sprite(Sprite& s, const WorldConfig& w);

/// Renders the sprites over `frames` steps with additive clamped composition.
VideoTensor render_clip(const WorldConfig& w, std::vector<Sprite> sprites);

/// Samples sprites from the config's ranges and renders them. Deterministic
/// given the rng state.
VideoTensor generate_clip(const WorldConfig& w, Rng& rng);

/// Writes clip_%06d.vten files plus manifest.json; clip i is generated from
/// the seed's child stream i, so regeneration is bit-identical per clip.
std::vector<std::string> make_dataset(const WorldConfig& w, int n_clips, const std::string& dir);
/// Reads manifest.json and returns the clip paths (validating existence).
std::vector<std::string> list_dataset(const std::string& dir, WorldConfig* world_out = nullptr);

struct TrainConfig {
  int batch = 4;
  int steps = 1000;
  double lr = 1e-4;
  double ema_decay = 0.999;
  std::uint64_t seed = 1;
  int log_every = 50;
  int ckpt_every = 500;
  NoiseSchedule schedule;  // built with make_schedule
  std::string ae_path;     // recorded in checkpoint metadata

  void validate() const;
  static TrainConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct TrainResult {
  int steps_done = 0;
  double final_loss = 0.0;
  std::string ckpt_path, ema_path, log_path;
};

/// Latent-space noise-matching training of the denoiser against a frozen
/// autoencoder: uniform timesteps, mean-squared error to the drawn noise,
/// EMA shadow weights, per-step loss log (CSV), periodic checkpoints.
/// Deterministic given seeds; each step uses the seed's child stream, so a
/// resumed run replays the same draws it would have seen uninterrupted.
/// On a non-finite loss the last good weights are saved and DivergenceError
/// is thrown. Resume restarts optimizer moments and the EMA from the saved
/// weights (optimizer state is not checkpointed).
TrainResult train_denoiser(const std::vector<std::string>& clip_paths, Autoencoder& ae,
                           const DenoiserConfig& dcfg, const TrainConfig& tcfg,
                           const std::string& out_dir, bool resume = false);

/// Full ancestral reverse pass from pure noise, then decode and clamp.
std::vector<VideoTensor> sample_unconditional(Denoiser& den, Autoencoder& ae,
                                              const NoiseSchedule& ns, int n, int frames,
                                              int height, int width, std::uint64_t seed);

}  // namespace dvsr
