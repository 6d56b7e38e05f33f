// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
//
// Command line entry point. Every subcommand maps the library error classes
// to documented exit codes: config=2, shape=3, divergence=4, io=5.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dvsr/autoencoder.hpp"
#include "dvsr/container.hpp"
#include "dvsr/degradation.hpp"
#include "dvsr/denoiser.hpp"
#include "dvsr/dps_solver.hpp"
#include "dvsr/errors.hpp"
#include "dvsr/experiments.hpp"
#include "dvsr/metrics.hpp"
#include "dvsr/schedule.hpp"
#include "dvsr/trainer.hpp"
#include "dvsr/util.hpp"

namespace fs = std::filesystem;
using namespace dvsr;

namespace {

NoiseSchedule schedule_from_meta(const nlohmann::json& meta) {
  if (!meta.contains("schedule"))
    throw FormatError("checkpoint metadata lacks the training schedule");
  return NoiseSchedule::from_json(meta.at("schedule"));
}

int cmd_make_dataset(const std::string& config, int n, const std::string& out) {
  WorldConfig w = WorldConfig::from_json(load_json(config));
  const auto paths = make_dataset(w, n, out);
  std::printf("make-dataset: wrote %zu clips under %s\n", paths.size(), out.c_str());
  return 0;
}

int cmd_train_vae(const std::string& config, const std::string& data, const std::string& out) {
  VaeTrainConfig cfg = VaeTrainConfig::from_json(load_json(config));
  const auto clips = list_dataset(data);
  auto ae = train_vae(clips, cfg, out);
  std::printf("train-vae: saved %s (codec %s)\n", out.c_str(), ae->codec_id().c_str());
  return 0;
}

int cmd_train(const std::string& config, const std::string& data, const std::string& out,
              bool resume) {
  const nlohmann::json j = load_json(config);
  if (!j.contains("model")) throw ConfigError("train config needs a model section");
  if (!j.contains("train")) throw ConfigError("train config needs a train section");
  DenoiserConfig dcfg = DenoiserConfig::from_json(j.at("model"));
  TrainConfig tcfg = TrainConfig::from_json(j.at("train"));
  if (tcfg.ae_path.empty()) throw ConfigError("train config needs train.ae_path");
  auto ae = Autoencoder::load(tcfg.ae_path);
  const auto clips = list_dataset(data);
  TrainResult res = train_denoiser(clips, *ae, dcfg, tcfg, out, resume);
  std::printf("train: %d steps, final loss %s, checkpoints %s and %s\n", res.steps_done,
              format_double(res.final_loss).c_str(), res.ckpt_path.c_str(),
              res.ema_path.c_str());
  return 0;
}

int cmd_degrade(const std::string& x_path, const std::string& spec_path, std::uint64_t seed,
                const std::string& out) {
  VideoTensor x = load_video(x_path);
  DegradationSpec spec = DegradationSpec::from_json(load_json(spec_path));
  Observation y;
  if (spec.noise_sigma > 0.0) {
    Rng rng(seed);
    y = degrade(x, spec, &rng);
  } else {
    y = degrade(x, spec);
  }
  save_tensor4(out, {y.frames.frames(), y.frames.height(), y.frames.width(),
                     y.frames.channels()},
               y.frames.values());
  std::printf("degrade: wrote %s (%d observed frames at %dx%d)\n", out.c_str(),
              y.frames.frames(), y.frames.height(), y.frames.width());
  return 0;
}

int cmd_restore(const std::string& y_path, const std::string& spec_path,
                const std::string& ckpt, const std::string& ae_path, double zeta,
                const std::string& policy, int steps, std::uint64_t seed,
                const std::string& out, int save_x0_every, bool frozen, double grad_clip,
                bool png) {
  DegradationSpec spec = DegradationSpec::from_json(load_json(spec_path));
  auto [shape, data] = load_tensor4(y_path);
  Observation y;
  y.frame_indices = spec.observed_indices();
  y.frames = VideoTensor(shape[0], shape[1], shape[2], shape[3]);
  y.frames.values() = std::move(data);

  nlohmann::json meta;
  auto den = Denoiser::load(ckpt, &meta);
  auto ae = Autoencoder::load(ae_path);
  if (meta.contains("ae_codec") && meta.at("ae_codec").get<std::string>() != ae->codec_id())
    throw CodecError("checkpoint was trained against autoencoder " +
                     meta.at("ae_codec").get<std::string>() + ", got " + ae->codec_id());
  const NoiseSchedule ns = schedule_from_meta(meta);

  SolverConfig cfg;
  cfg.steps = steps > 0 ? steps : ns.T;
  cfg.zeta = zeta;
  cfg.policy = SolverConfig::from_json({{"steps", cfg.steps}, {"zeta", zeta},
                                        {"policy", policy}})
                   .policy;
  cfg.seed = seed;
  cfg.save_x0_every = save_x0_every;
  cfg.frozen_denoiser = frozen;
  cfg.grad_clip = grad_clip;
  cfg.validate();

  fs::create_directories(out);
  SolveTrace partial;
  try {
    auto [restored, trace] = solve(y, spec, *den, *ae, ns, cfg, &partial);
    save_video(restored, out + "/x_hat.vten");
    trace.save_csv(out + "/trace.csv");
    for (std::size_t i = 0; i < trace.x0_snapshots.size(); ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "/x0_step_%04d.vten", trace.x0_snapshots[i].first);
      save_video(trace.x0_snapshots[i].second, out + name);
    }
    if (png) export_png_frames(restored, out + "/png");
    std::printf("restore: wrote %s/x_hat.vten (T=%d, final residual %s)\n", out.c_str(),
                cfg.steps, format_double(trace.records.back().residual).c_str());
  } catch (const DivergenceError&) {
    // Leave the partial trace behind for diagnosis, then report divergence.
    partial.save_csv(out + "/trace.csv");
    throw;
  }
  return 0;
}

int cmd_sample(const std::string& ckpt, const std::string& ae_path, int n, int frames,
               int height, int width, std::uint64_t seed, const std::string& out, bool png) {
  nlohmann::json meta;
  auto den = Denoiser::load(ckpt, &meta);
  auto ae = Autoencoder::load(ae_path);
  const NoiseSchedule ns = schedule_from_meta(meta);
  const auto clips = sample_unconditional(*den, *ae, ns, n, frames, height, width, seed);
  fs::create_directories(out);
  for (std::size_t i = 0; i < clips.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "/sample_%03zu.vten", i);
    save_video(clips[i], out + name);
    if (png) {
      std::snprintf(name, sizeof(name), "/png_%03zu", i);
      export_png_frames(clips[i], out + name);
    }
  }
  std::printf("sample: wrote %d clips under %s\n", n, out.c_str());
  return 0;
}

int cmd_metrics(const std::string& a_path, const std::string& b_path, const std::string& csv) {
  const VideoTensor a = load_video(a_path).clamped01();
  const VideoTensor b = load_video(b_path).clamped01();
  MetricReport rep = evaluate_metrics(a, b);
  for (std::size_t f = 0; f < rep.psnr_frames.size(); ++f)
    std::printf("frame %zu: psnr %s ssim %s\n", f, format_double(rep.psnr_frames[f]).c_str(),
                format_double(rep.ssim_frames[f]).c_str());
  std::printf("mean: psnr %s ssim %s\n", format_double(rep.psnr_mean).c_str(),
              format_double(rep.ssim_mean).c_str());
  if (!csv.empty()) {
    std::ofstream outf(csv, std::ios::binary);
    if (!outf) throw IoError("cannot write " + csv);
    outf << "frame,psnr,ssim\n";
    for (std::size_t f = 0; f < rep.psnr_frames.size(); ++f)
      outf << f << ',' << format_double(rep.psnr_frames[f]) << ','
           << format_double(rep.ssim_frames[f]) << "\n";
    outf << "mean," << format_double(rep.psnr_mean) << ',' << format_double(rep.ssim_mean)
         << "\n";
  }
  return 0;
}

int cmd_export_png(const std::string& in, const std::string& out) {
  export_png_frames(load_video(in), out);
  std::printf("export-png: wrote frames under %s\n", out.c_str());
  return 0;
}

int cmd_experiment_run(const std::string& config, const std::string& out) {
  ExperimentConfig cfg = ExperimentConfig::from_json(load_json(config));
  SweepResult res = run_experiment(cfg, out);
  std::printf("experiment: %zu records, report under %s\n", res.records.size(), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"diffusion-guided video restoration toolkit"};
  app.require_subcommand(0, 1);

  std::string config, data, out, x_path, y_path, spec_path, ckpt, ae_path, a_path, b_path,
      csv, in_path;
  std::string policy = "residual";
  int n = 4, steps = 0, save_x0_every = 0, frames = 10, height = 64, width = 64;
  double zeta = 1.0, grad_clip = 0.0;
  std::uint64_t seed = 0;
  bool resume = false, frozen = false, png = false;

  auto* mk = app.add_subcommand("make-dataset", "generate a toy bouncing-digit dataset");
  mk->add_option("--config", config, "world config json")->required();
  mk->add_option("--n", n, "number of clips")->required();
  mk->add_option("--out", out, "output directory")->required();

  auto* tv = app.add_subcommand("train-vae", "train the frame autoencoder");
  tv->add_option("--config", config, "vae train config json")->required();
  tv->add_option("--data", data, "dataset directory")->required();
  tv->add_option("--out", out, "output checkpoint path")->required();

  auto* tr = app.add_subcommand("train", "train the latent video denoiser");
  tr->add_option("--config", config, "train config json (model + train sections)")->required();
  tr->add_option("--data", data, "dataset directory")->required();
  tr->add_option("--out", out, "checkpoint directory")->required();
  tr->add_flag("--resume", resume, "resume from the last checkpoint in --out");

  auto* dg = app.add_subcommand("degrade", "apply the degradation model to a clip");
  dg->add_option("--x", x_path, "input clip .vten")->required();
  dg->add_option("--spec", spec_path, "degradation spec json")->required();
  dg->add_option("--seed", seed, "observation noise seed");
  dg->add_option("--out", out, "output observation .vten")->required();

  auto* rs = app.add_subcommand("restore", "restore a video from degraded observations");
  rs->add_option("--y", y_path, "observation .vten")->required();
  rs->add_option("--spec", spec_path, "degradation spec json")->required();
  rs->add_option("--ckpt", ckpt, "denoiser checkpoint")->required();
  rs->add_option("--ae", ae_path, "autoencoder checkpoint")->required();
  rs->add_option("--zeta", zeta, "guidance scale");
  rs->add_option("--policy", policy, "step size policy: residual|fixed");
  rs->add_option("--steps", steps, "reverse steps (default: checkpoint schedule T)");
  rs->add_option("--seed", seed, "sampler seed");
  rs->add_option("--out", out, "output directory")->required();
  rs->add_option("--save-x0-every", save_x0_every, "snapshot stride for decoded x0 estimates");
  rs->add_option("--grad-clip", grad_clip, "L2 clip on the guidance gradient (0 = off)");
  rs->add_flag("--frozen", frozen, "freeze the denoiser in the guidance chain (ablation)");
  rs->add_flag("--png", png, "also export restored frames as PNG");

  auto* sm = app.add_subcommand("sample", "draw unconditional samples from the model");
  sm->add_option("--ckpt", ckpt, "denoiser checkpoint")->required();
  sm->add_option("--ae", ae_path, "autoencoder checkpoint")->required();
  sm->add_option("--n", n, "number of clips");
  sm->add_option("--frames", frames, "frames per clip");
  sm->add_option("--height", height, "clip height");
  sm->add_option("--width", width, "clip width");
  sm->add_option("--seed", seed, "sampler seed");
  sm->add_option("--out", out, "output directory")->required();
  sm->add_flag("--png", png, "also export PNG frames");

  auto* mt = app.add_subcommand("metrics", "psnr/ssim between two clips");
  mt->add_option("--a", a_path, "first clip .vten")->required();
  mt->add_option("--b", b_path, "second clip .vten")->required();
  mt->add_option("--csv", csv, "also write per-frame metrics csv");

  auto* ep = app.add_subcommand("export-png", "export a clip as PNG frames");
  ep->add_option("--in", in_path, "input .vten")->required();
  ep->add_option("--out", out, "output directory")->required();

  auto* ex = app.add_subcommand("experiment", "experiment harness");
  auto* exr = ex->add_subcommand("run", "run a declarative sweep");
  exr->add_option("--config", config, "experiment config json")->required();
  exr->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // usage problems are config errors
  }

  try {
    if (mk->parsed()) return cmd_make_dataset(config, n, out);
    if (tv->parsed()) return cmd_train_vae(config, data, out);
    if (tr->parsed()) return cmd_train(config, data, out, resume);
    if (dg->parsed()) return cmd_degrade(x_path, spec_path, seed, out);
    if (rs->parsed())
      return cmd_restore(y_path, spec_path, ckpt, ae_path, zeta, policy, steps, seed, out,
                         save_x0_every, frozen, grad_clip, png);
    if (sm->parsed()) return cmd_sample(ckpt, ae_path, n, frames, height, width, seed, out, png);
    if (mt->parsed()) return cmd_metrics(a_path, b_path, csv);
    if (ep->parsed()) return cmd_export_png(in_path, out);
    if (ex->parsed() && exr->parsed()) return cmd_experiment_run(config, out);
    std::puts(app.help().c_str());
    return 0;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "shape error: %s\n", e.what());
    return 3;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "divergence: %s\n", e.what());
    return 4;
  } catch (const Error& e) {
    // Io, format, dtype and codec problems all concern artifact files.
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 5;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
