// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "dvsr/autoencoder.hpp"
#include "dvsr/denoiser.hpp"
#include "dvsr/dps_solver.hpp"
#include "dvsr/schedule.hpp"
#include "dvsr/trainer.hpp"

namespace dvsr {

/// Declarative description of a restoration sweep on held-out clips.
/// Reference clips are generated from eval_world (child stream per clip);
/// its seed must differ from the training dataset's generator seed.
struct ExperimentConfig {
  std::string kind;  // frame-sweep | order-compare | blur-sweep
  WorldConfig eval_world;
  int n_clips = 5;
  std::vector<std::uint64_t> noise_seeds;  // solver seed per repetition
  std::vector<int> frame_counts;           // observed-frame counts k
  std::string order = "sequential";        // frame-sweep mask order
  std::uint64_t order_seed = 1;
  std::vector<double> sigma_h{2.0};
  std::vector<int> scales{4};
  double noise_sigma = 0.0;  // observation noise of the degradation
  SolverConfig solver;       // seed field is overridden per repetition

  // Artifact bindings; the harness never trains and refuses to run without
  // matching checkpoint hashes (checked by run_experiment).
  std::string ckpt_path, ae_path, train_manifest;
  std::string ckpt_sha256, ae_sha256;

  void validate() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct SweepRecord {
  int clip = 0;
  std::uint64_t seed = 0;
  std::string order;
  int k = 0;
  double sigma_h = 0.0;
  int scale = 1;
  double psnr_first = 0.0;  // first-frame PSNR, the headline reduction
  double psnr_mean = 0.0;
  double ssim = 0.0;
  std::vector<double> psnr_frames;
};

struct SweepResult {
  ExperimentConfig cfg;
  std::vector<SweepRecord> records;
};

/// Observed-frame mask for k of `frames` total. Sequential order observes
/// frames [0, k). Random order observes the first k entries of a permutation
/// drawn once from order_seed with frame 0 pinned first, so subsets are
/// nested across k (incremental addition) and k = 1 matches sequential.
std::vector<bool> sweep_frame_mask(const std::string& order, std::uint64_t order_seed, int k,
                                   int frames);

SweepResult run_frame_sweep(const ExperimentConfig& cfg, ScoreModel& model, Autoencoder& ae,
                            const NoiseSchedule& ns);
SweepResult run_order_compare(const ExperimentConfig& cfg, ScoreModel& model, Autoencoder& ae,
                              const NoiseSchedule& ns);
SweepResult run_blur_sweep(const ExperimentConfig& cfg, ScoreModel& model, Autoencoder& ae,
                           const NoiseSchedule& ns);

/// Writes results.csv (long format), summary.csv (mean/std aggregates over
/// clips x seeds), paired.csv (order-compare only) and a PSNR-vs-k line plot
/// with +-1 std error bars under out_dir. Idempotent: identical result gives
/// byte-identical files.
void emit_report(const SweepResult& result, const std::string& out_dir);

/// Full harness entry: validates provenance hashes against the checkpoint
/// and autoencoder files, enforces the held-out eval seed, loads the model
/// and its trained schedule, dispatches on kind, emits the report and
/// provenance.json. Never trains.
SweepResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

}  // namespace dvsr
