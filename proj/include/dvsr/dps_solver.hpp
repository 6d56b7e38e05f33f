// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dvsr/autoencoder.hpp"
#include "dvsr/degradation.hpp"
#include "dvsr/denoiser.hpp"
#include "dvsr/schedule.hpp"
#include "dvsr/tensor.hpp"

namespace dvsr {

/// Guided reverse-diffusion configuration.
struct SolverConfig {
  enum class Policy { residual, fixed };

  int steps = 0;        // must equal the schedule's T
  double zeta = 1.0;    // guidance scale; 0 turns guidance off
  Policy policy = Policy::residual;
  double grad_clip = 0.0;  // L2 clip on the guidance gradient; <= 0 disables
  std::uint64_t seed = 0;
  bool frozen_denoiser = false;  // ablation: drop the denoiser term of the chain
  int save_x0_every = 0;         // > 0: snapshot decoded x0_hat at this step stride

  void validate() const;
  static SolverConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct StepRecord {
  int step = 0;          // timestep t of this iteration (T-1 .. 0)
  double residual = 0.0;  // L2 data-fidelity residual |Y - Y_hat| at step entry
  double grad_norm = 0.0;  // L2 norm of the applied guidance gradient (post-clip)
  double eta = 0.0;
};

struct SolveTrace {
  std::vector<StepRecord> records;
  std::vector<std::pair<int, VideoTensor>> x0_snapshots;  // (step, decoded x0_hat)

  void save_csv(const std::string& path) const;  // columns step,residual,grad_norm,eta
};

struct GuidanceResult {
  LatentVideo grad;      // d |Y - Y_hat|^2 / d Z_t
  double residual_l2 = 0.0;
  LatentVideo z0_hat;
};

/// Gradient of the squared data-fidelity residual with respect to Z_t through
/// prediction of the clean latent, decoding, and degradation. The full chain
/// differentiates through the noise predictor; frozen treats it as constant.
/// eps_hat, when given, must be model.eps(z_t, t) and skips recomputing it.
GuidanceResult guidance_gradient(const LatentVideo& z_t, int t, const Observation& y,
                                 const DegradationSpec& spec, ScoreModel& model, Autoencoder& ae,
                                 const NoiseSchedule& ns, bool frozen,
                                 const LatentVideo* eps_hat = nullptr);

/// Restores the full video from a degraded observation set by ancestral
/// reverse diffusion with per-step guidance:
///   z' = ancestral_step(z_t, x0_hat(z_t)); z_{t-1} = z' - eta_t * grad.
/// eta_t is zeta (fixed policy) or zeta / (residual + 1e-8) (residual policy).
/// Deterministic given (y, spec, weights, cfg). Throws DivergenceError when
/// the residual stays above 10x its initial value for 50 consecutive steps;
/// the partial trace is stored in *partial_out (when given) before throwing.
std::pair<VideoTensor, SolveTrace> solve(const Observation& y, const DegradationSpec& spec,
                                         ScoreModel& model, Autoencoder& ae,
                                         const NoiseSchedule& ns, const SolverConfig& cfg,
                                         SolveTrace* partial_out = nullptr);

}  // namespace dvsr
