// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include <json.hpp>

#include "dvsr/rng.hpp"

namespace dvsr {

/// Variance-preserving discrete diffusion schedule with linear beta spacing.
///
/// Arrays are zero-based over t in [0, T). The step before the first index
/// uses the convention alpha_bar_prev(0) = 1, which makes sigma[0] = 0 and
/// turns the final reverse step into a clean handoff of x0_hat.
struct NoiseSchedule {
  int T = 0;
  double beta_min = 0.0, beta_max = 0.0;
  std::vector<double> beta;       // noise rate per step
  std::vector<double> alpha;      // 1 - beta
  std::vector<double> alpha_bar;  // running product of alpha
  std::vector<double> sigma;      // ancestral step noise std (posterior choice)

  double alpha_bar_prev(int t) const { return t == 0 ? 1.0 : alpha_bar[t - 1]; }

  /// Coefficients of the ancestral posterior-mean combination
  /// z'_{t-1} = c1(t) z_t + c2(t) x0_hat + sigma[t] eps.
  double c1(int t) const {
    return std::sqrt(alpha[t]) * (1.0 - alpha_bar_prev(t)) / (1.0 - alpha_bar[t]);
  }
  double c2(int t) const {
    // at t = 0 the formula reduces algebraically to beta_0/(1 - alpha_bar_0) = 1;
    // evaluating it in floating point would be off by an ulp, so return 1 exactly
    if (t == 0) return 1.0;
    return std::sqrt(alpha_bar_prev(t)) * beta[t] / (1.0 - alpha_bar[t]);
  }

  nlohmann::json to_json() const;
  static NoiseSchedule from_json(const nlohmann::json& j);
};

/// Linear beta schedule. Requires T >= 2 and 0 < beta_min <= beta_max < 1;
/// throws ConfigError otherwise.
NoiseSchedule make_schedule(int T, double beta_min, double beta_max);

/// Forward noising with a caller-supplied epsilon (deterministic):
/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
std::vector<double> forward_noise_with(const std::vector<double>& x0, int t,
                                       const NoiseSchedule& ns, const std::vector<double>& eps);

/// Forward noising with eps drawn from rng; eps is written to *eps_out when
/// non-null (training targets need it).
std::vector<double> forward_noise(const std::vector<double>& x0, int t, const NoiseSchedule& ns,
                                  Rng& rng, std::vector<double>* eps_out = nullptr);

/// Clean-signal estimate from a noisy iterate and the score at it:
/// x0_hat = (x_t + (1 - alpha_bar_t) * score) / sqrt(alpha_bar_t).
std::vector<double> predict_x0(const std::vector<double>& x_t, int t, const NoiseSchedule& ns,
                               const std::vector<double>& score);

/// Converts a noise prediction to score form: score = -eps / sqrt(1 - alpha_bar_t).
std::vector<double> eps_to_score(const std::vector<double>& eps, int t, const NoiseSchedule& ns);

/// One ancestral reverse step; valid for t >= 0. rng may be null for the
/// deterministic (noise-zeroed) variant; sigma[0] = 0 suppresses noise at the
/// final step either way.
std::vector<double> ancestral_step(const std::vector<double>& z_t,
                                   const std::vector<double>& x0_hat, int t,
                                   const NoiseSchedule& ns, Rng* rng);

}  // namespace dvsr
