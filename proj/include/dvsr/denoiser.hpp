// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "dvsr/nn.hpp"
#include "dvsr/schedule.hpp"
#include "dvsr/tensor.hpp"

namespace dvsr {

/// Noise-prediction model interface: eps(z_t, t) estimates the standard
/// normal noise mixed into z_t, and eps_vjp gives the vector-Jacobian
/// product of that map with respect to z_t (used by guided sampling).
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;
  virtual LatentVideo eps(const LatentVideo& z_t, int t) = 0;
  virtual LatentVideo eps_vjp(const LatentVideo& z_t, int t, const LatentVideo& cot) = 0;
};

struct DenoiserConfig {
  int patch_size = 2;
  int embed_dim = 256;
  int depth = 4;  // number of spatial+temporal block pairs
  int heads = 4;
  int max_frames = 10;
  int time_dim = 64;
  int latent_channels = 4;

  void validate() const;
  static DenoiserConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Unconditional spatio-temporal diffusion transformer. Frames are patchified
/// into tokens, given factorized sinusoidal spatial and temporal position
/// encodings, and run through alternating blocks of spatial attention (tokens
/// attend within their frame) and temporal attention (tokens attend across
/// frames at the same spatial position). The timestep enters through a
/// sinusoidal embedding projected by an MLP and applied with adaptive layer
/// normalization; modulation and the output head are zero-initialized so the
/// untrained model predicts exactly zero.
class Denoiser final : public ScoreModel {
 public:
  Denoiser(const DenoiserConfig& cfg, std::uint64_t seed);
  ~Denoiser() override;

  LatentVideo eps(const LatentVideo& z_t, int t) override;
  LatentVideo eps_vjp(const LatentVideo& z_t, int t, const LatentVideo& cot) override;
  /// Backward through the most recent eps() call; returns the input gradient
  /// and, when requested, accumulates parameter gradients.
  LatentVideo backward(const LatentVideo& cot, bool need_param_grads);

  const DenoiserConfig& config() const { return cfg_; }
  /// Mutable access invalidates the eps reuse cache: callers that touch the
  /// weights (training, tests) must not see stale activations afterwards.
  ParamStore& params() {
    eps_cache_t_ = -1;
    return ps_;
  }
  std::size_t param_count() const { return ps_.count(); }
  /// Verification hook: with temporal blocks disabled, frames are processed
  /// independently.
  void set_temporal_enabled(bool on) { temporal_enabled_ = on; }

  void save(const std::string& path, const nlohmann::json& extra_meta) const;
  static std::unique_ptr<Denoiser> load(const std::string& path,
                                        nlohmann::json* meta_out = nullptr);

 private:
  struct Impl;
  DenoiserConfig cfg_;
  ParamStore ps_;
  bool temporal_enabled_ = true;
  std::unique_ptr<Impl> impl_;
  // Last successful eps() input. When eps_vjp is asked about the same point
  // (bitwise), backward can reuse the stored activations instead of running
  // the forward pass again; guided sampling hits this every step.
  std::vector<double> eps_cache_z_;
  int eps_cache_t_ = -1;
  int eps_cache_f_ = 0, eps_cache_h_ = 0, eps_cache_w_ = 0;
  bool eps_cache_temporal_ = true;
};

/// Gaussian prior N(mu, Sigma) over a small flattened latent, used as a
/// network-free oracle: diffusing it keeps every marginal Gaussian in closed
/// form, so scores are exact.
struct GaussianWorld {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;  // SPD, small dimension
};

/// Score of the noised marginal N(sqrt(a_bar) mu, a_bar Sigma + (1 - a_bar) I)
/// evaluated at x: -(a_bar Sigma + (1 - a_bar) I)^{-1} (x - sqrt(a_bar) mu).
/// Throws ConfigError when Sigma is not SPD or shapes mismatch.
Eigen::VectorXd analytic_score(const GaussianWorld& world, const Eigen::VectorXd& x,
                               double alpha_bar);

/// ScoreModel wrapper over analytic_score for a given schedule; the latent
/// shape is fixed at construction and flattening is row-major.
class GaussianScore final : public ScoreModel {
 public:
  GaussianScore(GaussianWorld world, NoiseSchedule schedule);
  LatentVideo eps(const LatentVideo& z_t, int t) override;
  LatentVideo eps_vjp(const LatentVideo& z_t, int t, const LatentVideo& cot) override;
  const GaussianWorld& world() const { return world_; }

 private:
  GaussianWorld world_;
  NoiseSchedule ns_;
};

}  // namespace dvsr
