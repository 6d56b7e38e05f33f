// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#include "dvsr/dps_solver.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "dvsr/errors.hpp"
#include "dvsr/rng.hpp"
#include "dvsr/util.hpp"

namespace dvsr {

namespace {

// Residual staying above this multiple of its initial value for this many
// consecutive steps is treated as divergence of the guided chain.
constexpr double kDivergenceFactor = 10.0;
constexpr int kDivergencePatience = 50;

std::string policy_name(SolverConfig::Policy p) {
  return p == SolverConfig::Policy::residual ? "residual" : "fixed";
}

SolverConfig::Policy policy_from_name(const std::string& s) {
  if (s == "residual") return SolverConfig::Policy::residual;
  if (s == "fixed") return SolverConfig::Policy::fixed;
  throw ConfigError("solver policy must be \"residual\" or \"fixed\", got \"" + s + "\"");
}

double l2_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Trace values span many orders of magnitude (residuals of diverging runs),
// so use shortest-form scientific notation rather than fixed decimals.
std::string trace_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return std::string(buf);
}

}  // namespace

void SolverConfig::validate() const {
  if (steps < 1) throw ConfigError("solver steps must be >= 1");
  if (!(zeta >= 0.0) || !std::isfinite(zeta)) throw ConfigError("solver zeta must be finite and >= 0");
  if (!std::isfinite(grad_clip)) throw ConfigError("solver grad_clip must be finite");
  if (save_x0_every < 0) throw ConfigError("solver save_x0_every must be >= 0");
}

SolverConfig SolverConfig::from_json(const nlohmann::json& j) {
  SolverConfig cfg;
  cfg.steps = json_require<int>(j, "steps");
  cfg.zeta = json_require<double>(j, "zeta");
  cfg.policy = policy_from_name(json_get<std::string>(j, "policy", "residual"));
  cfg.grad_clip = json_get<double>(j, "grad_clip", 0.0);
  cfg.seed = json_get<std::uint64_t>(j, "seed", 0);
  cfg.frozen_denoiser = json_get<bool>(j, "frozen_denoiser", false);
  cfg.save_x0_every = json_get<int>(j, "save_x0_every", 0);
  cfg.validate();
  return cfg;
}

nlohmann::json SolverConfig::to_json() const {
  return {{"steps", steps},         {"zeta", zeta},
          {"policy", policy_name(policy)}, {"grad_clip", grad_clip},
          {"seed", seed},           {"frozen_denoiser", frozen_denoiser},
          {"save_x0_every", save_x0_every}};
}

void SolveTrace::save_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write trace csv: " + path);
  out << "step,residual,grad_norm,eta\n";
  for (const StepRecord& r : records) {
    out << r.step << ',' << trace_num(r.residual) << ',' << trace_num(r.grad_norm) << ','
        << trace_num(r.eta) << '\n';
  }
  if (!out) throw IoError("failed writing trace csv: " + path);
}

GuidanceResult guidance_gradient(const LatentVideo& z_t, int t, const Observation& y,
                                 const DegradationSpec& spec, ScoreModel& model, Autoencoder& ae,
                                 const NoiseSchedule& ns, bool frozen,
                                 const LatentVideo* eps_hat) {
  if (t < 0 || t >= ns.T) throw ConfigError("guidance step index out of schedule range");
  if (z_t.frames() != spec.frames())
    throw ShapeError("latent frame count does not match degradation mask length");
  if (static_cast<int>(y.frame_indices.size()) != y.frames.frames() ||
      y.frame_indices != spec.observed_indices())
    throw ShapeError("observation frame indices do not match the degradation mask");

  LatentVideo eps_local;
  if (eps_hat == nullptr) {
    eps_local = model.eps(z_t, t);
    eps_hat = &eps_local;
  } else if (!eps_hat->same_shape(z_t)) {
    throw ShapeError("precomputed eps_hat shape does not match z_t");
  }

  const std::vector<double> score = eps_to_score(eps_hat->values(), t, ns);
  LatentVideo z0 = z_t.like_zeros();
  z0.values() = predict_x0(z_t.values(), t, ns, score);

  VideoTensor x0 = ae.decode(z0);
  VideoTensor y_hat = degrade_apply(x0, spec);
  VideoTensor::require_same_shape(y_hat, y.frames, "guidance observation");

  // dL/dY_hat for L = |Y - Y_hat|^2 is 2 (Y_hat - Y).
  double res_sq = 0.0;
  VideoTensor d_yhat(y_hat.frames(), y_hat.height(), y_hat.width(), y_hat.channels());
  {
    const std::vector<double>& yv = y.frames.values();
    const std::vector<double>& hv = y_hat.values();
    std::vector<double>& dv = d_yhat.values();
    for (std::size_t i = 0; i < hv.size(); ++i) {
      const double r = hv[i] - yv[i];
      res_sq += r * r;
      dv[i] = 2.0 * r;
    }
  }

  VideoTensor d_x0 = degrade_vjp(d_yhat, spec, x0.height(), x0.width());
  LatentVideo g0 = ae.decode_vjp(z0, d_x0);

  const double ab = ns.alpha_bar[t];
  const double inv_sab = 1.0 / std::sqrt(ab);
  const double somb = std::sqrt(1.0 - ab);

  GuidanceResult out{z_t.like_zeros(), std::sqrt(res_sq), std::move(z0)};
  if (frozen) {
    // The clean-latent estimate is treated as a rescaled identity of z_t.
    std::vector<double>& gv = out.grad.values();
    const std::vector<double>& g0v = g0.values();
    for (std::size_t i = 0; i < gv.size(); ++i) gv[i] = g0v[i] * inv_sab;
  } else {
    LatentVideo jv = model.eps_vjp(z_t, t, g0);
    std::vector<double>& gv = out.grad.values();
    const std::vector<double>& g0v = g0.values();
    const std::vector<double>& jvv = jv.values();
    for (std::size_t i = 0; i < gv.size(); ++i) gv[i] = (g0v[i] - somb * jvv[i]) * inv_sab;
  }
  return out;
}

std::pair<VideoTensor, SolveTrace> solve(const Observation& y, const DegradationSpec& spec,
                                         ScoreModel& model, Autoencoder& ae,
                                         const NoiseSchedule& ns, const SolverConfig& cfg,
                                         SolveTrace* partial_out) {
  cfg.validate();
  if (cfg.steps != ns.T)
    throw ConfigError("solver steps (" + std::to_string(cfg.steps) +
                      ") must match the schedule length (" + std::to_string(ns.T) + ")");
  if (spec.observed_count() == 0) throw ConfigError("degradation mask observes no frames");
  if (y.frames.frames() != spec.observed_count() || y.frame_indices != spec.observed_indices())
    throw ShapeError("observation does not match the degradation spec's frame mask");

  const int f = spec.frames();
  const int hr_h = y.frames.height() * spec.scale;
  const int hr_w = y.frames.width() * spec.scale;
  const int p = ae.p();
  if (hr_h % p != 0 || hr_w % p != 0)
    throw ShapeError("restored size " + std::to_string(hr_h) + "x" + std::to_string(hr_w) +
                     " is not divisible by the autoencoder compression " + std::to_string(p));

  Rng rng(cfg.seed);
  LatentVideo z(f, hr_h / p, hr_w / p, ae.latent_channels(), p, ae.codec_id());
  for (double& v : z.values()) v = rng.normal();

  SolveTrace trace;
  trace.records.reserve(ns.T);
  double initial_residual = -1.0;
  int high_steps = 0;

  for (int t = ns.T - 1; t >= 0; --t) {
    LatentVideo eps_hat = model.eps(z, t);

    // Unguided ancestral proposal from the current iterate.
    const std::vector<double> score = eps_to_score(eps_hat.values(), t, ns);
    const std::vector<double> x0_hat = predict_x0(z.values(), t, ns, score);
    std::vector<double> z_next = ancestral_step(z.values(), x0_hat, t, ns, &rng);

    // Data-fidelity gradient taken at the pre-step iterate z_t.
    GuidanceResult g =
        guidance_gradient(z, t, y, spec, model, ae, ns, cfg.frozen_denoiser, &eps_hat);

    double grad_norm = l2_norm(g.grad.values());
    if (cfg.grad_clip > 0.0 && grad_norm > cfg.grad_clip) {
      const double scale = cfg.grad_clip / grad_norm;
      for (double& v : g.grad.values()) v *= scale;
      grad_norm = cfg.grad_clip;
    }

    const double eta = cfg.policy == SolverConfig::Policy::residual
                           ? cfg.zeta / (g.residual_l2 + 1e-8)
                           : cfg.zeta;

    {
      std::vector<double>& zv = z.values();
      const std::vector<double>& gv = g.grad.values();
      for (std::size_t i = 0; i < zv.size(); ++i) zv[i] = z_next[i] - eta * gv[i];
    }

    trace.records.push_back({t, g.residual_l2, grad_norm, eta});
    if (cfg.save_x0_every > 0 && t % cfg.save_x0_every == 0)
      trace.x0_snapshots.emplace_back(t, ae.decode(g.z0_hat));

    if (initial_residual < 0.0) {
      initial_residual = g.residual_l2;
    } else if (!std::isfinite(g.residual_l2) ||
               g.residual_l2 > kDivergenceFactor * initial_residual) {
      if (++high_steps >= kDivergencePatience || !std::isfinite(g.residual_l2)) {
        if (partial_out != nullptr) *partial_out = trace;
        std::ostringstream msg;
        msg << "solver diverged at step " << t << ": residual " << g.residual_l2
            << " vs initial " << initial_residual << " (factor " << kDivergenceFactor
            << " exceeded for " << high_steps << " consecutive steps)";
        throw DivergenceError(msg.str());
      }
    } else {
      high_steps = 0;
    }
  }

  VideoTensor restored = ae.decode(z);
  if (partial_out != nullptr) *partial_out = trace;
  return {std::move(restored), std::move(trace)};
}

}  // namespace dvsr
