// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#include "dvsr/schedule.hpp"

#include <cmath>

#include "dvsr/errors.hpp"
#include "dvsr/util.hpp"

namespace dvsr {
namespace {

void require_t(const NoiseSchedule& ns, int t) {
  if (t < 0 || t >= ns.T)
    throw ConfigError("schedule: t = " + std::to_string(t) + " outside [0, " +
                      std::to_string(ns.T) + ")");
}

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": size mismatch");
}

}  // namespace

NoiseSchedule make_schedule(int T, double beta_min, double beta_max) {
  if (T < 2) throw ConfigError("make_schedule: T must be >= 2");
  if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0))
    throw ConfigError("make_schedule: need 0 < beta_min <= beta_max < 1");
  NoiseSchedule ns;
  ns.T = T;
  ns.beta_min = beta_min;
  ns.beta_max = beta_max;
  ns.beta.resize(T);
  ns.alpha.resize(T);
  ns.alpha_bar.resize(T);
  ns.sigma.resize(T);
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    ns.beta[t] = beta_min + (beta_max - beta_min) * static_cast<double>(t) / (T - 1);
    ns.alpha[t] = 1.0 - ns.beta[t];
    prod *= ns.alpha[t];
    ns.alpha_bar[t] = prod;
  }
  for (int t = 0; t < T; ++t) {
    const double prev = ns.alpha_bar_prev(t);
    ns.sigma[t] = std::sqrt(ns.beta[t] * (1.0 - prev) / (1.0 - ns.alpha_bar[t]));
  }
  return ns;
}

nlohmann::json NoiseSchedule::to_json() const {
  return {{"T", T}, {"beta_min", beta_min}, {"beta_max", beta_max}, {"kind", "linear"}};
}

NoiseSchedule NoiseSchedule::from_json(const nlohmann::json& j) {
  if (json_require<std::string>(j, "kind") != "linear")
    throw ConfigError("schedule: only the linear kind is supported");
  return make_schedule(json_require<int>(j, "T"), json_require<double>(j, "beta_min"),
                       json_require<double>(j, "beta_max"));
}

std::vector<double> forward_noise_with(const std::vector<double>& x0, int t,
                                       const NoiseSchedule& ns, const std::vector<double>& eps) {
  require_t(ns, t);
  require_same_size(x0.size(), eps.size(), "forward_noise");
  const double a = std::sqrt(ns.alpha_bar[t]);
  const double b = std::sqrt(1.0 - ns.alpha_bar[t]);
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

std::vector<double> forward_noise(const std::vector<double>& x0, int t, const NoiseSchedule& ns,
                                  Rng& rng, std::vector<double>* eps_out) {
  std::vector<double> eps(x0.size());
  for (double& e : eps) e = rng.normal();
  auto out = forward_noise_with(x0, t, ns, eps);
  if (eps_out != nullptr) *eps_out = std::move(eps);
  return out;
}

std::vector<double> predict_x0(const std::vector<double>& x_t, int t, const NoiseSchedule& ns,
                               const std::vector<double>& score) {
  require_t(ns, t);
  require_same_size(x_t.size(), score.size(), "predict_x0");
  const double ab = ns.alpha_bar[t];
  const double inv_sqrt = 1.0 / std::sqrt(ab);
  std::vector<double> out(x_t.size());
  for (std::size_t i = 0; i < x_t.size(); ++i)
    out[i] = inv_sqrt * (x_t[i] + (1.0 - ab) * score[i]);
  return out;
}

std::vector<double> eps_to_score(const std::vector<double>& eps, int t, const NoiseSchedule& ns) {
  require_t(ns, t);
  const double s = -1.0 / std::sqrt(1.0 - ns.alpha_bar[t]);
  std::vector<double> out(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) out[i] = s * eps[i];
  return out;
}

std::vector<double> ancestral_step(const std::vector<double>& z_t,
                                   const std::vector<double>& x0_hat, int t,
                                   const NoiseSchedule& ns, Rng* rng) {
  require_t(ns, t);
  require_same_size(z_t.size(), x0_hat.size(), "ancestral_step");
  const double c1 = ns.c1(t), c2 = ns.c2(t), s = ns.sigma[t];
  std::vector<double> out(z_t.size());
  for (std::size_t i = 0; i < z_t.size(); ++i) {
    out[i] = c1 * z_t[i] + c2 * x0_hat[i];
    if (rng != nullptr && s > 0.0) out[i] += s * rng->normal();
  }
  return out;
}

}  // namespace dvsr
