// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#include "dvsr/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <tuple>

#include "dvsr/degradation.hpp"
#include "dvsr/errors.hpp"
#include "dvsr/metrics.hpp"
#include "dvsr/plot.hpp"
#include "dvsr/util.hpp"

namespace dvsr {

namespace {

const char* const kKinds[] = {"frame-sweep", "order-compare", "blur-sweep"};

// Shortest-form numeric text for CSV cells whose values are exact by
// construction (sigma_h, eta); metric values use fixed 6 decimals.
std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return std::string(buf);
}

std::vector<int> random_frame_order(std::uint64_t order_seed, int frames) {
  std::vector<int> perm(frames);
  std::iota(perm.begin(), perm.end(), 0);
  // Frame 0 stays first so the first-frame PSNR reduction is comparable
  // across orders at every k; the rest is Fisher-Yates shuffled.
  Rng rng(order_seed);
  for (int i = frames - 1; i > 1; --i) {
    const int j = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(i)));
    std::swap(perm[i], perm[j]);
  }
  return perm;
}

struct Cell {
  std::string order;
  int scale;
  double sigma_h;
  int k;
};

SweepResult run_cells(const ExperimentConfig& cfg, const std::vector<Cell>& cells,
                      ScoreModel& model, Autoencoder& ae, const NoiseSchedule& ns) {
  cfg.validate();
  SweepResult result;
  result.cfg = cfg;

  // Reference clips come from the eval world's child streams, matching the
  // dataset generator's per-clip derivation.
  Rng root(cfg.eval_world.seed);
  std::vector<VideoTensor> refs;
  refs.reserve(cfg.n_clips);
  for (int i = 0; i < cfg.n_clips; ++i) {
    Rng crng = root.child(static_cast<std::uint64_t>(i));
    refs.push_back(generate_clip(cfg.eval_world, crng));
  }

  for (const Cell& cell : cells) {
    DegradationSpec spec;
    spec.kernel = gaussian_kernel(cell.sigma_h);
    spec.scale = cell.scale;
    spec.frame_mask =
        sweep_frame_mask(cell.order, cfg.order_seed, cell.k, cfg.eval_world.frames);
    spec.noise_sigma = cfg.noise_sigma;

    for (int clip = 0; clip < cfg.n_clips; ++clip) {
      for (std::uint64_t seed : cfg.noise_seeds) {
        Observation y;
        if (cfg.noise_sigma > 0.0) {
          Rng nrng(seed, 1000003ULL * (static_cast<std::uint64_t>(clip) + 1));
          y = degrade(refs[clip], spec, &nrng);
        } else {
          y = degrade(refs[clip], spec);
        }
        SolverConfig scfg = cfg.solver;
        scfg.seed = seed;
        auto [restored, trace] = solve(y, spec, model, ae, ns, scfg);
        const VideoTensor xc = restored.clamped01();

        SweepRecord rec;
        rec.clip = clip;
        rec.seed = seed;
        rec.order = cell.order;
        rec.k = cell.k;
        rec.sigma_h = cell.sigma_h;
        rec.scale = cell.scale;
        rec.psnr_first = psnr_frame(xc, refs[clip], 0);
        rec.psnr_mean = psnr(xc, refs[clip]);
        rec.ssim = ssim(xc, refs[clip]);
        rec.psnr_frames.reserve(cfg.eval_world.frames);
        for (int f = 0; f < cfg.eval_world.frames; ++f)
          rec.psnr_frames.push_back(psnr_frame(xc, refs[clip], f));
        result.records.push_back(std::move(rec));
      }
    }
  }
  return result;
}

std::vector<Cell> factorial_cells(const ExperimentConfig& cfg,
                                  const std::vector<std::string>& orders) {
  std::vector<Cell> cells;
  for (const std::string& o : orders)
    for (int s : cfg.scales)
      for (double sh : cfg.sigma_h)
        for (int k : cfg.frame_counts) cells.push_back({o, s, sh, k});
  return cells;
}

bool record_before(const SweepRecord& a, const SweepRecord& b) {
  return std::tie(a.order, a.scale, a.sigma_h, a.k, a.clip, a.seed) <
         std::tie(b.order, b.scale, b.sigma_h, b.k, b.clip, b.seed);
}

struct Aggregate {
  int n = 0;
  double sum_first = 0.0, sq_first = 0.0;
  double sum_mean = 0.0, sq_mean = 0.0;
  double sum_ssim = 0.0, sq_ssim = 0.0;

  void add(const SweepRecord& r) {
    ++n;
    sum_first += r.psnr_first;
    sq_first += r.psnr_first * r.psnr_first;
    sum_mean += r.psnr_mean;
    sq_mean += r.psnr_mean * r.psnr_mean;
    sum_ssim += r.ssim;
    sq_ssim += r.ssim * r.ssim;
  }
  static double mean_of(double sum, int n) { return sum / n; }
  static double std_of(double sum, double sq, int n) {
    if (n < 2) return 0.0;
    const double var = (sq - sum * sum / n) / (n - 1);
    return std::sqrt(std::max(var, 0.0));
  }
};

}  // namespace

void ExperimentConfig::validate() const {
  bool known = false;
  for (const char* k : kKinds) known = known || kind == k;
  if (!known) throw ConfigError("experiment kind must be frame-sweep, order-compare or blur-sweep");
  eval_world.validate();
  if (n_clips < 1) throw ConfigError("experiment needs at least one reference clip");
  if (noise_seeds.empty()) throw ConfigError("experiment needs a non-empty seed list");
  if (frame_counts.empty()) throw ConfigError("experiment needs a non-empty frame-count list");
  for (int k : frame_counts)
    if (k < 1 || k > eval_world.frames)
      throw ConfigError("frame count " + std::to_string(k) + " outside [1, " +
                        std::to_string(eval_world.frames) + "]");
  if (order != "sequential" && order != "random")
    throw ConfigError("order must be sequential or random");
  if (sigma_h.empty()) throw ConfigError("experiment needs a non-empty sigma_h list");
  for (double s : sigma_h)
    if (s < 0.0) throw ConfigError("sigma_h must be >= 0");
  if (scales.empty()) throw ConfigError("experiment needs a non-empty scale list");
  for (int s : scales)
    if (s < 1) throw ConfigError("scale must be >= 1");
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
  solver.validate();
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  cfg.kind = json_require<std::string>(j, "kind");
  if (!j.contains("eval_world")) throw ConfigError("experiment config needs eval_world");
  cfg.eval_world = WorldConfig::from_json(j.at("eval_world"));
  cfg.n_clips = json_require<int>(j, "n_clips");
  cfg.noise_seeds = json_require<std::vector<std::uint64_t>>(j, "noise_seeds");
  cfg.frame_counts = json_require<std::vector<int>>(j, "frame_counts");
  cfg.order = json_get<std::string>(j, "order", "sequential");
  cfg.order_seed = json_get<std::uint64_t>(j, "order_seed", 1);
  cfg.sigma_h = json_require<std::vector<double>>(j, "sigma_h");
  cfg.scales = json_require<std::vector<int>>(j, "scales");
  cfg.noise_sigma = json_get<double>(j, "noise_sigma", 0.0);
  if (!j.contains("solver")) throw ConfigError("experiment config needs solver");
  cfg.solver = SolverConfig::from_json(j.at("solver"));
  cfg.ckpt_path = json_get<std::string>(j, "ckpt", "");
  cfg.ae_path = json_get<std::string>(j, "ae", "");
  cfg.train_manifest = json_get<std::string>(j, "train_manifest", "");
  cfg.ckpt_sha256 = json_get<std::string>(j, "ckpt_sha256", "");
  cfg.ae_sha256 = json_get<std::string>(j, "ae_sha256", "");
  cfg.validate();
  return cfg;
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"kind", kind},
          {"eval_world", eval_world.to_json()},
          {"n_clips", n_clips},
          {"noise_seeds", noise_seeds},
          {"frame_counts", frame_counts},
          {"order", order},
          {"order_seed", order_seed},
          {"sigma_h", sigma_h},
          {"scales", scales},
          {"noise_sigma", noise_sigma},
          {"solver", solver.to_json()},
          {"ckpt", ckpt_path},
          {"ae", ae_path},
          {"train_manifest", train_manifest},
          {"ckpt_sha256", ckpt_sha256},
          {"ae_sha256", ae_sha256}};
}

std::vector<bool> sweep_frame_mask(const std::string& order, std::uint64_t order_seed, int k,
                                   int frames) {
  if (k < 1 || k > frames) throw ConfigError("mask frame count outside [1, frames]");
  std::vector<bool> mask(frames, false);
  if (order == "sequential") {
    for (int i = 0; i < k; ++i) mask[i] = true;
  } else if (order == "random") {
    const std::vector<int> perm = random_frame_order(order_seed, frames);
    for (int i = 0; i < k; ++i) mask[perm[i]] = true;
  } else {
    throw ConfigError("order must be sequential or random");
  }
  return mask;
}

SweepResult run_frame_sweep(const ExperimentConfig& cfg, ScoreModel& model, Autoencoder& ae,
                            const NoiseSchedule& ns) {
  return run_cells(cfg, factorial_cells(cfg, {cfg.order}), model, ae, ns);
}

SweepResult run_order_compare(const ExperimentConfig& cfg, ScoreModel& model, Autoencoder& ae,
                              const NoiseSchedule& ns) {
  return run_cells(cfg, factorial_cells(cfg, {"sequential", "random"}), model, ae, ns);
}

SweepResult run_blur_sweep(const ExperimentConfig& cfg, ScoreModel& model, Autoencoder& ae,
                           const NoiseSchedule& ns) {
  return run_cells(cfg, factorial_cells(cfg, {cfg.order}), model, ae, ns);
}

void emit_report(const SweepResult& result, const std::string& out_dir) {
  if (result.records.empty()) throw ConfigError("cannot emit a report for an empty sweep");
  std::filesystem::create_directories(out_dir);

  std::vector<SweepRecord> records = result.records;
  std::sort(records.begin(), records.end(), record_before);
  const int frames = result.cfg.eval_world.frames;

  {
    std::ofstream out(out_dir + "/results.csv", std::ios::binary);
    if (!out) throw IoError("cannot write " + out_dir + "/results.csv");
    out << "clip,seed,order,k,sigma_h,scale,psnr_first,psnr_mean,ssim";
    for (int f = 0; f < frames; ++f) out << ",psnr_f" << f;
    out << "\n";
    for (const SweepRecord& r : records) {
      out << r.clip << ',' << r.seed << ',' << r.order << ',' << r.k << ',' << num(r.sigma_h)
          << ',' << r.scale << ',' << format_double(r.psnr_first) << ','
          << format_double(r.psnr_mean) << ',' << format_double(r.ssim);
      for (double v : r.psnr_frames) out << ',' << format_double(v);
      out << "\n";
    }
  }

  // Aggregates over clips x seeds per condition cell.
  std::map<std::tuple<std::string, int, double, int>, Aggregate> agg;
  for (const SweepRecord& r : records)
    agg[{r.order, r.scale, r.sigma_h, r.k}].add(r);
  {
    std::ofstream out(out_dir + "/summary.csv", std::ios::binary);
    if (!out) throw IoError("cannot write " + out_dir + "/summary.csv");
    out << "order,scale,sigma_h,k,n,psnr_first_mean,psnr_first_std,psnr_mean_mean,"
           "psnr_mean_std,ssim_mean,ssim_std\n";
    for (const auto& [key, a] : agg) {
      out << std::get<0>(key) << ',' << std::get<1>(key) << ',' << num(std::get<2>(key)) << ','
          << std::get<3>(key) << ',' << a.n << ',' << format_double(a.sum_first / a.n) << ','
          << format_double(Aggregate::std_of(a.sum_first, a.sq_first, a.n)) << ','
          << format_double(a.sum_mean / a.n) << ','
          << format_double(Aggregate::std_of(a.sum_mean, a.sq_mean, a.n)) << ','
          << format_double(a.sum_ssim / a.n) << ','
          << format_double(Aggregate::std_of(a.sum_ssim, a.sq_ssim, a.n)) << "\n";
    }
  }

  if (result.cfg.kind == "order-compare") {
    // Paired per-(clip, seed, k) differences, random minus sequential.
    std::map<std::tuple<int, std::uint64_t, int, int, double>, const SweepRecord*> seq, rnd;
    for (const SweepRecord& r : records) {
      auto key = std::make_tuple(r.clip, r.seed, r.k, r.scale, r.sigma_h);
      (r.order == "random" ? rnd : seq)[key] = &r;
    }
    std::ofstream out(out_dir + "/paired.csv", std::ios::binary);
    if (!out) throw IoError("cannot write " + out_dir + "/paired.csv");
    out << "clip,seed,k,scale,sigma_h,delta_psnr_first,delta_psnr_mean\n";
    for (const auto& [key, sp] : seq) {
      auto it = rnd.find(key);
      if (it == rnd.end()) continue;
      out << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ','
          << std::get<3>(key) << ',' << num(std::get<4>(key)) << ','
          << format_double(it->second->psnr_first - sp->psnr_first) << ','
          << format_double(it->second->psnr_mean - sp->psnr_mean) << "\n";
    }
  }

  // One line per (order, scale, sigma_h) condition: first-frame PSNR vs k,
  // +-1 std error bars.
  const std::array<std::uint8_t, 3> palette[6] = {{214, 39, 40},  {31, 119, 180}, {44, 160, 44},
                                                  {255, 127, 14}, {148, 103, 189}, {140, 86, 75}};
  std::map<std::tuple<std::string, int, double>, PlotSeries> lines;
  for (const auto& [key, a] : agg) {
    auto lkey = std::make_tuple(std::get<0>(key), std::get<1>(key), std::get<2>(key));
    PlotSeries& s = lines[lkey];
    if (s.label.empty())
      s.label = std::get<0>(lkey) + " " + std::to_string(std::get<1>(lkey)) + "X SIGMA=" +
                num(std::get<2>(lkey));
    s.x.push_back(std::get<3>(key));
    s.y.push_back(a.sum_first / a.n);
    s.yerr.push_back(Aggregate::std_of(a.sum_first, a.sq_first, a.n));
  }
  std::vector<PlotSeries> series;
  int ci = 0;
  for (auto& [key, s] : lines) {
    s.color = palette[ci++ % 6];
    series.push_back(std::move(s));
  }
  render_line_plot(series, "PSNR VS OBSERVED FRAMES", "K OBSERVED FRAMES", "PSNR DB",
                   out_dir + "/plot_psnr_vs_k.png");
}

SweepResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  // The harness never trains: it refuses to run without provenance hashes
  // that match the artifacts on disk.
  if (cfg.ckpt_path.empty() || cfg.ae_path.empty())
    throw ConfigError("experiment config must name ckpt and ae artifacts");
  if (cfg.ckpt_sha256.empty() || cfg.ae_sha256.empty())
    throw ConfigError("checkpoint hashes missing from provenance fields");
  const std::string ckpt_sha = sha256_file(cfg.ckpt_path);
  if (ckpt_sha != cfg.ckpt_sha256)
    throw ConfigError("ckpt_sha256 mismatch: config " + cfg.ckpt_sha256 + " vs file " + ckpt_sha);
  const std::string ae_sha = sha256_file(cfg.ae_path);
  if (ae_sha != cfg.ae_sha256)
    throw ConfigError("ae_sha256 mismatch: config " + cfg.ae_sha256 + " vs file " + ae_sha);

  // Held-out eval clips: the generator seed must differ from the training
  // dataset's seed.
  if (cfg.train_manifest.empty())
    throw ConfigError("experiment config must name the training manifest");
  WorldConfig train_world;
  list_dataset(std::filesystem::path(cfg.train_manifest).parent_path().string(), &train_world);
  if (train_world.seed == cfg.eval_world.seed)
    throw ConfigError("eval world seed " + std::to_string(cfg.eval_world.seed) +
                      " collides with the training dataset seed");

  nlohmann::json meta;
  auto den = Denoiser::load(cfg.ckpt_path, &meta);
  auto ae = Autoencoder::load(cfg.ae_path);
  if (meta.contains("ae_codec") && meta.at("ae_codec").get<std::string>() != ae->codec_id())
    throw CodecError("checkpoint was trained against autoencoder " +
                     meta.at("ae_codec").get<std::string>() + ", got " + ae->codec_id());
  if (!meta.contains("schedule"))
    throw FormatError("checkpoint metadata lacks the training schedule");
  const NoiseSchedule ns = NoiseSchedule::from_json(meta.at("schedule"));
  if (cfg.solver.steps != ns.T)
    throw ConfigError("solver steps " + std::to_string(cfg.solver.steps) +
                      " do not match the checkpoint schedule T=" + std::to_string(ns.T));

  SweepResult result;
  if (cfg.kind == "frame-sweep") {
    result = run_frame_sweep(cfg, *den, *ae, ns);
  } else if (cfg.kind == "order-compare") {
    result = run_order_compare(cfg, *den, *ae, ns);
  } else {
    result = run_blur_sweep(cfg, *den, *ae, ns);
  }
  emit_report(result, out_dir);

  nlohmann::json prov = {{"config", cfg.to_json()},
                         {"ckpt_sha256", ckpt_sha},
                         {"ae_sha256", ae_sha},
                         {"seeds", cfg.noise_seeds},
                         {"version", kVersion}};
  save_json(prov, out_dir + "/provenance.json");
  return result;
}

}  // namespace dvsr
