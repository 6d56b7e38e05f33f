// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <doctest.h>
#include <json.hpp>

#include "dvsr/autoencoder.hpp"
#include "dvsr/container.hpp"
#include "dvsr/degradation.hpp"
#include "dvsr/denoiser.hpp"
#include "dvsr/rng.hpp"
#include "dvsr/schedule.hpp"
#include "dvsr/trainer.hpp"
#include "dvsr/util.hpp"

#ifndef DVSR_BIN
#error "DVSR_BIN must be defined to the cli binary path"
#endif

namespace fs = std::filesystem;
using namespace dvsr;

namespace {

struct TmpDir {
  fs::path path;
  explicit TmpDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TmpDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

// Runs the cli binary and returns its exit code; output goes to a log file so
// failures can be inspected without polluting the test stream.
int run_cli(const std::string& args, const std::string& log) {
  const std::string cmd = std::string(DVSR_BIN) + " " + args + " >" + log + " 2>&1";
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  return WEXITSTATUS(rc);
}

// Tiny end-to-end fixture: a clip, a degradation spec, an identity
// autoencoder and an untrained denoiser whose checkpoint carries the
// schedule metadata the restore path needs.
struct CliFixture {
  TmpDir tmp;
  std::string x_path, spec_path, ae_path, ckpt_path, log;
  int T = 8;

  CliFixture() : tmp("dvsr_cli_fix") {
    WorldConfig w;
    w.height = 16;
    w.width = 16;
    w.frames = 3;
    w.seed = 7;
    Rng rng(w.seed);
    VideoTensor x = generate_clip(w, rng);
    x_path = tmp.str() + "/x.vten";
    save_video(x, x_path);

    spec_path = tmp.str() + "/spec.json";
    save_json(nlohmann::json{{"sigma_h", 0.5},
                             {"scale", 2},
                             {"mask", std::vector<bool>{true, false, true}},
                             {"noise_sigma", 0.0}},
              spec_path);

    auto ae = Autoencoder::make_identity(1);
    ae_path = tmp.str() + "/ae.ckpt";
    ae->save(ae_path);

    DenoiserConfig dc;
    dc.patch_size = 2;
    dc.embed_dim = 16;
    dc.depth = 1;
    dc.heads = 2;
    dc.max_frames = 4;
    dc.time_dim = 8;
    dc.latent_channels = 1;
    Denoiser den(dc, 3);
    const NoiseSchedule ns = make_schedule(T, 1e-4, 0.05);
    ckpt_path = tmp.str() + "/den.ckpt";
    den.save(ckpt_path, {{"schedule", ns.to_json()}, {"ae_codec", ae->codec_id()}});

    log = tmp.str() + "/log.txt";
  }

  std::string restore_args(const std::string& y, const std::string& out) const {
    return "restore --y " + y + " --spec " + spec_path + " --ckpt " + ckpt_path + " --ae " +
           ae_path + " --out " + out;
  }
};

}  // namespace

TEST_CASE("cli: help and usage errors") {
  TmpDir tmp("dvsr_cli_help");
  const std::string log = tmp.str() + "/log.txt";
  CHECK(run_cli("--help", log) == 0);
  CHECK(run_cli("", log) == 0);  // no subcommand prints help
  CHECK(run_cli("no-such-subcommand", log) == 2);
  CHECK(run_cli("restore --y only.vten", log) == 2);  // missing required flags
}

TEST_CASE("cli: degrade then restore round trip") {
  CliFixture fx;
  const std::string y_path = fx.tmp.str() + "/y.vten";
  CHECK(run_cli("degrade --x " + fx.x_path + " --spec " + fx.spec_path + " --out " + y_path,
                fx.log) == 0);
  auto [shape, data] = load_tensor4(y_path);
  CHECK(shape[0] == 2);  // two observed frames in the mask
  CHECK(shape[1] == 8);
  CHECK(shape[2] == 8);
  CHECK(shape[3] == 1);
  CHECK(data.size() == 2u * 8u * 8u);

  const std::string out = fx.tmp.str() + "/out";
  CHECK(run_cli(fx.restore_args(y_path, out) + " --zeta 0.2 --seed 11 --save-x0-every 4",
                fx.log) == 0);
  VideoTensor xh = load_video(out + "/x_hat.vten");
  CHECK(xh.frames() == 3);
  CHECK(xh.height() == 16);
  CHECK(xh.width() == 16);
  CHECK(fs::exists(out + "/trace.csv"));
  CHECK(fs::exists(out + "/x0_step_0004.vten"));
  CHECK(fs::exists(out + "/x0_step_0000.vten"));

  std::ifstream trace(out + "/trace.csv");
  std::string header;
  std::getline(trace, header);
  CHECK(header == "step,residual,grad_norm,eta");
  int rows = 0;
  for (std::string line; std::getline(trace, line);)
    if (!line.empty()) ++rows;
  CHECK(rows == fx.T);
}

TEST_CASE("cli: restore runs are bitwise reproducible") {
  CliFixture fx;
  const std::string y_path = fx.tmp.str() + "/y.vten";
  REQUIRE(run_cli("degrade --x " + fx.x_path + " --spec " + fx.spec_path + " --out " + y_path,
                  fx.log) == 0);
  const std::string out1 = fx.tmp.str() + "/r1";
  const std::string out2 = fx.tmp.str() + "/r2";
  REQUIRE(run_cli(fx.restore_args(y_path, out1) + " --zeta 0.2 --seed 5", fx.log) == 0);
  REQUIRE(run_cli(fx.restore_args(y_path, out2) + " --zeta 0.2 --seed 5", fx.log) == 0);
  CHECK(sha256_file(out1 + "/x_hat.vten") == sha256_file(out2 + "/x_hat.vten"));
  CHECK(sha256_file(out1 + "/trace.csv") == sha256_file(out2 + "/trace.csv"));

  // A different seed must change the output.
  const std::string out3 = fx.tmp.str() + "/r3";
  REQUIRE(run_cli(fx.restore_args(y_path, out3) + " --zeta 0.2 --seed 6", fx.log) == 0);
  CHECK(sha256_file(out1 + "/x_hat.vten") != sha256_file(out3 + "/x_hat.vten"));
}

TEST_CASE("cli: error class to exit code mapping") {
  CliFixture fx;
  const std::string y_path = fx.tmp.str() + "/y.vten";
  REQUIRE(run_cli("degrade --x " + fx.x_path + " --spec " + fx.spec_path + " --out " + y_path,
                  fx.log) == 0);
  const std::string out = fx.tmp.str() + "/out";

  SUBCASE("missing checkpoint file is an io error") {
    CHECK(run_cli("restore --y " + y_path + " --spec " + fx.spec_path +
                      " --ckpt /nonexistent.ckpt --ae " + fx.ae_path + " --out " + out,
                  fx.log) == 5);
  }

  SUBCASE("malformed config json") {
    const std::string bad = fx.tmp.str() + "/bad.json";
    std::ofstream(bad) << "{ not json";
    CHECK(run_cli(fx.restore_args(y_path, out).replace(
                      fx.restore_args(y_path, out).find(fx.spec_path), fx.spec_path.size(),
                      bad),
                  fx.log) == 2);
  }

  SUBCASE("observation shape mismatch") {
    const std::string wrong = fx.tmp.str() + "/wrong.vten";
    save_tensor4(wrong, {1, 8, 8, 1}, std::vector<double>(64, 0.5));
    CHECK(run_cli(fx.restore_args(wrong, out), fx.log) == 3);
  }

  SUBCASE("solver divergence emits the partial trace") {
    // The run is far shorter than the divergence patience window, so drive
    // the residual non-finite instead; that aborts immediately.
    CHECK(run_cli(fx.restore_args(y_path, out) + " --zeta 1e300 --policy fixed", fx.log) == 4);
    REQUIRE(fs::exists(out + "/trace.csv"));
    std::ifstream trace(out + "/trace.csv");
    int rows = 0;
    for (std::string line; std::getline(trace, line);)
      if (!line.empty()) ++rows;
    CHECK(rows > 1);  // header plus at least one recorded step
    CHECK_FALSE(fs::exists(out + "/x_hat.vten"));
  }

  SUBCASE("bad policy name") {
    CHECK(run_cli(fx.restore_args(y_path, out) + " --policy bogus", fx.log) == 2);
  }

  SUBCASE("step count must match the checkpoint schedule") {
    CHECK(run_cli(fx.restore_args(y_path, out) + " --steps 13", fx.log) == 2);
  }
}

TEST_CASE("cli: metrics, export-png and sample") {
  CliFixture fx;
  const std::string csv = fx.tmp.str() + "/m.csv";
  CHECK(run_cli("metrics --a " + fx.x_path + " --b " + fx.x_path + " --csv " + csv, fx.log) ==
        0);
  std::ifstream mf(csv);
  std::string header, row;
  std::getline(mf, header);
  CHECK(header == "frame,psnr,ssim");
  std::getline(mf, row);
  CHECK(row.substr(0, 2) == "0,");  // identical inputs hit the psnr cap
  CHECK(row.find("100.000000") != std::string::npos);

  const std::string png_dir = fx.tmp.str() + "/png";
  CHECK(run_cli("export-png --in " + fx.x_path + " --out " + png_dir, fx.log) == 0);
  CHECK(fs::exists(png_dir + "/frame_0000.png"));
  CHECK(fs::exists(png_dir + "/frame_0002.png"));

  const std::string smp = fx.tmp.str() + "/samples";
  CHECK(run_cli("sample --ckpt " + fx.ckpt_path + " --ae " + fx.ae_path +
                    " --n 2 --frames 3 --height 16 --width 16 --seed 4 --out " + smp,
                fx.log) == 0);
  VideoTensor s0 = load_video(smp + "/sample_000.vten");
  CHECK(s0.frames() == 3);
  CHECK(s0.height() == 16);
  CHECK(fs::exists(smp + "/sample_001.vten"));
}

TEST_CASE("cli: make-dataset and experiment config validation") {
  CliFixture fx;
  const std::string world = fx.tmp.str() + "/world.json";
  WorldConfig w;
  w.height = 16;
  w.width = 16;
  w.frames = 3;
  w.seed = 9;
  save_json(w.to_json(), world);
  const std::string data = fx.tmp.str() + "/data";
  CHECK(run_cli("make-dataset --config " + world + " --n 3 --out " + data, fx.log) == 0);
  WorldConfig back;
  const auto clips = list_dataset(data, &back);
  CHECK(clips.size() == 3);
  CHECK(back.seed == 9);

  // An experiment config without provenance hashes must be rejected.
  const std::string exp = fx.tmp.str() + "/exp.json";
  save_json(nlohmann::json{{"kind", "frame-sweep"},
                           {"eval_world", w.to_json()},
                           {"n_clips", 1},
                           {"noise_seeds", {1}},
                           {"frame_counts", {1}},
                           {"sigma_h", {0.0}},
                           {"scales", {2}},
                           {"solver", nlohmann::json{{"steps", fx.T}}},
                           {"ckpt_path", fx.ckpt_path},
                           {"ae_path", fx.ae_path}},
            exp);
  CHECK(run_cli("experiment run --config " + exp + " --out " + fx.tmp.str() + "/expout",
                fx.log) == 2);
}
