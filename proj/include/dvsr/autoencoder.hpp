// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "dvsr/nn.hpp"
#include "dvsr/tensor.hpp"

namespace dvsr {

/// Frame-wise codec between pixel space and the latent space the diffusion
/// model runs in. Frames are encoded independently (no temporal mixing), so
/// permuting frame order commutes with encode/decode exactly.
///
/// Instances are single-threaded: decode_vjp reuses layer activation caches.
/// Parallel workers should each load their own copy.
class Autoencoder {
 public:
  virtual ~Autoencoder() = default;
  virtual std::string kind() const = 0;  // "identity" | "conv-vae"
  virtual int p() const = 0;             // spatial compression factor
  virtual int latent_channels() const = 0;
  virtual std::string codec_id() const = 0;
  virtual std::size_t param_count() const = 0;

  /// Deterministic encode (posterior mean for the VAE).
  virtual LatentVideo encode(const VideoTensor& x) = 0;
  /// Linear-output decode; clamping happens only at export boundaries.
  /// Throws CodecError when z was produced by a different autoencoder.
  virtual VideoTensor decode(const LatentVideo& z) = 0;
  /// Vector-Jacobian product of decode at z against an HR-shaped cotangent.
  virtual LatentVideo decode_vjp(const LatentVideo& z, const VideoTensor& cot) = 0;

  virtual void save(const std::string& path) const = 0;
  static std::unique_ptr<Autoencoder> load(const std::string& path);
  static std::unique_ptr<Autoencoder> make_identity(int channels);
  /// Freshly initialised (untrained) VAE, mainly for tests and training.
  static std::unique_ptr<Autoencoder> make_conv_vae(int p, int c, int channels,
                                                    std::uint64_t seed);
};

struct VaeTrainConfig {
  int p = 4;
  int c = 4;
  int steps = 2000;
  int batch_frames = 32;
  double lr = 1e-3;
  double kl_weight = 1e-4;
  std::uint64_t seed = 1;
  int log_every = 100;

  static VaeTrainConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Trains the convolutional VAE on frames drawn uniformly from the given clip
/// files, writes the checkpoint to out_path, and returns the loaded result.
/// Per-channel latent statistics are folded into encode/decode so downstream
/// latents are approximately unit-scale. Throws DivergenceError on NaN loss.
std::unique_ptr<Autoencoder> train_vae(const std::vector<std::string>& clip_paths,
                                       const VaeTrainConfig& cfg, const std::string& out_path);

}  // namespace dvsr
