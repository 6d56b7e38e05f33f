// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dvsr/rng.hpp"

namespace dvsr {

/// One learnable matrix with its gradient and Adam moments.
struct Param {
  std::string name;
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;
  Eigen::MatrixXd m, v;  // sized lazily by the optimizer

  Param(std::string n, int rows, int cols)
      : name(std::move(n)),
        value(Eigen::MatrixXd::Zero(rows, cols)),
        grad(Eigen::MatrixXd::Zero(rows, cols)) {}
};

/// Ordered registry of parameters; construction order fixes the checkpoint
/// layout. Layers hold stable Param pointers into the store.
class ParamStore {
 public:
  Param* add(const std::string& name, int rows, int cols);
  Param* find(const std::string& name) const;
  const std::vector<std::unique_ptr<Param>>& all() const { return params_; }
  std::size_t count() const;  // total scalar parameter count
  void zero_grads();

  /// Single-file checkpoint: 8-byte LE header length, newline-terminated JSON
  /// {"meta": ..., "tensors": [{name, rows, cols}...], "dtype": "float64"},
  /// then row-major float64 payloads in tensor order.
  void save(const std::string& path, const nlohmann::json& meta) const;
  /// Loads into the already-constructed store; names and shapes must match.
  nlohmann::json load(const std::string& path);
  /// Reads only the metadata header of a checkpoint file.
  static nlohmann::json peek_meta(const std::string& path);

 private:
  std::vector<std::unique_ptr<Param>> params_;
};

/// Fills a matrix with N(0, std^2) draws.
void normal_init(Eigen::MatrixXd& m, Rng& rng, double std);

/// Affine layer y = x W + b over row-major samples (N x in -> N x out).
class Dense {
 public:
  /// init_std < 0 selects Xavier (sqrt(2/(in+out))); 0 zero-initializes
  /// (used for modulation layers and the output head).
  Dense(ParamStore& ps, const std::string& name, int in, int out, Rng& rng,
        double init_std = -1.0);
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x);
  Eigen::MatrixXd backward(const Eigen::MatrixXd& dy, bool need_param_grads);
  Param* W() { return W_; }
  Param* b() { return b_; }

 private:
  Param *W_, *b_;
  Eigen::MatrixXd x_;
};

/// Row-wise layer normalization without learned affine (modulation supplies
/// shift and scale externally).
class LayerNorm {
 public:
  explicit LayerNorm(double eps = 1e-6) : eps_(eps) {}
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x);
  Eigen::MatrixXd backward(const Eigen::MatrixXd& dy) const;

 private:
  double eps_;
  Eigen::MatrixXd xhat_;
  Eigen::VectorXd inv_std_;
};

/// Exact GELU x * Phi(x).
class Gelu {
 public:
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x);
  Eigen::MatrixXd backward(const Eigen::MatrixXd& dy) const;

 private:
  Eigen::MatrixXd x_;
};

/// SiLU x * sigmoid(x).
class Silu {
 public:
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x);
  Eigen::MatrixXd backward(const Eigen::MatrixXd& dy) const;

 private:
  Eigen::MatrixXd x_;
};

/// Multi-head self-attention over row ranges of a shared token matrix. Each
/// (offset, count) group attends only within itself, which is how the
/// factorized spatial (within-frame) and temporal (within-position) blocks
/// share one implementation.
class SelfAttention {
 public:
  SelfAttention(ParamStore& ps, const std::string& name, int dim, int heads, Rng& rng);
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x,
                          const std::vector<std::pair<int, int>>& groups);
  Eigen::MatrixXd backward(const Eigen::MatrixXd& dy, bool need_param_grads);

 private:
  int dim_, heads_, head_dim_;
  Dense qkv_, proj_;
  std::vector<std::pair<int, int>> groups_;
  Eigen::MatrixXd q_, k_, v_;                 // N x dim each
  std::vector<std::vector<Eigen::MatrixXd>> probs_;  // [group][head] softmax rows
};

/// 2D convolution over a batch of row-major (H, W, Cin) planes with replicate
/// padding ("same" semantics; stride 2 halves even dims). Input and output
/// batches are matrices with one flattened plane per row.
class Conv2d {
 public:
  Conv2d(ParamStore& ps, const std::string& name, int cin, int cout, int ksize, int stride,
         Rng& rng);
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, int h, int w);
  Eigen::MatrixXd backward(const Eigen::MatrixXd& dy, bool need_param_grads);
  int out_h() const { return out_h_; }
  int out_w() const { return out_w_; }

 private:
  Param *W_, *b_;  // W: (k*k*cin) x cout
  int cin_, cout_, k_, stride_;
  int in_h_ = 0, in_w_ = 0, out_h_ = 0, out_w_ = 0;
  Eigen::MatrixXd cols_;  // stacked im2col rows for the whole batch
};

/// Nearest-neighbor 2x upsampling of (H, W, C) planes, one per row.
class Upsample2x {
 public:
  explicit Upsample2x(int channels) : c_(channels) {}
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, int h, int w);
  Eigen::MatrixXd backward(const Eigen::MatrixXd& dy) const;

 private:
  int c_;
  int h_ = 0, w_ = 0;
};

/// Adam with bias correction, operating over a ParamStore.
class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(ParamStore& ps);
  int steps_taken() const { return t_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
};

/// Exponential moving average of a store's weights.
class Ema {
 public:
  Ema(const ParamStore& ps, double decay);
  void update(const ParamStore& ps);
  /// Copies the averaged weights into the target store (shapes must match).
  void copy_to(ParamStore& ps) const;
  double decay() const { return decay_; }

 private:
  double decay_;
  std::vector<Eigen::MatrixXd> shadow_;
};

/// Classic transformer sinusoidal embedding of a scalar step index.
Eigen::RowVectorXd sinusoidal_embedding(double t, int dim);

}  // namespace dvsr
