// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#include "dvsr/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dvsr/errors.hpp"

namespace dvsr {
namespace {

constexpr std::uint64_t kMaxHeaderLen = 16u << 20;

void write_u64_le(std::ofstream& f, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  f.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64_le(std::ifstream& f) {
  unsigned char b[8];
  f.read(reinterpret_cast<char*>(b), 8);
  if (f.gcount() != 8) throw FormatError("checkpoint: truncated length prefix");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

nlohmann::json read_header(std::ifstream& f, const std::string& path) {
  const std::uint64_t len = read_u64_le(f);
  if (len == 0 || len > kMaxHeaderLen)
    throw FormatError("checkpoint: implausible header length in " + path);
  std::string s(len, '\0');
  f.read(s.data(), static_cast<std::streamsize>(len));
  if (static_cast<std::uint64_t>(f.gcount()) != len)
    throw FormatError("checkpoint: truncated header in " + path);
  try {
    return nlohmann::json::parse(s);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint: bad header JSON in " + path + ": " + e.what());
  }
}

}  // namespace

Param* ParamStore::add(const std::string& name, int rows, int cols) {
  if (find(name) != nullptr) throw ConfigError("ParamStore: duplicate name " + name);
  params_.push_back(std::make_unique<Param>(name, rows, cols));
  return params_.back().get();
}

Param* ParamStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

std::size_t ParamStore::count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParamStore::zero_grads() {
  for (const auto& p : params_) p->grad.setZero();
}

void ParamStore::save(const std::string& path, const nlohmann::json& meta) const {
  nlohmann::json header;
  header["dtype"] = "float64";
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  for (const auto& p : params_)
    header["tensors"].push_back({{"name", p->name},
                                 {"rows", static_cast<int>(p->value.rows())},
                                 {"cols", static_cast<int>(p->value.cols())}});
  std::string hs = header.dump();
  hs.push_back('\n');

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  write_u64_le(f, hs.size());
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& p : params_) {
    // Eigen stores column-major; serialize row-major for a layout-free format
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> tmp =
        p->value;
    f.write(reinterpret_cast<const char*>(tmp.data()),
            static_cast<std::streamsize>(tmp.size() * sizeof(double)));
  }
  if (!f) throw IoError("write failed: " + path);
}

nlohmann::json ParamStore::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  const nlohmann::json header = read_header(f, path);
  if (header.value("dtype", "") != "float64")
    throw DtypeError("checkpoint: unsupported dtype in " + path);
  const auto& tensors = header.at("tensors");
  if (tensors.size() != params_.size())
    throw FormatError("checkpoint: tensor count mismatch in " + path);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& t = tensors[i];
    Param& p = *params_[i];
    if (t.at("name").get<std::string>() != p.name ||
        t.at("rows").get<int>() != p.value.rows() || t.at("cols").get<int>() != p.value.cols())
      throw FormatError("checkpoint: tensor " + std::to_string(i) + " mismatch in " + path +
                        " (" + t.at("name").get<std::string>() + " vs " + p.name + ")");
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> tmp(
        p.value.rows(), p.value.cols());
    f.read(reinterpret_cast<char*>(tmp.data()),
           static_cast<std::streamsize>(tmp.size() * sizeof(double)));
    if (static_cast<std::size_t>(f.gcount()) != tmp.size() * sizeof(double))
      throw FormatError("checkpoint: truncated payload in " + path);
    p.value = tmp;
  }
  return header.at("meta");
}

nlohmann::json ParamStore::peek_meta(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  return read_header(f, path).at("meta");
}

void normal_init(Eigen::MatrixXd& m, Rng& rng, double std) {
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) m(r, c) = std * rng.normal();
}

Dense::Dense(ParamStore& ps, const std::string& name, int in, int out, Rng& rng,
             double init_std) {
  W_ = ps.add(name + ".W", in, out);
  b_ = ps.add(name + ".b", 1, out);
  if (init_std < 0) init_std = std::sqrt(2.0 / (in + out));
  if (init_std > 0) normal_init(W_->value, rng, init_std);
}

Eigen::MatrixXd Dense::forward(const Eigen::MatrixXd& x) {
  x_ = x;
  return (x * W_->value).rowwise() + b_->value.row(0);
}

Eigen::MatrixXd Dense::backward(const Eigen::MatrixXd& dy, bool need_param_grads) {
  if (need_param_grads) {
    W_->grad.noalias() += x_.transpose() * dy;
    b_->grad.row(0) += dy.colwise().sum();
  }
  return dy * W_->value.transpose();
}

Eigen::MatrixXd LayerNorm::forward(const Eigen::MatrixXd& x) {
  const int n = static_cast<int>(x.rows()), d = static_cast<int>(x.cols());
  xhat_.resize(n, d);
  inv_std_.resize(n);
  for (int r = 0; r < n; ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    inv_std_(r) = 1.0 / std::sqrt(var + eps_);
    xhat_.row(r) = (x.row(r).array() - mean) * inv_std_(r);
  }
  return xhat_;
}

Eigen::MatrixXd LayerNorm::backward(const Eigen::MatrixXd& dy) const {
  Eigen::MatrixXd dx(dy.rows(), dy.cols());
  for (int r = 0; r < dy.rows(); ++r) {
    const double mdy = dy.row(r).mean();
    const double mdyx = (dy.row(r).array() * xhat_.row(r).array()).mean();
    dx.row(r) =
        inv_std_(r) * (dy.row(r).array() - mdy - xhat_.row(r).array() * mdyx).matrix();
  }
  return dx;
}

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

Eigen::MatrixXd Gelu::forward(const Eigen::MatrixXd& x) {
  x_ = x;
  return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); });
}

Eigen::MatrixXd Gelu::backward(const Eigen::MatrixXd& dy) const {
  return dy.cwiseProduct(x_.unaryExpr([](double v) {
    const double phi = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
    return phi + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
  }));
}

Eigen::MatrixXd Silu::forward(const Eigen::MatrixXd& x) {
  x_ = x;
  return x.unaryExpr([](double v) { return v / (1.0 + std::exp(-v)); });
}

Eigen::MatrixXd Silu::backward(const Eigen::MatrixXd& dy) const {
  return dy.cwiseProduct(x_.unaryExpr([](double v) {
    const double s = 1.0 / (1.0 + std::exp(-v));
    return s * (1.0 + v * (1.0 - s));
  }));
}

SelfAttention::SelfAttention(ParamStore& ps, const std::string& name, int dim, int heads,
                             Rng& rng)
    : dim_(dim),
      heads_(heads),
      head_dim_(dim / heads),
      qkv_(ps, name + ".qkv", dim, 3 * dim, rng),
      proj_(ps, name + ".proj", dim, dim, rng) {
  if (dim % heads != 0) throw ConfigError("attention: dim must be divisible by heads");
}

Eigen::MatrixXd SelfAttention::forward(const Eigen::MatrixXd& x,
                                       const std::vector<std::pair<int, int>>& groups) {
  groups_ = groups;
  const Eigen::MatrixXd qkv = qkv_.forward(x);
  q_ = qkv.leftCols(dim_);
  k_ = qkv.middleCols(dim_, dim_);
  v_ = qkv.rightCols(dim_);

  Eigen::MatrixXd out(x.rows(), dim_);
  probs_.assign(groups.size(), {});
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim_));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto [off, n] = groups[g];
    probs_[g].resize(heads_);
    for (int h = 0; h < heads_; ++h) {
      const auto Q = q_.block(off, h * head_dim_, n, head_dim_);
      const auto K = k_.block(off, h * head_dim_, n, head_dim_);
      const auto V = v_.block(off, h * head_dim_, n, head_dim_);
      Eigen::MatrixXd S = scale * (Q * K.transpose());
      for (int r = 0; r < n; ++r) {
        const double mx = S.row(r).maxCoeff();
        S.row(r) = (S.row(r).array() - mx).exp();
        S.row(r) /= S.row(r).sum();
      }
      probs_[g][h] = S;
      out.block(off, h * head_dim_, n, head_dim_).noalias() = S * V;
    }
  }
  return proj_.forward(out);
}

Eigen::MatrixXd SelfAttention::backward(const Eigen::MatrixXd& dy, bool need_param_grads) {
  const Eigen::MatrixXd dout = proj_.backward(dy, need_param_grads);
  Eigen::MatrixXd dqkv(dy.rows(), 3 * dim_);
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim_));
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    const auto [off, n] = groups_[g];
    for (int h = 0; h < heads_; ++h) {
      const Eigen::MatrixXd& P = probs_[g][h];
      const auto Q = q_.block(off, h * head_dim_, n, head_dim_);
      const auto K = k_.block(off, h * head_dim_, n, head_dim_);
      const auto V = v_.block(off, h * head_dim_, n, head_dim_);
      const auto dO = dout.block(off, h * head_dim_, n, head_dim_);

      const Eigen::MatrixXd dV = P.transpose() * dO;
      Eigen::MatrixXd dP = dO * V.transpose();
      Eigen::MatrixXd dS(n, n);
      for (int r = 0; r < n; ++r) {
        const double dot = dP.row(r).cwiseProduct(P.row(r)).sum();
        dS.row(r) = (P.row(r).array() * (dP.row(r).array() - dot)).matrix();
      }
      dqkv.block(off, h * head_dim_, n, head_dim_).noalias() = scale * (dS * K);
      dqkv.block(off, dim_ + h * head_dim_, n, head_dim_).noalias() =
          scale * (dS.transpose() * Q);
      dqkv.block(off, 2 * dim_ + h * head_dim_, n, head_dim_) = dV;
    }
  }
  return qkv_.backward(dqkv, need_param_grads);
}

Conv2d::Conv2d(ParamStore& ps, const std::string& name, int cin, int cout, int ksize,
               int stride, Rng& rng)
    : cin_(cin), cout_(cout), k_(ksize), stride_(stride) {
  if (ksize % 2 != 1) throw ConfigError("conv: kernel size must be odd");
  W_ = ps.add(name + ".W", ksize * ksize * cin, cout);
  b_ = ps.add(name + ".b", 1, cout);
  normal_init(W_->value, rng, std::sqrt(2.0 / (ksize * ksize * cin)));
}

Eigen::MatrixXd Conv2d::forward(const Eigen::MatrixXd& x, int h, int w) {
  if (x.cols() != static_cast<long>(h) * w * cin_)
    throw ShapeError("conv: input plane size mismatch");
  if (h % stride_ != 0 || w % stride_ != 0)
    throw ShapeError("conv: dims must be divisible by stride");
  in_h_ = h;
  in_w_ = w;
  out_h_ = h / stride_;
  out_w_ = w / stride_;
  const int b = static_cast<int>(x.rows());
  const int pad = k_ / 2;
  const int patch = k_ * k_ * cin_;

  cols_.resize(static_cast<long>(b) * out_h_ * out_w_, patch);
  for (int s = 0; s < b; ++s)
    for (int oy = 0; oy < out_h_; ++oy)
      for (int ox = 0; ox < out_w_; ++ox) {
        const long row = (static_cast<long>(s) * out_h_ + oy) * out_w_ + ox;
        int col = 0;
        for (int ky = 0; ky < k_; ++ky) {
          const int iy = std::clamp(oy * stride_ - pad + ky, 0, h - 1);
          for (int kx = 0; kx < k_; ++kx) {
            const int ix = std::clamp(ox * stride_ - pad + kx, 0, w - 1);
            for (int ci = 0; ci < cin_; ++ci)
              cols_(row, col++) = x(s, (iy * w + ix) * cin_ + ci);
          }
        }
      }

  const Eigen::MatrixXd y = (cols_ * W_->value).rowwise() + b_->value.row(0);
  // regroup rows (b*oh*ow, cout) into planes (b, oh*ow*cout)
  Eigen::MatrixXd out(b, static_cast<long>(out_h_) * out_w_ * cout_);
  for (int s = 0; s < b; ++s)
    for (int p = 0; p < out_h_ * out_w_; ++p)
      for (int co = 0; co < cout_; ++co)
        out(s, p * cout_ + co) = y(static_cast<long>(s) * out_h_ * out_w_ + p, co);
  return out;
}

Eigen::MatrixXd Conv2d::backward(const Eigen::MatrixXd& dy, bool need_param_grads) {
  const int b = static_cast<int>(dy.rows());
  const int pad = k_ / 2;
  Eigen::MatrixXd dys(static_cast<long>(b) * out_h_ * out_w_, cout_);
  for (int s = 0; s < b; ++s)
    for (int p = 0; p < out_h_ * out_w_; ++p)
      for (int co = 0; co < cout_; ++co)
        dys(static_cast<long>(s) * out_h_ * out_w_ + p, co) = dy(s, p * cout_ + co);

  if (need_param_grads) {
    W_->grad.noalias() += cols_.transpose() * dys;
    b_->grad.row(0) += dys.colwise().sum();
  }

  const Eigen::MatrixXd dcols = dys * W_->value.transpose();
  Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(b, static_cast<long>(in_h_) * in_w_ * cin_);
  for (int s = 0; s < b; ++s)
    for (int oy = 0; oy < out_h_; ++oy)
      for (int ox = 0; ox < out_w_; ++ox) {
        const long row = (static_cast<long>(s) * out_h_ + oy) * out_w_ + ox;
        int col = 0;
        for (int ky = 0; ky < k_; ++ky) {
          const int iy = std::clamp(oy * stride_ - pad + ky, 0, in_h_ - 1);
          for (int kx = 0; kx < k_; ++kx) {
            const int ix = std::clamp(ox * stride_ - pad + kx, 0, in_w_ - 1);
            for (int ci = 0; ci < cin_; ++ci)
              dx(s, (iy * in_w_ + ix) * cin_ + ci) += dcols(row, col++);
          }
        }
      }
  return dx;
}

Eigen::MatrixXd Upsample2x::forward(const Eigen::MatrixXd& x, int h, int w) {
  h_ = h;
  w_ = w;
  const int b = static_cast<int>(x.rows());
  Eigen::MatrixXd out(b, static_cast<long>(4) * h * w * c_);
  for (int s = 0; s < b; ++s)
    for (int y = 0; y < 2 * h; ++y)
      for (int xx = 0; xx < 2 * w; ++xx)
        for (int c = 0; c < c_; ++c)
          out(s, (static_cast<long>(y) * 2 * w + xx) * c_ + c) =
              x(s, (static_cast<long>(y / 2) * w + xx / 2) * c_ + c);
  return out;
}

Eigen::MatrixXd Upsample2x::backward(const Eigen::MatrixXd& dy) const {
  const int b = static_cast<int>(dy.rows());
  Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(b, static_cast<long>(h_) * w_ * c_);
  for (int s = 0; s < b; ++s)
    for (int y = 0; y < 2 * h_; ++y)
      for (int xx = 0; xx < 2 * w_; ++xx)
        for (int c = 0; c < c_; ++c)
          dx(s, (static_cast<long>(y / 2) * w_ + xx / 2) * c_ + c) +=
              dy(s, (static_cast<long>(y) * 2 * w_ + xx) * c_ + c);
  return dx;
}

void Adam::step(ParamStore& ps) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (const auto& p : ps.all()) {
    if (p->m.size() == 0) {
      p->m = Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols());
      p->v = Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols());
    }
    p->m = beta1_ * p->m + (1.0 - beta1_) * p->grad;
    p->v = beta2_ * p->v + (1.0 - beta2_) * p->grad.cwiseProduct(p->grad);
    p->value.array() -=
        lr_ * (p->m.array() / bc1) / ((p->v.array() / bc2).sqrt() + eps_);
  }
}

Ema::Ema(const ParamStore& ps, double decay) : decay_(decay) {
  for (const auto& p : ps.all()) shadow_.push_back(p->value);
}

void Ema::update(const ParamStore& ps) {
  const auto& all = ps.all();
  for (std::size_t i = 0; i < all.size(); ++i)
    shadow_[i] = decay_ * shadow_[i] + (1.0 - decay_) * all[i]->value;
}

void Ema::copy_to(ParamStore& ps) const {
  const auto& all = ps.all();
  if (all.size() != shadow_.size()) throw ShapeError("ema: store size mismatch");
  for (std::size_t i = 0; i < all.size(); ++i) all[i]->value = shadow_[i];
}

Eigen::RowVectorXd sinusoidal_embedding(double t, int dim) {
  if (dim % 2 != 0) throw ConfigError("sinusoidal embedding dim must be even");
  const int half = dim / 2;
  Eigen::RowVectorXd e(dim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
    e(i) = std::cos(t * freq);
    e(half + i) = std::sin(t * freq);
  }
  return e;
}

}  // namespace dvsr
