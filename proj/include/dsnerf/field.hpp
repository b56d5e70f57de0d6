#pragma once

// Coordinate network (x, d) -> (rgb, sigma): sinusoidal encodings, a ReLU density trunk,
// and a one-hidden-layer color head conditioned on the viewing direction.
// Gradients are computed by hand; the forward cache keeps exactly what backward needs.

#include "dsnerf/geometry.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsnerf {

struct FieldConfig {
  int trunk_layers = 4;
  int trunk_width = 128;
  int head_width = 64;
  int pos_freqs = 10;
  int dir_freqs = 4;
  // Positions are encoded as (x - center) / scale.
  Vec3 center = Vec3::Zero();
  double scale = 1.0;

  bool operator==(const FieldConfig&) const = default;
};

template <class S>
using MatrixX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Matrix3X = Eigen::Matrix<S, 3, Eigen::Dynamic>;
template <class S>
using RowX = Eigen::Matrix<S, 1, Eigen::Dynamic>;

// Rows of the result, for frequency j and component i: sin(2^j pi v_i), cos(2^j pi v_i).
template <class S, class Derived>
MatrixX<S> positional_encode(const Eigen::MatrixBase<Derived>& v, int freqs) {
  if (freqs < 0) throw std::invalid_argument("negative frequency count");
  const Eigen::Index n = v.rows();
  MatrixX<S> out(2 * freqs * n, v.cols());
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    Eigen::Index row = 0;
    for (int j = 0; j < freqs; ++j) {
      const S scale = static_cast<S>(std::ldexp(kPi, j));
      for (Eigen::Index i = 0; i < n; ++i) {
        const S arg = scale * static_cast<S>(v(i, c));
        out(row++, c) = std::sin(arg);
        out(row++, c) = std::cos(arg);
      }
    }
  }
  return out;
}

inline std::vector<double> positional_encode(const std::vector<double>& v, int freqs) {
  Eigen::Map<const Eigen::VectorXd> col(v.data(), static_cast<Eigen::Index>(v.size()));
  const MatrixX<double> enc = positional_encode<double>(col, freqs);
  return {enc.data(), enc.data() + enc.size()};
}

// Per-parameter gradient accumulators, shaped like RadianceField::parameters().
template <class S>
struct GradientTape {
  std::vector<MatrixX<S>> grads;

  void zero() {
    for (auto& g : grads) g.setZero();
  }

  void add(const GradientTape& other) {
    for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += other.grads[i];
  }

  S squared_norm() const {
    S s = 0;
    for (const auto& g : grads) s += g.squaredNorm();
    return s;
  }

  void scale(S factor) {
    for (auto& g : grads) g *= factor;
  }
};

template <class S>
struct FieldCache {
  MatrixX<S> enc_x;
  std::vector<MatrixX<S>> trunk;  // post-ReLU activations per trunk layer
  MatrixX<S> head_in;             // [last trunk activation; encoded direction]
  MatrixX<S> head;                // post-ReLU head activation
  RowX<S> sigma_pre;
  Matrix3X<S> color;
  RowX<S> sigma;

  Eigen::Index size() const { return sigma.cols(); }
};

template <class S>
struct FieldQuery {
  Eigen::Matrix<S, Eigen::Dynamic, 1> sigma;
  Matrix3X<S> color;
};

template <class S>
class RadianceField {
 public:
  using Scalar = S;

  RadianceField() : RadianceField(FieldConfig{}, 0) {}

  RadianceField(const FieldConfig& config, std::uint64_t seed) : config_(config) {
    if (config.trunk_layers < 1 || config.trunk_width < 1 || config.head_width < 1 || config.pos_freqs < 0 ||
        config.dir_freqs < 0 || !(config.scale > 0.0)) {
      throw std::invalid_argument("invalid field configuration");
    }
    int in = pos_dim();
    for (int l = 0; l < config.trunk_layers; ++l) {
      params_.push_back(MatrixX<S>::Zero(config.trunk_width, in));
      params_.push_back(MatrixX<S>::Zero(config.trunk_width, 1));
      in = config.trunk_width;
    }
    params_.push_back(MatrixX<S>::Zero(1, config.trunk_width));
    params_.push_back(MatrixX<S>::Zero(1, 1));
    params_.push_back(MatrixX<S>::Zero(config.head_width, config.trunk_width + dir_dim()));
    params_.push_back(MatrixX<S>::Zero(config.head_width, 1));
    params_.push_back(MatrixX<S>::Zero(3, config.head_width));
    params_.push_back(MatrixX<S>::Zero(3, 1));

    // He-uniform weights, zero biases.
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < params_.size(); i += 2) {
      auto& w = params_[i];
      const double fan_in = std::max<Eigen::Index>(w.cols(), 1);
      std::uniform_real_distribution<double> u(-std::sqrt(6.0 / fan_in), std::sqrt(6.0 / fan_in));
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = static_cast<S>(u(rng));
      }
    }
  }

  const FieldConfig& config() const { return config_; }
  int pos_dim() const { return 6 * config_.pos_freqs; }
  int dir_dim() const { return 6 * config_.dir_freqs; }

  std::vector<MatrixX<S>>& parameters() { return params_; }
  const std::vector<MatrixX<S>>& parameters() const { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.size());
    return n;
  }

  // Column-major flattening in parameters() order.
  std::vector<double> flat_parameters() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto& p : params_) {
      for (Eigen::Index i = 0; i < p.size(); ++i) out.push_back(static_cast<double>(p.data()[i]));
    }
    return out;
  }

  void set_flat_parameters(const std::vector<double>& flat) {
    if (flat.size() != parameter_count()) throw std::invalid_argument("parameter count mismatch");
    std::size_t k = 0;
    for (auto& p : params_) {
      for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = static_cast<S>(flat[k++]);
    }
  }

  GradientTape<S> make_tape() const {
    GradientTape<S> tape;
    for (const auto& p : params_) tape.grads.push_back(MatrixX<S>::Zero(p.rows(), p.cols()));
    return tape;
  }

  template <class To>
  RadianceField<To> cast() const {
    RadianceField<To> out(config_, 0);
    for (std::size_t i = 0; i < params_.size(); ++i) out.parameters()[i] = params_[i].template cast<To>();
    return out;
  }

  // Batched forward pass over columns of `x` (world positions) and `d` (unit directions).
  template <class DX, class DD>
  void forward(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DD>& d, FieldCache<S>& cache) const {
    const Eigen::Index n = x.cols();
    const Eigen::Matrix<S, 3, 1> center = config_.center.cast<S>();
    const S inv_scale = static_cast<S>(1.0 / config_.scale);
    const Matrix3X<S> xn = (x.template cast<S>().colwise() - center) * inv_scale;
    cache.enc_x = positional_encode<S>(xn, config_.pos_freqs);

    cache.trunk.resize(config_.trunk_layers);
    const MatrixX<S>* input = &cache.enc_x;
    for (int l = 0; l < config_.trunk_layers; ++l) {
      auto& h = cache.trunk[l];
      h.noalias() = weight(l) * *input;
      h.colwise() += bias(l).col(0);
      h = h.cwiseMax(S(0));
      input = &h;
    }
    const MatrixX<S>& feat = cache.trunk.back();

    cache.sigma_pre.noalias() = params_[density_index()] * feat;
    cache.sigma_pre.array() += params_[density_index() + 1](0, 0);
    cache.sigma.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) cache.sigma(i) = softplus(cache.sigma_pre(i));

    const int width = config_.trunk_width;
    cache.head_in.resize(width + dir_dim(), n);
    cache.head_in.topRows(width) = feat;
    if (dir_dim() > 0) cache.head_in.bottomRows(dir_dim()) = positional_encode<S>(d.template cast<S>(), config_.dir_freqs);
    cache.head.noalias() = params_[head_index()] * cache.head_in;
    cache.head.colwise() += params_[head_index() + 1].col(0);
    cache.head = cache.head.cwiseMax(S(0));

    MatrixX<S> logits = params_[color_index()] * cache.head;
    logits.colwise() += params_[color_index() + 1].col(0);
    cache.color = logits.unaryExpr([](S v) { return sigmoid(v); });
  }

  // Accumulates dL/dtheta given dL/dsigma (1 x n) and dL/dcolor (3 x n) for the cached samples.
  void backward(const FieldCache<S>& cache, const RowX<S>& d_sigma, const Matrix3X<S>& d_color,
                GradientTape<S>& tape) const {
    const Eigen::Index n = cache.size();
    if (d_sigma.cols() != n || d_color.cols() != n) throw std::logic_error("upstream gradient count does not match cache");
    if (tape.grads.size() != params_.size()) throw std::logic_error("gradient tape does not match field");

    const Matrix3X<S> dz_c = d_color.cwiseProduct(cache.color.cwiseProduct((S(1) - cache.color.array()).matrix()));
    tape.grads[color_index()].noalias() += dz_c * cache.head.transpose();
    tape.grads[color_index() + 1] += dz_c.rowwise().sum();

    MatrixX<S> dh = params_[color_index()].transpose() * dz_c;
    dh = (cache.head.array() > S(0)).select(dh, S(0));
    tape.grads[head_index()].noalias() += dh * cache.head_in.transpose();
    tape.grads[head_index() + 1] += dh.rowwise().sum();

    const int width = config_.trunk_width;
    MatrixX<S> df = params_[head_index()].leftCols(width).transpose() * dh;

    RowX<S> dz_s(n);
    for (Eigen::Index i = 0; i < n; ++i) dz_s(i) = d_sigma(i) * sigmoid(cache.sigma_pre(i));
    tape.grads[density_index()].noalias() += dz_s * cache.trunk.back().transpose();
    tape.grads[density_index() + 1](0, 0) += dz_s.sum();
    df.noalias() += params_[density_index()].transpose() * dz_s;

    for (int l = config_.trunk_layers - 1; l >= 0; --l) {
      df = (cache.trunk[l].array() > S(0)).select(df, S(0));
      const MatrixX<S>& input = l == 0 ? cache.enc_x : cache.trunk[l - 1];
      tape.grads[2 * l].noalias() += df * input.transpose();
      tape.grads[2 * l + 1] += df.rowwise().sum();
      if (l > 0) df = weight(l).transpose() * df;
    }
  }

  template <class DX, class DD>
  FieldQuery<S> query(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DD>& d) const {
    FieldCache<S> cache;
    forward(x, d, cache);
    return {cache.sigma.transpose(), cache.color};
  }

  struct Sample {
    Vec3 color;
    double sigma;
  };

  Sample eval(const Vec3& x, const Vec3& d) const {
    if (!x.allFinite() || !d.allFinite()) throw std::invalid_argument("non-finite field input");
    if (std::abs(d.norm() - 1.0) > 1e-6) throw std::invalid_argument("viewing direction is not unit length");
    const auto q = query(Eigen::Matrix<double, 3, 1>(x), Eigen::Matrix<double, 3, 1>(d));
    return {q.color.col(0).template cast<double>(), static_cast<double>(q.sigma(0))};
  }

  int density_index() const { return 2 * config_.trunk_layers; }
  int head_index() const { return density_index() + 2; }
  int color_index() const { return head_index() + 2; }

  static S softplus(S v) { return v > S(0) ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }
  static S sigmoid(S v) {
    if (v >= S(0)) return S(1) / (S(1) + std::exp(-v));
    const S e = std::exp(v);
    return e / (S(1) + e);
  }

 private:
  const MatrixX<S>& weight(int l) const { return params_[2 * l]; }
  const MatrixX<S>& bias(int l) const { return params_[2 * l + 1]; }

  FieldConfig config_;
  std::vector<MatrixX<S>> params_;
};

}  // namespace dsnerf
