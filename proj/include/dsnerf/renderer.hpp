#pragma once

// Quadrature for volume-rendered color and depth along a ray, and its reverse pass.
//
//   alpha_i = 1 - exp(-sigma_i delta_i),  T_1 = 1,  T_{i+1} = T_i (1 - alpha_i),  w_i = T_i alpha_i
//   C = sum_i w_i c_i (+ (1 - sum_i w_i) background),  D = sum_i w_i t_i   (depth is not normalized)

#include "dsnerf/field.hpp"
#include "dsnerf/image.hpp"
#include "dsnerf/rays.hpp"

#include <cmath>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace dsnerf {

template <class S>
using Rgb = Eigen::Matrix<S, 3, 1>;

template <class S>
struct RaySamples {
  std::vector<S> t;
  std::vector<S> delta;
  std::vector<S> sigma;
  std::vector<S> alpha;
  std::vector<S> transmittance;
  std::vector<S> weight;
  S t_near = 0;
  S t_far = 0;

  std::size_t size() const { return t.size(); }
};

// One jittered sample per uniform bin of [t_near, t_far]; bin midpoints when `rng` is null.
inline std::vector<double> stratified_sample(const Ray& ray, int n, std::mt19937_64* rng) {
  if (n < 2) throw std::invalid_argument("need at least two samples per ray");
  std::vector<double> t(n);
  const double bin = (ray.t_far - ray.t_near) / n;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    const double offset = rng ? u(*rng) : 0.5;
    t[i] = ray.t_near + (i + offset) * bin;
  }
  return t;
}

inline std::vector<double> stratified_sample(const Ray& ray, int n, std::optional<std::uint64_t> seed) {
  if (!seed) return stratified_sample(ray, n, nullptr);
  std::mt19937_64 rng(*seed);
  return stratified_sample(ray, n, &rng);
}

// Fills delta (last interval ends at t_far) and the compositing quantities from t and sigma.
template <class S>
void composite_weights(RaySamples<S>& s) {
  const std::size_t n = s.t.size();
  s.delta.resize(n);
  s.alpha.resize(n);
  s.transmittance.resize(n);
  s.weight.resize(n);
  S trans = S(1);
  for (std::size_t i = 0; i < n; ++i) {
    s.delta[i] = (i + 1 < n ? s.t[i + 1] : s.t_far) - s.t[i];
    s.alpha[i] = -std::expm1(-s.sigma[i] * s.delta[i]);
    s.transmittance[i] = trans;
    s.weight[i] = trans * s.alpha[i];
    trans *= S(1) - s.alpha[i];
  }
}

template <class S>
struct RayRender {
  Rgb<S> color = Rgb<S>::Zero();
  S depth = 0;
  RaySamples<S> samples;
  Matrix3X<S> sample_colors;  // c_i, needed by the reverse pass
  std::optional<Rgb<S>> background;
};

// Composites one ray whose samples occupy columns [offset, offset + t.size()) of sigma/color.
template <class S>
RayRender<S> composite(const std::vector<S>& t, S t_near, S t_far, const Eigen::Ref<const RowX<S>>& sigma,
                       const Eigen::Ref<const Matrix3X<S>>& color, const std::optional<Rgb<S>>& background = {}) {
  RayRender<S> r;
  r.samples.t = t;
  r.samples.t_near = t_near;
  r.samples.t_far = t_far;
  r.samples.sigma.assign(sigma.data(), sigma.data() + sigma.size());
  composite_weights(r.samples);
  r.sample_colors = color;
  r.background = background;
  S total = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const S w = r.samples.weight[i];
    r.color += w * color.col(static_cast<Eigen::Index>(i));
    r.depth += w * t[i];
    total += w;
  }
  if (background) r.color += (S(1) - total) * *background;
  return r;
}

template <class S>
struct CompositeGradient {
  RowX<S> d_sigma;
  Matrix3X<S> d_color;
};

// Reverse pass of composite(): upstream dL/dC, dL/dD and optional direct dL/dw_i.
template <class S>
CompositeGradient<S> composite_backward(const RayRender<S>& r, const Rgb<S>& d_color, S d_depth,
                                        const std::vector<S>& d_weight = {}) {
  const auto& s = r.samples;
  const std::size_t n = s.size();
  CompositeGradient<S> g;
  g.d_sigma.resize(static_cast<Eigen::Index>(n));
  g.d_color.resize(3, static_cast<Eigen::Index>(n));
  std::vector<S> gw(n);
  const S bg_term = r.background ? d_color.dot(*r.background) : S(0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    gw[i] = d_color.dot(r.sample_colors.col(col)) + d_depth * s.t[i] - bg_term;
    if (!d_weight.empty()) gw[i] += d_weight[i];
    g.d_color.col(col) = s.weight[i] * d_color;
  }
  // dw_i/dtau_j = -w_i (i > j), T_{j+1} (i = j), with tau_j = sigma_j delta_j.
  S suffix = 0;
  for (std::size_t k = n; k-- > 0;) {
    const S next_trans = s.transmittance[k] * (S(1) - s.alpha[k]);
    const S d_tau = gw[k] * next_trans - suffix;
    g.d_sigma(static_cast<Eigen::Index>(k)) = d_tau * s.delta[k];
    suffix += gw[k] * s.weight[k];
  }
  return g;
}

namespace detail {

template <class Field>
auto render_single(const Field& field, const Ray& ray, int n, std::mt19937_64* rng) {
  using S = typename Field::Scalar;
  const auto t = stratified_sample(ray, n, rng);
  Eigen::Matrix3Xd x(3, n);
  Eigen::Matrix3Xd d(3, n);
  for (int i = 0; i < n; ++i) {
    x.col(i) = ray.at(t[i]);
    d.col(i) = ray.direction;
  }
  const auto q = field.query(x, d);
  std::vector<S> ts(t.begin(), t.end());
  RowX<S> sigma = q.sigma.transpose();
  return composite<S>(ts, static_cast<S>(ray.t_near), static_cast<S>(ray.t_far), sigma, q.color);
}

}  // namespace detail

template <class Field>
auto render_color(const Field& field, const Ray& ray, int n, std::mt19937_64* rng = nullptr) {
  auto r = detail::render_single(field, ray, n, rng);
  return std::make_pair(r.color, std::move(r.samples));
}

template <class Field>
auto render_depth(const Field& field, const Ray& ray, int n, std::mt19937_64* rng = nullptr) {
  auto r = detail::render_single(field, ray, n, rng);
  return std::make_pair(r.depth, std::move(r.samples));
}

struct RenderedView {
  ImageBuffer rgb;
  ImageBuffer depth;  // single channel, unnormalized expected termination distance
};

// Deterministic (midpoint-sampled) render of a full view, batched over rows.
template <class Field>
RenderedView render_view(const Field& field, const CameraPose& pose, const Intrinsics& intr, const DepthRange& bounds,
                         int samples, const std::optional<Vec3>& background = {}) {
  using S = typename Field::Scalar;
  RenderedView out{ImageBuffer(intr.width, intr.height, 3), ImageBuffer(intr.width, intr.height, 1)};
  std::optional<Rgb<S>> bg;
  if (background) bg = background->cast<S>();
  const int rows_per_chunk = std::max(1, 2048 / std::max(1, intr.width));
  for (int y0 = 0; y0 < intr.height; y0 += rows_per_chunk) {
    const int y1 = std::min(intr.height, y0 + rows_per_chunk);
    const int rays = (y1 - y0) * intr.width;
    Eigen::Matrix3Xd x(3, static_cast<Eigen::Index>(rays) * samples);
    Eigen::Matrix3Xd d(3, x.cols());
    std::vector<std::vector<S>> ts(rays);
    std::vector<Ray> batch(rays);
    for (int y = y0, k = 0; y < y1; ++y) {
      for (int px = 0; px < intr.width; ++px, ++k) {
        batch[k] = pixel_to_ray(pose, intr, Vec2(px, y), bounds);
        const auto t = stratified_sample(batch[k], samples, nullptr);
        ts[k].assign(t.begin(), t.end());
        for (int i = 0; i < samples; ++i) {
          x.col(static_cast<Eigen::Index>(k) * samples + i) = batch[k].at(t[i]);
          d.col(static_cast<Eigen::Index>(k) * samples + i) = batch[k].direction;
        }
      }
    }
    const auto q = field.query(x, d);
    const RowX<S> sigma = q.sigma.transpose();
    for (int y = y0, k = 0; y < y1; ++y) {
      for (int px = 0; px < intr.width; ++px, ++k) {
        const auto off = static_cast<Eigen::Index>(k) * samples;
        const auto r = composite<S>(ts[k], static_cast<S>(bounds.near), static_cast<S>(bounds.far),
                                    sigma.segment(off, samples), q.color.middleCols(off, samples), bg);
        for (int c = 0; c < 3; ++c) out.rgb.at(px, y, c) = static_cast<float>(r.color(c));
        out.depth.at(px, y, 0) = static_cast<float>(r.depth);
      }
    }
  }
  return out;
}

}  // namespace dsnerf
