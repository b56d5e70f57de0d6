#pragma once

// Loss terms and their upstream gradients w.r.t. rendered color, rendered depth and
// per-sample weights.
//
//   L_color^ob = sum_{R_c^ob} |C - C_ref|^2
//   L_depth^ob = sum_{R_d^ob} (lambda_d l_d + lambda_kl l_kl) + sum_{R_c^ob u R_d^ob} lambda_s l_s
//   L_depth^nv = sum_{R_d^nv} (lambda_d l_d + lambda_kl l_kl + lambda_s l_s)
//   L_total    = L_color^ob + L_depth^ob + L_depth^nv

#include "dsnerf/rays.hpp"
#include "dsnerf/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace dsnerf {

struct LossWeights {
  double lambda_d = 10.0;
  double lambda_kl = 0.1;
  double lambda_s = 10.0;
  double sigma_kl = 0.0;  // <= 0: three times the mean sample spacing of the ray
};

inline constexpr double kLogEpsilon = 1e-9;

template <class S>
struct ColorLoss {
  S value = 0;
  std::vector<Rgb<S>> grad;
};

template <class S>
ColorLoss<S> color_loss(std::span<const Rgb<S>> rendered, std::span<const Rgb<S>> reference) {
  if (rendered.size() != reference.size()) throw std::invalid_argument("color batch sizes differ");
  ColorLoss<S> out;
  out.grad.resize(rendered.size());
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    const Rgb<S> diff = rendered[i] - reference[i];
    out.value += diff.squaredNorm();
    out.grad[i] = S(2) * diff;
  }
  return out;
}

template <class S>
struct ScalarLoss {
  S value = 0;
  S grad = 0;
};

template <class S>
ScalarLoss<S> depth_l2(S rendered, S reference) {
  const S diff = rendered - reference;
  return {diff * diff, S(2) * diff};
}

template <class S>
struct SmoothnessLoss {
  S value = 0;
  S grad_center = 0;
  S grad_right = 0;
  S grad_down = 0;
};

// |D_right - D_center| + |D_down - D_center|, subgradient 0 at ties.
template <class S>
SmoothnessLoss<S> smoothness_loss(S center, S right, S down) {
  auto sign = [](S v) { return v > S(0) ? S(1) : (v < S(0) ? S(-1) : S(0)); };
  const S du = right - center;
  const S dv = down - center;
  return {std::abs(du) + std::abs(dv), -sign(du) - sign(dv), sign(du), sign(dv)};
}

template <class S>
struct KlLoss {
  S value = 0;
  std::vector<S> d_weight;
};

// Quadrature width of each sample: the span between midpoints to its neighbours, with the
// outer cells closed at t_near and t_far.
template <class S>
std::vector<S> sample_cell_widths(const RaySamples<S>& s) {
  const std::size_t n = s.size();
  std::vector<S> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    const S lo = i == 0 ? s.t_near : S(0.5) * (s.t[i - 1] + s.t[i]);
    const S hi = i + 1 == n ? s.t_far : S(0.5) * (s.t[i] + s.t[i + 1]);
    w[i] = hi - lo;
  }
  return w;
}

// sum_i g_i (-log(w_i + eps)) width_i with g a Gaussian around the reference depth normalised so
// that sum_i g_i width_i = 1.
template <class S>
KlLoss<S> kl_unimodal_loss(const RaySamples<S>& s, S ref_depth, S sigma_kl) {
  if (!(sigma_kl > S(0))) throw std::invalid_argument("sigma_kl must be positive");
  const std::size_t n = s.size();
  const auto width = sample_cell_widths(s);
  std::vector<S> g(n);
  S max_e = -std::numeric_limits<S>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const S z = (s.t[i] - ref_depth) / sigma_kl;
    g[i] = S(-0.5) * z * z;
    max_e = std::max(max_e, g[i]);
  }
  S norm = 0;
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = std::exp(g[i] - max_e);
    norm += g[i] * width[i];
  }
  KlLoss<S> out;
  out.d_weight.resize(n);
  const S eps = static_cast<S>(kLogEpsilon);
  for (std::size_t i = 0; i < n; ++i) {
    const S gi = g[i] / norm;
    out.value += -gi * std::log(s.weight[i] + eps) * width[i];
    out.d_weight[i] = -gi * width[i] / (s.weight[i] + eps);
  }
  return out;
}

template <class S>
S default_sigma_kl(const RaySamples<S>& s) {
  return S(3) * (s.t_far - s.t_near) / static_cast<S>(std::max<std::size_t>(s.size(), 1));
}

template <class S>
struct PatchRender {
  RayRender<S> center;
  std::optional<RayRender<S>> right;  // neighbours are only rendered when smoothness is active
  std::optional<RayRender<S>> down;
};

template <class S>
struct RayUpstream {
  Rgb<S> d_color = Rgb<S>::Zero();
  S d_depth = 0;
  std::vector<S> d_weight;
};

template <class S>
struct PatchUpstream {
  RayUpstream<S> center;
  RayUpstream<S> right;
  RayUpstream<S> down;
};

struct LossTerms {
  double l_d = 0;
  double l_s = 0;
  double l_kl = 0;
};

struct LossReport {
  double color_ob = 0;
  double depth_ob = 0;
  double depth_nv = 0;
  double total = 0;
  LossTerms ob;  // raw (unweighted) sums; ob.l_s covers color and depth patches
  LossTerms nv;

  LossReport& operator+=(const LossReport& o) {
    color_ob += o.color_ob;
    depth_ob += o.depth_ob;
    depth_nv += o.depth_nv;
    total += o.total;
    ob.l_d += o.ob.l_d;
    ob.l_s += o.ob.l_s;
    ob.l_kl += o.ob.l_kl;
    nv.l_d += o.nv.l_d;
    nv.l_s += o.nv.l_s;
    nv.l_kl += o.nv.l_kl;
    return *this;
  }
};

template <class S>
struct LossResult {
  LossReport report;
  std::vector<PatchUpstream<S>> color_ob;
  std::vector<PatchUpstream<S>> depth_ob;
  std::vector<PatchUpstream<S>> depth_nv;
};

namespace detail {

template <class S>
double add_smoothness(const PatchRender<S>& r, S lambda_s, PatchUpstream<S>& up) {
  if (!r.right || !r.down) return 0.0;
  const auto ls = smoothness_loss(r.center.depth, r.right->depth, r.down->depth);
  up.center.d_depth += lambda_s * ls.grad_center;
  up.right.d_depth += lambda_s * ls.grad_right;
  up.down.d_depth += lambda_s * ls.grad_down;
  return static_cast<double>(ls.value);
}

// lambda_d l_d + lambda_kl l_kl for one depth ray; returns (l_d, l_kl).
template <class S>
std::pair<double, double> add_depth_terms(const Ray& ray, const RayRender<S>& r, const LossWeights& w,
                                          RayUpstream<S>& up) {
  if (!ray.ref_depth) throw std::invalid_argument("depth ray without reference depth");
  const S ref = static_cast<S>(*ray.ref_depth);
  const auto ld = depth_l2(r.depth, ref);
  up.d_depth += static_cast<S>(w.lambda_d) * ld.grad;
  const S sigma_kl = w.sigma_kl > 0 ? static_cast<S>(w.sigma_kl) : default_sigma_kl(r.samples);
  const auto kl = kl_unimodal_loss(r.samples, ref, sigma_kl);
  up.d_weight.assign(kl.d_weight.size(), S(0));
  for (std::size_t i = 0; i < kl.d_weight.size(); ++i) up.d_weight[i] = static_cast<S>(w.lambda_kl) * kl.d_weight[i];
  return {static_cast<double>(ld.value), static_cast<double>(kl.value)};
}

}  // namespace detail

// All terms of the training objective over whichever ray sets are supplied. Sums are additive,
// so the batch may be evaluated in chunks and the reports accumulated.
template <class S>
LossResult<S> total_loss(std::span<const RayPatch> color_rays, std::span<const PatchRender<S>> color_renders,
                         std::span<const RayPatch> depth_ob_rays, std::span<const PatchRender<S>> depth_ob_renders,
                         std::span<const RayPatch> depth_nv_rays, std::span<const PatchRender<S>> depth_nv_renders,
                         const LossWeights& w) {
  if (color_rays.size() != color_renders.size() || depth_ob_rays.size() != depth_ob_renders.size() ||
      depth_nv_rays.size() != depth_nv_renders.size()) {
    throw std::invalid_argument("ray and render counts differ");
  }
  const S lambda_s = static_cast<S>(w.lambda_s);
  LossResult<S> out;
  auto& rep = out.report;

  out.color_ob.resize(color_rays.size());
  for (std::size_t i = 0; i < color_rays.size(); ++i) {
    const auto& ray = color_rays[i].center;
    if (!ray.ref_color) throw std::invalid_argument("color ray without reference color");
    const Rgb<S> diff = color_renders[i].center.color - ray.ref_color->cast<S>();
    rep.color_ob += static_cast<double>(diff.squaredNorm());
    out.color_ob[i].center.d_color = S(2) * diff;
    if (w.lambda_s > 0) rep.ob.l_s += detail::add_smoothness(color_renders[i], lambda_s, out.color_ob[i]);
  }

  out.depth_ob.resize(depth_ob_rays.size());
  for (std::size_t i = 0; i < depth_ob_rays.size(); ++i) {
    const auto [ld, lkl] =
        detail::add_depth_terms(depth_ob_rays[i].center, depth_ob_renders[i].center, w, out.depth_ob[i].center);
    rep.ob.l_d += ld;
    rep.ob.l_kl += lkl;
    if (w.lambda_s > 0) rep.ob.l_s += detail::add_smoothness(depth_ob_renders[i], lambda_s, out.depth_ob[i]);
  }

  out.depth_nv.resize(depth_nv_rays.size());
  for (std::size_t i = 0; i < depth_nv_rays.size(); ++i) {
    const auto [ld, lkl] =
        detail::add_depth_terms(depth_nv_rays[i].center, depth_nv_renders[i].center, w, out.depth_nv[i].center);
    rep.nv.l_d += ld;
    rep.nv.l_kl += lkl;
    if (w.lambda_s > 0) rep.nv.l_s += detail::add_smoothness(depth_nv_renders[i], lambda_s, out.depth_nv[i]);
  }

  rep.depth_ob = w.lambda_d * rep.ob.l_d + w.lambda_kl * rep.ob.l_kl + w.lambda_s * rep.ob.l_s;
  rep.depth_nv = w.lambda_d * rep.nv.l_d + w.lambda_kl * rep.nv.l_kl + w.lambda_s * rep.nv.l_s;
  rep.total = rep.color_ob + rep.depth_ob + rep.depth_nv;
  return out;
}

}  // namespace dsnerf
