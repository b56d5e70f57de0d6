#pragma once

// Image quality metrics on [0, 1] images.

#include "dsnerf/image.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace dsnerf {

inline constexpr double kPsnrLogCap = 99.0;

// 10 log10(1 / MSE); +inf for identical images.
inline double psnr(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr: image dimensions differ");
  if (a.values.empty()) throw std::invalid_argument("psnr: empty image");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = static_cast<double>(a.values[i]) - static_cast<double>(b.values[i]);
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(a.values.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

// Value suitable for logs and JSON, where +inf is not representable.
inline double psnr_for_log(double value) { return std::isfinite(value) ? value : kPsnrLogCap; }

namespace detail {

inline std::array<double, 11> ssim_window() {
  std::array<double, 11> w{};
  double sum = 0.0;
  for (int i = 0; i < 11; ++i) {
    const double x = i - 5;
    w[i] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

// Separable 11x11 valid-mode Gaussian filter of one channel.
inline std::vector<double> gaussian_valid(const std::vector<double>& img, int w, int h) {
  static const auto k = ssim_window();
  const int ow = w - 10;
  const int oh = h - 10;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < 11; ++i) s += k[i] * img[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < 11; ++i) s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

}  // namespace detail

// Mean SSIM over all valid 11x11 Gaussian windows (sigma 1.5), K1 = 0.01, K2 = 0.03, L = 1,
// per channel, then averaged over channels.
inline double ssim(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim: image dimensions differ");
  if (a.width < 11 || a.height < 11) throw std::invalid_argument("ssim: images must be at least 11x11");
  constexpr double c1 = (0.01 * 1.0) * (0.01 * 1.0);
  constexpr double c2 = (0.03 * 1.0) * (0.03 * 1.0);
  const int w = a.width;
  const int h = a.height;
  const std::size_t n = a.pixel_count();
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = a.values[i * a.channels + c];
      y[i] = b.values[i * b.channels + c];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = detail::gaussian_valid(x, w, h);
    const auto my = detail::gaussian_valid(y, w, h);
    const auto sxx = detail::gaussian_valid(xx, w, h);
    const auto syy = detail::gaussian_valid(yy, w, h);
    const auto sxy = detail::gaussian_valid(xy, w, h);
    double sum = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      sum += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += sum / static_cast<double>(mx.size());
  }
  return total / a.channels;
}

}  // namespace dsnerf
