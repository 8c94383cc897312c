#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "stvrecon/fields.hpp"
#include "stvrecon/structural_prior.hpp"

namespace stvrecon {

struct CannyParams {
  double low_thresh = 0.275;
  double high_thresh = 0.55;
  double sigma = 1.8;
};

struct EdgeDetection {
  ScalarField mask; ///< 1 on edge pixels, 0 elsewhere
  double max_magnitude = 0.0;
  bool empty() const {
    return std::none_of(mask.begin(), mask.end(), [](double v) { return v != 0.0; });
  }
};

namespace detail {

inline std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    k[t + radius] = std::exp(-0.5 * t * t / (sigma * sigma));
    sum += k[t + radius];
  }
  for (auto &v : k)
    v /= sum;
  return k;
}

/// Separable blur with replicated borders.
inline ScalarField gaussian_blur(const ScalarField &f, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const long r = static_cast<long>(k.size() / 2);
  const long h = static_cast<long>(f.height()), w = static_cast<long>(f.width());
  ScalarField tmp(f.shape()), out(f.shape());
  for (long i = 0; i < h; ++i)
    for (long j = 0; j < w; ++j) {
      double s = 0.0;
      for (long t = -r; t <= r; ++t)
        s += k[t + r] * f(i, std::clamp(j + t, 0L, w - 1));
      tmp(i, j) = s;
    }
  for (long i = 0; i < h; ++i)
    for (long j = 0; j < w; ++j) {
      double s = 0.0;
      for (long t = -r; t <= r; ++t)
        s += k[t + r] * tmp(std::clamp(i + t, 0L, h - 1), j);
      out(i, j) = s;
    }
  return out;
}

/// 1D squared distance transform of a sampled function (lower envelope of
/// parabolas).
inline void edt_1d(const std::vector<double> &f, std::vector<double> &d, std::vector<long> &v,
                   std::vector<double> &z) {
  const long n = static_cast<long>(f.size());
  constexpr double inf = std::numeric_limits<double>::infinity();
  long k = -1;
  for (long q = 0; q < n; ++q) {
    if (f[q] == inf)
      continue;
    while (true) {
      if (k < 0) {
        v[0] = q;
        z[0] = -inf;
        z[1] = inf;
        k = 0;
        break;
      }
      const double s =
          ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * (q - v[k]));
      if (s <= z[k]) {
        --k;
        continue;
      }
      ++k;
      v[k] = q;
      z[k] = s;
      z[k + 1] = inf;
      break;
    }
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), inf);
    return;
  }
  long j = 0;
  for (long q = 0; q < n; ++q) {
    while (z[j + 1] < q)
      ++j;
    const double diff = double(q - v[j]);
    d[q] = diff * diff + f[v[j]];
  }
}

} // namespace detail

/// Canny detector: Gaussian smoothing, central-difference gradient,
/// non-maximum suppression along the quantized gradient direction and
/// hysteresis. Thresholds are fractions of the maximal gradient magnitude.
inline EdgeDetection detect_edges(const ScalarField &f, double low_thresh, double high_thresh,
                                  double sigma) {
  if (!(low_thresh >= 0.0 && low_thresh < high_thresh && high_thresh <= 1.0))
    throw std::invalid_argument("detect_edges: need 0 <= low < high <= 1");
  if (!(sigma > 0.0))
    throw std::invalid_argument("detect_edges: sigma must be positive");

  const ScalarField b = detail::gaussian_blur(f, sigma);
  const long h = static_cast<long>(f.height()), w = static_cast<long>(f.width());
  auto at = [&](long i, long j) { return b(std::clamp(i, 0L, h - 1), std::clamp(j, 0L, w - 1)); };

  ScalarField gx(f.shape()), gy(f.shape()), mag(f.shape());
  double max_mag = 0.0;
  for (long i = 0; i < h; ++i)
    for (long j = 0; j < w; ++j) {
      gx(i, j) = 0.5 * (at(i, j + 1) - at(i, j - 1));
      gy(i, j) = 0.5 * (at(i + 1, j) - at(i - 1, j));
      mag(i, j) = std::hypot(gx(i, j), gy(i, j));
      max_mag = std::max(max_mag, mag(i, j));
    }

  EdgeDetection result{ScalarField(f.shape(), 0.0), max_mag};
  // Ignore magnitudes at round-off level relative to the data.
  double scale = 0.0;
  for (double v : f)
    scale = std::max(scale, std::abs(v));
  if (!(max_mag > 1e-12 * std::max(scale, 1.0)))
    return result;

  auto m = [&](long i, long j) {
    return (i < 0 || j < 0 || i >= h || j >= w) ? 0.0 : mag(i, j);
  };
  // Strict on one side and non-strict on the other so plateaus of equal
  // magnitude straddling a step keep exactly one pixel.
  ScalarField thin(f.shape(), 0.0);
  for (long i = 0; i < h; ++i)
    for (long j = 0; j < w; ++j) {
      const double c = mag(i, j);
      if (c == 0.0)
        continue;
      double angle = std::atan2(gy(i, j), gx(i, j)) * 180.0 / std::numbers::pi;
      if (angle < 0)
        angle += 180.0;
      long di = 0, dj = 0;
      if (angle < 22.5 || angle >= 157.5) {
        dj = 1;
      } else if (angle < 67.5) {
        di = 1;
        dj = 1;
      } else if (angle < 112.5) {
        di = 1;
      } else {
        di = 1;
        dj = -1;
      }
      if (c >= m(i - di, j - dj) && c > m(i + di, j + dj))
        thin(i, j) = c / max_mag;
    }

  std::vector<std::pair<long, long>> stack;
  for (long i = 0; i < h; ++i)
    for (long j = 0; j < w; ++j)
      if (thin(i, j) >= high_thresh && thin(i, j) > 0.0) {
        result.mask(i, j) = 1.0;
        stack.emplace_back(i, j);
      }
  while (!stack.empty()) {
    const auto [i, j] = stack.back();
    stack.pop_back();
    for (long di = -1; di <= 1; ++di)
      for (long dj = -1; dj <= 1; ++dj) {
        const long ni = i + di, nj = j + dj;
        if ((di == 0 && dj == 0) || ni < 0 || nj < 0 || ni >= h || nj >= w)
          continue;
        if (result.mask(ni, nj) == 0.0 && thin(ni, nj) > 0.0 && thin(ni, nj) >= low_thresh) {
          result.mask(ni, nj) = 1.0;
          stack.emplace_back(ni, nj);
        }
      }
  }
  return result;
}

inline EdgeDetection detect_edges(const ScalarField &f, const CannyParams &p = {}) {
  return detect_edges(f, p.low_thresh, p.high_thresh, p.sigma);
}

/// Exact Euclidean distance (pixels) to the nearest nonzero mask pixel, via
/// two separable passes of the lower-envelope squared distance transform.
/// An empty mask yields the largest finite double everywhere.
inline ScalarField distance_transform(const ScalarField &mask) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const std::size_t h = mask.height(), w = mask.width();
  ScalarField sq(mask.shape());
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (mask[k] != 0.0 && mask[k] != 1.0)
      throw std::invalid_argument("distance_transform: mask must be binary");
    sq[k] = mask[k] != 0.0 ? 0.0 : inf;
  }
  const std::size_t n = std::max(h, w);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<long> v(n);
  for (std::size_t j = 0; j < w; ++j) {
    f.resize(h);
    d.resize(h);
    for (std::size_t i = 0; i < h; ++i)
      f[i] = sq(i, j);
    detail::edt_1d(f, d, v, z);
    for (std::size_t i = 0; i < h; ++i)
      sq(i, j) = d[i];
  }
  for (std::size_t i = 0; i < h; ++i) {
    f.resize(w);
    d.resize(w);
    for (std::size_t j = 0; j < w; ++j)
      f[j] = sq(i, j);
    detail::edt_1d(f, d, v, z);
    for (std::size_t j = 0; j < w; ++j)
      sq(i, j) = d[j];
  }
  for (auto &x : sq)
    x = std::isinf(x) ? std::numeric_limits<double>::max() : std::sqrt(x);
  return sq;
}

/// alpha = scale * min(d, cap) / cap; zero exactly where d == 0.
inline WeightField weight_from_distance(const ScalarField &d, double cap, double scale) {
  if (!(cap > 0.0) || !(scale > 0.0))
    throw std::invalid_argument("weight_from_distance: cap and scale must be positive");
  ScalarField alpha(d.shape());
  for (std::size_t k = 0; k < d.size(); ++k)
    alpha[k] = d[k] >= cap ? scale : scale * (d[k] / cap);
  return WeightField(std::move(alpha), scale);
}

} // namespace stvrecon
