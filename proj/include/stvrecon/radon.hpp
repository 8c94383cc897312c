#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "stvrecon/discrepancy.hpp"
#include "stvrecon/fields.hpp"
#include "stvrecon/parallel.hpp"

namespace stvrecon {

/// Parallel-beam geometry. Angles are uniform in [0, pi), bins have unit
/// spacing and are centred on the image centre. `sensitivity` scales the whole
/// operator (counts per unit activity and unit path length).
struct RadonGeometry {
  Shape image;
  std::size_t n_angles = 0;
  std::size_t n_bins = 0;
  double psf_sigma = 0.0;
  double sensitivity = 1.0;

  /// Smallest bin count covering the image diagonal.
  static std::size_t min_bins(Shape s) {
    return static_cast<std::size_t>(std::ceil(std::hypot(double(s.height), double(s.width))));
  }

  static RadonGeometry for_image(Shape s, std::size_t n_angles, double psf_sigma = 0.0,
                                 double sensitivity = 1.0) {
    std::size_t bins = min_bins(s);
    bins += (bins % 2 == 0) ? 1 : 0; // odd, so one bin is centred on the axis
    RadonGeometry g{s, n_angles, bins, psf_sigma, sensitivity};
    g.validate();
    return g;
  }

  Shape sinogram_shape() const { return {n_angles, n_bins}; }
  double angle(std::size_t a) const { return std::numbers::pi * double(a) / double(n_angles); }

  void validate() const {
    if (image.height == 0 || image.width == 0 || n_angles == 0 || n_bins == 0)
      throw std::invalid_argument("RadonGeometry: empty image or sinogram");
    if (n_bins < min_bins(image))
      throw std::invalid_argument("RadonGeometry: n_bins must cover the image diagonal (" +
                                  std::to_string(min_bins(image)) + ")");
    if (!(psf_sigma >= 0.0) || !std::isfinite(psf_sigma))
      throw std::invalid_argument("RadonGeometry: psf_sigma must be >= 0");
    if (!(sensitivity > 0.0) || !std::isfinite(sensitivity))
      throw std::invalid_argument("RadonGeometry: sensitivity must be > 0");
  }
};

namespace detail {

inline std::vector<double> psf_kernel(double sigma) {
  if (sigma <= 0.0)
    return {1.0};
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int t = -radius; t <= radius; ++t)
    sum += k[t + radius] = std::exp(-0.5 * t * t / (sigma * sigma));
  for (auto &v : k)
    v /= sum;
  return k;
}

/// Symmetric zero-padded convolution of one sinogram row; self-adjoint.
inline void convolve_row(const double *in, double *out, std::size_t n,
                         const std::vector<double> &k) {
  const long r = static_cast<long>(k.size() / 2);
  const long len = static_cast<long>(n);
  for (long b = 0; b < len; ++b) {
    double s = 0.0;
    for (long t = -r; t <= r; ++t) {
      const long src = b + t;
      if (src >= 0 && src < len)
        s += k[t + r] * in[src];
    }
    out[b] = s;
  }
}

/// Visits the interpolation taps of the Joseph projector for one angle:
/// visit(bin, pixel_index, weight). The ray is traversed one sample per image
/// row (mostly vertical rays) or per column (mostly horizontal rays), with
/// linear interpolation between the two neighbouring pixels of that slice.
/// Pixels outside the image contribute nothing (zero extension).
template <class Visit>
void joseph_taps(const RadonGeometry &g, std::size_t a, Visit &&visit) {
  const long h = static_cast<long>(g.image.height), w = static_cast<long>(g.image.width);
  const double theta = g.angle(a);
  const double c = std::cos(theta), s = std::sin(theta);
  const double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1);
  const double b0 = 0.5 * (double(g.n_bins) - 1.0);
  if (std::abs(c) >= std::abs(s)) {
    const double wt = 1.0 / std::abs(c);
    for (std::size_t b = 0; b < g.n_bins; ++b) {
      const double sb = double(b) - b0;
      for (long i = 0; i < h; ++i) {
        const double y = cy - double(i);
        const double col = (sb - y * s) / c + cx;
        const double fl = std::floor(col);
        const long j0 = static_cast<long>(fl);
        const double t = col - fl;
        if (j0 >= 0 && j0 < w)
          visit(b, std::size_t(i * w + j0), wt * (1.0 - t));
        if (j0 + 1 >= 0 && j0 + 1 < w)
          visit(b, std::size_t(i * w + j0 + 1), wt * t);
      }
    }
  } else {
    const double wt = 1.0 / std::abs(s);
    for (std::size_t b = 0; b < g.n_bins; ++b) {
      const double sb = double(b) - b0;
      for (long j = 0; j < w; ++j) {
        const double x = double(j) - cx;
        const double y = (sb - x * c) / s;
        const double row = cy - y;
        const double fl = std::floor(row);
        const long i0 = static_cast<long>(fl);
        const double t = row - fl;
        if (i0 >= 0 && i0 < h)
          visit(b, std::size_t(i0 * w + j), wt * (1.0 - t));
        if (i0 + 1 >= 0 && i0 + 1 < h)
          visit(b, std::size_t((i0 + 1) * w + j), wt * t);
      }
    }
  }
}

inline constexpr std::size_t kBackprojectBlocks = 8;

} // namespace detail

/// The projector with its interpolation taps tabulated once per geometry.
/// forward() and back() accumulate in the same order as a direct traversal,
/// so results do not depend on whether the table is reused.
class RadonOperator {
public:
  explicit RadonOperator(const RadonGeometry &g)
      : g_(g), kernel_(detail::psf_kernel(g.psf_sigma)), taps_(g.n_angles) {
    g_.validate();
    if (g_.image.size() > std::numeric_limits<std::uint32_t>::max() ||
        g_.n_bins > std::numeric_limits<std::uint32_t>::max())
      throw std::invalid_argument("RadonOperator: geometry too large");
    parallel_for(g_.n_angles, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t a = lo; a < hi; ++a)
        detail::joseph_taps(g_, a, [&](std::size_t b, std::size_t px, double wt) {
          taps_[a].push_back({std::uint32_t(b), std::uint32_t(px), wt});
        });
    });
  }

  const RadonGeometry &geometry() const { return g_; }

  /// K u: Joseph line integrals, Gaussian blur across bins, times sensitivity.
  Sinogram forward(const ScalarField &u) const {
    if (u.shape() != g_.image)
      throw std::invalid_argument("forward_project: image " + to_string(u.shape()) +
                                  " does not match geometry " + to_string(g_.image));
    Sinogram out(g_.sinogram_shape(), 0.0);
    parallel_for(g_.n_angles, [&](std::size_t lo, std::size_t hi) {
      std::vector<double> row(g_.n_bins);
      for (std::size_t a = lo; a < hi; ++a) {
        std::fill(row.begin(), row.end(), 0.0);
        for (const Tap &t : taps_[a])
          row[t.bin] += t.w * u[t.px];
        double *dst = &out(a, 0);
        detail::convolve_row(row.data(), dst, g_.n_bins, kernel_);
        for (std::size_t b = 0; b < g_.n_bins; ++b)
          dst[b] *= g_.sensitivity;
      }
    });
    return out;
  }

  /// K^T s, the exact transpose of forward(). Angles are accumulated in a
  /// fixed number of blocks that are summed in order, so the result does not
  /// depend on the thread count.
  ScalarField back(const Sinogram &s) const {
    if (s.shape() != g_.sinogram_shape())
      throw std::invalid_argument("back_project: sinogram " + to_string(s.shape()) +
                                  " does not match geometry " + to_string(g_.sinogram_shape()));
    const std::size_t blocks = std::min(detail::kBackprojectBlocks, g_.n_angles);
    const std::size_t per_block = (g_.n_angles + blocks - 1) / blocks;
    std::vector<ScalarField> partial(blocks, ScalarField(g_.image, 0.0));
    parallel_for(blocks, [&](std::size_t lo, std::size_t hi) {
      std::vector<double> row(g_.n_bins);
      for (std::size_t blk = lo; blk < hi; ++blk) {
        ScalarField &acc = partial[blk];
        const std::size_t a_end = std::min(g_.n_angles, (blk + 1) * per_block);
        for (std::size_t a = blk * per_block; a < a_end; ++a) {
          detail::convolve_row(&s(a, 0), row.data(), g_.n_bins, kernel_);
          for (auto &v : row)
            v *= g_.sensitivity;
          for (const Tap &t : taps_[a])
            acc[t.px] += t.w * row[t.bin];
        }
      }
    });
    ScalarField out = std::move(partial[0]);
    for (std::size_t blk = 1; blk < blocks; ++blk)
      out += partial[blk];
    return out;
  }

  /// Power-iteration estimate of ||K||^2.
  double norm_sq_estimate(int iterations = 100) const {
    return operator_norm_sq_estimate([&](const ScalarField &x) { return forward(x); },
                                     [&](const Sinogram &y) { return back(y); }, g_.image, iterations);
  }

private:
  struct Tap {
    std::uint32_t bin;
    std::uint32_t px;
    double w;
  };
  RadonGeometry g_;
  std::vector<double> kernel_;
  std::vector<std::vector<Tap>> taps_;
};

inline Sinogram forward_project(const ScalarField &u, const RadonGeometry &g) {
  return RadonOperator(g).forward(u);
}

inline ScalarField back_project(const Sinogram &s, const RadonGeometry &g) {
  return RadonOperator(g).back(s);
}

/// Power-iteration estimate of ||K||^2.
inline double norm_estimate(const RadonGeometry &g, int iterations = 100) {
  return RadonOperator(g).norm_sq_estimate(iterations);
}

} // namespace stvrecon
