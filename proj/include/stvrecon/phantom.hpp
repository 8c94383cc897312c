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
#include "stvrecon/radon.hpp"

namespace stvrecon {

// ---------------------------------------------------------------------------
// Random numbers. Everything random in the library goes through SplitMix64 so
// results are reproducible across platforms and standard libraries.

/// SplitMix64 (Steele, Lea, Flood 2014). Satisfies UniformRandomBitGenerator.
class SplitMix64 {
public:
  using result_type = std::uint64_t;
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  /// Independent stream for (seed, index), e.g. one per sinogram bin.
  SplitMix64(std::uint64_t seed, std::uint64_t index) : state_(seed) {
    state_ = (*this)() ^ (index * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL);
    (*this)();
  }
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  /// Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0)
      u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

private:
  std::uint64_t state_;
};

/// Poisson variate: sequential inversion for rate < 10, otherwise Hormann's
/// transformed rejection with squeeze (PTRS).
inline std::uint64_t sample_poisson(double rate, SplitMix64 &rng) {
  if (!(rate >= 0.0) || !std::isfinite(rate))
    throw std::invalid_argument("sample_poisson: rate must be finite and >= 0");
  if (rate == 0.0)
    return 0;
  if (rate < 10.0) {
    const double u = rng.uniform();
    double p = std::exp(-rate), cdf = p;
    std::uint64_t k = 0;
    while (u > cdf && k < 1000) {
      ++k;
      p *= rate / double(k);
      cdf += p;
    }
    return k;
  }
  const double slam = std::sqrt(rate);
  const double loglam = std::log(rate);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  while (true) {
    const double u = rng.uniform() - 0.5;
    const double v = rng.uniform();
    const double us = 0.5 - std::abs(u);
    const double k = std::floor((2.0 * a / us + b) * u + rate + 0.43);
    if (us >= 0.07 && v <= vr)
      return static_cast<std::uint64_t>(k);
    if (k < 0.0 || (us < 0.013 && v > us))
      continue;
    if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
        -rate + k * loglam - std::lgamma(k + 1.0))
      return static_cast<std::uint64_t>(k);
  }
}

inline ScalarField add_gaussian_noise(ScalarField u, double sigma, std::uint64_t seed) {
  SplitMix64 rng(seed);
  for (auto &v : u)
    v += sigma * rng.normal();
  return u;
}

// ---------------------------------------------------------------------------
// Phantoms.

/// Pixels whose right or lower neighbour carries a different label; these are
/// exactly the pixels where the forward-difference gradient crosses a boundary.
template <class T> ScalarField boundary_mask(const Grid<T> &labels) {
  ScalarField m(labels.shape(), 0.0);
  for (std::size_t i = 0; i < labels.height(); ++i)
    for (std::size_t j = 0; j < labels.width(); ++j) {
      const bool right = j + 1 < labels.width() && labels(i, j + 1) != labels(i, j);
      const bool down = i + 1 < labels.height() && labels(i + 1, j) != labels(i, j);
      if (right || down)
        m(i, j) = 1.0;
    }
  return m;
}

struct PiecewisePhantom {
  ScalarField image;
  ScalarField edges;
  Grid<int> labels;
};

/// Voronoi partition of the square into n_regions convex polygonal cells with
/// pairwise distinct values k / (n_regions - 1) in a seeded order.
inline PiecewisePhantom make_piecewise_phantom(std::size_t size, std::size_t n_regions,
                                               std::uint64_t seed) {
  if (size == 0 || n_regions == 0)
    throw std::invalid_argument("make_piecewise_phantom: size and n_regions must be positive");
  SplitMix64 rng(seed);
  std::vector<std::pair<double, double>> sites(n_regions);
  for (auto &s : sites)
    s = {rng.uniform() * double(size), rng.uniform() * double(size)};
  std::vector<double> values(n_regions);
  for (std::size_t k = 0; k < n_regions; ++k)
    values[k] = n_regions == 1 ? 0.5 : double(k) / double(n_regions - 1);
  for (std::size_t k = n_regions; k > 1; --k)
    std::swap(values[k - 1], values[rng() % k]);

  PiecewisePhantom ph{ScalarField(size, size), ScalarField(size, size), Grid<int>(size, size)};
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = 0; j < size; ++j) {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (std::size_t k = 0; k < n_regions; ++k) {
        const double di = double(i) + 0.5 - sites[k].first;
        const double dj = double(j) + 0.5 - sites[k].second;
        const double d = di * di + dj * dj;
        if (d < best) {
          best = d;
          arg = static_cast<int>(k);
        }
      }
      ph.labels(i, j) = arg;
      ph.image(i, j) = values[arg];
    }
  ph.edges = boundary_mask(ph.labels);
  return ph;
}

/// Tissue classes of the MR/PET brain phantom.
enum Tissue : int {
  kBackground = 0,
  kScalp = 1,
  kGrayMatter = 2,
  kWhiteMatter = 3,
  kCsf = 4,
  kDeepGray = 5,
  kPetLesion = 6,
  kMrLesion = 7,
};

struct PetMrPair {
  ScalarField pet;
  ScalarField mr;
  Grid<int> anatomy;        ///< shared tissue labels without lesions
  ScalarField pet_lesion;   ///< footprint of the PET-only lesion (top right)
  ScalarField mr_lesion;    ///< footprint of the MR-only lesion (top left)
  ScalarField shared_edges; ///< boundaries of the shared anatomy
  ScalarField pet_edges;
  ScalarField mr_edges;
  ScalarField pet_trend; ///< linear trend added to the PET foreground
  ScalarField mr_trend;  ///< linear trend added to the MR foreground
};

struct PetMrIntensities {
  // background, scalp, gray, white, csf, deep gray, pet lesion, mr lesion
  double pet[8] = {0.0, 0.5, 4.0, 1.0, 0.3, 3.0, 3.0, 1.0};
  double mr[8] = {0.0, 0.4, 0.55, 0.9, 0.15, 0.7, 0.9, 0.3};
  double pet_trend_amplitude = 0.6;
  double mr_trend_amplitude = 0.2;
};

/// Ellipse-based brain pair. Both images share the tissue layout; a hot
/// lesion is added to the PET image only (top right) and a dark lesion to the
/// MR image only (top left). Linear trends are added to the foreground: the
/// PET trend increases from the top-left to the bottom-right corner, the MR
/// trend from the bottom-left to the top-right corner. The seed jitters the
/// ellipse centres and axes slightly.
inline PetMrPair make_pet_mr_pair(std::size_t size, std::uint64_t seed,
                                  const PetMrIntensities &levels = {}) {
  if (size < 8)
    throw std::invalid_argument("make_pet_mr_pair: size must be at least 8");
  SplitMix64 rng(seed);
  auto jitter = [&](double scale) { return scale * (2.0 * rng.uniform() - 1.0); };

  struct Ellipse {
    double cx, cy, ax, ay;
    int label;
  };
  // Normalized coordinates: x to the right, y upwards, both in [-1, 1].
  std::vector<Ellipse> layers = {
      {0.0, 0.0, 0.74, 0.92, kScalp},
      {0.0, 0.0, 0.66, 0.84, kGrayMatter},
      {-0.26, 0.0, 0.27, 0.58, kWhiteMatter},
      {0.26, 0.0, 0.27, 0.58, kWhiteMatter},
      {-0.17, -0.28, 0.09, 0.11, kDeepGray},
      {0.17, -0.28, 0.09, 0.11, kDeepGray},
      {-0.09, 0.06, 0.06, 0.22, kCsf},
      {0.09, 0.06, 0.06, 0.22, kCsf},
  };
  for (std::size_t k = 2; k < layers.size(); ++k) {
    layers[k].cx += jitter(0.015);
    layers[k].cy += jitter(0.015);
    layers[k].ax *= 1.0 + jitter(0.03);
    layers[k].ay *= 1.0 + jitter(0.03);
  }
  const Ellipse pet_lesion{0.30 + jitter(0.02), 0.36 + jitter(0.02), 0.085, 0.085, kPetLesion};
  const Ellipse mr_lesion{-0.30 + jitter(0.02), 0.36 + jitter(0.02), 0.085, 0.085, kMrLesion};

  const double n1 = double(size - 1);
  auto coords = [&](std::size_t i, std::size_t j) {
    return std::pair{2.0 * double(j) / n1 - 1.0, 1.0 - 2.0 * double(i) / n1};
  };
  auto inside = [](const Ellipse &e, double x, double y) {
    const double dx = (x - e.cx) / e.ax, dy = (y - e.cy) / e.ay;
    return dx * dx + dy * dy <= 1.0;
  };

  PetMrPair out{ScalarField(size, size), ScalarField(size, size), Grid<int>(size, size, 0),
                ScalarField(size, size), ScalarField(size, size), {}, {}, {},
                ScalarField(size, size), ScalarField(size, size)};
  Grid<int> pet_labels(size, size, 0), mr_labels(size, size, 0);
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = 0; j < size; ++j) {
      const auto [x, y] = coords(i, j);
      int label = kBackground;
      for (const auto &e : layers)
        if (inside(e, x, y))
          label = e.label;
      out.anatomy(i, j) = label;
      pet_labels(i, j) = label;
      mr_labels(i, j) = label;
      if (label != kBackground && inside(pet_lesion, x, y)) {
        pet_labels(i, j) = kPetLesion;
        out.pet_lesion(i, j) = 1.0;
      }
      if (label != kBackground && inside(mr_lesion, x, y)) {
        mr_labels(i, j) = kMrLesion;
        out.mr_lesion(i, j) = 1.0;
      }
      if (label != kBackground) {
        out.pet_trend(i, j) = levels.pet_trend_amplitude * (double(i) + double(j)) / (2.0 * n1);
        out.mr_trend(i, j) =
            levels.mr_trend_amplitude * (double(j) + (n1 - double(i))) / (2.0 * n1);
      }
      out.pet(i, j) = levels.pet[pet_labels(i, j)] + out.pet_trend(i, j);
      out.mr(i, j) = levels.mr[mr_labels(i, j)] + out.mr_trend(i, j);
    }
  out.shared_edges = boundary_mask(out.anatomy);
  out.pet_edges = boundary_mask(pet_labels);
  out.mr_edges = boundary_mask(mr_labels);
  return out;
}

// ---------------------------------------------------------------------------
// PET data simulation.

struct PetSimulation {
  Sinogram f;         ///< Poisson counts
  Sinogram c0;        ///< scatter and randoms estimate, strictly positive
  Sinogram expected;  ///< noiseless trues count_scale * K u
  RadonGeometry geom; ///< input geometry with sensitivity scaled by count_scale
};

/// trues = count_scale * K u; c0 = scatter_fraction * (broad blur of trues +
/// uniform floor); f ~ Poisson(trues + c0) with one SplitMix64 stream per bin.
inline PetSimulation simulate_pet_data(const ScalarField &pet, const RadonGeometry &geom,
                                       double scatter_fraction, double count_scale,
                                       std::uint64_t seed) {
  for (double v : pet)
    if (!(v >= 0.0))
      throw std::invalid_argument("simulate_pet_data: phantom must be nonnegative");
  if (!(scatter_fraction > 0.0 && scatter_fraction < 1.0))
    throw std::invalid_argument("simulate_pet_data: scatter_fraction must lie in (0, 1)");
  if (!(count_scale > 0.0))
    throw std::invalid_argument("simulate_pet_data: count_scale must be positive");

  PetSimulation sim{{}, {}, {}, geom};
  sim.geom.sensitivity = geom.sensitivity * count_scale;
  sim.expected = forward_project(pet, sim.geom);
  double mean = 0.0;
  for (double v : sim.expected)
    mean += v;
  mean /= double(sim.expected.size());
  const double floor = std::max(0.5 * mean, 1e-3);

  const auto kernel = detail::psf_kernel(double(geom.n_bins) / 8.0);
  sim.c0 = Sinogram(sim.expected.shape());
  for (std::size_t a = 0; a < geom.n_angles; ++a) {
    detail::convolve_row(&sim.expected(a, 0), &sim.c0(a, 0), geom.n_bins, kernel);
    for (std::size_t b = 0; b < geom.n_bins; ++b)
      sim.c0(a, b) = scatter_fraction * (std::max(sim.c0(a, b), 0.0) + floor);
  }
  sim.f = Sinogram(sim.expected.shape());
  for (std::size_t k = 0; k < sim.f.size(); ++k) {
    SplitMix64 rng(seed, k);
    sim.f[k] = static_cast<double>(sample_poisson(sim.expected[k] + sim.c0[k], rng));
  }
  return sim;
}

// ---------------------------------------------------------------------------
// Image quality.

inline double mse(const ScalarField &u, const ScalarField &ref) {
  require_same_shape(u, ref, "mse");
  double s = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k)
    s += (u[k] - ref[k]) * (u[k] - ref[k]);
  return s / double(u.size());
}

/// Mean SSIM over all fully contained 11x11 Gaussian windows (sigma 1.5,
/// K1 = 0.01, K2 = 0.03) with the given dynamic range. Images smaller than the
/// window use the largest odd window that fits.
inline double ssim(const ScalarField &u, const ScalarField &ref, double dynamic_range) {
  require_same_shape(u, ref, "ssim");
  if (!(dynamic_range > 0.0))
    throw std::invalid_argument("ssim: dynamic range must be positive");
  const std::size_t h = u.height(), w = u.width();
  std::size_t win = std::min<std::size_t>(11, std::min(h, w));
  if (win % 2 == 0)
    --win;
  const long r = static_cast<long>(win / 2);
  std::vector<double> g(win);
  double gs = 0.0;
  for (long t = -r; t <= r; ++t)
    gs += g[t + r] = std::exp(-0.5 * double(t * t) / (1.5 * 1.5));
  for (auto &v : g)
    v /= gs;

  const double c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
  const double c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = r; i + r < h; ++i)
    for (std::size_t j = r; j + r < w; ++j) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (long a = -r; a <= r; ++a)
        for (long b = -r; b <= r; ++b) {
          const double wt = g[a + r] * g[b + r];
          const double x = u(i + a, j + b), y = ref(i + a, j + b);
          mx += wt * x;
          my += wt * y;
          sxx += wt * x * x;
          syy += wt * y * y;
          sxy += wt * x * y;
        }
      const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return total / double(count);
}

/// Dynamic range taken from the reference image.
inline double ssim(const ScalarField &u, const ScalarField &ref) {
  const auto [lo, hi] = std::minmax_element(ref.begin(), ref.end());
  const double range = *hi - *lo;
  return ssim(u, ref, range > 0.0 ? range : 1.0);
}

} // namespace stvrecon
