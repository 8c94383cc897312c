#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "stvrecon/fields.hpp"

namespace stvrecon {

using Sinogram = Grid<double>;

// ---------------------------------------------------------------------------
// Scalar integrands.

/// C^1 Poisson integrand: t - f log(t + c0) for t >= 0, continued linearly
/// with slope 1 - f/c0 for t < 0.
inline double l_c1(double t, double f, double c0) {
  if (t >= 0.0)
    return t - f * std::log(t + c0);
  return -f * std::log(c0) + (1.0 - f / c0) * t;
}

inline double l_c1_prime(double t, double f, double c0) {
  return t >= 0.0 ? 1.0 - f / (t + c0) : 1.0 - f / c0;
}

/// C^2 variant: the negative branch gains f t^2 / (2 c0^2) so the second
/// derivative f / c0^2 is continuous at 0.
inline double l_c2(double t, double f, double c0) {
  if (t >= 0.0)
    return t - f * std::log(t + c0);
  return -f * std::log(c0) + (1.0 - f / c0) * t + f / (2.0 * c0 * c0) * t * t;
}

inline double l_c2_prime(double t, double f, double c0) {
  if (t >= 0.0)
    return 1.0 - f / (t + c0);
  return 1.0 - f / c0 + f / (c0 * c0) * t;
}

/// Smoothed penalty on the negative part: 0 for x >= 0, a cubic/quartic
/// blend on [-eps, 0] and |x| - eps/2 below -eps. The blend equals eps/2 at
/// -eps, so the offset -eps/2 is what makes g continuous (and C^2, convex).
inline double g_smooth(double x, double eps) {
  if (x >= 0.0)
    return 0.0;
  if (x >= -eps) {
    const double e2 = eps * eps;
    return -x * x * x / e2 - x * x * x * x / (2.0 * e2 * eps);
  }
  return -x - 0.5 * eps;
}

inline double g_smooth_prime(double x, double eps) {
  if (x >= 0.0)
    return 0.0;
  if (x >= -eps) {
    const double e2 = eps * eps;
    return -3.0 * x * x / e2 - 2.0 * x * x * x / (e2 * eps);
  }
  return -1.0;
}

/// sup |g''| on [-eps, 0], attained at -eps/2.
inline double g_smooth_curvature_bound(double eps) { return 1.5 / eps; }

/// (4/3 + 2t/3)(t log t - t + 1) - (t - 1)^2, nonnegative on t >= 0 with its
/// minimum 0 at t = 1. Drives the coercivity estimate below.
inline double kl_auxiliary_h(double t) {
  const double s = t - 1.0;
  if (std::abs(s) < 0.1) {
    // Taylor series in s = t - 1; the closed form cancels to rounding noise
    // here because h = O(s^4) while both terms are O(s^2).
    static constexpr double c[] = {1.0 / 18,   -2.0 / 45,    1.0 / 30,    -8.0 / 315, 5.0 / 252,
                                   -1.0 / 63,  7.0 / 540,    -16.0 / 1485, 1.0 / 110,  -10.0 / 1287,
                                   11.0 / 1638, -8.0 / 1365, 13.0 / 2520};
    double acc = 0.0;
    for (int k = 12; k >= 0; --k)
      acc = acc * s + c[k];
    return acc * s * s * s * s;
  }
  const double tlogt = t > 0.0 ? t * std::log(t) : 0.0;
  return (4.0 / 3.0 + 2.0 * t / 3.0) * (tlogt - t + 1.0) - s * s;
}

// ---------------------------------------------------------------------------
// Poisson data.

/// Counts f >= 0, background c0 > 0, and the constants of the smoothed
/// discrepancy. L = ||1 - f/c0||_inf + 1 is always derived from (f, c0).
class PoissonData {
public:
  /// Coercivity constant M of the C^1 discrepancy (see coercivity_constants).
  static constexpr double kCoercivityM = 7.0 / 3.0;
  /// Default penalty weight: coercivity M times a safety factor of 10.
  static constexpr double kDefaultPenaltyM = 10.0 * kCoercivityM;

  /// epsilon <= 0 selects 1e-2 of the dynamic range of f (1e-2 if f is flat);
  /// penalty_m <= 0 selects kDefaultPenaltyM.
  PoissonData(Sinogram f, Sinogram c0, double epsilon = 0.0, double penalty_m = 0.0)
      : f_(std::move(f)), c0_(std::move(c0)) {
    require_same_shape(f_, c0_, "PoissonData");
    double c = 0.0, fmin = f_[0], fmax = f_[0];
    for (std::size_t k = 0; k < f_.size(); ++k) {
      if (!(f_[k] >= 0.0) || !std::isfinite(f_[k]))
        throw std::invalid_argument("PoissonData: counts f must be finite and >= 0");
      if (!(c0_[k] > 0.0) || !std::isfinite(c0_[k]))
        throw std::invalid_argument("PoissonData: background c0 must be finite and > 0");
      c = std::max(c, std::abs(1.0 - f_[k] / c0_[k]));
      fmin = std::min(fmin, f_[k]);
      fmax = std::max(fmax, f_[k]);
    }
    L_ = c + 1.0;
    eps_ = epsilon > 0.0 ? epsilon : (fmax > fmin ? 1e-2 * (fmax - fmin) : 1e-2);
    M_ = penalty_m > 0.0 ? penalty_m : kDefaultPenaltyM;
  }

  const Sinogram &f() const { return f_; }
  const Sinogram &c0() const { return c0_; }
  double L() const { return L_; }
  double epsilon() const { return eps_; }
  double penalty_m() const { return M_; }
  const Shape &shape() const { return f_.shape(); }

private:
  Sinogram f_;
  Sinogram c0_;
  double L_ = 1.0;
  double eps_ = 1e-2;
  double M_ = kDefaultPenaltyM;
};

/// sum_b l_c2(v_b) + L g(v_b)
inline double dkl_value(const Sinogram &v, const PoissonData &d) {
  require_same_shape(v, d.f(), "dkl_value");
  double s = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k)
    s += l_c2(v[k], d.f()[k], d.c0()[k]) + d.L() * g_smooth(v[k], d.epsilon());
  return s;
}

inline Sinogram dkl_gradient(const Sinogram &v, const PoissonData &d) {
  require_same_shape(v, d.f(), "dkl_gradient");
  Sinogram g(v.shape());
  for (std::size_t k = 0; k < v.size(); ++k)
    g[k] = l_c2_prime(v[k], d.f()[k], d.c0()[k]) + d.L() * g_smooth_prime(v[k], d.epsilon());
  return g;
}

/// Unmodified C^1 discrepancy: sum_b l_c1(v_b) + L ||v_-||_1.
inline double dkl_c1_value(const Sinogram &v, const PoissonData &d) {
  require_same_shape(v, d.f(), "dkl_c1_value");
  double s = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k)
    s += l_c1(v[k], d.f()[k], d.c0()[k]) + d.L() * std::max(-v[k], 0.0);
  return s;
}

/// Upper bound on the Lipschitz constant of the bin-wise derivative of
/// l_c2 + L g: ||f / c0^2||_inf + L * 3 / (2 eps).
inline double dkl_lipschitz_bound(const PoissonData &d) {
  double m = 0.0;
  for (std::size_t k = 0; k < d.f().size(); ++k)
    m = std::max(m, d.f()[k] / (d.c0()[k] * d.c0()[k]));
  return m + d.L() * g_smooth_curvature_bound(d.epsilon());
}

struct CoercivityConstants {
  double M;
  double N;
};

/// Explicit constants with ||v||_1 <= M dkl_c1_value(v) + N for all v.
///
/// Per bin with S = v + c0 >= c0 and E = f log(f/S) - f + S >= 0, the
/// auxiliary inequality h(f/S) >= 0 gives (S - f)^2 <= (2f/3 + 4S/3) E,
/// hence S <= 3f/2 + 7E/3 and, for v >= 0,
///   v <= (7/3) l(v) + (7/3)(c0 - f + f log f) + 3f/2.
/// For v < 0 the linear branch plus L|v| is at least |v| - f log c0, and the
/// bin term is bounded below by l(max(f - c0, 0)).
inline CoercivityConstants coercivity_constants(const PoissonData &d) {
  constexpr double m = PoissonData::kCoercivityM;
  double n = 0.0;
  for (std::size_t k = 0; k < d.f().size(); ++k) {
    const double f = d.f()[k], c0 = d.c0()[k];
    const double flogf = f > 0.0 ? f * std::log(f) : 0.0;
    const double n_pos = m * (c0 - f + flogf) + 1.5 * f;
    const double bin_min = l_c1(std::max(f - c0, 0.0), f, c0);
    const double n_neg = f * std::log(c0) - (m - 1.0) * bin_min;
    n += std::max(n_pos, n_neg);
  }
  return {m, n};
}

// ---------------------------------------------------------------------------
// Positivity penalty H(u) = M ||u_-||_1.

inline double penalty_H(const ScalarField &u, double M) {
  double s = 0.0;
  for (double v : u)
    s += std::max(-v, 0.0);
  return M * s;
}

/// max(u, min(u + sigma M, 0)) pointwise.
inline ScalarField prox_H(ScalarField u, double sigma, double M) {
  if (!(sigma > 0.0) || !(M > 0.0))
    throw std::invalid_argument("prox_H: sigma and M must be positive");
  const double t = sigma * M;
  for (auto &v : u)
    v = std::max(v, std::min(v + t, 0.0));
  return u;
}

// ---------------------------------------------------------------------------
// Quadratic fidelity G(u) = (lambda/2) ||u - f||^2.

inline double l2_value(const ScalarField &u, const ScalarField &f, double lambda) {
  require_same_shape(u, f, "l2_value");
  double s = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k)
    s += (u[k] - f[k]) * (u[k] - f[k]);
  return 0.5 * lambda * s;
}

inline ScalarField l2_gradient(const ScalarField &u, const ScalarField &f, double lambda) {
  require_same_shape(u, f, "l2_gradient");
  ScalarField g(u.shape());
  for (std::size_t k = 0; k < u.size(); ++k)
    g[k] = lambda * (u[k] - f[k]);
  return g;
}

inline double l2_prox(double u, double f, double lambda, double sigma) {
  return (u + sigma * lambda * f) / (1.0 + sigma * lambda);
}

/// argmin_y ||y - u||^2 / (2 sigma) + (lambda/2) ||y - f||^2
inline ScalarField l2_prox(ScalarField u, const ScalarField &f, double lambda, double sigma) {
  require_same_shape(u, f, "l2_prox");
  for (std::size_t k = 0; k < u.size(); ++k)
    u[k] = l2_prox(u[k], f[k], lambda, sigma);
  return u;
}

} // namespace stvrecon
