#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "stvrecon/fields.hpp"
#include "stvrecon/io.hpp"

namespace stvrecon {

/// Symmetric 2x2 matrix [[a11, a12], [a12, a22]].
struct Sym2 {
  double a11 = 1.0;
  double a12 = 0.0;
  double a22 = 1.0;

  Vec2 operator*(const Vec2 &z) const { return {a11 * z.x + a12 * z.y, a12 * z.x + a22 * z.y}; }
  friend bool operator==(const Sym2 &, const Sym2 &) = default;
};

/// Per-pixel symmetric matrix field A(x) together with the parameters it was
/// built from. eta == 0 denotes the identity field (isotropic TV).
struct AnisotropyField {
  Grid<Sym2> matrices;
  double eta = 0.0;
  double nu = 1.0;

  static AnisotropyField identity(Shape s) { return {Grid<Sym2>(s, Sym2{}), 0.0, 1.0}; }
  const Shape &shape() const { return matrices.shape(); }
  bool is_identity() const { return eta == 0.0; }
};

/// Nonnegative weight alpha with a known upper bound.
class WeightField {
public:
  WeightField(ScalarField alpha, double upper_bound)
      : alpha_(std::move(alpha)), bound_(upper_bound) {
    if (!(upper_bound > 0) || !std::isfinite(upper_bound))
      throw std::invalid_argument("WeightField: upper bound must be positive and finite");
    for (double a : alpha_)
      if (!(a >= 0.0 && a <= bound_))
        throw std::invalid_argument("WeightField: alpha must lie in [0, C]");
  }

  /// alpha == value everywhere.
  static WeightField constant(Shape s, double value) {
    return WeightField(ScalarField(s, value), std::max(value, 1e-300));
  }
  /// Upper bound taken from the data.
  static WeightField from_values(ScalarField alpha) {
    double c = 0.0;
    for (double a : alpha)
      c = std::max(c, a);
    return WeightField(std::move(alpha), c > 0 ? c : 1.0);
  }

  const ScalarField &alpha() const { return alpha_; }
  double upper_bound() const { return bound_; }
  const Shape &shape() const { return alpha_.shape(); }
  double operator[](std::size_t k) const { return alpha_[k]; }

private:
  ScalarField alpha_;
  double bound_;
};

/// w = grad v / sqrt(|grad v|^2 + nu), so |w| < 1 strictly.
inline VectorField normalized_gradient(const ScalarField &v, double nu) {
  if (!(nu > 0))
    throw std::invalid_argument("normalized_gradient: nu must be positive");
  VectorField w = gradient_forward(v);
  for (auto &g : w)
    g *= 1.0 / std::sqrt(dot(g, g) + nu);
  return w;
}

/// sqrt(I - eta^2 w w^T) for |w| < 1. With s = |w|^2 the square root is
/// I - c w w^T where c = eta^2 / (1 + sqrt(1 - eta^2 s)); this is the
/// rank-one form I - (1 - sqrt(1 - eta^2 s)) w w^T / s without the 0/0 at s = 0.
inline Sym2 anisotropy_matrix(const Vec2 &w, double eta) {
  const double e2 = eta * eta;
  const double s = dot(w, w);
  const double c = e2 / (1.0 + std::sqrt(1.0 - e2 * s));
  return {1.0 - c * w.x * w.x, -c * w.x * w.y, 1.0 - c * w.y * w.y};
}

inline AnisotropyField build_anisotropy(const ScalarField &v, double eta, double nu) {
  if (!(eta > 0.0 && eta < 1.0))
    throw std::invalid_argument("build_anisotropy: eta must lie in (0, 1)");
  const VectorField w = normalized_gradient(v, nu);
  AnisotropyField a{Grid<Sym2>(v.shape()), eta, nu};
  for (std::size_t k = 0; k < w.size(); ++k)
    a.matrices[k] = anisotropy_matrix(w[k], eta);
  return a;
}

/// Pixelwise A(x) z(x).
inline VectorField apply_A(const AnisotropyField &a, const VectorField &z) {
  require_same_shape(a.matrices, z, "apply_A");
  if (a.is_identity())
    return z;
  VectorField out(z.shape());
  for (std::size_t k = 0; k < z.size(); ++k)
    out[k] = a.matrices[k] * z[k];
  return out;
}

/// A is symmetric per pixel, so the transpose is the same map.
inline VectorField apply_A_transpose(const AnisotropyField &a, const VectorField &z) {
  return apply_A(a, z);
}

/// sum_x |A(x) z(x)|
inline double eval_structural_j(const AnisotropyField &a, const VectorField &z) {
  require_same_shape(a.matrices, z, "eval_structural_j");
  double s = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k)
    s += norm(a.matrices[k] * z[k]);
  return s;
}

/// Isotropic discrete TV: sum_x |grad u(x)|.
inline double total_variation(const ScalarField &u) {
  double s = 0.0;
  for (const auto &g : gradient_forward(u))
    s += norm(g);
  return s;
}

/// sum_x alpha(x) |grad u(x)|
inline double eval_weighted_tv(const ScalarField &u, const WeightField &alpha) {
  require_same_shape(u, alpha.alpha(), "eval_weighted_tv");
  const VectorField g = gradient_forward(u);
  double s = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k)
    s += alpha[k] * norm(g[k]);
  return s;
}

/// Radial projection of each p(x) onto the disc of radius alpha(x).
inline VectorField project_Q_weighted(VectorField p, const WeightField &alpha) {
  require_same_shape(p, alpha.alpha(), "project_Q_weighted");
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double n = norm(p[k]);
    const double a = alpha[k];
    if (a == 0.0)
      p[k] = Vec2{};
    else if (n > a)
      p[k] *= a / n;
  }
  return p;
}

/// q(x) / max(1, |q(x)|)
inline VectorField project_unit_ball(VectorField q) {
  for (auto &v : q) {
    const double n = norm(v);
    if (n > 1.0)
      v *= 1.0 / n;
  }
  return q;
}

inline void write_anisotropy_csv(const std::string &path, const AnisotropyField &a) {
  std::ofstream os(path, std::ios::binary);
  if (!os)
    throw io::IoError("cannot open for writing: " + path);
  os << "i,j,a11,a12,a22\n";
  for (std::size_t i = 0; i < a.matrices.height(); ++i)
    for (std::size_t j = 0; j < a.matrices.width(); ++j) {
      const Sym2 &m = a.matrices(i, j);
      os << i << ',' << j << ',' << io::format_real(m.a11) << ',' << io::format_real(m.a12)
         << ',' << io::format_real(m.a22) << '\n';
    }
}

} // namespace stvrecon
