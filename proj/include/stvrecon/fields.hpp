#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace stvrecon {

struct Shape {
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const { return height * width; }
  friend bool operator==(const Shape &, const Shape &) = default;
};

inline std::string to_string(const Shape &s) {
  return std::to_string(s.height) + "x" + std::to_string(s.width);
}

template <class Real> struct Vec2T {
  Real x{};
  Real y{};

  Vec2T &operator+=(const Vec2T &o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  Vec2T &operator-=(const Vec2T &o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  Vec2T &operator*=(Real s) {
    x *= s;
    y *= s;
    return *this;
  }
  friend Vec2T operator+(Vec2T a, const Vec2T &b) { return a += b; }
  friend Vec2T operator-(Vec2T a, const Vec2T &b) { return a -= b; }
  friend Vec2T operator*(Real s, Vec2T a) { return a *= s; }
  friend Vec2T operator*(Vec2T a, Real s) { return a *= s; }
  friend bool operator==(const Vec2T &, const Vec2T &) = default;
};

template <class Real> Real dot(const Vec2T<Real> &a, const Vec2T<Real> &b) {
  return a.x * b.x + a.y * b.y;
}

template <class Real> Real norm(const Vec2T<Real> &a) {
  return std::hypot(a.x, a.y);
}

/// Dense row-major H x W grid. Element (i, j) is row i, column j.
template <class T> class Grid {
public:
  using value_type = T;

  Grid() = default;
  Grid(std::size_t height, std::size_t width, T fill = T{})
      : shape_{height, width}, data_(height * width, fill) {
    if (height == 0 || width == 0)
      throw std::invalid_argument("Grid: height and width must be positive");
  }
  explicit Grid(Shape s, T fill = T{}) : Grid(s.height, s.width, fill) {}
  Grid(std::size_t height, std::size_t width, std::vector<T> values)
      : shape_{height, width}, data_(std::move(values)) {
    if (height == 0 || width == 0)
      throw std::invalid_argument("Grid: height and width must be positive");
    if (data_.size() != height * width)
      throw std::invalid_argument("Grid: value count does not match shape");
  }

  std::size_t height() const { return shape_.height; }
  std::size_t width() const { return shape_.width; }
  std::size_t size() const { return data_.size(); }
  const Shape &shape() const { return shape_; }
  bool empty() const { return data_.empty(); }

  T &operator()(std::size_t i, std::size_t j) { return data_[i * shape_.width + j]; }
  const T &operator()(std::size_t i, std::size_t j) const {
    return data_[i * shape_.width + j];
  }
  T &operator[](std::size_t k) { return data_[k]; }
  const T &operator[](std::size_t k) const { return data_[k]; }

  std::vector<T> &values() { return data_; }
  const std::vector<T> &values() const { return data_; }
  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  Grid &operator+=(const Grid &o) {
    require_same_shape(*this, o, "operator+=");
    for (std::size_t k = 0; k < data_.size(); ++k)
      data_[k] += o.data_[k];
    return *this;
  }
  Grid &operator-=(const Grid &o) {
    require_same_shape(*this, o, "operator-=");
    for (std::size_t k = 0; k < data_.size(); ++k)
      data_[k] -= o.data_[k];
    return *this;
  }
  template <class S> Grid &operator*=(S s) {
    for (auto &v : data_)
      v *= s;
    return *this;
  }
  friend Grid operator+(Grid a, const Grid &b) { return a += b; }
  friend Grid operator-(Grid a, const Grid &b) { return a -= b; }
  template <class S> friend Grid operator*(S s, Grid a) { return a *= s; }
  friend bool operator==(const Grid &, const Grid &) = default;

  template <class U>
  friend void require_same_shape(const Grid &a, const Grid<U> &b, const char *where) {
    if (a.shape() != b.shape())
      throw std::invalid_argument(std::string(where) + ": shape mismatch " +
                                  to_string(a.shape()) + " vs " + to_string(b.shape()));
  }

private:
  Shape shape_{};
  std::vector<T> data_;
};

using Vec2 = Vec2T<double>;
template <class Real> using ScalarFieldT = Grid<Real>;
template <class Real> using VectorFieldT = Grid<Vec2T<Real>>;
using ScalarField = ScalarFieldT<double>;
using VectorField = VectorFieldT<double>;

template <class Real> Real dot(const Grid<Real> &a, const Grid<Real> &b) {
  require_same_shape(a, b, "dot");
  Real s{};
  for (std::size_t k = 0; k < a.size(); ++k)
    s += a[k] * b[k];
  return s;
}

template <class Real> Real dot(const Grid<Vec2T<Real>> &a, const Grid<Vec2T<Real>> &b) {
  require_same_shape(a, b, "dot");
  Real s{};
  for (std::size_t k = 0; k < a.size(); ++k)
    s += dot(a[k], b[k]);
  return s;
}

template <class T> auto norm(const Grid<T> &a) { return std::sqrt(dot(a, a)); }

template <class Real> Real max_abs(const Grid<Real> &a) {
  Real m{};
  for (const auto &v : a)
    m = std::max(m, std::abs(v));
  return m;
}

template <class Real> Real max_abs_diff(const Grid<Real> &a, const Grid<Real> &b) {
  require_same_shape(a, b, "max_abs_diff");
  Real m{};
  for (std::size_t k = 0; k < a.size(); ++k)
    m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

template <class Real> bool all_finite(const Grid<Real> &a) {
  for (const auto &v : a)
    if (!std::isfinite(v))
      return false;
  return true;
}

template <class Real> bool all_finite(const Grid<Vec2T<Real>> &a) {
  for (const auto &v : a)
    if (!std::isfinite(v.x) || !std::isfinite(v.y))
      return false;
  return true;
}

/// Forward differences with pixel replication at the far boundary: the x
/// component is u(i,j+1) - u(i,j) and vanishes in the last column, the y
/// component is u(i+1,j) - u(i,j) and vanishes in the last row.
template <class Real> VectorFieldT<Real> gradient_forward(const ScalarFieldT<Real> &u) {
  const std::size_t h = u.height(), w = u.width();
  VectorFieldT<Real> g(h, w);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const Real c = u(i, j);
      g(i, j).x = (j + 1 < w) ? u(i, j + 1) - c : Real{};
      g(i, j).y = (i + 1 < h) ? u(i + 1, j) - c : Real{};
    }
  }
  return g;
}

/// Negative transpose of gradient_forward, so <grad u, p> = -<u, div p>.
template <class Real> ScalarFieldT<Real> divergence(const VectorFieldT<Real> &p) {
  const std::size_t h = p.height(), w = p.width();
  ScalarFieldT<Real> d(h, w);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      // Each nonzero gradient entry at (i,j) reads +u(next) - u(i,j); the
      // transpose therefore scatters -p to (i,j) and +p to the neighbour.
      Real v{};
      if (j + 1 < w)
        v += p(i, j).x;
      if (j > 0)
        v -= p(i, j - 1).x;
      if (i + 1 < h)
        v += p(i, j).y;
      if (i > 0)
        v -= p(i - 1, j).y;
      d(i, j) = v;
    }
  }
  return d;
}

/// Deterministic fill in [-1, 1) used to seed power iterations.
inline ScalarField deterministic_start(Shape s, std::uint64_t seed = 0x9e3779b97f4a7c15ULL) {
  ScalarField x(s);
  std::uint64_t state = seed;
  for (auto &v : x) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    v = 2.0 * static_cast<double>(z >> 11) * 0x1.0p-53 - 1.0;
  }
  return x;
}

/// Power iteration on apply_adjoint(apply(.)). Returns the Rayleigh quotient
/// ||apply(x)||^2 of the last normalized iterate, which is nondecreasing in
/// the number of iterations.
template <class X, class Apply, class Adjoint>
double operator_norm_sq_estimate(Apply &&apply, Adjoint &&apply_adjoint, X start,
                                 int iterations) {
  if (iterations < 1)
    throw std::invalid_argument("operator_norm_sq_estimate: iterations must be >= 1");
  double n0 = norm(start);
  if (!(n0 > 0))
    throw std::invalid_argument("operator_norm_sq_estimate: zero start vector");
  X x = (1.0 / n0) * std::move(start);
  double estimate = 0.0;
  for (int k = 0; k < iterations; ++k) {
    auto y = apply(x);
    X z = apply_adjoint(y);
    const double nz = norm(z);
    if (!(nz > 0))
      throw std::runtime_error("operator_norm_sq_estimate: degenerate operator "
                               "(start vector mapped to zero)");
    x = (1.0 / nz) * std::move(z);
    auto kx = apply(x);
    estimate = dot(kx, kx);
  }
  return estimate;
}

template <class Apply, class Adjoint>
double operator_norm_sq_estimate(Apply &&apply, Adjoint &&apply_adjoint, Shape shape,
                                 int iterations) {
  return operator_norm_sq_estimate(std::forward<Apply>(apply),
                                   std::forward<Adjoint>(apply_adjoint),
                                   deterministic_start(shape), iterations);
}

/// Bound on ||grad||^2 for unit-spaced forward differences.
inline constexpr double kGradientNormSqBound = 8.0;

} // namespace stvrecon
