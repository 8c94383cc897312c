// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.
//   acceptance <path to stvrecon> [criterion numbers to run, default all]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "stvrecon/discrepancy.hpp"
#include "stvrecon/fields.hpp"
#include "stvrecon/io.hpp"
#include "stvrecon/phantom.hpp"
#include "stvrecon/radon.hpp"
#include "stvrecon/report.hpp"
#include "stvrecon/solver.hpp"
#include "stvrecon/structural_prior.hpp"
#include "stvrecon/weight_map.hpp"

using namespace stvrecon;
namespace fs = std::filesystem;

namespace {

std::string g_cli;

struct Check {
  bool ok = true;
  std::string detail;
  void require(bool cond, const std::string &what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

std::string fmt(const char *f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}
std::string fmt(const char *f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

ScalarField random_field(Shape s, std::mt19937_64 &rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  ScalarField x(s);
  for (auto &v : x)
    v = d(rng);
  return x;
}

VectorField random_vectors(Shape s, std::mt19937_64 &rng, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  VectorField x(s);
  for (auto &v : x)
    v = {d(rng), d(rng)};
  return x;
}

double max_vec_diff(const VectorField &a, const VectorField &b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    m = std::max(m, norm(a[k] - b[k]));
  return m;
}

double rel_adjoint_error(double lhs, double rhs) {
  return std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1e-300});
}

// ---------------------------------------------------------------------------

Check criterion_adjointness() {
  Check c;
  std::mt19937_64 rng(101);
  double worst_grad = 0.0, worst_radon = 0.0;
  for (int t = 0; t < 20; ++t) {
    const Shape s{std::size_t(5 + t), std::size_t(40 - t)};
    const auto u = random_field(s, rng);
    const auto p = random_vectors(s, rng);
    // <grad u, p> = <u, -div p>
    worst_grad = std::max(worst_grad, rel_adjoint_error(dot(gradient_forward(u), p), -dot(u, divergence(p))));
  }
  const auto g = RadonGeometry::for_image({24, 20}, 18, 1.1, 2.5);
  for (int t = 0; t < 20; ++t) {
    const auto u = random_field(g.image, rng);
    const auto y = random_field(g.sinogram_shape(), rng);
    worst_radon = std::max(worst_radon, rel_adjoint_error(dot(forward_project(u, g), y), dot(u, back_project(y, g))));
  }
  c.require(worst_grad <= 1e-10, fmt("grad/div relative adjoint error %.3g", worst_grad));
  c.require(worst_radon <= 1e-10, fmt("radon relative adjoint error %.3g", worst_radon));

  // explicit matrices on 8x8
  const Shape s{8, 8};
  const std::size_t n = s.size();
  std::vector<double> G(2 * n * n), D(n * 2 * n);
  for (std::size_t k = 0; k < n; ++k) {
    ScalarField e(s, 0.0);
    e[k] = 1.0;
    const auto ge = gradient_forward(e);
    for (std::size_t r = 0; r < n; ++r) {
      G[(2 * r) * n + k] = ge[r].x;
      G[(2 * r + 1) * n + k] = ge[r].y;
    }
  }
  for (std::size_t k = 0; k < 2 * n; ++k) {
    VectorField e(s);
    if (k % 2 == 0)
      e[k / 2].x = 1.0;
    else
      e[k / 2].y = 1.0;
    const auto de = divergence(e);
    for (std::size_t r = 0; r < n; ++r)
      D[r * 2 * n + k] = de[r];
  }
  double worst = 0.0;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < 2 * n; ++k)
      worst = std::max(worst, std::abs(D[r * 2 * n + k] + G[k * n + r]));
  c.require(worst == 0.0, fmt("div != -grad^T entrywise, max diff %.3g", worst));

  const auto g8 = RadonGeometry::for_image(s, 12, 0.7);
  const std::size_t m = g8.sinogram_shape().size();
  std::vector<double> K(m * n), Kt(n * m);
  for (std::size_t k = 0; k < n; ++k) {
    ScalarField e(s, 0.0);
    e[k] = 1.0;
    const auto col = forward_project(e, g8);
    for (std::size_t r = 0; r < m; ++r)
      K[r * n + k] = col[r];
  }
  for (std::size_t k = 0; k < m; ++k) {
    Sinogram e(g8.sinogram_shape(), 0.0);
    e[k] = 1.0;
    const auto col = back_project(e, g8);
    for (std::size_t r = 0; r < n; ++r)
      Kt[r * m + k] = col[r];
  }
  double worst_k = 0.0, scale = 0.0;
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t k = 0; k < n; ++k) {
      worst_k = std::max(worst_k, std::abs(K[r * n + k] - Kt[k * m + r]));
      scale = std::max(scale, std::abs(K[r * n + k]));
    }
  c.require(worst_k <= 1e-12 * scale, fmt("radon matrix transpose mismatch %.3g", worst_k));
  c.detail = c.ok ? fmt("grad rel err %.2g, radon rel err %.2g; explicit 8x8 transposes exact", worst_grad, worst_radon)
                  : c.detail;
  return c;
}

Check criterion_operator_norm() {
  Check c;
  double worst = 0.0;
  const std::vector<Shape> grids{{8, 8}, {16, 16}, {32, 32}, {64, 64}, {128, 128}, {256, 256}, {17, 33}, {100, 7}};
  for (const Shape &s : grids) {
    const double est = operator_norm_sq_estimate([](const ScalarField &u) { return gradient_forward(u); },
                                                 [](const VectorField &p) { return -1.0 * divergence(p); }, s, 300);
    worst = std::max(worst, est);
    c.require(est <= kGradientNormSqBound, "||grad||^2 estimate " + fmt("%.12g", est) + " on " + to_string(s));
  }
  if (c.ok)
    c.detail = fmt("max estimate over %g grids: %.9f <= 8", double(grids.size()), worst);
  return c;
}

Check criterion_anisotropy() {
  Check c;
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> u01(0.0, 1.0), ang(0.0, 2.0 * std::numbers::pi);
  double worst_sq = 0.0;
  auto check_pixel = [&](const Sym2 &A, const Vec2 &w, double eta) {
    const double tr = A.a11 + A.a22, det = A.a11 * A.a22 - A.a12 * A.a12;
    const double disc = std::sqrt(std::max(0.0, 0.25 * (A.a11 - A.a22) * (A.a11 - A.a22) + A.a12 * A.a12));
    const double lmin = 0.5 * tr - disc, lmax = 0.5 * tr + disc;
    c.require(lmin > 0.0 && det > 0.0, "A not positive definite");
    c.require(lmax <= 1.0 + 1e-15, fmt("||A||_2 = %.17g > 1", lmax));
    const double e2 = eta * eta;
    const double s11 = A.a11 * A.a11 + A.a12 * A.a12, s12 = A.a11 * A.a12 + A.a12 * A.a22,
                 s22 = A.a12 * A.a12 + A.a22 * A.a22;
    const double err = std::max({std::abs(s11 - (1 - e2 * w.x * w.x)), std::abs(s12 + e2 * w.x * w.y),
                                 std::abs(s22 - (1 - e2 * w.y * w.y))});
    worst_sq = std::max(worst_sq, err);
    c.require(err <= 1e-12, fmt("A^2 deviates by %.3g", err));
    for (int t = 0; t < 4; ++t) {
      const double phi = ang(rng), r = u01(rng) * 10.0;
      const Vec2 z{r * std::cos(phi), r * std::sin(phi)};
      c.require(norm(A * z) >= std::sqrt(1.0 - e2) * norm(z) * (1.0 - 1e-12), "coercivity bound violated");
    }
  };
  // 10^4 random (w, eta) pairs with |w| < 1
  for (int t = 0; t < 10000; ++t) {
    const double r = std::sqrt(u01(rng)) * (1.0 - 1e-12), phi = ang(rng), eta = u01(rng) * 0.999999;
    const Vec2 w{r * std::cos(phi), r * std::sin(phi)};
    check_pixel(anisotropy_matrix(w, eta), w, eta);
  }
  // and every pixel of a 100x100 field built from a random image
  const auto v = random_field({100, 100}, rng);
  const auto a = build_anisotropy(v, 0.95, 1e-4);
  const auto w = normalized_gradient(v, 1e-4);
  for (std::size_t k = 0; k < w.size(); ++k)
    check_pixel(a.matrices[k], w[k], 0.95);
  if (c.ok)
    c.detail = fmt("2x10^4 pixels SPD, ||A||<=1, coercive; max A^2 error %.2g", worst_sq);
  return c;
}

PoissonData random_poisson_data(Shape s, std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> cd(0.05, 3.0), rate(0.0, 20.0);
  SplitMix64 sm(rng());
  Sinogram f(s), c0(s);
  for (std::size_t k = 0; k < f.size(); ++k) {
    c0[k] = cd(rng);
    f[k] = double(sample_poisson(rate(rng), sm));
  }
  return PoissonData(f, c0);
}

Check criterion_poisson() {
  Check c;
  std::mt19937_64 rng(404);
  const Shape s{6, 9};
  // convexity
  int convex_pairs = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto d = random_poisson_data(s, rng);
    const auto v1 = random_field(s, rng, -5.0, 30.0), v2 = random_field(s, rng, -5.0, 30.0);
    const auto mid = 0.5 * (v1 + v2);
    const double lhs = dkl_value(mid, d), rhs = 0.5 * (dkl_value(v1, d) + dkl_value(v2, d));
    c.require(lhs <= rhs + 1e-12 * (1.0 + std::abs(rhs)), fmt("midpoint convexity fails: %.17g > %.17g", lhs, rhs));
    ++convex_pairs;
  }
  // gradient vs central differences along random directions
  double worst_fd = 0.0;
  for (int t = 0; t < 200; ++t) {
    const auto d = random_poisson_data(s, rng);
    const auto v = random_field(s, rng, -2.0, 20.0), dir = random_field(s, rng);
    const double h = 1e-6;
    const double fd = (dkl_value(v + h * dir, d) - dkl_value(v - h * dir, d)) / (2 * h);
    const double exact = dot(dkl_gradient(v, d), dir);
    const double rel = std::abs(fd - exact) / std::max(std::abs(exact), 1.0);
    worst_fd = std::max(worst_fd, rel);
  }
  c.require(worst_fd <= 1e-6, fmt("gradient finite-difference error %.3g", worst_fd));
  // coercivity with the derived constants
  double tightest = 1e300;
  for (int t = 0; t < 1000; ++t) {
    const auto d = random_poisson_data(s, rng);
    const auto k = coercivity_constants(d);
    const double mag = std::pow(10.0, std::uniform_real_distribution<double>(-2.0, 4.0)(rng));
    const auto v = random_field(s, rng, -0.2 * mag, mag);
    double l1 = 0.0;
    for (double x : v)
      l1 += std::abs(x);
    const double bound = k.M * dkl_c1_value(v, d) + k.N;
    tightest = std::min(tightest, bound - l1);
    c.require(l1 <= bound * (1.0 + 1e-12) + 1e-12, fmt("coercivity fails: |v|_1=%.6g > %.6g", l1, bound));
  }
  // h(t) >= 0 on (0, 100], h(1) = 0
  double hmin = 1e300;
  for (int i = 1; i <= 1000000; ++i)
    hmin = std::min(hmin, kl_auxiliary_h(100.0 * i / 1e6));
  c.require(hmin >= 0.0, fmt("h attains %.3g < 0", hmin));
  c.require(kl_auxiliary_h(1.0) == 0.0, "h(1) != 0");
  if (c.ok)
    c.detail = fmt("1000 convex pairs, FD rel err %.2g, min coercivity slack %.3g, min h on grid 0",
                   worst_fd, tightest);
  return c;
}

// Minimizer of a convex 1D function by nested grid search: 2001 points over
// [lo, hi], then zoom to the neighbouring cells, repeated.
double grid_argmin(const std::function<double(double)> &fn, double lo, double hi) {
  for (int pass = 0; pass < 6; ++pass) {
    const int n = 2000;
    double best_x = lo, best = fn(lo);
    for (int i = 1; i <= n; ++i) {
      const double x = lo + (hi - lo) * i / n;
      const double v = fn(x);
      if (v < best) {
        best = v;
        best_x = x;
      }
    }
    const double step = (hi - lo) / n;
    lo = best_x - step;
    hi = best_x + step;
  }
  return 0.5 * (lo + hi);
}

Check criterion_prox() {
  Check c;
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> ud(-5.0, 5.0), sd(0.01, 3.0), md(0.1, 10.0), ld(0.1, 20.0);
  double worst_h = 0.0, worst_l2 = 0.0;
  for (int t = 0; t < 300; ++t) {
    const double u = ud(rng), sigma = sd(rng), M = md(rng);
    const double p = prox_H(ScalarField(1, 1, u), sigma, M)[0];
    const double o = grid_argmin(
        [&](double y) { return (y - u) * (y - u) / (2 * sigma) + M * std::max(-y, 0.0); }, -40.0, 40.0);
    worst_h = std::max(worst_h, std::abs(p - o));
    const double f = ud(rng), lambda = ld(rng);
    const double q = l2_prox(u, f, lambda, sigma);
    const double o2 = grid_argmin(
        [&](double y) { return (y - u) * (y - u) / (2 * sigma) + 0.5 * lambda * (y - f) * (y - f); }, -40.0, 40.0);
    worst_l2 = std::max(worst_l2, std::abs(q - o2));
  }
  c.require(worst_h <= 1e-4, fmt("prox_H off by %.3g", worst_h));
  c.require(worst_l2 <= 1e-4, fmt("l2_prox off by %.3g", worst_l2));

  const WeightField alpha(random_field({16, 16}, rng, 0.0, 2.0), 2.0);
  double worst_idem = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto a = random_vectors({16, 16}, rng, 4.0), b = random_vectors({16, 16}, rng, 4.0);
    const auto pa = project_Q_weighted(a, alpha), pb = project_Q_weighted(b, alpha);
    c.require(norm(pa - pb) <= norm(a - b) * (1.0 + 1e-14), "weighted projection expands a distance");
    worst_idem = std::max(worst_idem, max_vec_diff(project_Q_weighted(pa, alpha), pa));
    const auto ua = project_unit_ball(a), ub = project_unit_ball(b);
    c.require(norm(ua - ub) <= norm(a - b) * (1.0 + 1e-14), "unit-ball projection expands a distance");
    worst_idem = std::max(worst_idem, max_vec_diff(project_unit_ball(ua), ua));
  }
  c.require(worst_idem <= 1e-15, fmt("projection not idempotent, change %.3g", worst_idem));
  if (c.ok)
    c.detail = fmt("prox_H err %.2g, l2_prox err %.2g vs grid search; projections nonexpansive/idempotent",
                   worst_h, worst_l2);
  return c;
}

Check criterion_strong_duality() {
  Check c;
  // Run all 2000 iterations: a gap of 1e-8 alone only pins u to sqrt(2 gap / lambda).
  SolverConfig cfg;
  cfg.max_iters = 2000;
  cfg.stop_tol = 0.0;
  auto first_below = [](const ConvergenceReport &r, double tol) {
    for (std::size_t n = 0; n < r.gap.size(); ++n)
      if (r.gap[n] <= tol)
        return double(n);
    return -1.0;
  };
  // two pixels: min |u2 - u1| + (lambda/2)|u - f|^2 shrinks each value by 1/lambda
  const ScalarField f(1, 2, std::vector<double>{0.0, 2.0});
  cfg.lambda = 4.0;
  const auto two = solve_weighted_tv_denoise(f, WeightField::constant(f.shape(), 1.0), cfg);
  const double err = std::max(std::abs(two.u[0] - 0.25), std::abs(two.u[1] - 1.75));
  const double two_hit = first_below(two.report, 1e-8);
  c.require(two_hit >= 0.0 && two.report.gap.back() <= 1e-8, fmt("two-pixel gap %.3g", two.report.gap.back()));
  c.require(err <= 1e-6, fmt("two-pixel solution off by %.3g", err));

  const auto ph = make_piecewise_phantom(16, 5, 7);
  const auto noisy = add_gaussian_noise(ph.image, 0.1, 7);
  const auto alpha = weight_from_distance(distance_transform(ph.edges), 3.0, 1.0);
  cfg.lambda = 10.0;
  const auto reg = solve_weighted_tv_denoise(noisy, alpha, cfg);
  const double reg_hit = first_below(reg.report, 1e-8);
  c.require(reg_hit >= 0.0 && reg.report.gap.back() <= 1e-8,
            fmt("regression phantom gap %.3g after %g iterations", reg.report.gap.back(), reg.report.iterations));
  for (std::size_t n = 0; n < reg.report.gap.size(); ++n)
    c.require(reg.report.gap[n] >= -1e-10 * (1.0 + std::abs(reg.report.primal[n])), "negative duality gap");
  if (c.ok) {
    std::ostringstream os;
    os << "two-pixel: gap <= 1e-8 at iter " << two_hit << ", final gap " << two.report.gap.back() << ", err " << err
       << "; 16x16 phantom: gap <= 1e-8 at iter " << reg_hit << ", final gap " << reg.report.gap.back();
    c.detail = os.str();
  }
  return c;
}

Check criterion_weighted_trend() {
  Check c;
  const auto ph = make_piecewise_phantom(64, 6, 11);
  const auto noisy = add_gaussian_noise(ph.image, 0.1, 12);
  const auto alpha = weight_from_distance(distance_transform(ph.edges), 4.0, 1.0);
  const auto scalar = WeightField::constant(noisy.shape(), 1.0);
  const std::vector<double> lambdas{1, 2, 3, 5, 7, 10, 14, 20, 30, 50};
  struct Best {
    double mse = 1e300, ssim = -1.0, lam_mse = 0, lam_ssim = 0;
  } bw, bs;
  for (double lam : lambdas) {
    SolverConfig cfg;
    cfg.lambda = lam;
    cfg.gap_tol = 1e-6;
    for (int weighted = 0; weighted < 2; ++weighted) {
      const auto r = solve_weighted_tv_denoise(noisy, weighted ? alpha : scalar, cfg);
      Best &b = weighted ? bw : bs;
      const double m = mse(r.u, ph.image), s = ssim(r.u, ph.image);
      if (m < b.mse) {
        b.mse = m;
        b.lam_mse = lam;
      }
      if (s > b.ssim) {
        b.ssim = s;
        b.lam_ssim = lam;
      }
    }
  }
  c.require(bw.ssim > bs.ssim, fmt("SSIM weighted %.4f <= scalar %.4f", bw.ssim, bs.ssim));
  c.require(bw.mse < bs.mse, fmt("MSE weighted %.3g >= scalar %.3g", bw.mse, bs.mse));
  std::ostringstream os;
  os << "SSIM weighted " << bw.ssim << " (lambda " << bw.lam_ssim << ") vs scalar " << bs.ssim << " (lambda "
     << bs.lam_ssim << "); MSE " << bw.mse << " vs " << bs.mse;
  if (c.ok)
    c.detail = os.str();
  else
    c.detail += "; " + os.str();
  return c;
}

// (mean(u - trend) on the MR-only lesion - mean on the surrounding white-matter
// ring) / ring mean. The PET ground truth has no such lesion, so its value is 0.
double mr_lesion_contrast(const ScalarField &u, const PetMrPair &p) {
  const auto d = distance_transform(p.mr_lesion);
  double in = 0, nin = 0, ring = 0, nring = 0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (p.mr_lesion[k] != 0.0) {
      in += u[k] - p.pet_trend[k];
      ++nin;
    } else if (d[k] <= 3.0 && p.anatomy[k] == kWhiteMatter) {
      ring += u[k] - p.pet_trend[k];
      ++nring;
    }
  }
  return (in / nin - ring / nring) / (ring / nring);
}

Check criterion_structural_trend() {
  Check c;
  // Fixed before looking at structural-TV reconstructions.
  constexpr double kContrastThreshold = 0.10;
  const auto pair = make_pet_mr_pair(64, 1);
  const auto geom = RadonGeometry::for_image({64, 64}, 60, 1.0);
  const auto prior = build_anisotropy(pair.mr, 0.9, 1e-4);
  const auto iso = AnisotropyField::identity(geom.image);
  std::ostringstream os;
  for (double counts : {1.0, 0.25}) {
    const auto sim = simulate_pet_data(pair.pet, geom, 0.3, counts, 42);
    double best_tv = 1e300, best_st = 1e300, lam_tv = 0, lam_st = 0, contrast_st = 0;
    for (double lc : {0.25, 0.5, 1.0, 3.0, 6.0}) {
      SolverConfig cfg;
      cfg.lambda = lc / counts;
      cfg.max_iters = 1500;
      cfg.lipschitz_factor = 1e-2;
      cfg.stop_tol = 0.0;
      const auto tv = solve_pet(sim.f, sim.c0, iso, sim.geom, cfg);
      const auto st = solve_pet(sim.f, sim.c0, prior, sim.geom, cfg);
      c.require(all_finite(tv.u) && all_finite(st.u), "non-finite reconstruction");
      const double m_tv = mse(tv.u, pair.pet), m_st = mse(st.u, pair.pet);
      if (m_tv < best_tv) {
        best_tv = m_tv;
        lam_tv = cfg.lambda;
      }
      if (m_st < best_st) {
        best_st = m_st;
        lam_st = cfg.lambda;
        contrast_st = mr_lesion_contrast(st.u, pair);
      }
    }
    c.require(best_st < best_tv, fmt("counts %.2f: structural MSE %.4f", counts, best_st) +
                                     fmt(" not below TV %.4f", best_tv));
    c.require(std::abs(contrast_st) <= kContrastThreshold,
              fmt("counts %.2f: MR-only lesion contrast %.3f above threshold", counts, contrast_st));
    os << "counts " << counts << ": MSE structural " << best_st << " (lambda " << lam_st << ") vs TV " << best_tv
       << " (lambda " << lam_tv << "), MR-lesion contrast " << contrast_st << "; ";
  }
  c.detail = c.ok ? os.str() + fmt("threshold %.2f", kContrastThreshold) : c.detail + "; " + os.str();
  return c;
}

Check criterion_reductions() {
  Check c;
  // eta = 0 through the general per-pixel matrix path vs the isotropic shortcut
  const auto pair = make_pet_mr_pair(32, 2);
  const auto geom = RadonGeometry::for_image({32, 32}, 24, 0.8);
  const auto sim = simulate_pet_data(pair.pet, geom, 0.3, 2.0, 9);
  const auto w = normalized_gradient(pair.mr, 1e-4);
  AnisotropyField eta0{Grid<Sym2>(geom.image), 0.0, 1e-4};
  for (std::size_t k = 0; k < w.size(); ++k)
    eta0.matrices[k] = anisotropy_matrix(w[k], 0.0);
  AnisotropyField general = eta0;
  general.eta = -1.0; // any nonzero label disables the identity shortcut
  SolverConfig cfg;
  cfg.lambda = 1.0;
  cfg.max_iters = 300;
  const auto a = solve_pet(sim.f, sim.c0, general, sim.geom, cfg);
  const auto b = solve_pet(sim.f, sim.c0, AnisotropyField::identity(geom.image), sim.geom, cfg);
  c.require(a.u == b.u, fmt("eta=0 PET differs from TV, max diff %.3g", max_abs_diff(a.u, b.u)));
  c.require(a.report.primal == b.report.primal, "eta=0 PET energy history differs from TV");

  // constant alpha: alpha TV(u) + (lambda/2)|u-f|^2 has the minimizer of
  // TV(u) + (lambda/alpha/2)|u-f|^2
  const auto ph = make_piecewise_phantom(32, 5, 3);
  const auto f = add_gaussian_noise(ph.image, 0.1, 4);
  const double alpha = 0.7, lambda = 6.0;
  SolverConfig dc;
  dc.gap_tol = 1e-12;
  dc.max_iters = 20000;
  dc.stop_tol = 0.0;
  dc.lambda = lambda;
  const auto weighted = solve_weighted_tv_denoise(f, WeightField(ScalarField(f.shape(), alpha), 3.0), dc);
  dc.lambda = lambda / alpha;
  const auto scalar = solve_weighted_tv_denoise(f, WeightField::constant(f.shape(), 1.0), dc);
  const double diff = max_abs_diff(weighted.u, scalar.u);
  c.require(diff <= 1e-6, fmt("constant-alpha vs scalar TV differ by %.3g", diff));
  if (c.ok)
    c.detail = fmt("eta=0 bit-identical over 300 iterations; constant-alpha vs scalar TV max diff %.2g", diff);
  return c;
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path &p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Runs `args` inside dir; stdout goes to <dir>/<tag>.stdout.
bool run_cli(const fs::path &dir, const std::string &tag, const std::string &args) {
  const std::string cmd = "cd \"" + dir.string() + "\" && \"" + g_cli + "\" " + args + " > " + tag +
                          ".stdout 2> " + tag + ".stderr";
  return std::system(cmd.c_str()) == 0;
}

// Content for comparison: JSON with the wall-clock entry removed, bytes otherwise.
std::string comparable_content(const fs::path &p) {
  if (p.extension() == ".json") {
    auto j = nlohmann::json::parse(slurp(p));
    j.erase("timing");
    return j.dump();
  }
  return slurp(p);
}

Check criterion_determinism() {
  Check c;
  if (g_cli.empty()) {
    c.require(false, "path of the stvrecon executable not given");
    return c;
  }
  const fs::path root = fs::temp_directory_path() / "stvrecon_acceptance_determinism";
  fs::remove_all(root);
  const std::vector<std::pair<std::string, std::string>> commands{
      {"phantom", "phantom --kind piecewise --size 48 --regions 6 --seed 5 --noise 0.1 --output noisy.csv "
                  "--clean clean.csv --edges edges.csv"},
      {"phantom_pgm", "phantom --kind petmr --size 48 --seed 5 --output pet.pgm --mr mr.pgm --edges petmr_edges.csv"},
      {"weights", "weights --input noisy.csv --output alpha.csv"},
      {"weights_exact", "weights --input noisy.csv --edge-mask edges.csv --cap 3 --output alpha_exact.csv"},
      {"denoise", "denoise --input noisy.csv --weights alpha_exact.csv --lambda 5 --output den.csv --report "
                  "den.json --reference clean.csv"},
      {"denoise_scalar", "denoise --input noisy.csv --scalar-alpha 1 --lambda 8 --accel false --iters 300 "
                         "--output den_s.pgm --report den_s.json"},
      {"metrics", "metrics --input den.csv --reference clean.csv"},
      {"pet_sim", "pet-sim --size 32 --angles 20 --psf 0.8 --counts 2 --seed 8 --outdir sim"},
      {"pet_recon", "pet-recon --data sim/f.csv --background sim/c0.csv --geometry sim/geometry.json --prior "
                    "sim/mr.csv --eta 0.9 --lambda 0.5,2 --iters 100 --truth sim/truth.csv --output rec.csv "
                    "--report rec.json"},
      {"pet_recon_tv", "pet-recon --data sim/f.csv --background sim/c0.csv --geometry sim/geometry.json --eta 0 "
                       "--iters 100 --output tv.csv --report tv.json"},
  };
  for (const char *run : {"a", "b"}) {
    const fs::path dir = root / run;
    fs::create_directories(dir);
    for (const auto &[tag, args] : commands)
      c.require(run_cli(dir, tag, args), std::string("command failed: ") + args);
  }
  std::size_t files = 0;
  for (const auto &entry : fs::recursive_directory_iterator(root / "a")) {
    if (!entry.is_regular_file())
      continue;
    const fs::path rel = fs::relative(entry.path(), root / "a");
    if (rel.extension() == ".stderr")
      continue;
    const fs::path other = root / "b" / rel;
    c.require(fs::exists(other), "missing in second run: " + rel.string());
    if (fs::exists(other))
      c.require(comparable_content(entry.path()) == comparable_content(other), "outputs differ: " + rel.string());
    ++files;
  }
  if (c.ok) {
    c.detail = std::to_string(commands.size()) + " commands, " + std::to_string(files) +
               " output files identical (JSON compared without \"timing\")";
    fs::remove_all(root);
  }
  return c;
}

} // namespace

int main(int argc, char **argv) {
  if (argc > 1)
    g_cli = fs::absolute(argv[1]).string();
  const std::vector<std::pair<const char *, std::function<Check()>>> criteria{
      {"adjointness", criterion_adjointness},
      {"operator norm", criterion_operator_norm},
      {"anisotropy", criterion_anisotropy},
      {"poisson discrepancy", criterion_poisson},
      {"prox/projection oracles", criterion_prox},
      {"denoising strong duality", criterion_strong_duality},
      {"weighted vs scalar TV", criterion_weighted_trend},
      {"structural vs standard PET", criterion_structural_trend},
      {"reductions", criterion_reductions},
      {"determinism", criterion_determinism},
  };
  std::vector<bool> selected(criteria.size(), argc <= 2);
  for (int a = 2; a < argc; ++a) {
    const int k = std::atoi(argv[a]);
    if (k >= 1 && k <= int(criteria.size()))
      selected[k - 1] = true;
  }
  int failed = 0, ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i])
      continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Check c;
    try {
      c = criteria[i].second();
    } catch (const std::exception &e) {
      c.ok = false;
      c.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !c.ok;
    std::printf("%s criterion %zu (%s): %s [%.1fs]\n", c.ok ? "PASS" : "FAIL", i + 1, criteria[i].first,
                c.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of %d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
