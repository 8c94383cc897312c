#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stvrecon/discrepancy.hpp"
#include "stvrecon/fields.hpp"
#include "stvrecon/radon.hpp"
#include "stvrecon/structural_prior.hpp"

namespace stvrecon {

/// Step-size schedules for the denoising solver. In the iteration the primal
/// image u moves with step sigma and the dual field p with step tau.
enum class StepRule {
  constant,     ///< fixed sigma, tau with sigma * tau * 8 <= 1
  restarted,    ///< constant product sigma * tau, restarts from the running average with
                ///< the sigma/tau balance re-estimated at each restart
  accelerated,  ///< strongly convex variant: sigma shrinks, tau grows, u extrapolated
  harmonic,     ///< tau_n = tau0 / (n + 1), sigma_n = 1 / (8 tau_n)
  growing_primal ///< tau_n = tau0 / (n + 1), sigma_n = 8 / tau_n (tau0 = 1e-4); breaks sigma * tau * 8 <= 1
};

inline const char *to_string(StepRule r) {
  switch (r) {
  case StepRule::constant:
    return "constant";
  case StepRule::restarted:
    return "restarted";
  case StepRule::accelerated:
    return "accelerated";
  case StepRule::harmonic:
    return "harmonic";
  case StepRule::growing_primal:
    return "growing_primal";
  }
  return "unknown";
}

inline StepRule step_rule_from_string(const std::string &s) {
  if (s == "constant")
    return StepRule::constant;
  if (s == "restarted")
    return StepRule::restarted;
  if (s == "accelerated")
    return StepRule::accelerated;
  if (s == "harmonic")
    return StepRule::harmonic;
  if (s == "growing_primal")
    return StepRule::growing_primal;
  throw std::invalid_argument("unknown step rule: " + s);
}

struct SolverConfig {
  int max_iters = 2000;
  double tau0 = 0.0;   ///< initial dual step; 0 selects a default
  double sigma0 = 0.0; ///< initial primal step; 0 selects a default
  bool accel = true;   ///< denoising: StepRule::restarted if set, else constant; `rule` overrides
  std::optional<StepRule> rule;
  double lambda = 1.0;
  double stop_tol = 1e-9; ///< relative iterate change
  std::optional<double> gap_tol;

  // PET only.
  double lipschitz_factor = 1.0; ///< multiplies the analytical Lipschitz bound
  double epsilon = 0.0;          ///< smoothing width of g; 0 = data default
  double penalty_m = 0.0;        ///< weight of H; 0 = default
  int norm_iters = 100;          ///< power iterations for ||K||^2

  StepRule denoise_rule() const {
    return rule.value_or(accel ? StepRule::restarted : StepRule::constant);
  }
};

struct ConvergenceReport {
  int iterations = 0;
  std::vector<double> primal;          ///< primal energy per recorded iterate
  std::vector<double> dual;            ///< dual energy (denoising only)
  std::vector<double> gap;             ///< primal - dual (denoising only)
  std::vector<double> relative_change; ///< ||u_n+1 - u_n|| / ||u_n+1||
  double wall_time_s = 0.0;
  std::string stop_reason;
  double tau_final = 0.0;
  double sigma_final = 0.0;
  // PET diagnostics.
  double lipschitz_data = 0.0;
  double operator_norm_sq = 0.0;
  double epsilon = 0.0;
  double penalty_m = 0.0;
};

// ---------------------------------------------------------------------------
// General three-line primal-dual step.

struct PdState {
  ScalarField u;
  VectorField p;
  VectorField p_bar;
};

/// One iteration
///   u+    = data_step(u, u + sigma div p_bar, sigma)
///   p+    = project_Q(p + tau grad u+)
///   p_bar = 2 p+ - p
/// where data_step applies the proximal map of the simple term after an
/// explicit descent step on the smooth data term (or the exact prox of the
/// data term when it is simple). Throws if the iterate stops being finite.
template <class PriorGrad, class PriorDiv, class ProjectQ, class DataStep>
void pd_step_general(PdState &s, PriorGrad &&prior_grad, PriorDiv &&prior_div,
                     ProjectQ &&project_Q, DataStep &&data_step, double tau, double sigma) {
  if (!(tau > 0.0) || !(sigma > 0.0))
    throw std::invalid_argument("pd_step_general: step sizes must be positive");
  ScalarField ascent = prior_div(s.p_bar);
  for (std::size_t k = 0; k < ascent.size(); ++k)
    ascent[k] = s.u[k] + sigma * ascent[k];
  ScalarField u_next = data_step(s.u, ascent, sigma);
  if (!all_finite(u_next))
    throw std::runtime_error("pd_step_general: non-finite iterate (step sizes too large?)");

  VectorField dual = prior_grad(u_next);
  for (std::size_t k = 0; k < dual.size(); ++k)
    dual[k] = s.p[k] + tau * dual[k];
  VectorField p_next = project_Q(std::move(dual));
  if (!all_finite(p_next))
    throw std::runtime_error("pd_step_general: non-finite dual iterate");

  for (std::size_t k = 0; k < p_next.size(); ++k)
    s.p_bar[k] = 2.0 * p_next[k] - s.p[k];
  s.p = std::move(p_next);
  s.u = std::move(u_next);
}

// ---------------------------------------------------------------------------
// Weighted TV denoising.

/// sum alpha |grad u| + (lambda/2) ||u - f||^2
inline double primal_energy_denoise(const ScalarField &u, const ScalarField &f,
                                    const WeightField &alpha, double lambda) {
  return eval_weighted_tv(u, alpha) + l2_value(u, f, lambda);
}

/// -(<div p, f> + ||div p||^2 / (2 lambda)) for p in Q; never exceeds the
/// primal energy of any u.
inline double dual_energy_denoise(const VectorField &p, const ScalarField &f, double lambda) {
  const ScalarField d = divergence(p);
  return -(dot(d, f) + dot(d, d) / (2.0 * lambda));
}

inline double relative_change(const ScalarField &next, const ScalarField &prev) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < next.size(); ++k) {
    num += (next[k] - prev[k]) * (next[k] - prev[k]);
    den += next[k] * next[k];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

struct DenoiseResult {
  ScalarField u;
  VectorField p;
  ConvergenceReport report;
};

namespace detail {

inline bool steps_admissible(double sigma, double tau, double norm_sq) {
  return sigma * tau * norm_sq <= 1.0 + 1e-12;
}

} // namespace detail

/// Saddle point of <div p, u> - (lambda/2)||u - f||^2 over |p(x)| <= alpha(x),
/// started from u = f, p = 0.
inline DenoiseResult solve_weighted_tv_denoise(const ScalarField &f, const WeightField &alpha,
                                               const SolverConfig &cfg) {
  require_same_shape(f, alpha.alpha(), "solve_weighted_tv_denoise");
  if (!(cfg.lambda > 0.0))
    throw std::invalid_argument("solve_weighted_tv_denoise: lambda must be positive");
  if (cfg.max_iters < 0)
    throw std::invalid_argument("solve_weighted_tv_denoise: max_iters must be >= 0");

  const StepRule rule = cfg.denoise_rule();
  const double lambda = cfg.lambda;
  double sigma = 0.0, tau = 0.0;
  switch (rule) {
  case StepRule::constant:
  case StepRule::restarted:
  case StepRule::accelerated:
    sigma = cfg.sigma0 > 0 ? cfg.sigma0 : (cfg.tau0 > 0 ? 1.0 / (8.0 * cfg.tau0) : 1.0 / std::sqrt(8.0));
    tau = cfg.tau0 > 0 ? cfg.tau0 : 1.0 / (8.0 * sigma);
    if (!detail::steps_admissible(sigma, tau, kGradientNormSqBound))
      throw std::invalid_argument("solve_weighted_tv_denoise: steps violate sigma*tau*8 <= 1");
    break;
  case StepRule::harmonic:
    tau = cfg.tau0 > 0 ? cfg.tau0 : 1.0;
    sigma = 1.0 / (kGradientNormSqBound * tau);
    break;
  case StepRule::growing_primal:
    tau = cfg.tau0 > 0 ? cfg.tau0 : 1e-4;
    sigma = 8.0 / tau;
    break;
  }
  const double tau_init = tau;

  const auto start = std::chrono::steady_clock::now();
  DenoiseResult r{f, VectorField(f.shape()), {}};
  ConvergenceReport &rep = r.report;
  auto record = [&](const ScalarField &u, const VectorField &p) {
    const double pe = primal_energy_denoise(u, f, alpha, lambda);
    const double de = dual_energy_denoise(p, f, lambda);
    rep.primal.push_back(pe);
    rep.dual.push_back(de);
    rep.gap.push_back(pe - de);
  };
  record(r.u, r.p);
  rep.stop_reason = "max_iters";

  // The first step from p = 0 leaves u = f unchanged, so the relative-change
  // test only applies from the second iteration on.
  auto converged = [&](int n, double change) {
    if (cfg.gap_tol && rep.gap.back() <= *cfg.gap_tol) {
      rep.stop_reason = "gap_tol";
      return true;
    }
    if (n > 0 && change <= cfg.stop_tol) {
      rep.stop_reason = "stop_tol";
      return true;
    }
    return false;
  };
  if (cfg.gap_tol && rep.gap.back() <= *cfg.gap_tol)
    rep.stop_reason = "gap_tol";

  if (rep.stop_reason != "gap_tol") {
    if (rule == StepRule::accelerated) {
      // Strong convexity of the quadratic term (modulus lambda) lets the
      // primal step shrink and the dual step grow while sigma * tau stays fixed.
      ScalarField u_bar = r.u;
      for (int n = 0; n < cfg.max_iters; ++n) {
        VectorField g = gradient_forward(u_bar);
        for (std::size_t k = 0; k < g.size(); ++k)
          g[k] = r.p[k] + tau * g[k];
        r.p = project_Q_weighted(std::move(g), alpha);
        ScalarField d = divergence(r.p);
        for (std::size_t k = 0; k < d.size(); ++k)
          d[k] = r.u[k] + sigma * d[k];
        ScalarField u_next = l2_prox(std::move(d), f, lambda, sigma);
        if (!all_finite(u_next))
          throw std::runtime_error("solve_weighted_tv_denoise: non-finite iterate");
        const double theta = 1.0 / std::sqrt(1.0 + 2.0 * lambda * sigma);
        sigma *= theta;
        tau /= theta;
        u_bar = u_next;
        for (std::size_t k = 0; k < u_bar.size(); ++k)
          u_bar[k] += theta * (u_next[k] - r.u[k]);
        const double change = relative_change(u_next, r.u);
        r.u = std::move(u_next);
        rep.relative_change.push_back(change);
        record(r.u, r.p);
        rep.iterations = n + 1;
        if (converged(n, change))
          break;
      }
    } else {
      PdState s{r.u, r.p, r.p};
      auto grad = [](const ScalarField &u) { return gradient_forward(u); };
      auto div = [](const VectorField &p) { return divergence(p); };
      auto proj = [&](VectorField p) { return project_Q_weighted(std::move(p), alpha); };
      auto data = [&](const ScalarField &, const ScalarField &v, double step) {
        return l2_prox(v, f, lambda, step);
      };
      // Restart bookkeeping: running averages since the last restart, the
      // iterate at the last restart and the gap there. The primal weight
      // omega = sqrt(tau / sigma) is pulled toward the ratio of dual to primal
      // movement between restarts; sigma * tau stays fixed.
      const double step_scale = std::sqrt(sigma * tau);
      double omega = std::sqrt(tau / sigma);
      ScalarField u_sum(f.shape(), 0.0), u_anchor = s.u;
      VectorField p_sum(f.shape()), p_anchor = s.p;
      int since_restart = 0;
      double gap_anchor = rep.gap.back();
      for (int n = 0; n < cfg.max_iters; ++n) {
        if (rule == StepRule::harmonic) {
          tau = tau_init / (n + 1);
          sigma = 1.0 / (kGradientNormSqBound * tau);
        } else if (rule == StepRule::growing_primal) {
          tau = tau_init / (n + 1);
          sigma = 8.0 / tau;
        }
        const ScalarField prev = s.u;
        pd_step_general(s, grad, div, proj, data, tau, sigma);
        if (rule == StepRule::restarted) {
          u_sum += s.u;
          p_sum += s.p;
          ++since_restart;
          const double w = 1.0 / since_restart;
          ScalarField u_avg = w * u_sum;
          VectorField p_avg = w * p_sum;
          const double gap_cur = primal_energy_denoise(s.u, f, alpha, lambda) -
                                 dual_energy_denoise(s.p, f, lambda);
          const double gap_avg = primal_energy_denoise(u_avg, f, alpha, lambda) -
                                 dual_energy_denoise(p_avg, f, lambda);
          const double best = std::min(gap_cur, gap_avg);
          const bool done = cfg.gap_tol && best <= *cfg.gap_tol;
          if (done || best <= 0.2 * gap_anchor || since_restart >= 0.36 * (n + 1)) {
            if (gap_avg < gap_cur) {
              s.u = std::move(u_avg);
              s.p = std::move(p_avg);
            }
            s.p_bar = s.p;
            const double du = norm(s.u - u_anchor), dp = norm(s.p - p_anchor);
            if (du > 1e-10 && dp > 1e-10) {
              omega = std::sqrt(omega * dp / du);
              sigma = step_scale / omega;
              tau = step_scale * omega;
            }
            u_anchor = s.u;
            p_anchor = s.p;
            gap_anchor = best;
            u_sum = ScalarField(f.shape(), 0.0);
            p_sum = VectorField(f.shape());
            since_restart = 0;
          }
        }
        const double change = relative_change(s.u, prev);
        rep.relative_change.push_back(change);
        record(s.u, s.p);
        rep.iterations = n + 1;
        if (converged(n, change))
          break;
      }
      r.u = std::move(s.u);
      r.p = std::move(s.p);
    }
  }
  rep.tau_final = tau;
  rep.sigma_final = sigma;
  rep.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

// ---------------------------------------------------------------------------
// PET reconstruction with a structural prior.

/// sum |A grad u| + lambda Dkl(Ku) + H(u), with Ku supplied.
inline double primal_energy_pet(const ScalarField &u, const Sinogram &ku,
                                const AnisotropyField &prior, const PoissonData &data,
                                double lambda) {
  return eval_structural_j(prior, gradient_forward(u)) + lambda * dkl_value(ku, data) +
         penalty_H(u, data.penalty_m());
}

struct PetResult {
  ScalarField u;
  VectorField q;
  ConvergenceReport report;
};

/// Constant image whose projection carries the net counts sum(f - c0).
inline ScalarField pet_initial_image(const PoissonData &data, const RadonGeometry &geom) {
  const ScalarField ones(geom.image, 1.0);
  const Sinogram k1 = forward_project(ones, geom);
  double net = 0.0, mass = 0.0;
  for (std::size_t k = 0; k < k1.size(); ++k) {
    net += data.f()[k] - data.c0()[k];
    mass += k1[k];
  }
  return ScalarField(geom.image, mass > 0.0 ? std::max(net / mass, 0.0) : 0.0);
}

/// Iterates
///   u+ = prox_H(u + sigma div(A^T q_bar) - sigma lambda K^T Dkl'(Ku))
///   q+ = proj_{|.|<=1}(q + tau A grad u+)
///   q_bar = 2 q+ - q
/// with (1/sigma - L_data)(1/tau) >= ||div A^T||^2, using ||div A^T||^2 <= 8
/// and L_data = lambda ||K||^2 Lip(Dkl').
inline PetResult solve_pet(const Sinogram &f, const Sinogram &c0, const AnisotropyField &prior,
                           const RadonGeometry &geom, const SolverConfig &cfg) {
  geom.validate();
  if (f.shape() != geom.sinogram_shape() || c0.shape() != geom.sinogram_shape())
    throw std::invalid_argument("solve_pet: data shape does not match geometry");
  if (prior.shape() != geom.image)
    throw std::invalid_argument("solve_pet: prior shape does not match image");
  if (!(cfg.lambda > 0.0))
    throw std::invalid_argument("solve_pet: lambda must be positive");
  if (!(cfg.lipschitz_factor > 0.0))
    throw std::invalid_argument("solve_pet: lipschitz_factor must be positive");
  if (cfg.max_iters < 0)
    throw std::invalid_argument("solve_pet: max_iters must be >= 0");
  const PoissonData data(f, c0, cfg.epsilon, cfg.penalty_m);
  const double lambda = cfg.lambda;

  const auto start = std::chrono::steady_clock::now();
  PetResult r{pet_initial_image(data, geom), VectorField(geom.image), {}};
  ConvergenceReport &rep = r.report;
  // Power iteration approaches ||K||^2 from below; keep a small margin.
  const RadonOperator K(geom);
  rep.operator_norm_sq = 1.01 * K.norm_sq_estimate(cfg.norm_iters);
  rep.lipschitz_data =
      cfg.lipschitz_factor * lambda * rep.operator_norm_sq * dkl_lipschitz_bound(data);
  rep.epsilon = data.epsilon();
  rep.penalty_m = data.penalty_m();

  const double coupling = kGradientNormSqBound;
  double tau = cfg.tau0 > 0.0 ? cfg.tau0 : std::sqrt(rep.lipschitz_data / coupling);
  double sigma = cfg.sigma0 > 0.0 ? cfg.sigma0 : 1.0 / (rep.lipschitz_data + coupling * tau);
  if ((1.0 / sigma - rep.lipschitz_data) / tau < coupling * (1.0 - 1e-12))
    throw std::invalid_argument("solve_pet: steps violate (1/sigma - L)(1/tau) >= ||div A^T||^2");
  rep.tau_final = tau;
  rep.sigma_final = sigma;

  PdState s{r.u, r.q, r.q};
  Sinogram ku = K.forward(s.u);
  auto grad = [&](const ScalarField &u) { return apply_A(prior, gradient_forward(u)); };
  auto div = [&](const VectorField &q) { return divergence(apply_A_transpose(prior, q)); };
  auto proj = [](VectorField q) { return project_unit_ball(std::move(q)); };
  auto data_step = [&](const ScalarField &, const ScalarField &v, double step) {
    const ScalarField back = K.back(dkl_gradient(ku, data));
    ScalarField w = v;
    for (std::size_t k = 0; k < w.size(); ++k)
      w[k] -= step * lambda * back[k];
    return prox_H(std::move(w), step, data.penalty_m());
  };

  rep.primal.push_back(primal_energy_pet(s.u, ku, prior, data, lambda));
  rep.stop_reason = "max_iters";
  for (int n = 0; n < cfg.max_iters; ++n) {
    const ScalarField prev = s.u;
    pd_step_general(s, grad, div, proj, data_step, tau, sigma);
    ku = K.forward(s.u);
    const double change = relative_change(s.u, prev);
    rep.relative_change.push_back(change);
    rep.primal.push_back(primal_energy_pet(s.u, ku, prior, data, lambda));
    rep.iterations = n + 1;
    if (n > 0 && change <= cfg.stop_tol) {
      rep.stop_reason = "stop_tol";
      break;
    }
  }
  r.u = std::move(s.u);
  r.q = std::move(s.p);
  rep.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

} // namespace stvrecon
