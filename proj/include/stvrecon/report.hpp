#pragma once

#include <fstream>
#include <string>

#include "json.hpp"

#include "stvrecon/io.hpp"
#include "stvrecon/solver.hpp"

namespace stvrecon {

inline nlohmann::json config_json(const SolverConfig &c) {
  nlohmann::json j{{"max_iters", c.max_iters},
                   {"tau0", c.tau0},
                   {"sigma0", c.sigma0},
                   {"accel", c.accel},
                   {"step_rule", to_string(c.denoise_rule())},
                   {"lambda", c.lambda},
                   {"stop_tol", c.stop_tol},
                   {"lipschitz_factor", c.lipschitz_factor},
                   {"epsilon", c.epsilon},
                   {"penalty_m", c.penalty_m},
                   {"norm_iters", c.norm_iters}};
  j["gap_tol"] = c.gap_tol ? nlohmann::json(*c.gap_tol) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json geometry_json(const RadonGeometry &g) {
  return {{"height", g.image.height},     {"width", g.image.width},
          {"n_angles", g.n_angles},       {"n_bins", g.n_bins},
          {"psf_sigma", g.psf_sigma},     {"sensitivity", g.sensitivity},
          {"angle_first", 0.0},           {"angle_step", g.n_angles ? g.angle(1 % g.n_angles) : 0.0},
          {"bin_spacing", 1.0}};
}

inline RadonGeometry geometry_from_json(const nlohmann::json &j) {
  RadonGeometry g{{j.at("height").get<std::size_t>(), j.at("width").get<std::size_t>()},
                  j.at("n_angles").get<std::size_t>(),
                  j.at("n_bins").get<std::size_t>(),
                  j.at("psf_sigma").get<double>(),
                  j.value("sensitivity", 1.0)};
  g.validate();
  return g;
}

/// Report layout: iterations, per-iteration histories, final step sizes and
/// the resolved configuration under "config_echo". Wall time is kept apart in
/// "timing" so two runs can be compared after dropping that one key.
inline nlohmann::json report_json(const ConvergenceReport &r, const nlohmann::json &config_echo) {
  nlohmann::json j{{"iterations", r.iterations},
                   {"energies", r.primal},
                   {"relative_change", r.relative_change},
                   {"stop_reason", r.stop_reason},
                   {"tau_final", r.tau_final},
                   {"sigma_final", r.sigma_final},
                   {"config_echo", config_echo}};
  if (!r.dual.empty()) {
    j["dual_energies"] = r.dual;
    j["gap"] = r.gap;
  }
  if (r.operator_norm_sq > 0.0) {
    j["operator_norm_sq"] = r.operator_norm_sq;
    j["lipschitz_data"] = r.lipschitz_data;
    j["epsilon"] = r.epsilon;
    j["penalty_m"] = r.penalty_m;
  }
  j["timing"] = {{"wall_time_s", r.wall_time_s}};
  return j;
}

inline void write_json(const std::string &path, const nlohmann::json &j) {
  std::ofstream os(path);
  if (!os)
    throw io::IoError("cannot open " + path + " for writing");
  os << j.dump(2) << '\n';
  if (!os)
    throw io::IoError("write failed: " + path);
}

inline nlohmann::json read_json(const std::string &path) {
  std::ifstream is(path);
  if (!is)
    throw io::IoError("cannot open " + path);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception &e) {
    throw io::IoError(path + ": " + e.what());
  }
}

} // namespace stvrecon
