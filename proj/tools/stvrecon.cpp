// Command-line front end: weights, denoise, phantom, pet-sim, pet-recon, metrics.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "stvrecon/io.hpp"
#include "stvrecon/phantom.hpp"
#include "stvrecon/report.hpp"
#include "stvrecon/solver.hpp"
#include "stvrecon/structural_prior.hpp"
#include "stvrecon/weight_map.hpp"

using namespace stvrecon;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string stem_with(const std::string &path, const std::string &suffix, const std::string &ext) {
  fs::path p(path);
  return (p.parent_path() / (p.stem().string() + suffix + ext)).string();
}

json metrics_json(const ScalarField &u, const ScalarField &ref) {
  return {{"mse", mse(u, ref)},
          {"ssim", ssim(u, ref)},
          {"ssim_variant", "gaussian 11x11 sigma=1.5 K1=0.01 K2=0.03, range of reference"}};
}

// ---------------------------------------------------------------------------

struct WeightsOpts {
  std::string input, output, edges, edge_mask;
  double low = CannyParams{}.low_thresh;
  double high = CannyParams{}.high_thresh;
  double sigma = CannyParams{}.sigma;
  double cap = 4.0;
  double scale = 1.0;
};

int run_weights(const WeightsOpts &o) {
  const ScalarField f = io::read_image(o.input);
  EdgeDetection det;
  if (o.edge_mask.empty()) {
    det = detect_edges(f, o.low, o.high, o.sigma);
  } else {
    det.mask = io::read_image(o.edge_mask);
    if (det.mask.shape() != f.shape())
      throw UsageError("weights: edge mask shape " + to_string(det.mask.shape()) + " differs from image " +
                       to_string(f.shape()));
  }
  const bool empty = det.empty();
  if (empty)
    std::cerr << "warning: empty edge set; alpha is constant (= scale)\n";
  const ScalarField d = distance_transform(det.mask);
  const WeightField alpha = weight_from_distance(d, o.cap, o.scale);
  io::write_csv(o.output, alpha.alpha());
  const std::string edges = o.edges.empty() ? stem_with(o.output, "_edges", ".pgm") : o.edges;
  io::write_pgm(edges, det.mask, 0.0, 1.0);

  bool ok = true;
  std::size_t edge_pixels = 0;
  for (std::size_t k = 0; k < f.size(); ++k) {
    const bool on_edge = det.mask[k] != 0.0;
    edge_pixels += on_edge;
    ok = ok && (alpha[k] == 0.0) == on_edge && alpha[k] >= 0.0 && alpha[k] <= o.scale;
  }
  const json summary{{"command", "weights"},
                     {"input", o.input},
                     {"alpha", o.output},
                     {"edges", edges},
                     {"canny", {{"low_thresh", o.low}, {"high_thresh", o.high}, {"sigma", o.sigma},
                                {"thresholds", "relative to max gradient magnitude"}}},
                     {"edge_source", o.edge_mask.empty() ? "canny" : o.edge_mask},
                     {"cap", o.cap},
                     {"scale", o.scale},
                     {"edge_pixels", edge_pixels},
                     {"empty_edge_set", empty},
                     {"invariants_ok", ok}};
  std::cout << summary.dump(2) << '\n';
  return ok ? 0 : 3;
}

// ---------------------------------------------------------------------------

struct DenoiseOpts {
  std::string input, weights, output, report, reference;
  std::optional<double> scalar_alpha;
  double lambda = 1.0;
  int iters = 2000;
  bool accel = true;
  std::string rule;
  double tau0 = 0.0, sigma0 = 0.0;
  double stop_tol = 1e-9;
  std::optional<double> gap_tol;
};

int run_denoise(const DenoiseOpts &o) {
  const ScalarField f = io::read_image(o.input);
  if (o.weights.empty() == !o.scalar_alpha)
    throw UsageError("denoise: give exactly one of --weights or --scalar-alpha");
  const WeightField alpha = o.scalar_alpha
                                ? WeightField::constant(f.shape(), *o.scalar_alpha)
                                : WeightField::from_values(io::read_csv(o.weights));
  if (alpha.shape() != f.shape())
    throw UsageError("denoise: image " + to_string(f.shape()) + " and weights " +
                     to_string(alpha.shape()) + " differ in shape");
  SolverConfig cfg;
  cfg.lambda = o.lambda;
  cfg.max_iters = o.iters;
  cfg.accel = o.accel;
  if (!o.rule.empty())
    cfg.rule = step_rule_from_string(o.rule);
  cfg.tau0 = o.tau0;
  cfg.sigma0 = o.sigma0;
  cfg.stop_tol = o.stop_tol;
  cfg.gap_tol = o.gap_tol;

  const auto r = solve_weighted_tv_denoise(f, alpha, cfg);
  io::write_image(o.output, r.u);

  bool ok = all_finite(r.u);
  for (std::size_t n = 0; n < r.report.gap.size(); ++n)
    ok = ok && r.report.gap[n] >= -1e-8 * (1.0 + std::abs(r.report.primal[n]));
  for (std::size_t k = 0; k < r.p.size(); ++k)
    ok = ok && norm(r.p[k]) <= alpha[k] * (1.0 + 1e-12);

  json echo = config_json(cfg);
  echo["input"] = o.input;
  echo["weights"] = o.scalar_alpha ? json(nullptr) : json(o.weights);
  echo["scalar_alpha"] = o.scalar_alpha ? json(*o.scalar_alpha) : json(nullptr);
  json rep = report_json(r.report, echo);
  rep["command"] = "denoise";
  rep["final_gap"] = r.report.gap.back();
  rep["invariants_ok"] = ok;
  if (!o.reference.empty())
    rep["metrics"] = metrics_json(r.u, io::read_image(o.reference));
  if (!o.report.empty())
    write_json(o.report, rep);
  std::cout << json{{"command", "denoise"},
                    {"iterations", r.report.iterations},
                    {"stop_reason", r.report.stop_reason},
                    {"final_gap", r.report.gap.back()},
                    {"invariants_ok", ok}}
                   .dump()
            << '\n';
  return ok ? 0 : 3;
}

// ---------------------------------------------------------------------------

struct PhantomOpts {
  std::string kind = "piecewise";
  std::size_t size = 64;
  std::size_t regions = 6;
  std::uint64_t seed = 1;
  double noise = 0.0;
  std::string output, clean, edges, mr;
};

int run_phantom(const PhantomOpts &o) {
  json summary{{"command", "phantom"}, {"kind", o.kind}, {"size", o.size}, {"seed", o.seed}};
  if (o.kind == "piecewise") {
    const auto ph = make_piecewise_phantom(o.size, o.regions, o.seed);
    const ScalarField noisy = o.noise > 0.0 ? add_gaussian_noise(ph.image, o.noise, o.seed) : ph.image;
    io::write_image(o.output, noisy);
    if (!o.clean.empty())
      io::write_image(o.clean, ph.image);
    if (!o.edges.empty())
      io::write_csv(o.edges, ph.edges);
    summary["regions"] = o.regions;
    summary["noise_sigma"] = o.noise;
  } else if (o.kind == "petmr") {
    const auto p = make_pet_mr_pair(o.size, o.seed);
    io::write_image(o.output, p.pet);
    if (!o.mr.empty())
      io::write_image(o.mr, p.mr);
    if (!o.edges.empty())
      io::write_csv(o.edges, p.shared_edges);
  } else {
    throw UsageError("phantom: --kind must be 'piecewise' or 'petmr'");
  }
  std::cout << summary.dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct PetSimOpts {
  std::size_t size = 64;
  std::size_t angles = 60;
  double psf = 1.0;
  double scatter = 0.3;
  double counts = 1.0;
  std::uint64_t seed = 1;
  std::string outdir = ".";
};

int run_pet_sim(const PetSimOpts &o) {
  const auto pair = make_pet_mr_pair(o.size, o.seed);
  const auto geom = RadonGeometry::for_image({o.size, o.size}, o.angles, o.psf);
  // One seed drives both phantom jitter and Poisson noise; the noise stream is
  // offset so the two never share a SplitMix64 state.
  const auto sim = simulate_pet_data(pair.pet, geom, o.scatter, o.counts, o.seed ^ 0x5851f42d4c957f2dULL);
  fs::create_directories(o.outdir);
  const fs::path d(o.outdir);
  io::write_sinogram_csv((d / "f.csv").string(), sim.f);
  io::write_sinogram_csv((d / "c0.csv").string(), sim.c0);
  io::write_csv((d / "truth.csv").string(), pair.pet);
  io::write_csv((d / "mr.csv").string(), pair.mr);
  io::write_csv((d / "pet_lesion.csv").string(), pair.pet_lesion);
  io::write_csv((d / "mr_lesion.csv").string(), pair.mr_lesion);
  io::write_pgm((d / "truth.pgm").string(), pair.pet);
  io::write_pgm((d / "mr.pgm").string(), pair.mr);
  double total = 0.0;
  for (double v : sim.f)
    total += v;
  const json g{{"geometry", geometry_json(sim.geom)},
               {"simulation", {{"scatter_fraction", o.scatter},
                               {"count_scale", o.counts},
                               {"seed", o.seed},
                               {"total_counts", total},
                               {"rng", "SplitMix64 per bin; Poisson by inversion (rate < 10) or PTRS"}}}};
  write_json((d / "geometry.json").string(), g);
  std::cout << json{{"command", "pet-sim"}, {"outdir", o.outdir}, {"total_counts", total}}.dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct PetReconOpts {
  std::string data, background, geometry, prior, truth, output, report;
  double eta = 0.9;
  double nu = 1e-4;
  std::vector<double> lambdas{1.0};
  int iters = 10000;
  double lipschitz_factor = 1.0;
  double epsilon = 0.0;
  double penalty_m = 0.0;
  double stop_tol = 1e-9;
};

int run_pet_recon(const PetReconOpts &o) {
  const Sinogram f = io::read_sinogram_csv(o.data);
  const Sinogram c0 = io::read_sinogram_csv(o.background);
  const json gj = read_json(o.geometry);
  const RadonGeometry geom = geometry_from_json(gj.contains("geometry") ? gj.at("geometry") : gj);
  for (double v : f)
    if (!(v >= 0.0))
      throw UsageError("pet-recon: counts f must be nonnegative");
  for (double v : c0)
    if (!(v > 0.0))
      throw UsageError("pet-recon: background c0 must be strictly positive");

  AnisotropyField prior = AnisotropyField::identity(geom.image);
  if (o.eta != 0.0) {
    if (o.prior.empty())
      throw UsageError("pet-recon: --prior is required unless --eta 0");
    const ScalarField v = io::read_image(o.prior);
    if (v.shape() != geom.image)
      throw UsageError("pet-recon: prior image shape does not match geometry");
    prior = build_anisotropy(v, o.eta, o.nu);
  }
  const std::optional<ScalarField> truth =
      o.truth.empty() ? std::nullopt : std::optional<ScalarField>(io::read_image(o.truth));
  const std::string method = o.eta == 0.0 ? "TV" : "structural TV";
  if (o.lambdas.empty())
    throw UsageError("pet-recon: at least one --lambda is required");
  const bool sweep = o.lambdas.size() > 1;

  json runs = json::array();
  bool ok = true;
  std::optional<std::size_t> best;
  double best_mse = 0.0;
  for (std::size_t i = 0; i < o.lambdas.size(); ++i) {
    SolverConfig cfg;
    cfg.lambda = o.lambdas[i];
    cfg.max_iters = o.iters;
    cfg.lipschitz_factor = o.lipschitz_factor;
    cfg.epsilon = o.epsilon;
    cfg.penalty_m = o.penalty_m;
    cfg.stop_tol = o.stop_tol;
    const auto r = solve_pet(f, c0, prior, geom, cfg);

    bool run_ok = all_finite(r.u) && std::isfinite(r.report.primal.back());
    for (const auto &q : r.q)
      run_ok = run_ok && norm(q) <= 1.0 + 1e-12;
    ok = ok && run_ok;

    std::ostringstream tag;
    tag << "_lam" << io::format_real(o.lambdas[i]);
    const std::string out = sweep ? stem_with(o.output, tag.str(), fs::path(o.output).extension().string()) : o.output;
    io::write_image(out, r.u);

    json echo = config_json(cfg);
    echo.erase("accel");
    echo.erase("step_rule");
    echo["method"] = method;
    echo["eta"] = o.eta;
    echo["nu"] = o.nu;
    echo["geometry"] = geometry_json(geom);
    echo["data"] = o.data;
    echo["background"] = o.background;
    echo["prior"] = o.eta == 0.0 ? json(nullptr) : json(o.prior);
    json rep = report_json(r.report, echo);
    rep["command"] = "pet-recon";
    rep["method"] = method;
    rep["output"] = out;
    rep["invariants_ok"] = run_ok;
    if (truth) {
      rep["metrics"] = metrics_json(r.u, *truth);
      const double m = rep["metrics"]["mse"].get<double>();
      if (!best || m < best_mse) {
        best = i;
        best_mse = m;
      }
    }
    if (!o.report.empty()) {
      const std::string path = sweep ? stem_with(o.report, tag.str(), ".json") : o.report;
      write_json(path, rep);
      rep["report"] = path;
    }
    runs.push_back({{"lambda", o.lambdas[i]},
                    {"output", out},
                    {"report", rep.value("report", "")},
                    {"iterations", r.report.iterations},
                    {"final_energy", r.report.primal.back()},
                    {"mse", truth ? rep["metrics"]["mse"] : json(nullptr)}});
  }
  json summary{{"command", "pet-recon"}, {"method", method}, {"runs", runs}, {"invariants_ok", ok}};
  if (best) {
    summary["best_lambda"] = o.lambdas[*best];
    for (std::size_t i = 0; i < runs.size(); ++i)
      summary["runs"][i]["best"] = i == *best;
  }
  if (sweep && !o.report.empty())
    write_json(stem_with(o.report, "_sweep", ".json"), summary);
  std::cout << summary.dump(2) << '\n';
  if (best)
    std::cerr << "best lambda (min MSE): " << o.lambdas[*best] << "  mse=" << best_mse << '\n';
  return ok ? 0 : 3;
}

// ---------------------------------------------------------------------------

int run_metrics(const std::string &input, const std::string &reference) {
  const auto u = io::read_image(input), ref = io::read_image(reference);
  json j = metrics_json(u, ref);
  j["command"] = "metrics";
  std::cout << j.dump() << '\n';
  return 0;
}

// Expands `--config FILE` into flags. The file holds `key = value` lines
// (`#` comments, optional `[command]` sections); a key becomes `--key value`
// for the selected command unless that flag is already on the command line.
std::vector<std::string> expand_config(std::vector<std::string> args, const std::vector<std::string> &commands) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + long(i), args.begin() + long(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + long(i));
      break;
    }
  }
  if (path.empty())
    return args;
  std::string command;
  for (const auto &a : args)
    if (std::find(commands.begin(), commands.end(), a) != commands.end()) {
      command = a;
      break;
    }
  std::ifstream is(path);
  if (!is)
    throw UsageError("cannot open config file " + path);
  auto trim = [](std::string v) {
    const auto b = v.find_first_not_of(" \t\r"), e = v.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
  };
  auto given = [&](const std::string &flag) {
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string &a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
  };
  std::string section, line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty())
      continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty())
      throw UsageError(path + ":" + std::to_string(lineno) + ": empty key");
    if (!section.empty() && section != command)
      continue;
    const std::string flag = "--" + key;
    if (!given(flag)) {
      args.push_back(flag);
      args.push_back(value);
    }
  }
  return args;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Weighted and structural total-variation reconstruction"};
  std::string config_path;
  app.add_option("--config", config_path,
                 "plain 'key = value' file (optional [command] sections); command-line flags take precedence");
  app.require_subcommand(1);

  WeightsOpts wo;
  auto *w = app.add_subcommand("weights", "edge-based weight map for denoising");
  w->add_option("--input", wo.input, "image (.pgm or .csv)")->required();
  w->add_option("--low", wo.low, "hysteresis low threshold (fraction of max)")->capture_default_str();
  w->add_option("--high", wo.high, "hysteresis high threshold (fraction of max)")->capture_default_str();
  w->add_option("--sigma", wo.sigma, "Gaussian smoothing std")->capture_default_str();
  w->add_option("--edge-mask", wo.edge_mask, "binary edge mask to use instead of Canny");
  w->add_option("--cap", wo.cap, "distance at which alpha saturates")->capture_default_str();
  w->add_option("--scale", wo.scale, "alpha value away from edges")->capture_default_str();
  w->add_option("--output", wo.output, "alpha CSV")->required();
  w->add_option("--edges", wo.edges, "edge mask PGM (default: <output>_edges.pgm)");

  DenoiseOpts dn;
  auto *d = app.add_subcommand("denoise", "weighted TV denoising");
  d->add_option("--input", dn.input, "noisy image")->required();
  d->add_option("--weights", dn.weights, "alpha CSV");
  d->add_option("--scalar-alpha", dn.scalar_alpha, "constant alpha instead of --weights");
  d->add_option("--lambda", dn.lambda, "fidelity weight")->capture_default_str();
  d->add_option("--iters", dn.iters, "maximum iterations")->capture_default_str();
  d->add_option("--accel", dn.accel, "restarted steps (true) or plain constant steps (false)")->capture_default_str();
  d->add_option("--rule", dn.rule, "step rule: constant, restarted, accelerated, harmonic, growing_primal");
  d->add_option("--tau0", dn.tau0, "dual step (0 = default)");
  d->add_option("--sigma0", dn.sigma0, "primal step (0 = default)");
  d->add_option("--stop-tol", dn.stop_tol, "relative change tolerance")->capture_default_str();
  d->add_option("--gap-tol", dn.gap_tol, "stop once the duality gap is below this");
  d->add_option("--output", dn.output, "denoised image")->required();
  d->add_option("--report", dn.report, "JSON report");
  d->add_option("--reference", dn.reference, "clean image for MSE/SSIM");

  PhantomOpts ph;
  auto *p = app.add_subcommand("phantom", "synthetic test images");
  p->add_option("--kind", ph.kind, "piecewise or petmr")->capture_default_str();
  p->add_option("--size", ph.size)->capture_default_str();
  p->add_option("--regions", ph.regions)->capture_default_str();
  p->add_option("--seed", ph.seed)->capture_default_str();
  p->add_option("--noise", ph.noise, "Gaussian noise std (piecewise)")->capture_default_str();
  p->add_option("--output", ph.output, "image (noisy for piecewise, PET for petmr)")->required();
  p->add_option("--clean", ph.clean, "noise-free piecewise image");
  p->add_option("--edges", ph.edges, "exact edge mask CSV");
  p->add_option("--mr", ph.mr, "MR image (petmr)");

  PetSimOpts ps;
  auto *s = app.add_subcommand("pet-sim", "simulate PET data from the MR/PET phantom");
  s->add_option("--size", ps.size)->capture_default_str();
  s->add_option("--angles", ps.angles)->capture_default_str();
  s->add_option("--psf", ps.psf, "Gaussian PSF std across bins")->capture_default_str();
  s->add_option("--scatter", ps.scatter, "scatter fraction in (0,1)")->capture_default_str();
  s->add_option("--counts", ps.counts, "count scale")->capture_default_str();
  s->add_option("--seed", ps.seed)->capture_default_str();
  s->add_option("--outdir", ps.outdir)->capture_default_str();

  PetReconOpts pr;
  auto *r = app.add_subcommand("pet-recon", "PET reconstruction with (structural) TV");
  r->add_option("--data", pr.data, "counts sinogram CSV")->required();
  r->add_option("--background", pr.background, "background sinogram CSV")->required();
  r->add_option("--geometry", pr.geometry, "geometry JSON")->required();
  r->add_option("--prior", pr.prior, "prior (MR) image");
  r->add_option("--eta", pr.eta, "anisotropy strength in [0,1); 0 = isotropic TV")->capture_default_str();
  r->add_option("--nu", pr.nu, "gradient normalization")->capture_default_str();
  r->add_option("--lambda", pr.lambdas, "data weight; several values (comma separated) run a sweep")
      ->delimiter(',')
      ->capture_default_str();
  r->add_option("--iters", pr.iters)->capture_default_str();
  r->add_option("--lipschitz-factor", pr.lipschitz_factor, "scales the analytic Lipschitz bound")->capture_default_str();
  r->add_option("--epsilon", pr.epsilon, "smoothing width (0 = 1e-2 of data range)");
  r->add_option("--penalty-m", pr.penalty_m, "positivity penalty weight (0 = default)");
  r->add_option("--stop-tol", pr.stop_tol)->capture_default_str();
  r->add_option("--truth", pr.truth, "ground truth for MSE");
  r->add_option("--output", pr.output, "reconstruction")->required();
  r->add_option("--report", pr.report, "JSON report");

  std::string m_input, m_ref;
  auto *m = app.add_subcommand("metrics", "MSE and SSIM of an image against a reference");
  m->add_option("--input", m_input)->required();
  m->add_option("--reference", m_ref)->required();

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = expand_config(std::move(args), {"weights", "denoise", "phantom", "pet-sim", "pet-recon", "metrics"});
  } catch (const UsageError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  std::reverse(args.begin(), args.end()); // CLI11 consumes the vector from the back
  try {
    app.parse(args);
  } catch (const CLI::ParseError &e) {
    return app.exit(e);
  }

  try {
    if (*w)
      return run_weights(wo);
    if (*d)
      return run_denoise(dn);
    if (*p)
      return run_phantom(ph);
    if (*s)
      return run_pet_sim(ps);
    if (*r) {
      if (!(pr.eta >= 0.0 && pr.eta < 1.0))
        throw UsageError("pet-recon: --eta must lie in [0, 1)");
      return run_pet_recon(pr);
    }
    if (*m)
      return run_metrics(m_input, m_ref);
  } catch (const UsageError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
