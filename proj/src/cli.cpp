#include "openfl/cli.hpp"

#include <omp.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "openfl/harness.hpp"
#include "openfl/stability.hpp"

namespace openfl {

void apply_thread_cap() {
  if (const char* env = std::getenv("OPENFL_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) omp_set_num_threads(std::min(cap, omp_get_max_threads()));
  }
}

namespace {

std::uint64_t seed_override(std::uint64_t from_config) {
  if (const char* env = std::getenv("OPENFL_SEED"))
    return static_cast<std::uint64_t>(std::strtoull(env, nullptr, 10));
  return from_config;
}

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> values;
  std::stringstream ss(csv);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (cell.empty()) continue;
    values.push_back(std::stod(cell));
  }
  if (values.empty()) throw std::runtime_error("--values: no values parsed from '" + csv + "'");
  return values;
}

ExperimentConfig load_for_cli(const std::string& path, bool paper_scale) {
  ExperimentConfig cfg = load_config(path);
  if (paper_scale) apply_paper_scale(cfg);
  cfg.master_seed = seed_override(cfg.master_seed);
  return cfg;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir, bool paper_scale) {
  const ExperimentConfig cfg = load_for_cli(config_path, paper_scale);
  const std::vector<std::uint64_t> seeds =
      sweep_seeds(cfg.master_seed, 1, static_cast<std::size_t>(cfg.n_monte_carlo));
  std::vector<RunRecord> runs(seeds.size());
  const std::int64_t total = static_cast<std::int64_t>(runs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < total; ++i)
    runs[static_cast<std::size_t>(i)] =
        run_single(cfg, seeds[static_cast<std::size_t>(i)],
                   run_data_seed(cfg.master_seed, static_cast<std::size_t>(i)));

  std::filesystem::create_directories(out_dir);
  const std::string runs_path = (std::filesystem::path(out_dir) / "runs.csv").string();
  const std::string events_path = (std::filesystem::path(out_dir) / "events.csv").string();
  write_runs_csv(runs, runs_path);
  write_events_csv(runs, events_path);

  const int window = std::max(1, cfg.rounds / 5);
  double steady = 0.0;
  for (const RunRecord& run : runs) {
    double acc = 0.0;
    for (int k = cfg.rounds - window + 1; k <= cfg.rounds; ++k)
      acc += run.rounds.at(static_cast<std::size_t>(k)).iterate_norm;
    steady += acc / window;
  }
  steady /= static_cast<double>(runs.size());
  std::printf("runs=%d rounds=%d steady_state_mean_iterate_norm=%.17g\n", cfg.n_monte_carlo,
              cfg.rounds, steady);
  std::printf("wrote %s\nwrote %s\n", runs_path.c_str(), events_path.c_str());
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& axis_name,
              const std::string& values_csv, const std::string& out_dir, bool paper_scale) {
  const ExperimentConfig cfg = load_for_cli(config_path, paper_scale);
  SweepAxis axis;
  if (axis_name == "lambda") axis = SweepAxis::lambda;
  else if (axis_name == "p") axis = SweepAxis::p;
  else if (axis_name == "sigma") axis = SweepAxis::sigma;
  else throw std::runtime_error("--axis must be one of lambda|p|sigma");

  const SweepResult result = run_sweep(cfg, axis, parse_values(values_csv));
  for (const std::string& path : emit_csv(result, out_dir))
    std::printf("wrote %s\n", path.c_str());
  for (const SweepPoint& point : result.points)
    std::printf("%s=%g steady_state_mean=%.17g stderr=%.17g\n", axis_name.c_str(), point.value,
                point.steady_state_mean, point.steady_state_stderr);
  return 0;
}

int cmd_radius_sgd(double r, double mu, double lipschitz, double sigma) {
  const SgdRadiusReport rep = sgd_radius(r, mu, lipschitz, sigma);
  std::fputs(to_key_value(rep).c_str(), stdout);
  return 0;
}

int cmd_radius_adam(double r, double mu, double lipschitz, double sigma, const AdamHyper& hy,
                    int d) {
  const AdamConstants k = adam_constants(hy, sigma, mu, lipschitz, d);
  std::fputs(to_key_value(k).c_str(), stdout);
  if (!k.valid) {
    std::fprintf(stderr, "invalid regime: %s\n", k.failure_reason.c_str());
    return 1;
  }
  std::printf("radius=%.17g\n", adam_radius(k, r, mu, lipschitz));
  return 0;
}

int cmd_stability_check(const std::string& config_path, double radius, int n_boundary, int n_mc,
                        int burn_in, double clip_sigma, const std::string& out_path) {
  const ExperimentConfig cfg = load_for_cli(config_path, false);
  const Dataset data = generate_synthetic_dataset(
      cfg.d, cfg.m, cfg.sigma_data, derive_seed(cfg.master_seed, {stream::data, 0}));
  const ObjectiveSpec spec = certify_constants(data, cfg.lambda);
  std::printf("certified mu=%.17g L=%.17g kappa=%.17g r=%.17g\n", spec.mu, spec.lipschitz,
              spec.kappa, spec.optimum_radius_r);

  StabilityCheckReport rep;
  const std::uint64_t seed = derive_seed(cfg.master_seed, {stream::stability});
  if (cfg.optimizer == OptimizerKind::local_sgd) {
    rep = empirical_stability_check_sgd(spec, cfg.eta, radius, n_boundary, n_mc,
                                        cfg.batch_size, seed);
  } else {
    const AdamHyper hy{cfg.eta, cfg.beta1, cfg.beta2, cfg.epsilon};
    rep = empirical_stability_check_adam(spec, hy, clip_sigma, radius, n_boundary, n_mc,
                                         burn_in, cfg.batch_size, seed);
  }
  std::fputs(to_key_value(rep).c_str(), stdout);
  if (!out_path.empty()) {
    write_samples_csv(rep, out_path);
    std::printf("wrote %s\n", out_path.c_str());
  }
  return rep.pass ? 0 : 2;
}

int cmd_lyapunov(const std::string& config_path, double sigma, double noise_std, double mu,
                 int K, int n_mc, double eta_override, double epsilon_override) {
  const ExperimentConfig cfg = load_for_cli(config_path, false);
  if (cfg.optimizer != OptimizerKind::local_adam)
    throw std::runtime_error("lyapunov: the config must set optimizer = adam");
  const AdamHyper hy{eta_override > 0.0 ? eta_override : cfg.eta, cfg.beta1, cfg.beta2,
                     epsilon_override > 0.0 ? epsilon_override : cfg.epsilon};
  const ObjectiveSpec spec = make_quadratic(mu, zeros(static_cast<std::size_t>(cfg.d)), sigma);
  const AdamConstants constants = adam_constants(hy, sigma, mu, mu, cfg.d);
  std::fputs(to_key_value(constants).c_str(), stdout);
  if (!constants.valid) {
    std::fprintf(stderr, "invalid regime: %s\n", constants.failure_reason.c_str());
    return 1;
  }
  const ContractionReport rep = lyapunov_contraction_check(
      spec, hy, constants, sigma, noise_std, zeros(static_cast<std::size_t>(cfg.d)), K, n_mc,
      derive_seed(cfg.master_seed, {stream::lyapunov}));
  std::fputs(to_key_value(rep).c_str(), stdout);
  return rep.pass ? 0 : 2;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  apply_thread_cap();

  CLI::App app{"Open federated-learning stability simulator"};
  app.require_subcommand(1);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Run Monte-Carlo open-FL simulations");
  std::string sim_config, sim_out;
  bool sim_paper_scale = false;
  simulate->add_option("--config", sim_config, "config file")->required();
  simulate->add_option("--out", sim_out, "output directory")->required();
  simulate->add_flag("--paper-scale", sim_paper_scale, "full synthetic-experiment scale");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Sweep lambda, p, or sigma over Monte-Carlo runs");
  std::string sw_config, sw_axis, sw_values, sw_out;
  bool sw_paper_scale = false;
  sweep->add_option("--config", sw_config, "config file")->required();
  sweep->add_option("--axis", sw_axis, "lambda|p|sigma")->required();
  sweep->add_option("--values", sw_values, "comma-separated axis values")->required();
  sweep->add_option("--out", sw_out, "output directory")->required();
  sweep->add_flag("--paper-scale", sw_paper_scale, "full synthetic-experiment scale");

  // radius
  auto* radius = app.add_subcommand("radius", "Print the closed-form stability radius report");
  std::string rad_opt = "sgd";
  double rad_r = 0.0, rad_mu = 1.0, rad_L = 1.0, rad_sigma = 0.0;
  AdamHyper rad_hy;
  int rad_d = 1;
  radius->add_option("--optimizer", rad_opt, "sgd|adam")->required();
  radius->add_option("--r", rad_r, "optimum-ball radius")->required();
  radius->add_option("--mu", rad_mu, "strong convexity")->required();
  radius->add_option("--L", rad_L, "smoothness")->required();
  radius->add_option("--sigma", rad_sigma, "gradient noise bound")->required();
  radius->add_option("--eta", rad_hy.eta, "Adam learning rate");
  radius->add_option("--beta1", rad_hy.beta1, "Adam beta1");
  radius->add_option("--beta2", rad_hy.beta2, "Adam beta2");
  radius->add_option("--epsilon", rad_hy.epsilon, "Adam epsilon");
  radius->add_option("--d", rad_d, "dimension");

  // stability-check
  auto* stab = app.add_subcommand("stability-check", "Monte-Carlo second-moment stability check");
  std::string st_config, st_out;
  double st_radius = 0.0, st_clip = 0.0;
  int st_boundary = 200, st_mc = 2000, st_burn = 50;
  stab->add_option("--config", st_config, "config file")->required();
  stab->add_option("--radius", st_radius, "radius R to test")->required();
  stab->add_option("--n-boundary", st_boundary, "boundary states");
  stab->add_option("--n-mc", st_mc, "gradient resamples per state");
  stab->add_option("--burn-in", st_burn, "Adam burn-in steps");
  stab->add_option("--clip-sigma", st_clip, "norm-clip bound for Adam gradients (0 = off)");
  stab->add_option("--out", st_out, "per-sample CSV path");

  // lyapunov
  auto* lyap = app.add_subcommand("lyapunov", "Lyapunov contraction check for local Adam");
  std::string ly_config;
  double ly_sigma = 0.1, ly_noise = 0.01, ly_mu = 1.0;
  double ly_eta = 0.0, ly_eps = 0.0;
  int ly_K = 200, ly_mc = 2000;
  lyap->add_option("--config", ly_config, "config file (optimizer = adam)")->required();
  lyap->add_option("--sigma", ly_sigma, "gradient-norm bound in the constants");
  lyap->add_option("--noise-std", ly_noise, "per-coordinate gradient noise std");
  lyap->add_option("--mu", ly_mu, "quadratic curvature (mu = L)");
  lyap->add_option("--K", ly_K, "trajectory length");
  lyap->add_option("--n-mc", ly_mc, "resamples per step");
  lyap->add_option("--eta", ly_eta, "override the config learning rate");
  lyap->add_option("--epsilon", ly_eps, "override the config epsilon");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exit 0
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    std::fprintf(stderr, "%s", app.help().c_str());
    return 1;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(sim_config, sim_out, sim_paper_scale);
    if (sweep->parsed()) return cmd_sweep(sw_config, sw_axis, sw_values, sw_out, sw_paper_scale);
    if (radius->parsed()) {
      if (rad_opt == "sgd") return cmd_radius_sgd(rad_r, rad_mu, rad_L, rad_sigma);
      if (rad_opt == "adam")
        return cmd_radius_adam(rad_r, rad_mu, rad_L, rad_sigma, rad_hy, rad_d);
      throw std::runtime_error("--optimizer must be sgd or adam");
    }
    if (stab->parsed())
      return cmd_stability_check(st_config, st_radius, st_boundary, st_mc, st_burn, st_clip,
                                 st_out);
    if (lyap->parsed())
      return cmd_lyapunov(ly_config, ly_sigma, ly_noise, ly_mu, ly_K, ly_mc, ly_eta, ly_eps);
  } catch (const invalid_regime_error& e) {
    std::fprintf(stderr, "invalid regime: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}

}  // namespace openfl
