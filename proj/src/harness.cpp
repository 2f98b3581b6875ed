#include "openfl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "openfl/stats.hpp"

namespace openfl {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw std::runtime_error("config: key '" + key + "' has non-numeric value '" + value + "'");
  }
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const std::int64_t v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw std::runtime_error("config: key '" + key + "' has non-integer value '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw std::runtime_error("config: key '" + key + "' must be true or false, got '" + value + "'");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_value_for_name(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

ExperimentConfig parse_config(std::istream& in, const std::string& origin) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(origin + ":" + std::to_string(line_no) +
                               ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw std::runtime_error(origin + ":" + std::to_string(line_no) + ": empty key or value");
    if (!seen.insert(key).second)
      throw std::runtime_error(origin + ": duplicate key '" + key + "'");

    if (key == "d") cfg.d = static_cast<int>(parse_int(key, value));
    else if (key == "m") cfg.m = static_cast<int>(parse_int(key, value));
    else if (key == "n_total") cfg.n_total = static_cast<int>(parse_int(key, value));
    else if (key == "n_initial") cfg.n_initial = static_cast<int>(parse_int(key, value));
    else if (key == "rounds") cfg.rounds = static_cast<int>(parse_int(key, value));
    else if (key == "local_steps") cfg.local_steps = static_cast<int>(parse_int(key, value));
    else if (key == "lambda") cfg.lambda = parse_double(key, value);
    else if (key == "sigma_data") cfg.sigma_data = parse_double(key, value);
    else if (key == "p") cfg.p = parse_double(key, value);
    else if (key == "eta") cfg.eta = parse_double(key, value);
    else if (key == "beta1") cfg.beta1 = parse_double(key, value);
    else if (key == "beta2") cfg.beta2 = parse_double(key, value);
    else if (key == "epsilon") cfg.epsilon = parse_double(key, value);
    else if (key == "q") cfg.q = parse_double(key, value);
    else if (key == "batch_size") cfg.batch_size = static_cast<int>(parse_int(key, value));
    else if (key == "n_monte_carlo") cfg.n_monte_carlo = static_cast<int>(parse_int(key, value));
    else if (key == "master_seed")
      cfg.master_seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "reset_moments_on_broadcast")
      cfg.reset_moments_on_broadcast = parse_bool(key, value);
    else if (key == "optimizer") {
      if (value == "sgd") cfg.optimizer = OptimizerKind::local_sgd;
      else if (value == "adam") cfg.optimizer = OptimizerKind::local_adam;
      else throw std::runtime_error("config: optimizer must be 'sgd' or 'adam', got '" + value + "'");
    } else if (key == "churn_timing") {
      if (value == "per_round") cfg.churn_timing = ChurnTiming::per_communication_round;
      else if (value == "per_iteration") cfg.churn_timing = ChurnTiming::per_iteration;
      else throw std::runtime_error(
          "config: churn_timing must be 'per_round' or 'per_iteration', got '" + value + "'");
    } else {
      throw std::runtime_error(origin + ": unknown key '" + key + "'");
    }
  }

  static const char* required[] = {"d", "m", "n_total", "n_initial", "rounds",
                                   "lambda", "sigma_data", "p", "eta", "optimizer",
                                   "master_seed"};
  for (const char* key : required)
    if (!seen.count(key))
      throw std::runtime_error(origin + ": missing required key '" + key + "'");

  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_config: cannot open " + path);
  return parse_config(in, path);
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.d < 1) throw std::runtime_error("config: d must be >= 1");
  if (cfg.m < 1) throw std::runtime_error("config: m must be >= 1");
  if (cfg.n_initial < 1 || cfg.n_initial > cfg.n_total)
    throw std::runtime_error("config: need 1 <= n_initial <= n_total");
  if (cfg.rounds < 0) throw std::runtime_error("config: rounds must be >= 0");
  if (cfg.local_steps < 1) throw std::runtime_error("config: local_steps must be >= 1");
  if (cfg.lambda <= 0.0) throw std::runtime_error("config: lambda must be > 0");
  if (cfg.sigma_data < 0.0) throw std::runtime_error("config: sigma_data must be >= 0");
  if (cfg.p < 0.0 || cfg.p > 1.0) throw std::runtime_error("config: p must lie in [0, 1]");
  if (cfg.eta <= 0.0) throw std::runtime_error("config: eta must be > 0");
  if (cfg.q <= 0.0 || cfg.q > 1.0) throw std::runtime_error("config: q must lie in (0, 1]");
  if (cfg.batch_size < 1 || cfg.batch_size > cfg.m)
    throw std::runtime_error("config: batch_size must lie in [1, m]");
  if (cfg.n_monte_carlo < 1) throw std::runtime_error("config: n_monte_carlo must be >= 1");
  if (cfg.optimizer == OptimizerKind::local_adam) {
    AdamHyper hy{cfg.eta, cfg.beta1, cfg.beta2, cfg.epsilon};
    try {
      openfl::validate(hy);
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string("config: ") + e.what());
    }
  }
}

void apply_paper_scale(ExperimentConfig& cfg) {
  cfg.d = 100;
  cfg.m = 100;
  cfg.n_total = 1000;
  cfg.n_initial = 10;
  cfg.n_monte_carlo = 100;
}

SimulationConfig to_simulation_config(const ExperimentConfig& cfg, std::uint64_t run_seed,
                                      std::uint64_t data_seed) {
  SimulationConfig s;
  s.d = cfg.d;
  s.m = cfg.m;
  s.n_total = cfg.n_total;
  s.n_initial = cfg.n_initial;
  s.schedule.local_steps_per_round = cfg.local_steps;
  s.schedule.total_rounds = cfg.rounds;
  s.churn.p_leave = cfg.p;
  s.churn.p_join = cfg.p;
  s.churn.timing = cfg.churn_timing;
  s.selection.mode = SelectionConfig::Mode::bernoulli_subset;
  s.selection.q = cfg.q;
  s.optimizer = cfg.optimizer;
  s.eta = cfg.eta;
  s.adam = AdamHyper{cfg.eta, cfg.beta1, cfg.beta2, cfg.epsilon};
  s.lambda = cfg.lambda;
  s.sigma_data = cfg.sigma_data;
  s.batch_size = std::min(cfg.batch_size, cfg.m);
  s.reset_moments_on_broadcast = cfg.reset_moments_on_broadcast;
  s.run_seed = run_seed;
  s.data_seed = data_seed;
  return s;
}

std::uint64_t run_data_seed(std::uint64_t master_seed, std::size_t run_index) {
  return derive_seed(master_seed, {stream::data, static_cast<std::uint64_t>(run_index)});
}

RunRecord run_single(const ExperimentConfig& cfg, std::uint64_t run_seed,
                     std::uint64_t data_seed) {
  Simulation sim(to_simulation_config(cfg, run_seed, data_seed));
  return sim.run_experiment();
}

RunRecord run_single(const ExperimentConfig& cfg, std::uint64_t run_seed) {
  return run_single(cfg, run_seed, derive_seed(run_seed, {stream::data}));
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::lambda: return "lambda";
    case SweepAxis::p: return "p";
    case SweepAxis::sigma: return "sigma";
  }
  return "?";
}

std::vector<std::uint64_t> sweep_seeds(std::uint64_t master_seed, std::size_t n_values,
                                       std::size_t n_runs) {
  std::vector<std::uint64_t> seeds(n_values * n_runs);
  std::set<std::uint64_t> unique;
  for (std::size_t a = 0; a < n_values; ++a) {
    for (std::size_t r = 0; r < n_runs; ++r) {
      const std::uint64_t s = derive_seed(master_seed, {stream::sweep, a, r});
      if (!unique.insert(s).second)
        throw std::runtime_error("sweep_seeds: derived-seed collision in the run matrix");
      seeds[a * n_runs + r] = s;
    }
  }
  return seeds;
}

namespace {

ExperimentConfig with_axis_value(const ExperimentConfig& base, SweepAxis axis, double value) {
  ExperimentConfig cfg = base;
  switch (axis) {
    case SweepAxis::lambda: cfg.lambda = value; break;
    case SweepAxis::p: cfg.p = value; break;
    case SweepAxis::sigma: cfg.sigma_data = value; break;
  }
  validate(cfg);
  return cfg;
}

SweepResult aggregate_sweep(const ExperimentConfig& cfg, SweepAxis axis,
                            const std::vector<double>& values,
                            const std::vector<RunRecord>& runs) {
  const std::size_t n_runs = static_cast<std::size_t>(cfg.n_monte_carlo);
  const int K = cfg.rounds;
  SweepResult result;
  result.axis = axis;
  result.rounds = K;
  result.n_runs = static_cast<int>(n_runs);
  result.steady_window = std::max(1, K / 5);

  for (std::size_t a = 0; a < values.size(); ++a) {
    SweepPoint point;
    point.value = values[a];
    point.mean_series.resize(K);
    point.stderr_series.resize(K);
    point.mean_loss_series.resize(K);
    point.stderr_loss_series.resize(K);
    point.per_run_steady.resize(n_runs);

    for (int k = 1; k <= K; ++k) {
      std::vector<double> norms(n_runs), losses(n_runs);
      for (std::size_t r = 0; r < n_runs; ++r) {
        const RoundRecord& rec = runs[a * n_runs + r].rounds.at(static_cast<std::size_t>(k));
        norms[r] = rec.iterate_norm;
        losses[r] = rec.global_loss;
      }
      const MeanStderr mn = mean_stderr(norms);
      const MeanStderr ml = mean_stderr(losses);
      point.mean_series[k - 1] = mn.mean;
      point.stderr_series[k - 1] = mn.stderr_of_mean;
      point.mean_loss_series[k - 1] = ml.mean;
      point.stderr_loss_series[k - 1] = ml.stderr_of_mean;
    }

    const int w0 = K - result.steady_window;  // window covers rounds w0+1 .. K
    for (std::size_t r = 0; r < n_runs; ++r) {
      double acc = 0.0;
      for (int k = w0 + 1; k <= K; ++k)
        acc += runs[a * n_runs + r].rounds.at(static_cast<std::size_t>(k)).iterate_norm;
      point.per_run_steady[r] = acc / static_cast<double>(result.steady_window);
    }
    const MeanStderr steady = mean_stderr(point.per_run_steady);
    point.steady_state_mean = steady.mean;
    point.steady_state_stderr = steady.stderr_of_mean;
    result.points.push_back(std::move(point));
  }
  return result;
}

SweepResult run_sweep_impl(const ExperimentConfig& cfg, SweepAxis axis,
                           const std::vector<double>& values, bool parallel) {
  if (values.empty()) throw std::invalid_argument("run_sweep: values must be non-empty");
  if (cfg.rounds < 1) throw std::invalid_argument("run_sweep: rounds must be >= 1");
  const std::size_t n_runs = static_cast<std::size_t>(cfg.n_monte_carlo);
  const std::vector<std::uint64_t> seeds = sweep_seeds(cfg.master_seed, values.size(), n_runs);

  std::vector<ExperimentConfig> configs;
  configs.reserve(values.size());
  for (double v : values) configs.push_back(with_axis_value(cfg, axis, v));

  std::vector<RunRecord> runs(values.size() * n_runs);
  const std::int64_t total = static_cast<std::int64_t>(runs.size());
  if (parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < total; ++i) {
      const std::size_t a = static_cast<std::size_t>(i) / n_runs;
      const std::size_t r = static_cast<std::size_t>(i) % n_runs;
      runs[static_cast<std::size_t>(i)] = run_single(
          configs[a], seeds[static_cast<std::size_t>(i)], run_data_seed(cfg.master_seed, r));
    }
  } else {
    for (std::int64_t i = 0; i < total; ++i) {
      const std::size_t a = static_cast<std::size_t>(i) / n_runs;
      const std::size_t r = static_cast<std::size_t>(i) % n_runs;
      runs[static_cast<std::size_t>(i)] = run_single(
          configs[a], seeds[static_cast<std::size_t>(i)], run_data_seed(cfg.master_seed, r));
    }
  }
  return aggregate_sweep(cfg, axis, values, runs);
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& cfg, SweepAxis axis,
                      const std::vector<double>& values) {
  return run_sweep_impl(cfg, axis, values, true);
}

SweepResult run_sweep_serial(const ExperimentConfig& cfg, SweepAxis axis,
                             const std::vector<double>& values) {
  return run_sweep_impl(cfg, axis, values, false);
}

std::vector<std::string> emit_csv(const SweepResult& result, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::vector<std::string> paths;
  const std::string axis = to_string(result.axis);

  for (const SweepPoint& point : result.points) {
    const std::string path =
        (fs::path(out_dir) / ("series_" + axis + "_" + fmt_value_for_name(point.value) + ".csv"))
            .string();
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("emit_csv: cannot open " + path);
    std::fprintf(f,
                 "round,mean_iterate_norm,stderr_iterate_norm,mean_global_loss,"
                 "stderr_global_loss\n");
    for (int k = 0; k < result.rounds; ++k)
      std::fprintf(f, "%d,%s,%s,%s,%s\n", k + 1, fmt(point.mean_series[k]).c_str(),
                   fmt(point.stderr_series[k]).c_str(), fmt(point.mean_loss_series[k]).c_str(),
                   fmt(point.stderr_loss_series[k]).c_str());
    std::fclose(f);
    paths.push_back(path);
  }

  const std::string summary = (fs::path(out_dir) / ("summary_" + axis + ".csv")).string();
  std::FILE* f = std::fopen(summary.c_str(), "wb");
  if (!f) throw std::runtime_error("emit_csv: cannot open " + summary);
  std::fprintf(f, "axis,value,steady_state_mean,steady_state_stderr\n");
  for (const SweepPoint& point : result.points)
    std::fprintf(f, "%s,%s,%s,%s\n", axis.c_str(), fmt_value_for_name(point.value).c_str(),
                 fmt(point.steady_state_mean).c_str(), fmt(point.steady_state_stderr).c_str());
  std::fclose(f);
  paths.push_back(summary);
  return paths;
}

void write_runs_csv(const std::vector<RunRecord>& runs, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("write_runs_csv: cannot open " + path);
  std::fprintf(f, "run_id,round,iterate_norm,global_loss,n_clients,n_eligible,n_joined,n_left\n");
  for (std::size_t r = 0; r < runs.size(); ++r)
    for (const RoundRecord& rec : runs[r].rounds)
      std::fprintf(f, "%zu,%d,%s,%s,%d,%d,%d,%d\n", r, rec.round,
                   fmt(rec.iterate_norm).c_str(), fmt(rec.global_loss).c_str(), rec.n_clients,
                   rec.n_eligible, rec.n_joined, rec.n_left);
  std::fclose(f);
}

void write_events_csv(const std::vector<RunRecord>& runs, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("write_events_csv: cannot open " + path);
  std::fprintf(f, "run_id,round,event,client_id\n");
  for (std::size_t r = 0; r < runs.size(); ++r) {
    for (const ChurnEvent& e : runs[r].events) {
      const char* kind = "";
      switch (e.kind) {
        case ChurnEvent::Kind::join: kind = "join"; break;
        case ChurnEvent::Kind::leave: kind = "leave"; break;
        case ChurnEvent::Kind::join_suppressed: kind = "join_suppressed"; break;
        case ChurnEvent::Kind::leave_suppressed: kind = "leave_suppressed"; break;
      }
      std::fprintf(f, "%zu,%d,%s,%lld\n", r, e.round, kind,
                   static_cast<long long>(e.client_id));
    }
  }
  std::fclose(f);
}

}  // namespace openfl
