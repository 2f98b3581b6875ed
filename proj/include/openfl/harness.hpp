#pragma once

#include <cstdint>
#include <istream>
#include <string>
#include <vector>

#include "openfl/opensys.hpp"

namespace openfl {

struct ExperimentConfig {
  int d = 20;
  int m = 50;
  int n_total = 1000;
  int n_initial = 10;
  int rounds = 200;      // K
  int local_steps = 5;   // H
  double lambda = 0.01;
  double sigma_data = 2.0;
  double p = 1.0;  // per-event join/leave probability
  double eta = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-3;
  double q = 1.0;
  OptimizerKind optimizer = OptimizerKind::local_sgd;
  int batch_size = 10;
  int n_monte_carlo = 20;
  std::uint64_t master_seed = 0;
  bool reset_moments_on_broadcast = false;
  ChurnTiming churn_timing = ChurnTiming::per_communication_round;
};

// Flat "key = value" file, '#' comments. Unknown keys are an error (fail
// closed); required keys: d, m, n_total, n_initial, rounds, lambda,
// sigma_data, p, eta, optimizer, master_seed.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(std::istream& in, const std::string& origin);
void validate(const ExperimentConfig& cfg);

// Restores the full synthetic-experiment scale (d=100, m=100, 100 MC runs).
void apply_paper_scale(ExperimentConfig& cfg);

SimulationConfig to_simulation_config(const ExperimentConfig& cfg, std::uint64_t run_seed,
                                      std::uint64_t data_seed);

// Data pool for Monte-Carlo run r. Pools vary across run indices (the
// replicas sample the data distribution) but not across sweep axis values,
// so cross-value comparisons run on common random numbers.
std::uint64_t run_data_seed(std::uint64_t master_seed, std::size_t run_index);

RunRecord run_single(const ExperimentConfig& cfg, std::uint64_t run_seed,
                     std::uint64_t data_seed);

// Standalone variant: derives the data pool from the run seed itself.
RunRecord run_single(const ExperimentConfig& cfg, std::uint64_t run_seed);

enum class SweepAxis { lambda, p, sigma };
std::string to_string(SweepAxis axis);

struct SweepPoint {
  double value = 0.0;
  std::vector<double> mean_series;         // per-round mean ||x_bar||, rounds 1..K
  std::vector<double> stderr_series;
  std::vector<double> mean_loss_series;
  std::vector<double> stderr_loss_series;
  double steady_state_mean = 0.0;    // time average of mean_series over the final window
  double steady_state_stderr = 0.0;  // stderr across runs of per-run steady states
  std::vector<double> per_run_steady;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::lambda;
  int rounds = 0;
  int n_runs = 0;
  int steady_window = 0;  // last 20% of rounds (at least 1)
  std::vector<SweepPoint> points;
};

// n_monte_carlo runs per axis value with seeds derive(master_seed, axis_index,
// run_index), collision-checked across the whole matrix. Runs fan out to the
// OpenMP pool; results merge in (axis_index, run_index) order so the output
// is identical for any thread count.
SweepResult run_sweep(const ExperimentConfig& cfg, SweepAxis axis,
                      const std::vector<double>& values);

// Serial reference for the sweep fan-out, kept for testing and benchmarking:
// bitwise-identical results to run_sweep.
SweepResult run_sweep_serial(const ExperimentConfig& cfg, SweepAxis axis,
                             const std::vector<double>& values);

// One per-round series CSV per axis value plus one summary CSV; returns the
// paths written. Byte-stable for identical inputs.
std::vector<std::string> emit_csv(const SweepResult& result, const std::string& out_dir);

// RunRecord export: rows (run_id, round, iterate_norm, global_loss,
// n_clients, n_eligible, n_joined, n_left); events CSV alongside.
void write_runs_csv(const std::vector<RunRecord>& runs, const std::string& path);
void write_events_csv(const std::vector<RunRecord>& runs, const std::string& path);

// Derived-seed schedule for a sweep matrix; throws on collision.
std::vector<std::uint64_t> sweep_seeds(std::uint64_t master_seed, std::size_t n_values,
                                       std::size_t n_runs);

}  // namespace openfl
