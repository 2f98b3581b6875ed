// Compares the OpenMP-parallel Monte-Carlo kernels against the serial
// reference paths: identical results required, wall time reported.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <vector>

#include "openfl/cli.hpp"
#include "openfl/harness.hpp"
#include "openfl/stability.hpp"

using namespace openfl;

namespace {

template <typename F>
double time_it(F&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count();
}

bool same_series(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace

int main() {
  apply_thread_cap();
  const int max_threads = omp_get_max_threads();
  std::printf("threads available: %d\n", max_threads);

  // 1) Definition-1 stability kernel on a quadratic.
  {
    const ObjectiveSpec spec = make_quadratic(1.0, Vec{1.0, 0.0, 0.0, 0.0, 0.0}, 1.0);
    const double R = sgd_radius(1.0, 1.0, 1.0, 1.0).radius;
    StabilityCheckReport serial, parallel;

    omp_set_num_threads(1);
    const double t_serial = time_it([&] {
      serial = empirical_stability_check_sgd(spec, 1.0, R, 256, 4000, 0, 42, 1.0);
    });
    omp_set_num_threads(max_threads);
    const double t_parallel = time_it([&] {
      parallel = empirical_stability_check_sgd(spec, 1.0, R, 256, 4000, 0, 42, 1.0);
    });

    const bool same = same_series(serial.sample_mean, parallel.sample_mean) &&
                      same_series(serial.sample_stderr, parallel.sample_stderr);
    std::printf("stability-check: serial %.3fs, parallel %.3fs, speedup %.2fx, identical=%s\n",
                t_serial, t_parallel, t_serial / t_parallel, same ? "yes" : "NO");
    if (!same) return 1;
  }

  // 2) Monte-Carlo sweep fan-out.
  {
    ExperimentConfig cfg;
    cfg.d = 20;
    cfg.m = 50;
    cfg.rounds = 100;
    cfg.n_monte_carlo = 8;
    cfg.optimizer = OptimizerKind::local_sgd;
    cfg.eta = 1.0;
    cfg.master_seed = 7;
    const std::vector<double> values{0.01, 0.1};

    SweepResult serial, parallel;
    const double t_serial = time_it([&] { serial = run_sweep_serial(cfg, SweepAxis::lambda, values); });
    omp_set_num_threads(max_threads);
    const double t_parallel = time_it([&] { parallel = run_sweep(cfg, SweepAxis::lambda, values); });

    bool same = serial.points.size() == parallel.points.size();
    for (std::size_t i = 0; same && i < serial.points.size(); ++i)
      same = same_series(serial.points[i].mean_series, parallel.points[i].mean_series) &&
             serial.points[i].steady_state_mean == parallel.points[i].steady_state_mean;
    std::printf("sweep: serial %.3fs, parallel %.3fs, speedup %.2fx, identical=%s\n", t_serial,
                t_parallel, t_serial / t_parallel, same ? "yes" : "NO");
    if (!same) return 1;
  }

  return 0;
}
