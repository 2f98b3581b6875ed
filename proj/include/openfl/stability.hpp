#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "openfl/objective.hpp"
#include "openfl/optimizer.hpp"
#include "openfl/vec.hpp"

namespace openfl {

// Raised when a closed-form radius is requested in a regime the theory does
// not certify (e.g. 1 - kappa*C1 <= 0 or a negative radicand).
class invalid_regime_error : public std::runtime_error {
 public:
  explicit invalid_regime_error(const std::string& reason)
      : std::runtime_error(reason), reason_(reason) {}
  const std::string& reason() const { return reason_; }

 private:
  std::string reason_;
};

struct SgdRadiusReport {
  double r = 0.0;
  double mu = 0.0;
  double lipschitz = 0.0;
  double sigma = 0.0;
  double kappa_effective = 3.0;  // max(3, L/mu)
  double radius = 0.0;           // r + sqrt(kappa_effective) * sqrt(2 r^2 + sigma^2 / L^2)
};

SgdRadiusReport sgd_radius(double r, double mu, double lipschitz, double sigma);

struct AdamConstants {
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  double c4 = 0.0;
  double c5 = 0.0;
  double b = 0.0;  // eta sigma^2 / (1 - beta1)
  double c = 0.0;  // eta beta1 / (1 - beta1)
  bool valid = false;
  std::string failure_reason;  // set when !valid
};

// Closed-form constants C1..C5 for the Adam stability radius. Never throws on
// an invalid regime; the regime is reported through the valid flag. Throws
// only when C2 is undefined (beta1^2 >= beta2).
AdamConstants adam_constants(const AdamHyper& hy, double sigma, double mu,
                             double lipschitz, int d);

// R = C5 r + sqrt((1 + 3 kappa C1) / (1 - kappa C1)^2 * r^2
//              + 2 (C2 + C3 + C1 C4) / (mu - L C1)).
// Throws invalid_regime_error when constants are invalid or the radicand is
// negative.
double adam_radius(const AdamConstants& k, double r, double mu, double lipschitz);

struct LyapunovRecord {
  int k = 0;
  double value = 0.0;
  double suboptimality = 0.0;  // f(x_k) - f_star
  double vhat_sum_term = 0.0;  // b * sum_m (eps + vhat_m)^{-1/2}
  double cross_term = 0.0;     // c * <grad f(x_{k-1}), (eps I + Vhat)^{-1/2} h>
};

// value = suboptimality + vhat_sum_term - cross_term, exactly as decomposed.
// For k = 0 pass x_kminus1 = x_k; h^(0) = 0 makes the cross term vanish.
LyapunovRecord lyapunov_value(const ObjectiveSpec& spec, const Vec& x_k,
                              const Vec& x_kminus1, const AdamState& state,
                              double b, double c, double f_star, int k = 0);

struct ContractionStep {
  int k = 0;
  double lyapunov = 0.0;          // L^(k), exact given the state
  double conditional_mean = 0.0;  // MC estimate of E[L^(k+1) | state^(k)]
  double bound = 0.0;             // C1 L^(k) + C2
  double stderr_of_mean = 0.0;
};

struct ContractionReport {
  bool pass = false;
  int first_violation_k = -1;
  double max_violation = 0.0;  // max_k (mean - bound - 3 SE); <= 0 when passing
  double clip_rate = 0.0;      // fraction of gradient draws that were clipped
  bool clean = false;          // pass && clip_rate < 1%
  AdamConstants constants;
  std::vector<ContractionStep> steps;
};

// Verifies Lyapunov contraction E[L^(k+1) | state^(k)] <= C1 L^(k) + C2 along
// one trajectory of K steps. At each step the conditional expectation is
// estimated by resampling the gradient noise n_mc times with the state
// frozen; the trajectory then advances with a fresh draw. Stochastic
// gradients are full gradients plus isotropic Gaussian noise with
// per-coordinate std noise_std, norm-clipped to sigma_bound when
// sigma_bound > 0. noise_std == 0 makes the check exact and deterministic.
ContractionReport lyapunov_contraction_check(const ObjectiveSpec& spec,
                                             const AdamHyper& hy,
                                             const AdamConstants& constants,
                                             double sigma_bound, double noise_std,
                                             const Vec& x0, int K, int n_mc,
                                             std::uint64_t seed);

struct StabilityCheckReport {
  double radius_tested = 0.0;
  int n_boundary_samples = 0;
  int n_mc_per_sample = 0;
  int n_tested = 0;  // states satisfying ||x|| <= R that entered the check
  double max_conditional_second_moment = 0.0;
  double confidence_margin = 0.0;  // 3 * max standard error
  bool pass = false;
  // Empirical record of the gradient-norm bound (pre-clip) seen by the check.
  double max_observed_gradient_norm = 0.0;
  std::vector<double> sample_norm;
  std::vector<double> sample_mean;
  std::vector<double> sample_stderr;
};

// Definition-1 check for SGD: samples n_boundary states with ||x|| <= R
// (a sphere_fraction of them exactly on the sphere, the binding case) and
// verifies E[||x^(k+1)||^2 | x^(k)] <= R^2 + 3 SE by Monte Carlo.
// batch_size follows the stochastic_gradient convention (0 = synthetic
// noise). Parallel across boundary samples; per-sample RNG streams make the
// result independent of thread count.
StabilityCheckReport empirical_stability_check_sgd(const ObjectiveSpec& spec, double eta,
                                                   double radius, int n_boundary, int n_mc,
                                                   int batch_size, std::uint64_t seed,
                                                   double sphere_fraction = 0.5);

// Definition-1 check for Adam: boundary states are full optimizer states
// reached naturally by running the stepper for k_burn_in steps; trajectories
// ending with ||x|| > R do not satisfy the conditioning event and are
// excluded (counted out of n_tested). Gradients are clipped to sigma_clip
// when sigma_clip > 0.
StabilityCheckReport empirical_stability_check_adam(const ObjectiveSpec& spec,
                                                    const AdamHyper& hy, double sigma_clip,
                                                    double radius, int n_boundary, int n_mc,
                                                    int k_burn_in, int batch_size,
                                                    std::uint64_t seed);

// Proof-step invariant behind the eta <= 1/L reduction: with ||x|| <= R and
// ||x - delta/L|| <= R, every eta in (0, 1/L] keeps x - eta delta inside the
// ball. Checks an n_eta grid; throws on precondition violation.
bool learning_rate_convexity_check(const Vec& x, const Vec& delta, double lipschitz,
                                   double radius, int n_eta);

// key=value serialization for reports (CLI output contract).
std::string to_key_value(const SgdRadiusReport& r);
std::string to_key_value(const AdamConstants& k);
std::string to_key_value(const StabilityCheckReport& r);
std::string to_key_value(const ContractionReport& r);
void write_samples_csv(const StabilityCheckReport& r, const std::string& path);

}  // namespace openfl
