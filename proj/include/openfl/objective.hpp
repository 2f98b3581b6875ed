#pragma once

#include <cstdint>
#include <vector>

#include "openfl/dataset.hpp"
#include "openfl/rng.hpp"
#include "openfl/vec.hpp"

namespace openfl {

enum class ObjectiveKind { regularized_logistic, quadratic };

// A local objective together with its certified curvature constants:
//   regularized_logistic: f(x) = (lambda/2)||x||^2
//                                + (1/m) sum_j log(1 + exp(-y_j x.xi_j))
//   quadratic:            f(x) = (mu/2)||x - x_star||^2
struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::regularized_logistic;
  Dataset dataset;      // logistic only
  double lambda = 0.0;  // logistic only

  double mu = 0.0;
  double lipschitz = 0.0;
  double kappa = 1.0;
  double optimum_radius_r = 0.0;  // ||x_star||
  double noise_sigma = 0.0;       // synthetic-noise mode (quadratic)

  Vec x_star;                  // certified minimizer
  double optimum_value = 0.0;  // f(x_star)

  int dim() const {
    return kind == ObjectiveKind::quadratic ? static_cast<int>(x_star.size())
                                            : dataset.dim();
  }
};

struct StochasticGradientSample {
  Vec gradient;
  std::vector<int> batch_indices;  // empty in synthetic-noise mode
};

// Numerically stable primitives.
double log1p_exp(double z);  // log(1 + e^z) without overflow
double sigmoid(double t);

// Kernels on raw (dataset, lambda) pairs; the simulator uses these directly
// so that client shards are not copied into per-client specs.
double logistic_loss(const Dataset& data, double lambda, const Vec& x);
Vec logistic_gradient(const Dataset& data, double lambda, const Vec& x);
Vec logistic_batch_gradient(const Dataset& data, double lambda, const Vec& x,
                            const std::vector<int>& indices);
double smoothness_upper_bound(const Dataset& data, double lambda);

// Uniform batch of `batch_size` distinct indices out of [0, m).
std::vector<int> sample_batch(int m, int batch_size, Rng& rng);

double loss(const ObjectiveSpec& spec, const Vec& x);
Vec gradient(const ObjectiveSpec& spec, const Vec& x);

// batch_size in [1, m] draws a uniform minibatch (batch_size == m reproduces
// the full gradient bit-for-bit). batch_size == 0 is the synthetic-noise mode
// for quadratic objectives: full gradient plus isotropic Gaussian noise with
// per-coordinate std sigma/sqrt(d), so E||noise||^2 = sigma^2 exactly.
StochasticGradientSample stochastic_gradient(const ObjectiveSpec& spec, const Vec& x,
                                             int batch_size, Rng& rng);

// Certifies (mu, L, kappa, r) for a regularized logistic objective:
// mu = lambda, L = lambda + (1/(4m)) sum_j ||xi_j||^2, and r = ||x_star||
// with x_star found by full-batch gradient descent to gradient-norm
// tolerance 1e-10.
ObjectiveSpec certify_constants(Dataset dataset, double lambda,
                                ObjectiveKind kind = ObjectiveKind::regularized_logistic);

ObjectiveSpec make_quadratic(double mu, Vec x_star, double noise_sigma = 0.0);

// Full-batch gradient descent with step 1/L until ||grad|| <= tol.
Vec minimize_full_batch_gd(const ObjectiveSpec& spec, double tol, std::int64_t max_iters = 5000000);

// Norm-clips g to max_norm in place; returns true when the clip was active.
bool clip_to_norm(Vec& g, double max_norm);

}  // namespace openfl
