#include "openfl/objective.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace openfl {

double log1p_exp(double z) {
  // log(1 + e^z) = max(z, 0) + log1p(e^{-|z|})
  return std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z)));
}

double sigmoid(double t) {
  if (t >= 0.0) {
    return 1.0 / (1.0 + std::exp(-t));
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double logistic_loss(const Dataset& data, double lambda, const Vec& x) {
  const std::size_t m = data.size();
  double acc = 0.0;
  for (const auto& s : data.samples) {
    check_same_dim(s.features, x, "logistic_loss");
    acc += log1p_exp(-s.label * dot(x, s.features));
  }
  return 0.5 * lambda * squared_norm(x) + acc / static_cast<double>(m);
}

Vec logistic_batch_gradient(const Dataset& data, double lambda, const Vec& x,
                            const std::vector<int>& indices) {
  const std::size_t d = x.size();
  Vec g(d, 0.0);
  for (int idx : indices) {
    const auto& s = data.samples.at(static_cast<std::size_t>(idx));
    check_same_dim(s.features, x, "logistic_batch_gradient");
    const double w = -s.label * sigmoid(-s.label * dot(x, s.features));
    axpy(w, s.features, g);
  }
  const double inv = 1.0 / static_cast<double>(indices.size());
  for (std::size_t j = 0; j < d; ++j) g[j] = lambda * x[j] + inv * g[j];
  return g;
}

Vec logistic_gradient(const Dataset& data, double lambda, const Vec& x) {
  std::vector<int> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return logistic_batch_gradient(data, lambda, x, all);
}

double smoothness_upper_bound(const Dataset& data, double lambda) {
  double acc = 0.0;
  for (const auto& s : data.samples) acc += squared_norm(s.features);
  return lambda + acc / (4.0 * static_cast<double>(data.size()));
}

std::vector<int> sample_batch(int m, int batch_size, Rng& rng) {
  if (batch_size < 1 || batch_size > m)
    throw std::invalid_argument("sample_batch: batch_size out of range");
  if (batch_size == m) {
    std::vector<int> all(m);
    for (int i = 0; i < m; ++i) all[i] = i;
    return all;
  }
  // Floyd's subset sampling: uniform over all (m choose batch_size) subsets.
  std::vector<int> picked;
  picked.reserve(batch_size);
  for (int j = m - batch_size; j < m; ++j) {
    const int t = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(j) + 1));
    if (std::find(picked.begin(), picked.end(), t) != picked.end())
      picked.push_back(j);
    else
      picked.push_back(t);
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

double loss(const ObjectiveSpec& spec, const Vec& x) {
  if (spec.kind == ObjectiveKind::quadratic) {
    check_same_dim(spec.x_star, x, "loss");
    double ss = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double dlt = x[j] - spec.x_star[j];
      ss += dlt * dlt;
    }
    return 0.5 * spec.mu * ss;
  }
  return logistic_loss(spec.dataset, spec.lambda, x);
}

Vec gradient(const ObjectiveSpec& spec, const Vec& x) {
  if (spec.kind == ObjectiveKind::quadratic) {
    check_same_dim(spec.x_star, x, "gradient");
    Vec g(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) g[j] = spec.mu * (x[j] - spec.x_star[j]);
    return g;
  }
  return logistic_gradient(spec.dataset, spec.lambda, x);
}

StochasticGradientSample stochastic_gradient(const ObjectiveSpec& spec, const Vec& x,
                                             int batch_size, Rng& rng) {
  StochasticGradientSample out;
  if (batch_size == 0) {
    if (spec.kind != ObjectiveKind::quadratic)
      throw std::invalid_argument(
          "stochastic_gradient: synthetic-noise mode (batch_size = 0) requires a quadratic objective");
    out.gradient = gradient(spec, x);
    if (spec.noise_sigma > 0.0) {
      const double coord_std = spec.noise_sigma / std::sqrt(static_cast<double>(x.size()));
      for (double& gj : out.gradient) gj += coord_std * rng.normal();
    }
    return out;
  }
  if (spec.kind != ObjectiveKind::regularized_logistic)
    throw std::invalid_argument("stochastic_gradient: minibatch mode requires a logistic objective");
  const int m = static_cast<int>(spec.dataset.size());
  if (batch_size < 0 || batch_size > m)
    throw std::invalid_argument("stochastic_gradient: batch_size exceeds dataset size");
  out.batch_indices = sample_batch(m, batch_size, rng);
  out.gradient = logistic_batch_gradient(spec.dataset, spec.lambda, x, out.batch_indices);
  return out;
}

Vec minimize_full_batch_gd(const ObjectiveSpec& spec, double tol, std::int64_t max_iters) {
  const int d = spec.dim();
  const double eta = 1.0 / spec.lipschitz;
  Vec x(d, 0.0);
  for (std::int64_t it = 0; it < max_iters; ++it) {
    Vec g = gradient(spec, x);
    if (norm(g) <= tol) return x;
    axpy(-eta, g, x);
  }
  throw std::runtime_error("minimize_full_batch_gd: did not reach tolerance");
}

ObjectiveSpec certify_constants(Dataset dataset, double lambda, ObjectiveKind kind) {
  if (kind != ObjectiveKind::regularized_logistic)
    throw std::invalid_argument("certify_constants: quadratic objectives are built with make_quadratic");
  if (dataset.samples.empty()) throw std::invalid_argument("certify_constants: empty dataset");
  if (lambda <= 0.0) throw std::invalid_argument("certify_constants: lambda must be > 0");

  ObjectiveSpec spec;
  spec.kind = ObjectiveKind::regularized_logistic;
  spec.dataset = std::move(dataset);
  spec.lambda = lambda;
  spec.mu = lambda;
  spec.lipschitz = smoothness_upper_bound(spec.dataset, lambda);
  spec.kappa = spec.lipschitz / spec.mu;
  spec.x_star = minimize_full_batch_gd(spec, 1e-10);
  spec.optimum_radius_r = norm(spec.x_star);
  spec.optimum_value = loss(spec, spec.x_star);
  return spec;
}

ObjectiveSpec make_quadratic(double mu, Vec x_star, double noise_sigma) {
  if (mu <= 0.0) throw std::invalid_argument("make_quadratic: mu must be > 0");
  if (noise_sigma < 0.0) throw std::invalid_argument("make_quadratic: noise_sigma must be >= 0");
  ObjectiveSpec spec;
  spec.kind = ObjectiveKind::quadratic;
  spec.mu = mu;
  spec.lipschitz = mu;
  spec.kappa = 1.0;
  spec.noise_sigma = noise_sigma;
  spec.optimum_radius_r = norm(x_star);
  spec.x_star = std::move(x_star);
  spec.optimum_value = 0.0;
  return spec;
}

bool clip_to_norm(Vec& g, double max_norm) {
  const double n = norm(g);
  if (n <= max_norm || n == 0.0) return false;
  const double scale = max_norm / n;
  for (double& gj : g) gj *= scale;
  return true;
}

}  // namespace openfl
