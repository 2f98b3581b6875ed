#include "openfl/stability.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "openfl/rng.hpp"

namespace openfl {

SgdRadiusReport sgd_radius(double r, double mu, double lipschitz, double sigma) {
  if (mu <= 0.0) throw std::invalid_argument("sgd_radius: mu must be > 0");
  if (lipschitz < mu) throw std::invalid_argument("sgd_radius: requires mu <= L");
  if (r < 0.0 || sigma < 0.0) throw std::invalid_argument("sgd_radius: r and sigma must be >= 0");
  SgdRadiusReport rep;
  rep.r = r;
  rep.mu = mu;
  rep.lipschitz = lipschitz;
  rep.sigma = sigma;
  rep.kappa_effective = std::max(3.0, lipschitz / mu);
  rep.radius = r + std::sqrt(rep.kappa_effective) *
                       std::sqrt(2.0 * r * r + sigma * sigma / (lipschitz * lipschitz));
  return rep;
}

AdamConstants adam_constants(const AdamHyper& hy, double sigma, double mu,
                             double lipschitz, int d) {
  validate(hy);
  if (sigma < 0.0) throw std::invalid_argument("adam_constants: sigma must be >= 0");
  if (mu <= 0.0 || lipschitz < mu) throw std::invalid_argument("adam_constants: need 0 < mu <= L");
  if (d < 1) throw std::invalid_argument("adam_constants: d must be >= 1");

  const double eta = hy.eta;
  const double b1 = hy.beta1;
  const double b2 = hy.beta2;
  const double eps = hy.epsilon;
  const double s2 = sigma * sigma;
  const double dd = static_cast<double>(d);
  const double inv_sqrt_eps = 1.0 / std::sqrt(eps);
  const double inv_sqrt_eps_s2 = 1.0 / std::sqrt(eps + s2);
  const double kappa = lipschitz / mu;
  const double step_term = eta * eta * dd / ((1.0 - b2) * (1.0 - b1 * b1 / b2));

  AdamConstants k;
  k.c1 = 1.0 - 2.0 * mu * eta * inv_sqrt_eps_s2;
  k.c2 = 2.0 * mu * eta * eta * inv_sqrt_eps_s2 * s2 * dd * inv_sqrt_eps *
             ((1.0 + b1) / (1.0 - b1)) +
         (lipschitz / 2.0 + lipschitz * b1 / (1.0 - b1)) * step_term;
  k.c3 = (eta * b1 / (1.0 - b1)) * s2 * inv_sqrt_eps -
         (eta * s2 / (1.0 - b1)) * dd * inv_sqrt_eps_s2;
  k.c4 = (eta * b1 / (1.0 - b1)) * s2 * inv_sqrt_eps +
         (eta * s2 / (1.0 - b1)) * dd * inv_sqrt_eps;
  k.b = eta * s2 / (1.0 - b1);
  k.c = eta * b1 / (1.0 - b1);

  if (k.c1 <= 0.0) {
    k.failure_reason = "C1 <= 0 (eta too large relative to sqrt(epsilon + sigma^2))";
    return k;
  }
  if (k.c1 >= 1.0) {
    k.failure_reason = "C1 >= 1";
    return k;
  }
  const double one_minus_kc1 = 1.0 - kappa * k.c1;
  if (one_minus_kc1 <= 0.0) {
    k.failure_reason = "1 - kappa*C1 <= 0";
    return k;
  }
  k.c5 = (1.0 + kappa * k.c1) / one_minus_kc1;
  if (mu - lipschitz * k.c1 <= 0.0) {
    k.failure_reason = "mu - L*C1 <= 0";
    return k;
  }
  if (k.c2 + k.c3 + k.c1 * k.c4 < 0.0) {
    k.failure_reason = "negative radicand: C2 + C3 + C1*C4 < 0";
    return k;
  }
  k.valid = true;
  return k;
}

double adam_radius(const AdamConstants& k, double r, double mu, double lipschitz) {
  if (!k.valid)
    throw invalid_regime_error(k.failure_reason.empty() ? "invalid Adam constants"
                                                        : k.failure_reason);
  if (r < 0.0) throw std::invalid_argument("adam_radius: r must be >= 0");
  const double kappa = lipschitz / mu;
  const double kc1 = kappa * k.c1;
  const double one_minus = 1.0 - kc1;
  const double radicand = (1.0 + 3.0 * kc1) / (one_minus * one_minus) * r * r +
                          2.0 * (k.c2 + k.c3 + k.c1 * k.c4) / (mu - lipschitz * k.c1);
  if (radicand < 0.0) throw invalid_regime_error("negative radicand in Adam radius");
  return k.c5 * r + std::sqrt(radicand);
}

LyapunovRecord lyapunov_value(const ObjectiveSpec& spec, const Vec& x_k,
                              const Vec& x_kminus1, const AdamState& state,
                              double b, double c, double f_star, int k) {
  check_same_dim(x_k, x_kminus1, "lyapunov_value");
  check_same_dim(x_k, state.x, "lyapunov_value");
  const double eps = state.hyper.epsilon;

  LyapunovRecord rec;
  rec.k = k;
  rec.suboptimality = loss(spec, x_k) - f_star;

  double vsum = 0.0;
  for (double vh : state.moments.v_hat) vsum += 1.0 / std::sqrt(eps + vh);
  rec.vhat_sum_term = b * vsum;

  const Vec g_prev = gradient(spec, x_kminus1);
  double cross = 0.0;
  for (std::size_t j = 0; j < x_k.size(); ++j)
    cross += g_prev[j] * state.moments.h[j] / std::sqrt(eps + state.moments.v_hat[j]);
  rec.cross_term = c * cross;

  rec.value = rec.suboptimality + rec.vhat_sum_term - rec.cross_term;
  return rec;
}

namespace {

// Stochastic gradient for the contraction check: full gradient plus isotropic
// noise, optionally norm-clipped. Returns whether the clip fired.
bool draw_clipped_gradient(const ObjectiveSpec& spec, const Vec& x, double noise_std,
                           double sigma_bound, Rng& rng, Vec& out) {
  out = gradient(spec, x);
  if (noise_std > 0.0)
    for (double& gj : out) gj += noise_std * rng.normal();
  if (sigma_bound > 0.0) return clip_to_norm(out, sigma_bound);
  return false;
}

Vec random_unit_vector(int d, Rng& rng) {
  Vec u(d);
  double n = 0.0;
  do {
    for (int j = 0; j < d; ++j) u[j] = rng.normal();
    n = norm(u);
  } while (n == 0.0);
  for (int j = 0; j < d; ++j) u[j] /= n;
  return u;
}

void finalize_report(StabilityCheckReport& rep) {
  double max_mean = 0.0;
  double max_se = 0.0;
  for (std::size_t i = 0; i < rep.sample_mean.size(); ++i) {
    max_mean = std::max(max_mean, rep.sample_mean[i]);
    max_se = std::max(max_se, rep.sample_stderr[i]);
  }
  rep.n_tested = static_cast<int>(rep.sample_mean.size());
  rep.max_conditional_second_moment = max_mean;
  rep.confidence_margin = 3.0 * max_se;
  // No tested states means no evidence either way; report as a failure.
  rep.pass = rep.n_tested > 0 &&
             max_mean <= rep.radius_tested * rep.radius_tested + rep.confidence_margin;
}

}  // namespace

ContractionReport lyapunov_contraction_check(const ObjectiveSpec& spec,
                                             const AdamHyper& hy,
                                             const AdamConstants& constants,
                                             double sigma_bound, double noise_std,
                                             const Vec& x0, int K, int n_mc,
                                             std::uint64_t seed) {
  if (!constants.valid)
    throw invalid_regime_error(constants.failure_reason.empty()
                                   ? "invalid Adam constants"
                                   : constants.failure_reason);
  if (K < 1 || n_mc < 1)
    throw std::invalid_argument("lyapunov_contraction_check: K and n_mc must be >= 1");
  const double f_star = spec.optimum_value;
  const bool deterministic = noise_std == 0.0;
  const int draws = deterministic ? 1 : n_mc;

  ContractionReport rep;
  rep.constants = constants;
  rep.steps.reserve(K);
  rep.max_violation = -std::numeric_limits<double>::infinity();

  AdamState state = make_adam_state(x0, hy);
  Vec x_prev = x0;
  Rng advance_rng(derive_seed(seed, {stream::lyapunov_advance}));

  std::int64_t clip_count = 0;
  std::int64_t draw_count = 0;
  bool pass = true;
  std::vector<double> lvals(draws);
  std::vector<char> clipped(draws);

  for (int k = 0; k < K; ++k) {
    const LyapunovRecord now = lyapunov_value(spec, state.x, x_prev, state,
                                              constants.b, constants.c, f_star, k);
    const Vec g_mean = gradient(spec, state.x);

    // E[L^(k+1) | state^(k)]: resample only the gradient noise, state frozen.
    // Per-draw results land in index order and are accumulated serially so the
    // estimate is bitwise independent of the thread count.
#pragma omp parallel for schedule(static)
    for (int j = 0; j < draws; ++j) {
      Rng rng(derive_seed(seed, {stream::lyapunov, static_cast<std::uint64_t>(k),
                                 static_cast<std::uint64_t>(j)}));
      Vec g;
      if (deterministic) {
        g = g_mean;
        clipped[j] = 0;
      } else {
        clipped[j] = draw_clipped_gradient(spec, state.x, noise_std, sigma_bound, rng, g) ? 1 : 0;
      }
      AdamState next = state;
      adam_step_inplace(next, g);
      const LyapunovRecord rec = lyapunov_value(spec, next.x, state.x, next,
                                                constants.b, constants.c, f_star, k + 1);
      lvals[j] = rec.value;
    }
    double sum = 0.0, sum_sq = 0.0;
    for (int j = 0; j < draws; ++j) {
      sum += lvals[j];
      sum_sq += lvals[j] * lvals[j];
      clip_count += clipped[j];
    }
    draw_count += draws;

    ContractionStep step;
    step.k = k;
    step.lyapunov = now.value;
    step.conditional_mean = sum / draws;
    step.bound = constants.c1 * now.value + constants.c2;
    if (draws > 1) {
      const double var = std::max(0.0, (sum_sq - sum * sum / draws) / (draws - 1));
      step.stderr_of_mean = std::sqrt(var / draws);
    }
    const double violation = step.conditional_mean - step.bound - 3.0 * step.stderr_of_mean;
    rep.max_violation = std::max(rep.max_violation, violation);
    if (violation > 0.0 && pass) {
      pass = false;
      rep.first_violation_k = k;
    }
    rep.steps.push_back(step);

    // Advance the trajectory with a fresh draw from the dedicated stream.
    Vec g_adv;
    if (deterministic) {
      g_adv = g_mean;
    } else {
      clip_count += draw_clipped_gradient(spec, state.x, noise_std, sigma_bound, advance_rng, g_adv) ? 1 : 0;
      ++draw_count;
    }
    x_prev = state.x;
    adam_step_inplace(state, g_adv);
  }

  rep.pass = pass;
  rep.clip_rate = draw_count > 0 ? static_cast<double>(clip_count) / static_cast<double>(draw_count) : 0.0;
  rep.clean = rep.pass && rep.clip_rate < 0.01;
  return rep;
}

StabilityCheckReport empirical_stability_check_sgd(const ObjectiveSpec& spec, double eta,
                                                   double radius, int n_boundary, int n_mc,
                                                   int batch_size, std::uint64_t seed,
                                                   double sphere_fraction) {
  if (radius <= 0.0) throw std::invalid_argument("empirical_stability_check_sgd: radius must be > 0");
  if (n_boundary < 1 || n_mc < 1)
    throw std::invalid_argument("empirical_stability_check_sgd: sample counts must be >= 1");
  sphere_fraction = std::min(1.0, std::max(0.5, sphere_fraction));
  const int d = spec.dim();
  const int n_sphere = static_cast<int>(std::ceil(sphere_fraction * n_boundary));

  StabilityCheckReport rep;
  rep.radius_tested = radius;
  rep.n_boundary_samples = n_boundary;
  rep.n_mc_per_sample = n_mc;
  rep.sample_norm.resize(n_boundary);
  rep.sample_mean.resize(n_boundary);
  rep.sample_stderr.resize(n_boundary);
  std::vector<double> grad_norms(n_boundary, 0.0);

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n_boundary; ++i) {
    Rng rng(derive_seed(seed, {stream::stability, static_cast<std::uint64_t>(i)}));
    Vec x = random_unit_vector(d, rng);
    const double rad =
        i < n_sphere ? radius
                     : radius * std::pow(rng.uniform01(), 1.0 / static_cast<double>(d));
    for (double& xj : x) xj *= rad;

    double sum = 0.0, sum_sq = 0.0;
    for (int j = 0; j < n_mc; ++j) {
      Vec g = stochastic_gradient(spec, x, batch_size, rng).gradient;
      grad_norms[i] = std::max(grad_norms[i], norm(g));
      Vec next = x;
      axpy(-eta, g, next);
      const double s = squared_norm(next);
      sum += s;
      sum_sq += s * s;
    }
    rep.sample_norm[i] = norm(x);
    rep.sample_mean[i] = sum / n_mc;
    const double var = n_mc > 1 ? std::max(0.0, (sum_sq - sum * sum / n_mc) / (n_mc - 1)) : 0.0;
    rep.sample_stderr[i] = std::sqrt(var / n_mc);
  }

  for (double gn : grad_norms)
    rep.max_observed_gradient_norm = std::max(rep.max_observed_gradient_norm, gn);
  finalize_report(rep);
  return rep;
}

StabilityCheckReport empirical_stability_check_adam(const ObjectiveSpec& spec,
                                                    const AdamHyper& hy, double sigma_clip,
                                                    double radius, int n_boundary, int n_mc,
                                                    int k_burn_in, int batch_size,
                                                    std::uint64_t seed) {
  if (radius <= 0.0) throw std::invalid_argument("empirical_stability_check_adam: radius must be > 0");
  if (n_boundary < 1 || n_mc < 1 || k_burn_in < 0)
    throw std::invalid_argument("empirical_stability_check_adam: bad sample counts");
  validate(hy);
  const int d = spec.dim();

  StabilityCheckReport rep;
  rep.radius_tested = radius;
  rep.n_boundary_samples = n_boundary;
  rep.n_mc_per_sample = n_mc;

  std::vector<double> norms(n_boundary), means(n_boundary), errs(n_boundary);
  std::vector<double> grad_norms(n_boundary, 0.0);
  std::vector<char> tested(n_boundary, 0);

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n_boundary; ++i) {
    Rng rng(derive_seed(seed, {stream::stability, static_cast<std::uint64_t>(i)}));
    AdamState state = make_adam_state(zeros(d), hy);

    auto draw = [&](const Vec& at) {
      Vec g = stochastic_gradient(spec, at, batch_size, rng).gradient;
      grad_norms[i] = std::max(grad_norms[i], norm(g));
      if (sigma_clip > 0.0) clip_to_norm(g, sigma_clip);
      return g;
    };

    for (int k = 0; k < k_burn_in; ++k) adam_step_inplace(state, draw(state.x));

    // Definition 1 conditions on ||x|| <= R; states outside do not satisfy
    // the conditioning event.
    if (squared_norm(state.x) > radius * radius) continue;

    double sum = 0.0, sum_sq = 0.0;
    for (int j = 0; j < n_mc; ++j) {
      AdamState next = state;
      adam_step_inplace(next, draw(state.x));
      const double s = squared_norm(next.x);
      sum += s;
      sum_sq += s * s;
    }
    norms[i] = norm(state.x);
    means[i] = sum / n_mc;
    const double var = n_mc > 1 ? std::max(0.0, (sum_sq - sum * sum / n_mc) / (n_mc - 1)) : 0.0;
    errs[i] = std::sqrt(var / n_mc);
    tested[i] = 1;
  }

  for (int i = 0; i < n_boundary; ++i) {
    rep.max_observed_gradient_norm = std::max(rep.max_observed_gradient_norm, grad_norms[i]);
    if (!tested[i]) continue;
    rep.sample_norm.push_back(norms[i]);
    rep.sample_mean.push_back(means[i]);
    rep.sample_stderr.push_back(errs[i]);
  }
  finalize_report(rep);
  return rep;
}

bool learning_rate_convexity_check(const Vec& x, const Vec& delta, double lipschitz,
                                   double radius, int n_eta) {
  if (lipschitz <= 0.0 || n_eta < 1)
    throw std::invalid_argument("learning_rate_convexity_check: bad arguments");
  check_same_dim(x, delta, "learning_rate_convexity_check");
  if (norm(x) > radius)
    throw std::invalid_argument("learning_rate_convexity_check: precondition ||x|| <= R violated");
  {
    Vec endpoint = x;
    axpy(-1.0 / lipschitz, delta, endpoint);
    if (norm(endpoint) > radius)
      throw std::invalid_argument(
          "learning_rate_convexity_check: precondition ||x - delta/L|| <= R violated");
  }
  for (int i = 1; i <= n_eta; ++i) {
    const double eta = (static_cast<double>(i) / n_eta) / lipschitz;
    Vec y = x;
    axpy(-eta, delta, y);
    if (norm(y) > radius) return false;
  }
  return true;
}

namespace {
std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

std::string to_key_value(const SgdRadiusReport& r) {
  std::ostringstream os;
  os << "optimizer=sgd\n"
     << "r=" << fmt(r.r) << "\nmu=" << fmt(r.mu) << "\nL=" << fmt(r.lipschitz)
     << "\nsigma=" << fmt(r.sigma) << "\nkappa_effective=" << fmt(r.kappa_effective)
     << "\nradius=" << fmt(r.radius) << "\n";
  return os.str();
}

std::string to_key_value(const AdamConstants& k) {
  std::ostringstream os;
  os << "C1=" << fmt(k.c1) << "\nC2=" << fmt(k.c2) << "\nC3=" << fmt(k.c3)
     << "\nC4=" << fmt(k.c4) << "\nC5=" << fmt(k.c5) << "\nb=" << fmt(k.b)
     << "\nc=" << fmt(k.c) << "\nvalid=" << (k.valid ? "true" : "false") << "\n";
  if (!k.valid) os << "failure_reason=" << k.failure_reason << "\n";
  return os.str();
}

std::string to_key_value(const StabilityCheckReport& r) {
  std::ostringstream os;
  os << "radius_tested=" << fmt(r.radius_tested)
     << "\nn_boundary_samples=" << r.n_boundary_samples
     << "\nn_mc_per_sample=" << r.n_mc_per_sample << "\nn_tested=" << r.n_tested
     << "\nmax_conditional_second_moment=" << fmt(r.max_conditional_second_moment)
     << "\nconfidence_margin=" << fmt(r.confidence_margin)
     << "\nmax_observed_gradient_norm=" << fmt(r.max_observed_gradient_norm)
     << "\npass=" << (r.pass ? "true" : "false") << "\n";
  return os.str();
}

std::string to_key_value(const ContractionReport& r) {
  std::ostringstream os;
  os << "pass=" << (r.pass ? "true" : "false")
     << "\nfirst_violation_k=" << r.first_violation_k
     << "\nmax_violation=" << fmt(r.max_violation) << "\nclip_rate=" << fmt(r.clip_rate)
     << "\nclean=" << (r.clean ? "true" : "false") << "\nC1=" << fmt(r.constants.c1)
     << "\nC2=" << fmt(r.constants.c2) << "\n";
  return os.str();
}

void write_samples_csv(const StabilityCheckReport& r, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("write_samples_csv: cannot open " + path);
  std::fprintf(f, "sample,state_norm,conditional_second_moment,stderr\n");
  for (std::size_t i = 0; i < r.sample_mean.size(); ++i)
    std::fprintf(f, "%zu,%.17g,%.17g,%.17g\n", i, r.sample_norm[i], r.sample_mean[i],
                 r.sample_stderr[i]);
  std::fclose(f);
}

}  // namespace openfl
