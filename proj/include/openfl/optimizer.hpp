#pragma once

#include <cmath>
#include <stdexcept>

#include "openfl/objective.hpp"
#include "openfl/vec.hpp"

namespace openfl {

struct SgdState {
  Vec x;
  double eta = 0.0;
};

inline SgdState make_sgd_state(Vec x0, double eta) {
  if (eta <= 0.0) throw std::invalid_argument("make_sgd_state: eta must be > 0");
  check_finite(x0, "make_sgd_state");
  return SgdState{std::move(x0), eta};
}

// Validated variant: enforces eta <= 1/L for the supplied objective.
inline SgdState make_sgd_state(Vec x0, double eta, const ObjectiveSpec& spec) {
  if (eta <= 0.0 || eta > 1.0 / spec.lipschitz)
    throw std::invalid_argument("make_sgd_state: eta must lie in (0, 1/L]");
  check_finite(x0, "make_sgd_state");
  return SgdState{std::move(x0), eta};
}

inline void sgd_update(Vec& x, double eta, const Vec& g) {
  check_same_dim(x, g, "sgd_update");
  check_finite(g, "sgd_update");
  axpy(-eta, g, x);
}

inline void sgd_step_inplace(SgdState& s, const Vec& g) { sgd_update(s.x, s.eta, g); }

inline SgdState sgd_step(SgdState s, const Vec& g) {
  sgd_step_inplace(s, g);
  return s;
}

struct AdamHyper {
  double eta = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-3;
};

inline void validate(const AdamHyper& h) {
  if (h.eta <= 0.0) throw std::invalid_argument("AdamHyper: eta must be > 0");
  if (h.beta1 < 0.0 || h.beta1 >= 1.0) throw std::invalid_argument("AdamHyper: beta1 must be in [0, 1)");
  if (h.beta2 <= 0.0 || h.beta2 >= 1.0) throw std::invalid_argument("AdamHyper: beta2 must be in (0, 1)");
  if (h.beta1 * h.beta1 >= h.beta2)
    throw std::invalid_argument("AdamHyper: beta1^2 must be < beta2");
  if (h.epsilon <= 0.0) throw std::invalid_argument("AdamHyper: epsilon must be > 0");
}

struct AdamMoments {
  Vec h;      // first-moment estimate
  Vec v;      // second-moment estimate
  Vec v_hat;  // running element-wise max of v; nondecreasing along a trajectory
};

inline AdamMoments zero_moments(std::size_t d) { return AdamMoments{zeros(d), zeros(d), zeros(d)}; }

// One update of the analyzed Adam variant:
//   h <- beta1 h + (1 - beta1) g
//   v <- beta2 v_hat + (1 - beta2) g^2     (v_hat, not v, feeds the recursion)
//   v_hat <- max(v, v_hat)                 (element-wise)
//   x <- x - eta h / sqrt(epsilon + v_hat) (element-wise, no bias correction)
inline void adam_update(Vec& x, AdamMoments& m, const AdamHyper& hy, const Vec& g) {
  check_same_dim(x, g, "adam_update");
  check_finite(g, "adam_update");
  for (std::size_t j = 0; j < x.size(); ++j) {
    m.h[j] = hy.beta1 * m.h[j] + (1.0 - hy.beta1) * g[j];
    const double v = hy.beta2 * m.v_hat[j] + (1.0 - hy.beta2) * g[j] * g[j];
    m.v[j] = v;
    if (v > m.v_hat[j]) m.v_hat[j] = v;
    x[j] -= hy.eta * m.h[j] / std::sqrt(hy.epsilon + m.v_hat[j]);
  }
}

struct AdamState {
  Vec x;
  AdamMoments moments;
  AdamHyper hyper;
};

inline AdamState make_adam_state(Vec x0, const AdamHyper& hy) {
  validate(hy);
  check_finite(x0, "make_adam_state");
  AdamState s;
  s.moments = zero_moments(x0.size());
  s.x = std::move(x0);
  s.hyper = hy;
  return s;
}

inline void adam_step_inplace(AdamState& s, const Vec& g) {
  adam_update(s.x, s.moments, s.hyper, g);
}

inline AdamState adam_step(AdamState s, const Vec& g) {
  adam_step_inplace(s, g);
  return s;
}

// Per-step squared displacement bound ||x^(k+1) - x^(k)||^2 <=
//   eta^2 d / ((1 - beta2)(1 - beta1^2/beta2)),
// valid along every trajectory of adam_update.
inline double adam_step_bound(const AdamHyper& hy, int d) {
  if (hy.beta1 * hy.beta1 >= hy.beta2)
    throw std::invalid_argument("adam_step_bound: requires beta1^2 < beta2");
  return hy.eta * hy.eta * static_cast<double>(d) /
         ((1.0 - hy.beta2) * (1.0 - hy.beta1 * hy.beta1 / hy.beta2));
}

inline double adam_step_bound(const AdamState& s) {
  return adam_step_bound(s.hyper, static_cast<int>(s.x.size()));
}

}  // namespace openfl
