#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "openfl/optimizer.hpp"
#include "openfl/rng.hpp"

using namespace openfl;

namespace {

Vec random_vec(std::size_t d, Rng& rng, double scale = 1.0) {
  Vec x(d);
  for (double& v : x) v = scale * rng.normal();
  return x;
}

}  // namespace

TEST_CASE("sgd_step: zero gradient is a fixed point") {
  const SgdState s = make_sgd_state(Vec{1.0, 1.0}, 0.5);
  const SgdState next = sgd_step(s, Vec{0.0, 0.0});
  CHECK(next.x == Vec{1.0, 1.0});
  CHECK(next.eta == 0.5);
}

TEST_CASE("sgd_step: unit step hand value") {
  const SgdState s = make_sgd_state(Vec{1.0, 0.0}, 1.0);
  const SgdState next = sgd_step(s, Vec{1.0, 0.0});
  CHECK(next.x == Vec{0.0, 0.0});
}

TEST_CASE("sgd_step: one-step convergence on the unit quadratic") {
  const ObjectiveSpec spec = make_quadratic(1.0, Vec{0.0, 0.0, 0.0});
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    SgdState s = make_sgd_state(random_vec(3, rng, 2.0), 1.0, spec);
    sgd_step_inplace(s, gradient(spec, s.x));
    CHECK(norm(s.x) <= 1e-15);
  }
}

TEST_CASE("sgd contraction factor on quadratics is exactly 1 - eta*mu") {
  const ObjectiveSpec spec = make_quadratic(2.0, Vec{1.0, -1.0});
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec x = random_vec(2, rng, 3.0);
    SgdState s = make_sgd_state(x, 0.25);  // eta*mu = 0.5
    sgd_step_inplace(s, gradient(spec, s.x));
    Vec before(2), after(2);
    for (int j = 0; j < 2; ++j) {
      before[j] = x[j] - spec.x_star[j];
      after[j] = s.x[j] - spec.x_star[j];
    }
    CHECK(norm(after) == doctest::Approx(0.5 * norm(before)).epsilon(1e-14));
  }
}

TEST_CASE("sgd state validation") {
  CHECK_THROWS_AS(make_sgd_state(Vec{0.0}, 0.0), std::invalid_argument);
  const ObjectiveSpec spec = make_quadratic(4.0, Vec{0.0});  // L = 4, 1/L = 0.25
  CHECK_THROWS_AS(make_sgd_state(Vec{0.0}, 0.3, spec), std::invalid_argument);
  CHECK_NOTHROW(make_sgd_state(Vec{0.0}, 0.25, spec));
  SgdState s = make_sgd_state(Vec{0.0}, 0.1);
  CHECK_THROWS_AS(sgd_step_inplace(s, Vec{std::nan("")}), std::invalid_argument);
}

TEST_CASE("adam_step: fresh-state hand arithmetic") {
  const AdamHyper hy{0.1, 0.9, 0.999, 1e-3};
  AdamState s = make_adam_state(Vec{0.0, 0.0}, hy);
  adam_step_inplace(s, Vec{1.0, 0.0});
  CHECK(s.moments.h[0] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(s.moments.h[1] == 0.0);
  CHECK(s.moments.v[0] == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(s.moments.v_hat[0] == doctest::Approx(0.001).epsilon(1e-12));
  const double expected_step = 0.1 * 0.1 / std::sqrt(1e-3 + 1e-3);
  CHECK(s.x[0] == doctest::Approx(-expected_step).epsilon(1e-12));
  CHECK(s.x[0] == doctest::Approx(-0.2236068).epsilon(1e-6));
  CHECK(s.x[1] == 0.0);
}

TEST_CASE("adam_step: tiny beta2 and epsilon collapse the step to a sign step") {
  const AdamHyper hy{0.5, 0.0, 1e-9, 1e-30};
  AdamState s = make_adam_state(Vec{0.0, 0.0}, hy);
  adam_step_inplace(s, Vec{4.0, -9.0});
  CHECK(s.x[0] == doctest::Approx(-0.5).epsilon(1e-6));
  CHECK(s.x[1] == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("adam_step: zero gradient with zero momentum is a fixed point") {
  const AdamHyper hy{0.1, 0.9, 0.999, 1e-3};
  AdamState s = make_adam_state(Vec{2.0, -3.0}, hy);
  s.moments.v_hat = Vec{0.5, 0.25};
  const AdamState next = adam_step(s, Vec{0.0, 0.0});
  CHECK(next.x == s.x);
  // v = beta2 * v_hat <= v_hat, so the max keeps v_hat unchanged.
  CHECK(next.moments.v_hat == s.moments.v_hat);
  CHECK(next.moments.v[0] == doctest::Approx(0.999 * 0.5).epsilon(1e-12));
}

TEST_CASE("adam_step_bound hand values and guard") {
  CHECK(adam_step_bound(AdamHyper{0.1, 0.0, 0.5, 1.0}, 1) ==
        doctest::Approx(0.02).epsilon(1e-12));
  const double expected = 0.005 * 0.005 * 10.0 / ((1.0 - 0.999) * (1.0 - 0.81 / 0.999));
  CHECK(adam_step_bound(AdamHyper{0.005, 0.9, 0.999, 1e-3}, 10) ==
        doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(1.32143).epsilon(1e-4));
  CHECK_THROWS_AS(adam_step_bound(AdamHyper{0.1, 0.5, 0.25, 1e-3}, 1), std::invalid_argument);
}

TEST_CASE("adam hyperparameter validation") {
  CHECK_THROWS_AS(make_adam_state(Vec{0.0}, AdamHyper{0.1, 1.0, 0.999, 1e-3}),
                  std::invalid_argument);
  CHECK_THROWS_AS(make_adam_state(Vec{0.0}, AdamHyper{0.1, 0.9, 0.8, 1e-3}),
                  std::invalid_argument);  // beta1^2 > beta2
  CHECK_THROWS_AS(make_adam_state(Vec{0.0}, AdamHyper{0.1, 0.9, 0.999, 0.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(make_adam_state(Vec{0.0}, AdamHyper{0.0, 0.9, 0.999, 1e-3}),
                  std::invalid_argument);
  AdamState s = make_adam_state(Vec{0.0}, AdamHyper{0.1, 0.9, 0.999, 1e-3});
  CHECK_THROWS_AS(adam_step_inplace(s, Vec{std::nan("")}), std::invalid_argument);
}

TEST_CASE("v_hat is nondecreasing and steps obey the displacement bound") {
  Rng rng(77);
  const AdamHyper hy{0.05, 0.9, 0.999, 1e-3};
  for (int traj = 0; traj < 100; ++traj) {
    AdamState s = make_adam_state(random_vec(4, rng), hy);
    const double bound = adam_step_bound(s);
    for (int k = 0; k < 40; ++k) {
      const Vec g = random_vec(4, rng, 2.0);
      const Vec prev_vhat = s.moments.v_hat;
      const Vec prev_x = s.x;
      adam_step_inplace(s, g);
      double step_sq = 0.0;
      for (int j = 0; j < 4; ++j) {
        CHECK(s.moments.v_hat[j] >= prev_vhat[j]);
        const double dx = s.x[j] - prev_x[j];
        step_sq += dx * dx;
      }
      CHECK(step_sq <= bound * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("per-coordinate steps are bounded by eta * max |g| / sqrt(epsilon)") {
  Rng rng(88);
  const AdamHyper hy{0.1, 0.9, 0.999, 1e-2};
  AdamState s = make_adam_state(zeros(3), hy);
  double max_abs_g = 0.0;
  for (int k = 0; k < 200; ++k) {
    const Vec g = random_vec(3, rng);
    for (double v : g) max_abs_g = std::max(max_abs_g, std::fabs(v));
    const Vec prev = s.x;
    adam_step_inplace(s, g);
    for (int j = 0; j < 3; ++j)
      CHECK(std::fabs(s.x[j] - prev[j]) <=
            hy.eta * max_abs_g / std::sqrt(hy.epsilon) * (1.0 + 1e-12));
  }
}

TEST_CASE("steppers are deterministic functions of state and gradient") {
  Rng rng(99);
  const AdamHyper hy{0.1, 0.9, 0.999, 1e-3};
  AdamState s = make_adam_state(random_vec(5, rng), hy);
  const Vec g = random_vec(5, rng);
  const AdamState a = adam_step(s, g);
  const AdamState b = adam_step(s, g);
  CHECK(a.x == b.x);
  CHECK(a.moments.h == b.moments.h);
  CHECK(a.moments.v == b.moments.v);
  CHECK(a.moments.v_hat == b.moments.v_hat);
}
