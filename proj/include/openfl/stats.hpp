#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace openfl {

struct MeanStderr {
  double mean = 0.0;
  double stderr_of_mean = 0.0;
  std::size_t n = 0;
};

inline MeanStderr mean_stderr(const std::vector<double>& xs) {
  MeanStderr r;
  r.n = xs.size();
  if (r.n == 0) return r;
  double s = 0.0;
  for (double x : xs) s += x;
  r.mean = s / static_cast<double>(r.n);
  if (r.n < 2) return r;
  double ss = 0.0;
  for (double x : xs) {
    const double d = x - r.mean;
    ss += d * d;
  }
  const double var = ss / static_cast<double>(r.n - 1);
  r.stderr_of_mean = std::sqrt(var / static_cast<double>(r.n));
  return r;
}

namespace detail {

// Regularized lower incomplete gamma P(a, x), series + continued fraction.
inline double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_p: bad arguments");
  if (x == 0.0) return 0.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {
    // series representation
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - gln);
  }
  // continued fraction for Q, then P = 1 - Q
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-15) break;
  }
  const double q = std::exp(-x + a * std::log(x) - gln) * h;
  return 1.0 - q;
}

// Regularized incomplete beta I_x(a, b) via Lentz continued fraction.
inline double beta_cf(double a, double b, double x) {
  const double tiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 500; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-15) break;
  }
  return h;
}

inline double inc_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log(1.0 - x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

}  // namespace detail

// Survival function of the chi-square distribution with k dof.
inline double chi_square_sf(double x, double dof) {
  return 1.0 - detail::gamma_p(dof / 2.0, x / 2.0);
}

// One-sided survival function of Student's t with given dof: P(T > t).
inline double student_t_sf(double t, double dof) {
  const double ib = detail::inc_beta(dof / 2.0, 0.5, dof / (dof + t * t));
  return t >= 0.0 ? 0.5 * ib : 1.0 - 0.5 * ib;
}

struct WelchResult {
  double t = 0.0;
  double dof = 0.0;
  double p_one_sided = 1.0;  // P(mean(a) > mean(b)) under H0: equal means
};

// Welch's t-test for H1: mean(a) > mean(b).
inline WelchResult welch_one_sided_greater(const std::vector<double>& a,
                                           const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2)
    throw std::invalid_argument("welch_one_sided_greater: need >= 2 samples per group");
  const MeanStderr ma = mean_stderr(a);
  const MeanStderr mb = mean_stderr(b);
  const double va = ma.stderr_of_mean * ma.stderr_of_mean;
  const double vb = mb.stderr_of_mean * mb.stderr_of_mean;
  WelchResult r;
  const double denom = std::sqrt(va + vb);
  if (denom == 0.0) {
    r.t = ma.mean > mb.mean ? 1e300 : (ma.mean < mb.mean ? -1e300 : 0.0);
    r.dof = static_cast<double>(a.size() + b.size() - 2);
    r.p_one_sided = ma.mean > mb.mean ? 0.0 : 1.0;
    return r;
  }
  r.t = (ma.mean - mb.mean) / denom;
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  r.dof = (va + vb) * (va + vb) /
          (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  r.p_one_sided = student_t_sf(r.t, r.dof);
  return r;
}

// Pearson chi-square goodness-of-fit p-value. expected must be positive.
inline double chi_square_gof_pvalue(const std::vector<double>& observed,
                                    const std::vector<double>& expected) {
  if (observed.size() != expected.size() || observed.empty())
    throw std::invalid_argument("chi_square_gof_pvalue: size mismatch");
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (expected[i] <= 0.0)
      throw std::invalid_argument("chi_square_gof_pvalue: nonpositive expected count");
    const double d = observed[i] - expected[i];
    stat += d * d / expected[i];
  }
  return chi_square_sf(stat, static_cast<double>(observed.size() - 1));
}

}  // namespace openfl
