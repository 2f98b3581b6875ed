#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace openfl {

// Model vectors and gradients are plain dense vectors; the dimension d is
// fixed per experiment and identical across all clients.
using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(const Vec& a) { return dot(a, a); }

inline double norm(const Vec& a) { return std::sqrt(squared_norm(a)); }

inline bool all_finite(const Vec& a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

inline void check_same_dim(const Vec& a, const Vec& b, const char* what) {
  if (a.size() != b.size())
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (" +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
}

inline void check_finite(const Vec& a, const char* what) {
  if (!all_finite(a))
    throw std::invalid_argument(std::string(what) + ": non-finite entries");
}

// y += a * x
inline void axpy(double a, const Vec& x, Vec& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline Vec zeros(std::size_t d) { return Vec(d, 0.0); }

}  // namespace openfl
