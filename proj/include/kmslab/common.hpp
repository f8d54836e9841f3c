#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace kmslab {

using cplx = std::complex<double>;
using VecR = Eigen::VectorXd;
using VecC = Eigen::VectorXcd;
using MatR = Eigen::MatrixXd;
using MatC = Eigen::MatrixXcd;

inline constexpr double pi = std::numbers::pi;
inline constexpr double inf = std::numeric_limits<double>::infinity();
inline constexpr cplx I{0.0, 1.0};

// Input outside the documented range (nonpositive beta, |v| >= 1, ...).
struct domain_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Inconsistent shapes: asymmetric grids, unpaired modes, mismatched sizes.
struct structural_error : std::logic_error {
  using std::logic_error::logic_error;
};

// A numerical procedure could not reach its tolerance.
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Configuration the caller asked for is not a stationary/supported setup.
struct unsupported_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw domain_error(what);
}

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw structural_error(what);
}

inline bool all_finite(const VecC& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i].real()) || !std::isfinite(v[i].imag())) return false;
  return true;
}

inline bool strictly_increasing(const VecR& x) {
  for (Eigen::Index i = 1; i < x.size(); ++i)
    if (!(x[i] > x[i - 1])) return false;
  return true;
}

}  // namespace detail

}  // namespace kmslab
