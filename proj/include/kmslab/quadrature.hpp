#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "common.hpp"

namespace kmslab {

enum class QuadratureRule { trapezoid, gauss_legendre };

inline std::string to_string(QuadratureRule r) {
  return r == QuadratureRule::trapezoid ? "trapezoid" : "gauss_legendre";
}

inline QuadratureRule parse_rule(const std::string& s) {
  if (s == "trapezoid") return QuadratureRule::trapezoid;
  if (s == "gauss_legendre" || s == "gl") return QuadratureRule::gauss_legendre;
  throw domain_error("unknown quadrature rule '" + s + "'");
}

struct Nodes {
  VecR x;
  VecR w;
};

// Gauss-Legendre nodes and weights on [-1, 1], Newton iteration on P_n.
inline Nodes gauss_legendre(int n) {
  detail::require(n >= 1, "gauss_legendre: n must be >= 1");
  Nodes r{VecR(n), VecR(n)};
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double z = std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int k = 1; k <= n; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    // recompute derivative at the converged node
    double p0 = 1.0, p1 = 0.0;
    for (int k = 1; k <= n; ++k) {
      const double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
    }
    dp = n * (z * p0 - p1) / (z * z - 1.0);
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    r.x[i] = -z;
    r.x[n - 1 - i] = z;
    r.w[i] = w;
    r.w[n - 1 - i] = w;
  }
  if (n % 2 == 1) r.x[n / 2] = 0.0;
  return r;
}

// Composite Gauss-Legendre on [a, b] split into equal panels.
inline Nodes gl_panels(double a, double b, int panels, int order) {
  const Nodes ref = gauss_legendre(order);
  Nodes r{VecR(panels * order), VecR(panels * order)};
  const double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    const double lo = a + p * h;
    for (int k = 0; k < order; ++k) {
      r.x[p * order + k] = lo + 0.5 * h * (ref.x[k] + 1.0);
      r.w[p * order + k] = 0.5 * h * ref.w[k];
    }
  }
  return r;
}

inline double softplus(double x) { return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double softplus_inverse(double s) { return s > 30.0 ? s + std::log(-std::expm1(-s)) : std::log(std::expm1(s)); }

// Radial grid on [s_min, s_max]: uniform in x with s = ln(1 + e^x), so the
// spacing is geometric near 0 and uniform at large s.
struct RadialGridSpec {
  double s_min = 1e-4;
  double s_max = 40.0;
  int n = 2048;
  QuadratureRule rule = QuadratureRule::trapezoid;
  int gl_order = 8;  // nodes per panel when rule = gauss_legendre
};

inline Nodes radial_grid(const RadialGridSpec& spec) {
  detail::require(spec.s_min > 0.0 && spec.s_max > spec.s_min, "radial_grid: need 0 < s_min < s_max");
  detail::require(spec.n >= 2, "radial_grid: need n >= 2");
  const double x0 = softplus_inverse(spec.s_min);
  const double x1 = softplus_inverse(spec.s_max);
  Nodes r{VecR(spec.n), VecR(spec.n)};
  if (spec.rule == QuadratureRule::trapezoid) {
    const double h = (x1 - x0) / (spec.n - 1);
    for (int i = 0; i < spec.n; ++i) {
      const double x = x0 + i * h;
      r.x[i] = softplus(x);
      r.w[i] = h * sigmoid(x) * ((i == 0 || i == spec.n - 1) ? 0.5 : 1.0);
    }
  } else {
    detail::require(spec.n % spec.gl_order == 0, "radial_grid: n must be a multiple of gl_order");
    const Nodes xn = gl_panels(x0, x1, spec.n / spec.gl_order, spec.gl_order);
    for (int i = 0; i < spec.n; ++i) {
      r.x[i] = softplus(xn.x[i]);
      r.w[i] = xn.w[i] * sigmoid(xn.x[i]);
    }
  }
  return r;
}

// Integrate f over [a, b] with panels of width <= h_max, order-16 GL per panel.
template <class F>
auto integrate_panels(F&& f, double a, double b, double h_max, int order = 16) {
  using R = decltype(f(a));
  const int panels = std::max(1, static_cast<int>(std::ceil((b - a) / h_max)));
  static thread_local Nodes cache;
  static thread_local int cached_order = -1;
  if (cached_order != order) {
    cache = gauss_legendre(order);
    cached_order = order;
  }
  const double h = (b - a) / panels;
  R acc{};
  for (int p = 0; p < panels; ++p) {
    const double lo = a + p * h;
    R part{};
    for (int k = 0; k < order; ++k) part += cache.w[k] * f(lo + 0.5 * h * (cache.x[k] + 1.0));
    acc += 0.5 * h * part;
  }
  return acc;
}

}  // namespace kmslab
