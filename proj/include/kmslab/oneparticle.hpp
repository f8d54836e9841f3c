#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>

#include "common.hpp"
#include "csv.hpp"
#include "quadrature.hpp"

namespace kmslab {

// ---------------------------------------------------------------- thermal

// mu_beta(x) = 1/(e^{beta x} - 1)
inline double planck_occupation(double x, double beta) {
  detail::require(x > 0.0 && beta > 0.0, "planck_occupation: need x > 0 and beta > 0");
  if (std::isinf(beta)) return 0.0;
  return 1.0 / std::expm1(beta * x);
}

// 1 + 2 mu_beta(x); separate entry point because the identity is checked against it
inline double coth_half(double x, double beta) { return 1.0 + 2.0 * planck_occupation(x, beta); }

// ---------------------------------------------------------------- momentum data

// Rotationally symmetric one-particle data g(q) on a radial grid; norm is the
// L^2(R^3) norm 4 pi sum w q^2 |g|^2.
struct MomentumFunction {
  VecR grid;
  VecR weights;
  VecC values;
  double mass = 0.0;
  QuadratureRule rule = QuadratureRule::trapezoid;

  Eigen::Index size() const { return grid.size(); }

  void validate() const {
    detail::require_shape(grid.size() == weights.size() && grid.size() == values.size(),
                          "MomentumFunction: grid/weights/values size mismatch");
    detail::require_shape(grid.size() > 0, "MomentumFunction: empty grid");
    detail::require_shape(detail::strictly_increasing(grid), "MomentumFunction: grid not strictly increasing");
    detail::require_shape(grid[0] > 0.0, "MomentumFunction: grid must be positive");
    detail::require_shape((weights.array() > 0.0).all(), "MomentumFunction: weights must be positive");
    detail::require_shape(detail::all_finite(values), "MomentumFunction: non-finite values");
    detail::require(mass >= 0.0, "MomentumFunction: mass must be >= 0");
  }

  double omega(Eigen::Index i) const { return std::hypot(grid[i], mass); }

  double norm2() const {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < size(); ++i) acc += weights[i] * grid[i] * grid[i] * std::norm(values[i]);
    return 4.0 * pi * acc;
  }

  bool same_grid(const MomentumFunction& o) const {
    return grid.size() == o.grid.size() && grid == o.grid && weights == o.weights && mass == o.mass;
  }
};

inline MomentumFunction sample_radial(const RadialGridSpec& spec, const std::function<cplx(double)>& g,
                                      double mass = 0.0) {
  const Nodes n = radial_grid(spec);
  MomentumFunction f{n.x, n.w, VecC(n.x.size()), mass, spec.rule};
  for (Eigen::Index i = 0; i < n.x.size(); ++i) f.values[i] = g(n.x[i]);
  f.validate();
  return f;
}

// g(q) = q^{1/2} exp(-q^2/Lambda^2)
inline cplx default_coupling(double q, double Lambda = 1.0) { return std::sqrt(q) * std::exp(-q * q / (Lambda * Lambda)); }

struct CauchyData {
  MomentumFunction f1_hat;  // position datum
  MomentumFunction f2_hat;  // velocity datum
};

struct GroundImage {
  MomentumFunction kappa;
  double norm2 = 0.0;
  // Estimated norm mass below the first grid point relative to the total.
  double infrared_tail = 0.0;
  bool infrared_warning = false;
};

// Estimated contribution of [0, q_0] to a radial integral whose integrand at q_0
// is I_0, assuming power-law behaviour fixed by the first two nodes.
inline double infrared_tail_estimate(const VecR& q, const VecR& integrand) {
  if (q.size() < 2 || integrand[0] <= 0.0 || integrand[1] <= 0.0) return 0.0;
  const double p = std::log(integrand[1] / integrand[0]) / std::log(q[1] / q[0]);
  if (p <= -1.0) return inf;
  return q[0] * integrand[0] / (p + 1.0);
}

// kappa f = (omega^{1/2} f1 + i omega^{-1/2} f2)/sqrt(2)
inline GroundImage ground_map(const CauchyData& data, double ir_tolerance = 1e-6) {
  data.f1_hat.validate();
  data.f2_hat.validate();
  detail::require_shape(data.f1_hat.same_grid(data.f2_hat), "ground_map: Cauchy data on different grids");
  GroundImage r;
  r.kappa = data.f1_hat;
  const auto& q = data.f1_hat.grid;
  VecR integrand(q.size());
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    const double w = data.f1_hat.omega(i);
    r.kappa.values[i] = (std::sqrt(w) * data.f1_hat.values[i] + I * data.f2_hat.values[i] / std::sqrt(w)) / std::sqrt(2.0);
    integrand[i] = q[i] * q[i] * std::norm(r.kappa.values[i]);
  }
  r.norm2 = r.kappa.norm2();
  const double tail = 4.0 * pi * infrared_tail_estimate(q, integrand);
  r.infrared_tail = r.norm2 > 0.0 ? tail / r.norm2 : 0.0;
  r.infrared_warning = !(r.infrared_tail <= ir_tolerance);
  return r;
}

// ---------------------------------------------------------------- glued space

struct GluedVector {
  VecR sgrid;
  VecR weights;
  VecC values;
  std::optional<double> beta_tag;
  double zeta = pi;

  Eigen::Index size() const { return sgrid.size(); }

  void validate() const {
    detail::require_shape(sgrid.size() == weights.size() && sgrid.size() == values.size(),
                          "GluedVector: size mismatch");
    detail::require_shape(detail::strictly_increasing(sgrid), "GluedVector: sgrid not strictly increasing");
    detail::require_shape(detail::all_finite(values), "GluedVector: non-finite values");
  }

  bool symmetric() const {
    const Eigen::Index n = size();
    if (n % 2) return false;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (sgrid[j] == 0.0) return false;
      if (sgrid[j] != -sgrid[n - 1 - j] || weights[j] != weights[n - 1 - j]) return false;
    }
    return true;
  }

  double norm2() const { return 4.0 * pi * (weights.array() * values.array().abs2()).sum(); }
};

inline cplx inner(const GluedVector& u, const GluedVector& v) {
  detail::require_shape(u.sgrid.size() == v.sgrid.size() && u.sgrid == v.sgrid, "inner: grids differ");
  cplx acc = 0.0;
  for (Eigen::Index j = 0; j < u.size(); ++j) acc += u.weights[j] * std::conj(u.values[j]) * v.values[j];
  return 4.0 * pi * acc;
}

// -e^{i zeta}
inline cplx gluing_phase(double zeta) {
  if (zeta == pi) return 1.0;  // exact, so real couplings glue to real vectors
  return -std::polar(1.0, zeta);
}

// sqrt(s/(1-e^{-beta s})) |s|^{1/2}, evaluated without cancellation for either sign.
inline double glue_amplitude(double s, double beta) {
  const double a = std::abs(s);
  if (std::isinf(beta)) return s > 0.0 ? a : 0.0;
  const double r = s > 0.0 ? s / -std::expm1(-beta * s) : a / std::expm1(beta * a);
  return std::sqrt(r * a);
}

// f_beta(s) on the mirrored grid built from the positive radial grid of kappa_f.
inline GluedVector kms_glue(const MomentumFunction& kappa_f, double beta, double zeta = pi) {
  kappa_f.validate();
  detail::require(beta > 0.0, "kms_glue: beta must be > 0");
  detail::require(kappa_f.mass == 0.0, "kms_glue: gluing is defined for the massless field only");
  const Eigen::Index n = kappa_f.size();
  GluedVector v{VecR(2 * n), VecR(2 * n), VecC(2 * n), beta, zeta};
  const cplx ph = gluing_phase(zeta);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double q = kappa_f.grid[i];
    const Eigen::Index pos = n + i, neg = n - 1 - i;
    v.sgrid[pos] = q;
    v.sgrid[neg] = -q;
    v.weights[pos] = v.weights[neg] = kappa_f.weights[i];
    v.values[pos] = glue_amplitude(q, beta) * kappa_f.values[i];
    v.values[neg] = ph * glue_amplitude(-q, beta) * std::conj(kappa_f.values[i]);
  }
  return v;
}

// (j_F v)(s) = -e^{i zeta} conj(v(-s))
inline GluedVector jf_conjugate(const GluedVector& v) {
  v.validate();
  detail::require_shape(v.symmetric(), "jf_conjugate: sgrid is not symmetric about 0");
  GluedVector r = v;
  const cplx ph = gluing_phase(v.zeta);
  const Eigen::Index n = v.size();
  for (Eigen::Index j = 0; j < n; ++j) r.values[j] = ph * std::conj(v.values[n - 1 - j]);
  return r;
}

inline GluedVector time_translate(const GluedVector& v, double t) {
  GluedVector r = v;
  for (Eigen::Index j = 0; j < v.size(); ++j) r.values[j] *= std::polar(1.0, v.sgrid[j] * t);
  return r;
}

// e^{-beta s/2} v, the right-hand side of the modular identity
inline GluedVector modular_scale(const GluedVector& v, double beta) {
  GluedVector r = v;
  for (Eigen::Index j = 0; j < v.size(); ++j) r.values[j] *= std::exp(-0.5 * beta * v.sgrid[j]);
  return r;
}

inline double jf_identity_residual(const GluedVector& f_beta) {
  detail::require(f_beta.beta_tag.has_value(), "jf_identity_residual: vector carries no beta tag");
  const GluedVector lhs = jf_conjugate(f_beta);
  const GluedVector rhs = modular_scale(f_beta, *f_beta.beta_tag);
  // values near the subnormal range are compared on an absolute scale
  const double floor = std::numeric_limits<double>::min() / std::numeric_limits<double>::epsilon();
  double err = 0.0;
  for (Eigen::Index j = 0; j < f_beta.size(); ++j) {
    const double scale = std::max({std::abs(rhs.values[j]), std::abs(lhs.values[j]), floor});
    err = std::max(err, std::abs(lhs.values[j] - rhs.values[j]) / scale);
  }
  return err;
}

// ---------------------------------------------------------------- serialization

inline void write_csv(const std::string& path, const GluedVector& v) {
  CsvWriter w(path);
  w.header({"s", "re", "im"});
  for (Eigen::Index j = 0; j < v.size(); ++j) w.row({v.sgrid[j], v.values[j].real(), v.values[j].imag()});
}

inline void write_csv(const std::string& path, const MomentumFunction& f) {
  CsvWriter w(path);
  w.header({"q", "re", "im"});
  for (Eigen::Index j = 0; j < f.size(); ++j) w.row({f.grid[j], f.values[j].real(), f.values[j].imag()});
}

inline Sidecar sidecar(const GluedVector& v, const RadialGridSpec& spec) {
  return {{"kind", "glued"},
          {"beta", v.beta_tag ? fmt17(*v.beta_tag) : "none"},
          {"zeta", fmt17(v.zeta)},
          {"mass", "0"},
          {"grid_rule", to_string(spec.rule)},
          {"grid_n", std::to_string(spec.n)},
          {"grid_s_min", fmt17(spec.s_min)},
          {"grid_s_max", fmt17(spec.s_max)}};
}

// ---------------------------------------------------------------- boosts

struct BoostSpec {
  double rapidity = 0.0;

  static BoostSpec from_velocity(double v) {
    detail::require(std::abs(v) < 1.0, "BoostSpec: |v| must be < 1");
    return {std::atanh(v)};
  }
  double velocity() const { return std::tanh(rapidity); }
  double gamma() const { return std::cosh(rapidity); }
  BoostSpec inverse() const { return {-rapidity}; }
};

// Energy, in the frame moving with velocity v along x1, of a massless momentum
// (q, cos theta) given in the original frame.
inline double doppler_energy(double q, double c, double v) {
  const double g = 1.0 / std::sqrt((1.0 - v) * (1.0 + v));
  return q * g * (1.0 - v * c);
}

inline double aberrate(double c, double v) { return (c - v) / (1.0 - v * c); }

// Axisymmetric data on a (q, cos theta) tensor grid; values(i, k) at (q_i, c_k).
// Norm is the L^2(R^3) norm 2 pi sum w_q w_c q^2 |g|^2.
struct AxialMomentumFunction {
  VecR q, wq;
  VecR c, wc;
  MatC values;
  double mass = 0.0;

  double norm2() const {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < q.size(); ++i)
      for (Eigen::Index k = 0; k < c.size(); ++k) acc += wq[i] * wc[k] * q[i] * q[i] * std::norm(values(i, k));
    return 2.0 * pi * acc;
  }

  void validate() const {
    detail::require_shape(q.size() == wq.size() && c.size() == wc.size(), "AxialMomentumFunction: weight size mismatch");
    detail::require_shape(values.rows() == q.size() && values.cols() == c.size(),
                          "AxialMomentumFunction: value shape mismatch");
    detail::require_shape(detail::strictly_increasing(q) && q[0] > 0.0, "AxialMomentumFunction: bad q grid");
    detail::require_shape(detail::strictly_increasing(c) && c[0] >= -1.0 && c[c.size() - 1] <= 1.0,
                          "AxialMomentumFunction: bad cos(theta) grid");
  }
};

struct AxialGridSpec {
  RadialGridSpec radial{1e-3, 12.0, 480, QuadratureRule::gauss_legendre, 8};
  int nc = 48;
};

inline AxialMomentumFunction sample_axial(const AxialGridSpec& spec, const std::function<cplx(double, double)>& g,
                                          double mass = 0.0) {
  const Nodes r = radial_grid(spec.radial);
  const Nodes a = gauss_legendre(spec.nc);
  AxialMomentumFunction f{r.x, r.w, a.x, a.w, MatC(r.x.size(), a.x.size()), mass};
  for (Eigen::Index i = 0; i < r.x.size(); ++i)
    for (Eigen::Index k = 0; k < a.x.size(); ++k) f.values(i, k) = g(r.x[i], a.x[k]);
  return f;
}

inline AxialMomentumFunction broadcast(const MomentumFunction& f, int nc) {
  const Nodes a = gauss_legendre(nc);
  AxialMomentumFunction r{f.grid, f.weights, a.x, a.w, MatC(f.size(), nc), f.mass};
  for (Eigen::Index i = 0; i < f.size(); ++i) r.values.row(i).setConstant(f.values[i]);
  return r;
}

namespace detail {

// Index of the first of four consecutive nodes used for cubic interpolation at x.
inline Eigen::Index stencil_start(const VecR& x, double t) {
  const Eigen::Index n = x.size();
  const auto it = std::upper_bound(x.data(), x.data() + n, t);
  Eigen::Index j = static_cast<Eigen::Index>(it - x.data()) - 2;
  return std::clamp<Eigen::Index>(j, 0, n - 4);
}

inline std::array<double, 4> lagrange4(const VecR& x, Eigen::Index j, double t) {
  std::array<double, 4> l{};
  for (int a = 0; a < 4; ++a) {
    double p = 1.0;
    for (int b = 0; b < 4; ++b)
      if (b != a) p *= (t - x[j + b]) / (x[j + a] - x[j + b]);
    l[a] = p;
  }
  return l;
}

// Bicubic Lagrange interpolation; q below the grid follows q^{1/2}, above is zero.
inline cplx interpolate(const AxialMomentumFunction& g, double q, double c) {
  const Eigen::Index nq = g.q.size();
  if (q > g.q[nq - 1]) return 0.0;
  double scale = 1.0;
  if (q < g.q[0]) {
    scale = std::sqrt(q / g.q[0]);
    q = g.q[0];
  }
  const Eigen::Index iq = stencil_start(g.q, q), ic = stencil_start(g.c, c);
  const auto lq = lagrange4(g.q, iq, q);
  const auto lc = lagrange4(g.c, ic, c);
  cplx acc = 0.0;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) acc += lq[a] * lc[b] * g.values(iq + a, ic + b);
  return scale * acc;
}

}  // namespace detail

// Data pulled back along the inverse boost: g'(q, c) = sqrt(q'/q) g(q', c')
// with q' = q gamma (1 - v c), c' = (c - v)/(1 - v c).
inline AxialMomentumFunction boost_pullback(const AxialMomentumFunction& g, const BoostSpec& boost) {
  g.validate();
  detail::require(g.mass == 0.0, "boost_pullback: closed-form aberration requires m = 0");
  const double v = boost.velocity();
  detail::require(std::abs(v) < 1.0, "boost_pullback: |v| must be < 1");
  if (boost.rapidity == 0.0) return g;
  AxialMomentumFunction r = g;
  for (Eigen::Index i = 0; i < g.q.size(); ++i)
    for (Eigen::Index k = 0; k < g.c.size(); ++k) {
      const double qp = doppler_energy(g.q[i], g.c[k], v);
      const double cp = aberrate(g.c[k], v);
      r.values(i, k) = std::sqrt(qp / g.q[i]) * detail::interpolate(g, qp, cp);
    }
  return r;
}

}  // namespace kmslab
