#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "common.hpp"
#include "csv.hpp"
#include "oneparticle.hpp"
#include "parallel.hpp"

namespace kmslab {

enum class StateKind { kms, vacuum };

struct QuasiFreeState {
  double beta = 1.0;  // inf for the vacuum
  double mass = 0.0;
  BoostSpec frame{};  // rest frame of the state moves with tanh(rapidity) along +x1 in the lab
  StateKind kind = StateKind::kms;

  static QuasiFreeState kms(double beta, double mass = 0.0, BoostSpec frame = {}) {
    QuasiFreeState s{beta, mass, frame, StateKind::kms};
    s.validate();
    return s;
  }
  static QuasiFreeState vacuum(double mass = 0.0, BoostSpec frame = {}) {
    return {inf, mass, frame, StateKind::vacuum};
  }

  void validate() const {
    detail::require(mass >= 0.0, "QuasiFreeState: mass must be >= 0");
    detail::require(std::abs(frame.velocity()) < 1.0, "QuasiFreeState: frame velocity must satisfy |v| < 1");
    if (kind == StateKind::kms)
      detail::require(beta > 0.0 && std::isfinite(beta), "QuasiFreeState: kms state needs finite beta > 0");
    else
      detail::require(std::isinf(beta), "QuasiFreeState: vacuum state must have beta = inf");
  }

  bool boosted() const { return frame.rapidity != 0.0; }

  // occupation of a mode whose energy in the state's rest frame is e
  double occupation(double e) const { return kind == StateKind::vacuum ? 0.0 : planck_occupation(e, beta); }

  // occupation of the lab-frame momentum (q, c)
  double occupation_lab(double q, double c) const {
    const double w = std::hypot(q, mass);
    const double v = frame.velocity();
    return occupation(frame.gamma() * (w - v * q * c));
  }

  std::string describe() const {
    return (kind == StateKind::vacuum ? std::string("vacuum") : "kms(beta=" + fmt17(beta) + ")") +
           " mass=" + fmt17(mass) + " rapidity=" + fmt17(frame.rapidity);
  }
};

// F(t) = sum_n weight_n e^{i freq_n t}
struct SpectralMeasure {
  VecR freq;
  VecC weight;

  cplx operator()(double t) const {
    cplx acc = 0.0;
    for (Eigen::Index n = 0; n < freq.size(); ++n) acc += weight[n] * std::polar(1.0, freq[n] * t);
    return acc;
  }

  double max_abs_freq() const { return freq.size() ? freq.cwiseAbs().maxCoeff() : 0.0; }
};

namespace detail {

inline void check_pair(const MomentumFunction& f, const MomentumFunction& g, const QuasiFreeState& s) {
  f.validate();
  g.validate();
  require_shape(f.same_grid(g), "quasifree: one-particle inputs on different grids");
  require(f.mass == s.mass, "quasifree: input mass differs from state mass");
}

inline void check_pair(const AxialMomentumFunction& f, const AxialMomentumFunction& g, const QuasiFreeState& s) {
  f.validate();
  g.validate();
  require_shape(f.q == g.q && f.c == g.c && f.wq == g.wq && f.wc == g.wc,
                "quasifree: one-particle inputs on different grids");
  require(f.mass == s.mass, "quasifree: input mass differs from state mass");
}

}  // namespace detail

// Spectral representation of t -> two_point(g, f o T_{-t}):
// sum w [(1+n) conj(g) f e^{i omega t} + n conj(f) g e^{-i omega t}].
inline SpectralMeasure correlator_spectrum(const QuasiFreeState& s, const MomentumFunction& g,
                                           const MomentumFunction& f) {
  s.validate();
  detail::check_pair(f, g, s);
  detail::require(!s.boosted(), "correlator_spectrum: radial data requires a rest-frame state; use axial data");
  const Eigen::Index n = f.size();
  SpectralMeasure m{VecR(2 * n), VecC(2 * n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = f.omega(i);
    const double occ = s.occupation(w);
    const double mu = 4.0 * pi * f.weights[i] * f.grid[i] * f.grid[i];
    m.freq[i] = w;
    m.weight[i] = mu * (1.0 + occ) * std::conj(g.values[i]) * f.values[i];
    m.freq[n + i] = -w;
    m.weight[n + i] = mu * occ * std::conj(f.values[i]) * g.values[i];
  }
  return m;
}

// Axial version; the state's frame enters through the Doppler-shifted occupation.
inline SpectralMeasure correlator_spectrum(const QuasiFreeState& s, const AxialMomentumFunction& g,
                                           const AxialMomentumFunction& f) {
  s.validate();
  detail::check_pair(f, g, s);
  const Eigen::Index nq = f.q.size(), nc = f.c.size(), n = nq * nc;
  SpectralMeasure m{VecR(2 * n), VecC(2 * n)};
  for (Eigen::Index i = 0; i < nq; ++i)
    for (Eigen::Index k = 0; k < nc; ++k) {
      const Eigen::Index j = i * nc + k;
      const double w = std::hypot(f.q[i], f.mass);
      const double occ = s.occupation_lab(f.q[i], f.c[k]);
      const double mu = 2.0 * pi * f.wq[i] * f.wc[k] * f.q[i] * f.q[i];
      m.freq[j] = w;
      m.weight[j] = mu * (1.0 + occ) * std::conj(g.values(i, k)) * f.values(i, k);
      m.freq[n + j] = -w;
      m.weight[n + j] = mu * occ * std::conj(f.values(i, k)) * g.values(i, k);
    }
  return m;
}

// <kappa_beta f, kappa_beta g> = <kf, (1+n) kg> + <kg, n kf>
inline cplx two_point(const QuasiFreeState& s, const MomentumFunction& f, const MomentumFunction& g) {
  s.validate();
  detail::check_pair(f, g, s);
  detail::require(!s.boosted(), "two_point: radial data requires a rest-frame state; use axial data");
  cplx acc = 0.0;
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    const double occ = s.occupation(f.omega(i));
    const double mu = f.weights[i] * f.grid[i] * f.grid[i];
    acc += mu * ((1.0 + occ) * std::conj(f.values[i]) * g.values[i] + occ * std::conj(g.values[i]) * f.values[i]);
  }
  return 4.0 * pi * acc;
}

namespace detail {

inline cplx two_point_rest(const QuasiFreeState& s, const AxialMomentumFunction& f, const AxialMomentumFunction& g) {
  cplx acc = 0.0;
  for (Eigen::Index i = 0; i < f.q.size(); ++i) {
    const double occ = s.occupation(std::hypot(f.q[i], f.mass));
    for (Eigen::Index k = 0; k < f.c.size(); ++k) {
      const double mu = f.wq[i] * f.wc[k] * f.q[i] * f.q[i];
      acc += mu * ((1.0 + occ) * std::conj(f.values(i, k)) * g.values(i, k) +
                   occ * std::conj(g.values(i, k)) * f.values(i, k));
    }
  }
  return 2.0 * pi * acc;
}

}  // namespace detail

// Boosted states are evaluated on data pulled back into the state's rest frame.
inline cplx two_point(const QuasiFreeState& s, const AxialMomentumFunction& f, const AxialMomentumFunction& g) {
  s.validate();
  detail::check_pair(f, g, s);
  if (!s.boosted()) return detail::two_point_rest(s, f, g);
  const BoostSpec back = s.frame.inverse();
  return detail::two_point_rest(s, boost_pullback(f, back), boost_pullback(g, back));
}

template <class Data>
double weyl_expectation(const QuasiFreeState& s, const Data& f) {
  const double n2 = two_point(s, f, f).real();
  if (!std::isfinite(n2)) throw numerical_error("weyl_expectation: infrared-divergent norm");
  return std::exp(-0.5 * n2);
}

// omega(W(g) alpha_t W(f)) = exp(-F(t)) omega(W(f)) omega(W(g)), F(t) = two_point(g, f o T_{-t})
template <class Data>
cplx weyl_correlator(const QuasiFreeState& s, const Data& g, const Data& f, double t) {
  const SpectralMeasure m = correlator_spectrum(s, g, f);
  return std::exp(-m(t)) * weyl_expectation(s, f) * weyl_expectation(s, g);
}

// ---------------------------------------------------------------- series

struct CorrelatorSeries {
  VecR times;
  VecC values;
  std::string state;
  std::string f_label = "f";
  std::string g_label = "g";

  void write_csv(const std::string& path) const {
    CsvWriter w(path);
    w.header({"t", "re", "im"});
    for (Eigen::Index k = 0; k < times.size(); ++k) w.row({times[k], values[k].real(), values[k].imag()});
  }
};

inline CorrelatorSeries correlator_series(const SpectralMeasure& m, const VecR& times, int threads = 1) {
  detail::require_shape(detail::strictly_increasing(times), "correlator_series: times must be strictly increasing");
  CorrelatorSeries r{times, VecC(times.size()), "", "f", "g"};
  parallel_for(static_cast<std::size_t>(times.size()), threads,
               [&](std::size_t k) { r.values[k] = m(times[k]); });
  return r;
}

// ---------------------------------------------------------------- detailed balance

struct BalanceOptions {
  double span = 200.0;   // T_span: tgrid covers [-T/2, T/2]
  double dt = 0.05;
  double sigma = 0.0;    // Gaussian window width; 0 means span/5
  VecR nu_grid;          // positive frequencies; default 0.05..5 step 0.05
  int threads = 1;
};

struct BalanceReport {
  double max_err = 0.0;
  double span = 0.0;
  double sigma = 0.0;
  double dt = 0.0;
  double recurrence_time = inf;
  VecR nu_grid;
  VecC w_plus;   // W_hat(nu)
  VecC w_minus;  // W_hat(-nu)
  VecR residual; // |W(-nu) - e^{-beta nu} W(nu)| / max|W|

  std::string to_text() const {
    std::string s = "max_err=" + fmt17(max_err) + "\nwindow=gaussian\nsigma=" + fmt17(sigma) + "\nspans=" +
                    fmt17(span) + "\ndt=" + fmt17(dt) + "\nrecurrence_time=" + fmt17(recurrence_time) + "\nnu_grid=";
    for (Eigen::Index i = 0; i < nu_grid.size(); ++i) s += (i ? ";" : "") + fmt17(nu_grid[i]);
    return s + "\n";
  }
};

inline VecR default_nu_grid() {
  VecR nu(100);
  for (int i = 0; i < 100; ++i) nu[i] = 0.05 * (i + 1);
  return nu;
}

// Smallest revival time of a discrete spectrum: 2 pi / (largest local spacing).
inline double recurrence_time(const SpectralMeasure& m) {
  std::vector<double> f(m.freq.data(), m.freq.data() + m.freq.size());
  std::sort(f.begin(), f.end());
  double gap = 0.0;
  for (size_t i = 1; i < f.size(); ++i)
    if (f[i] * f[i - 1] > 0.0) gap = std::max(gap, f[i] - f[i - 1]);
  return gap > 0.0 ? 2.0 * pi / gap : inf;
}

inline BalanceReport kms_balance_check(const QuasiFreeState& s, const SpectralMeasure& m, BalanceOptions opt) {
  s.validate();
  if (opt.nu_grid.size() == 0) opt.nu_grid = default_nu_grid();
  if (opt.sigma <= 0.0) opt.sigma = opt.span / 5.0;
  detail::require(opt.dt > 0.0 && opt.span > 0.0, "kms_balance_check: need span > 0 and dt > 0");
  detail::require((opt.nu_grid.array() > 0.0).all(), "kms_balance_check: nu_grid must be positive");

  double dnu = inf;
  for (Eigen::Index i = 0; i < opt.nu_grid.size(); ++i) {
    dnu = std::min(dnu, opt.nu_grid[i]);
    if (i) dnu = std::min(dnu, std::abs(opt.nu_grid[i] - opt.nu_grid[i - 1]));
  }
  const double required = 5.0 / dnu;
  if (opt.sigma * dnu < 1.0)
    throw domain_error("kms_balance_check: window does not resolve nu_grid spacing " + fmt17(dnu) +
                       "; required span >= " + fmt17(required));
  if (opt.dt * m.max_abs_freq() >= pi)
    throw domain_error("kms_balance_check: dt aliases the spectrum; need dt < " + fmt17(pi / m.max_abs_freq()));
  const double trec = recurrence_time(m);
  if (0.5 * opt.span >= trec)
    throw domain_error("kms_balance_check: half-span " + fmt17(0.5 * opt.span) +
                       " reaches the grid recurrence time " + fmt17(trec) + "; refine the mode grid");

  const int nt = static_cast<int>(std::llround(opt.span / opt.dt));
  VecR t(nt + 1);
  for (int k = 0; k <= nt; ++k) t[k] = -0.5 * opt.span + k * opt.dt;
  const CorrelatorSeries series = correlator_series(m, t, opt.threads);

  VecC windowed(nt + 1);
  for (int k = 0; k <= nt; ++k) {
    const double w = std::exp(-0.5 * t[k] * t[k] / (opt.sigma * opt.sigma));
    windowed[k] = w * series.values[k] * ((k == 0 || k == nt) ? 0.5 : 1.0) * opt.dt;
  }
  auto transform = [&](double nu) {
    cplx acc = 0.0;
    for (int k = 0; k <= nt; ++k) acc += windowed[k] * std::polar(1.0, -nu * t[k]);
    return acc;
  };

  BalanceReport r;
  r.span = opt.span;
  r.sigma = opt.sigma;
  r.dt = opt.dt;
  r.recurrence_time = trec;
  r.nu_grid = opt.nu_grid;
  const Eigen::Index nn = opt.nu_grid.size();
  r.w_plus.resize(nn);
  r.w_minus.resize(nn);
  r.residual.resize(nn);
  parallel_for(static_cast<std::size_t>(nn), opt.threads, [&](std::size_t i) {
    r.w_plus[i] = transform(opt.nu_grid[i]);
    r.w_minus[i] = transform(-opt.nu_grid[i]);
  });
  const double peak = std::max(r.w_plus.cwiseAbs().maxCoeff(), r.w_minus.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < nn; ++i) {
    const double boltz = s.kind == StateKind::vacuum ? 0.0 : std::exp(-s.beta * opt.nu_grid[i]);
    r.residual[i] = std::abs(r.w_minus[i] - boltz * r.w_plus[i]) / peak;
  }
  r.max_err = r.residual.maxCoeff();
  return r;
}

template <class Data>
BalanceReport kms_balance_check(const QuasiFreeState& s, const Data& f, const Data& g, const BalanceOptions& opt) {
  return kms_balance_check(s, correlator_spectrum(s, g, f), opt);
}

// ---------------------------------------------------------------- mixing

struct MixingReport {
  CorrelatorSeries series;  // complex two_point(g, f o T_{-t})
  VecR magnitude;
  VecR factorization;       // |omega(W(g) alpha_t W(f)) - omega(W(f)) omega(W(g))|
  double t0_value = 0.0;    // |two_point(g, f)|
  double factorization_t0 = 0.0;
  double sup_after = 0.0;   // sup_{t >= T} |F(t)|
  double sup_factorization_after = 0.0;
  double T = 0.0;
};

inline MixingReport mixing_decay(const QuasiFreeState& s, const SpectralMeasure& m, double weyl_f, double weyl_g,
                                 double tmax, double T, double dt = 0.1, int threads = 1) {
  detail::require(tmax > 0.0 && dt > 0.0 && T >= 0.0 && T <= tmax, "mixing_decay: need 0 <= T <= tmax, dt > 0");
  const int nt = static_cast<int>(std::llround(tmax / dt));
  VecR t(nt + 1);
  for (int k = 0; k <= nt; ++k) t[k] = k * dt;
  MixingReport r;
  r.series = correlator_series(m, t, threads);
  r.series.state = s.describe();
  r.T = T;
  r.magnitude = r.series.values.cwiseAbs();
  r.factorization.resize(nt + 1);
  const double prod = weyl_f * weyl_g;
  for (int k = 0; k <= nt; ++k) r.factorization[k] = std::abs(std::exp(-r.series.values[k]) * prod - prod);
  r.t0_value = r.magnitude[0];
  r.factorization_t0 = r.factorization[0];
  for (int k = 0; k <= nt; ++k)
    if (t[k] >= T) {
      r.sup_after = std::max(r.sup_after, r.magnitude[k]);
      r.sup_factorization_after = std::max(r.sup_factorization_after, r.factorization[k]);
    }
  return r;
}

template <class Data>
MixingReport mixing_decay(const QuasiFreeState& s, const Data& f, const Data& g, double tmax, double T,
                          double dt = 0.1, int threads = 1) {
  return mixing_decay(s, correlator_spectrum(s, g, f), weyl_expectation(s, f), weyl_expectation(s, g), tmax, T, dt,
                      threads);
}

// Gram-matrix positivity of {kappa_beta f, kappa_beta g}
template <class Data>
double gram_min_eigenvalue(const QuasiFreeState& s, const Data& f, const Data& g) {
  Eigen::Matrix2cd G;
  G(0, 0) = two_point(s, f, f);
  G(0, 1) = two_point(s, f, g);
  G(1, 0) = two_point(s, g, f);
  G(1, 1) = two_point(s, g, g);
  return Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd>(G).eigenvalues()[0];
}

// Glued-space evaluation of the massless rest-frame KMS two-point function.
inline cplx two_point_glued(const MomentumFunction& f, const MomentumFunction& g, double beta, double zeta = pi) {
  return inner(kms_glue(f, beta, zeta), kms_glue(g, beta, zeta));
}

}  // namespace kmslab
