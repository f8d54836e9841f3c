#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"
#include "csv.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"
#include "quasifree.hpp"

namespace kmslab {

// Lab-frame momentum cell q in [q_lo, q_hi], cos(angle to x1) in [c_lo, c_hi], full azimuth.
struct ModeCell {
  double q_lo, q_hi, c_lo, c_hi;
  double volume() const { return 2.0 * pi * (std::pow(q_hi, 3) - std::pow(q_lo, 3)) / 3.0 * (c_hi - c_lo); }
};

enum class ModeOrdering { natural, weight };

// Normalized cell indicators phi_k; the phase-space pair of mode k is
// (kappa^{-1} phi_k, kappa^{-1} i phi_k).
struct ModeFamily {
  std::vector<ModeCell> cells;
  std::string rule;

  std::size_t size() const { return cells.size(); }

  ModeFamily prefix(std::size_t n) const {
    return {std::vector<ModeCell>(cells.begin(), cells.begin() + std::min(n, cells.size())), rule};
  }

  MatR gram() const {
    const auto n = static_cast<Eigen::Index>(cells.size());
    MatR g = MatR::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        const auto& a = cells[i];
        const auto& b = cells[j];
        const ModeCell x{std::max(a.q_lo, b.q_lo), std::min(a.q_hi, b.q_hi), std::max(a.c_lo, b.c_lo),
                         std::min(a.c_hi, b.c_hi)};
        if (x.q_lo < x.q_hi && x.c_lo < x.c_hi) g(i, j) = x.volume() / std::sqrt(a.volume() * b.volume());
      }
    return g;
  }

  void validate() const {
    for (const auto& c : cells)
      detail::require_shape(0.0 <= c.q_lo && c.q_lo < c.q_hi && -1.0 <= c.c_lo && c.c_lo < c.c_hi && c.c_hi <= 1.0,
                            "ModeFamily: malformed cell");
    const MatR g = gram();
    const double err = (g - MatR::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
    detail::require_shape(cells.empty() || err < 1e-10, "ModeFamily: Gram matrix is not the identity");
  }

  void write_csv(const std::string& path) const {
    CsvWriter w(path);
    w.header({"index", "q_lo", "q_hi", "c_lo", "c_hi"});
    for (std::size_t k = 0; k < cells.size(); ++k)
      w.row({static_cast<double>(k), cells[k].q_lo, cells[k].q_hi, cells[k].c_lo, cells[k].c_hi});
  }
};

// n_q uniform shells on [s_lo, s_hi] times n_c uniform direction bins
inline ModeFamily uniform_cells(double s_lo, double s_hi, int n_q, int n_c = 1) {
  detail::require(0.0 <= s_lo && s_lo < s_hi && n_q >= 1 && n_c >= 1, "uniform_cells: bad range or counts");
  ModeFamily f;
  const double hq = (s_hi - s_lo) / n_q, hc = 2.0 / n_c;
  for (int i = 0; i < n_q; ++i)
    for (int j = 0; j < n_c; ++j) f.cells.push_back({s_lo + i * hq, s_lo + (i + 1) * hq, -1.0 + j * hc, -1.0 + (j + 1) * hc});
  std::ostringstream os;
  os << "uniform q in [" << fmt17(s_lo) << ", " << fmt17(s_hi) << "] x " << n_q << ", c bins " << n_c;
  f.rule = os.str();
  return f;
}

// <a^*(phi) a(phi)> for a cell: average of the lab occupation over q^2 dq dc
inline double cell_occupation(const QuasiFreeState& st, const ModeCell& c, int order = 16) {
  if (st.kind == StateKind::vacuum) return 0.0;
  const Nodes nq = gl_panels(c.q_lo, c.q_hi, 1, order), nc = gl_panels(c.c_lo, c.c_hi, 1, order);
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < nq.x.size(); ++i)
    for (Eigen::Index j = 0; j < nc.x.size(); ++j) {
      const double w = nq.w[i] * nc.w[j] * nq.x[i] * nq.x[i];
      num += w * st.occupation_lab(nq.x[i], nc.x[j]);
      den += w;
    }
  return num / den;
}

// Two-point data on the quadratures R = (Q_1..Q_n, P_1..P_n): <R_i R_j> = S_ij + i A_ij.
struct RestrictedGaussianState {
  MatR S;
  MatR A;
  int cutoff = 12;

  Eigen::Index modes() const { return S.rows() / 2; }

  void validate() const {
    detail::require_shape(S.rows() == S.cols() && A.rows() == S.rows() && A.cols() == S.cols() && S.rows() % 2 == 0,
                          "RestrictedGaussianState: shape mismatch");
    detail::require((S - S.transpose()).cwiseAbs().maxCoeff() < 1e-12, "RestrictedGaussianState: S not symmetric");
    detail::require((A + A.transpose()).cwiseAbs().maxCoeff() < 1e-12, "RestrictedGaussianState: A not antisymmetric");
    const MatC m = S.cast<cplx>() + cplx(0.0, 1.0) * A.cast<cplx>();
    Eigen::SelfAdjointEigenSolver<MatC> es(m);
    if (es.eigenvalues().minCoeff() < -1e-10) throw domain_error("restrict_state: S + iA is not positive (uncertainty violation)");
  }

  static RestrictedGaussianState thermal_product(const std::vector<double>& nbar, int cutoff) {
    const auto n = static_cast<Eigen::Index>(nbar.size());
    RestrictedGaussianState g{MatR::Zero(2 * n, 2 * n), MatR::Zero(2 * n, 2 * n), cutoff};
    for (Eigen::Index k = 0; k < n; ++k) {
      g.S(k, k) = g.S(n + k, n + k) = 2.0 * nbar[k] + 1.0;
      g.A(k, n + k) = 1.0;
      g.A(n + k, k) = -1.0;
    }
    return g;
  }
};

inline RestrictedGaussianState restricted_covariance(const QuasiFreeState& st, const ModeFamily& fam, int cutoff) {
  fam.validate();
  std::vector<double> nbar;
  for (const auto& c : fam.cells) nbar.push_back(cell_occupation(st, c));
  return RestrictedGaussianState::thermal_product(nbar, cutoff);
}

// smallest per-mode cutoff with thermal tail (nbar/(nbar+1))^{c+1} below tol
inline int auto_cutoff(double nbar, int minimum = 12, double tol = 1e-12) {
  if (nbar <= 0.0) return minimum;
  const double r = nbar / (nbar + 1.0);
  return std::max(minimum, static_cast<int>(std::ceil(std::log(tol) / std::log(r))) - 1);
}

namespace detail {

// Q = a + a^*, P = -i(a - a^*) on n modes with per-mode dimension d
inline std::vector<MatC> quadratures(Eigen::Index n, int d) {
  MatC a = MatC::Zero(d, d);
  for (int k = 1; k < d; ++k) a(k - 1, k) = std::sqrt(static_cast<double>(k));
  const MatC q1 = a + a.adjoint();
  const MatC p1 = cplx(0.0, -1.0) * (a - a.adjoint());
  Eigen::Index dim = 1;
  for (Eigen::Index k = 0; k < n; ++k) dim *= d;
  auto embed = [&](const MatC& op, Eigen::Index mode) {
    MatC out = MatC::Identity(1, 1);
    for (Eigen::Index k = 0; k < n; ++k) {
      const MatC f = k == mode ? op : MatC::Identity(d, d);
      MatC t(out.rows() * d, out.cols() * d);
      for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (Eigen::Index j = 0; j < out.cols(); ++j) t.block(i * d, j * d, d, d) = out(i, j) * f;
      out = t;
    }
    return out;
  };
  std::vector<MatC> r;
  for (Eigen::Index k = 0; k < n; ++k) r.push_back(embed(q1, k));
  for (Eigen::Index k = 0; k < n; ++k) r.push_back(embed(p1, k));
  return r;
}

// indices of the cutoff^n basis inside the (cutoff+2)^n space
inline std::vector<Eigen::Index> truncation_indices(Eigen::Index n, int keep, int big) {
  std::vector<Eigen::Index> idx{0};
  for (Eigen::Index k = 0; k < n; ++k) {
    std::vector<Eigen::Index> next;
    for (auto i : idx)
      for (int v = 0; v < keep; ++v) next.push_back(i * big + v);
    idx = next;
  }
  return idx;
}

inline MatC restrict_to(const MatC& m, const std::vector<Eigen::Index>& idx) {
  const auto n = static_cast<Eigen::Index>(idx.size());
  MatC out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = m(idx[i], idx[j]);
  return out;
}

}  // namespace detail

struct DensityMatrix {
  MatC rho;
  int cutoff = 0;
  Eigen::Index modes = 0;
  double moment_error = 0.0;  // max |<R_i R_j> - (S + iA)_ij|
};

// Gaussian density matrix rho ~ exp(-R^T H R / 4), H = 2 i A arccoth(i S A), on
// (cutoff+1)^n Fock states. Quadratic operators are formed with two spare levels.
inline DensityMatrix restrict_state(const RestrictedGaussianState& g) {
  g.validate();
  const Eigen::Index n = g.modes();
  detail::require(g.cutoff >= 2, "restrict_state: cutoff must be at least 2");
  const MatC isa = cplx(0.0, 1.0) * (g.S * g.A).cast<cplx>();
  Eigen::ComplexEigenSolver<MatC> es(isa);
  VecC f(es.eigenvalues().size());
  for (Eigen::Index k = 0; k < f.size(); ++k) {
    const double nu = es.eigenvalues()[k].real();
    if (std::abs(nu) < 1.0 - 1e-10) throw domain_error("restrict_state: symplectic eigenvalue below 1 (uncertainty violation)");
    const double a = std::max(std::abs(nu), 1.0 + 1e-14);
    f[k] = std::copysign(0.5 * std::log((a + 1.0) / (a - 1.0)), nu);
  }
  const MatC arccoth = es.eigenvectors() * f.asDiagonal() * es.eigenvectors().inverse();
  const MatR H = (cplx(0.0, 2.0) * g.A.cast<cplx>() * arccoth).real();

  double nbar_max = 0.0;
  for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k)
    nbar_max = std::max(nbar_max, 0.5 * (std::abs(es.eigenvalues()[k].real()) - 1.0));
  const int cutoff = auto_cutoff(nbar_max, g.cutoff);
  detail::require(std::pow(cutoff + 3.0, n) <= 1500.0, "restrict_state: truncated space too large for dense realization");
  const int keep = cutoff + 1, big = cutoff + 3;
  const auto R = detail::quadratures(n, big);
  MatC K = MatC::Zero(R[0].rows(), R[0].cols());
  for (Eigen::Index i = 0; i < 2 * n; ++i)
    for (Eigen::Index j = 0; j < 2 * n; ++j)
      if (H(i, j) != 0.0) K += 0.25 * H(i, j) * R[i] * R[j];
  const auto idx = detail::truncation_indices(n, keep, big);
  MatC Kt = detail::restrict_to(K, idx);
  Kt = 0.5 * (Kt + Kt.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<MatC> ek(Kt);
  const double e0 = ek.eigenvalues().minCoeff();
  const VecR w = (-(ek.eigenvalues().array() - e0)).exp();
  DensityMatrix out;
  out.rho = ek.eigenvectors() * w.cast<cplx>().asDiagonal() * ek.eigenvectors().adjoint();
  out.rho /= out.rho.trace().real();
  out.cutoff = cutoff;
  out.modes = n;
  for (Eigen::Index i = 0; i < 2 * n; ++i)
    for (Eigen::Index j = 0; j < 2 * n; ++j) {
      const MatC rr = detail::restrict_to(R[i] * R[j], idx);
      const cplx m = (out.rho * rr).trace();
      out.moment_error = std::max(out.moment_error, std::abs(m - cplx(g.S(i, j), g.A(i, j))));
    }
  return out;
}

inline double purity(const DensityMatrix& d) { return (d.rho * d.rho).trace().real(); }

// Uhlmann fidelity tr sqrt(sqrt(rho) sigma sqrt(rho))
inline double fidelity(const MatC& rho, const MatC& sigma, double psd_tol = 1e-10) {
  detail::require_shape(rho.rows() == sigma.rows() && rho.cols() == sigma.cols() && rho.rows() == rho.cols(),
                        "fidelity: shape mismatch");
  Eigen::SelfAdjointEigenSolver<MatC> er(0.5 * (rho + rho.adjoint()));
  Eigen::SelfAdjointEigenSolver<MatC> es(0.5 * (sigma + sigma.adjoint()));
  if (er.eigenvalues().minCoeff() < -psd_tol || es.eigenvalues().minCoeff() < -psd_tol)
    throw domain_error("fidelity: input is not positive semidefinite");
  const VecR sq = er.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const MatC root = er.eigenvectors() * sq.cast<cplx>().asDiagonal() * er.eigenvectors().adjoint();
  const MatC m = root * sigma * root;
  Eigen::SelfAdjointEigenSolver<MatC> em(0.5 * (m + m.adjoint()));
  return std::min(1.0, em.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum());
}

// fidelity of single-mode thermal states with occupations n1, n2
inline double thermal_fidelity(double n1, double n2) {
  return 1.0 / (std::sqrt((n1 + 1.0) * (n2 + 1.0)) - std::sqrt(n1 * n2));
}

struct OverlapSeries {
  std::vector<double> fidelity;    // F_n, n = 1..N
  std::vector<double> per_mode;    // single-mode factors in family order
  std::optional<std::size_t> n_star;  // first n with F_n < threshold
  double threshold = 0.01;
  double log_slope = 0.0;          // least-squares slope of ln F_n against n
  double monotonicity_violation = 0.0;
  std::string family_rule;

  void write_csv(const std::string& path) const {
    CsvWriter w(path);
    w.header({"n", "fidelity"});
    for (std::size_t k = 0; k < fidelity.size(); ++k) w.row({static_cast<double>(k + 1), fidelity[k]});
  }

  std::string summary() const {
    std::ostringstream os;
    os << "family=" << family_rule << "\n";
    os << "modes=" << fidelity.size() << "\n";
    os << "F_final=" << fmt17(fidelity.empty() ? 1.0 : fidelity.back()) << "\n";
    os << "log_slope=" << fmt17(log_slope) << "\n";
    if (n_star)
      os << "n_star=" << *n_star << "\n";
    else
      os << "n_star=none (F_n stays above " << fmt17(threshold) << ")\n";
    return os.str();
  }
};

// F_n for the nested prefixes of the family. Restrictions of translation-invariant
// quasi-free states to disjoint momentum cells are products of thermal modes.
inline OverlapSeries overlap_decay(const QuasiFreeState& s1, const QuasiFreeState& s2, const ModeFamily& fam,
                                   ModeOrdering ordering = ModeOrdering::natural, double threshold = 0.01,
                                   int threads = 1) {
  s1.validate();
  s2.validate();
  fam.validate();
  OverlapSeries out;
  out.threshold = threshold;
  std::vector<double> f(fam.size());
  parallel_for(fam.size(), threads, [&](std::size_t k) {
    f[k] = std::min(1.0, thermal_fidelity(cell_occupation(s1, fam.cells[k]), cell_occupation(s2, fam.cells[k])));
  });
  std::vector<std::size_t> order(fam.size());
  std::iota(order.begin(), order.end(), 0);
  if (ordering == ModeOrdering::weight)
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return f[a] < f[b]; });
  out.family_rule = fam.rule + (ordering == ModeOrdering::weight ? ", ordered by fidelity loss" : "");
  double acc = 1.0;
  for (auto k : order) {
    out.per_mode.push_back(f[k]);
    const double prev = acc;
    acc *= f[k];
    out.monotonicity_violation = std::max(out.monotonicity_violation, acc - prev);
    out.fidelity.push_back(acc);
    if (!out.n_star && acc < threshold) out.n_star = out.fidelity.size();
  }
  if (out.fidelity.size() >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double m = static_cast<double>(out.fidelity.size());
    for (std::size_t k = 0; k < out.fidelity.size(); ++k) {
      const double x = static_cast<double>(k + 1), y = std::log(std::max(out.fidelity[k], 1e-300));
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    out.log_slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  }
  return out;
}

// brute-force F for a prefix: realize both restrictions as density matrices
inline double realized_fidelity(const QuasiFreeState& s1, const QuasiFreeState& s2, const ModeFamily& fam,
                                int cutoff) {
  DensityMatrix a = restrict_state(restricted_covariance(s1, fam, cutoff));
  const DensityMatrix b = restrict_state(restricted_covariance(s2, fam, a.cutoff));
  if (b.cutoff > a.cutoff) a = restrict_state(restricted_covariance(s1, fam, b.cutoff));
  return fidelity(a.rho, b.rho);
}

}  // namespace kmslab
