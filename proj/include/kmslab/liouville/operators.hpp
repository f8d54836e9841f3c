#pragma once

#include <Eigen/Sparse>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <string>
#include <vector>

#include "../common.hpp"
#include "../csv.hpp"
#include "fock.hpp"

namespace kmslab {

using SpMat = Eigen::SparseMatrix<cplx>;
using Triplets = std::vector<Eigen::Triplet<cplx>>;
using Mat2 = Eigen::Matrix2cd;

namespace detail {

inline SpMat from_triplets(Eigen::Index n, const Triplets& t) {
  SpMat m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  m.makeCompressed();
  return m;
}

inline SpMat identity(Eigen::Index n) {
  SpMat m(n, n);
  m.setIdentity();
  return m;
}

inline SpMat dense2_to_sparse(const Mat2& a) {
  Triplets t;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      if (a(i, j) != cplx(0.0)) t.emplace_back(i, j, a(i, j));
  return from_triplets(2, t);
}

inline SpMat kron(const SpMat& a, const SpMat& b) {
  Triplets t;
  t.reserve(static_cast<std::size_t>(a.nonZeros() * b.nonZeros()));
  for (int ka = 0; ka < a.outerSize(); ++ka)
    for (SpMat::InnerIterator ia(a, ka); ia; ++ia)
      for (int kb = 0; kb < b.outerSize(); ++kb)
        for (SpMat::InnerIterator ib(b, kb); ib; ++ib)
          t.emplace_back(ia.row() * b.rows() + ib.row(), ia.col() * b.cols() + ib.col(), ia.value() * ib.value());
  SpMat m(a.rows() * b.rows(), a.cols() * b.cols());
  m.setFromTriplets(t.begin(), t.end());
  m.makeCompressed();
  return m;
}

// A (x) 1_2 (x) B and 1_2 (x) A (x) B on the doubled detector space
inline SpMat first_factor(const Mat2& a, const SpMat& b) { return kron(dense2_to_sparse(a), kron(identity(2), b)); }
inline SpMat second_factor(const Mat2& a, const SpMat& b) { return kron(identity(2), kron(dense2_to_sparse(a), b)); }

inline double max_abs(const SpMat& m) {
  double r = 0.0;
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it) r = std::max(r, std::abs(it.value()));
  return r;
}

inline void require_hermitian2(const Mat2& g, const char* what) {
  if ((g - g.adjoint()).cwiseAbs().maxCoeff() > 1e-14) throw domain_error(std::string(what) + ": G is not Hermitian");
}

}  // namespace detail

inline double hermiticity_error(const SpMat& m) {
  const SpMat d = m - SpMat(m.adjoint());
  return detail::max_abs(d);
}

// max-row-sum norm, an upper bound on the spectral norm
inline double operator_norm_bound(const SpMat& m) {
  VecR rows = VecR::Zero(m.rows());
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it) rows[it.row()] += std::abs(it.value());
  return m.rows() ? rows.maxCoeff() : 0.0;
}

// (row, col, re, im) text export
inline void write_coordinate(const std::string& path, const SpMat& m) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << "# " << m.rows() << " " << m.cols() << " " << m.nonZeros() << "\n";
  std::vector<std::tuple<Eigen::Index, Eigen::Index, cplx>> e;
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it) e.emplace_back(it.row(), it.col(), it.value());
  std::sort(e.begin(), e.end(), [](auto& a, auto& b) {
    return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
  });
  for (auto& [r, c, v] : e) os << r << " " << c << " " << fmt17(v.real()) << " " << fmt17(v.imag()) << "\n";
}

struct LiouvilleanParts {
  SpMat L_D, dGamma, lambda_I, minus_lambda_JIJ;
};

struct LiouvilleanOperator {
  SpMat matrix;
  LiouvilleanParts parts;
  double lambda = 0.0;
  double beta = 1.0;
  double E = 1.0;
  std::vector<std::string> warnings;

  Eigen::Index dim() const { return matrix.rows(); }
  double norm_bound() const { return operator_norm_bound(matrix); }
};

// (e^{-beta E/2} v+ (x) v+ + v- (x) v-) / sqrt(1 + e^{-beta E}), ordering (++, +-, -+, --)
inline Eigen::Vector4cd detector_gibbs_vector(double E, double beta) {
  detail::require(E > 0.0 && beta > 0.0, "detector_gibbs_vector: need E, beta > 0");
  Eigen::Vector4cd v = Eigen::Vector4cd::Zero();
  const double x = std::exp(-0.5 * beta * E);
  v[0] = x / std::sqrt(1.0 + x * x);
  v[3] = 1.0 / std::sqrt(1.0 + x * x);
  return v;
}

inline Mat2 detector_hamiltonian(double E) {
  Mat2 h = Mat2::Zero();
  h(0, 0) = E;
  return h;
}

// Omega_{D,beta} (x) reservoir vacuum on the full space
inline VecC uncoupled_kms_vector(const TruncatedFock& space, double E, double beta) {
  const Eigen::Vector4cd g = detector_gibbs_vector(E, beta);
  const auto vac = space.index_of(TruncatedFock::Occupation(space.modes(), 0));
  detail::require_shape(vac.has_value(), "uncoupled_kms_vector: vacuum missing from truncation");
  VecC v = VecC::Zero(space.dim());
  for (int k = 0; k < 4; ++k) v[k * space.reservoir_dim() + *vac] = g[k];
  return v;
}

// reservoir dGamma(s), diagonal
inline SpMat second_quantized(const TruncatedFock& space, const VecR& s) {
  detail::require_shape(s.size() == space.modes(), "second_quantized: frequency count != modes");
  Triplets t;
  for (Eigen::Index r = 0; r < space.reservoir_dim(); ++r) {
    double e = 0.0;
    const auto& n = space.occupation(r);
    for (int j = 0; j < space.modes(); ++j) e += n[j] * s[j];
    if (e != 0.0) t.emplace_back(r, r, e);
  }
  return detail::from_triplets(space.reservoir_dim(), t);
}

// Phi(f) = sum_j f_j a_j^* + conj(f_j) a_j, restricted to the truncation
inline SpMat field_operator(const TruncatedFock& space, const VecC& f) {
  detail::require_shape(f.size() == space.modes(), "field_operator: amplitude count != modes");
  Triplets t;
  for (Eigen::Index r = 0; r < space.reservoir_dim(); ++r) {
    auto n = space.occupation(r);
    for (int j = 0; j < space.modes(); ++j) {
      if (f[j] == cplx(0.0)) continue;
      ++n[j];
      if (const auto up = space.index_of(n)) {
        const double amp = std::sqrt(static_cast<double>(n[j]));
        t.emplace_back(*up, r, f[j] * amp);
        t.emplace_back(r, *up, std::conj(f[j]) * amp);
      }
      --n[j];
    }
  }
  return detail::from_triplets(space.reservoir_dim(), t);
}

struct ResonanceReport {
  std::vector<std::string> collisions;
  bool resonant() const { return !collisions.empty(); }
};

// Basis states of L_0 with eigenvalue 0 other than the two detector-diagonal vacua.
inline ResonanceReport find_resonances(const TruncatedFock& space, const VecR& s, double E, double tol = 1e-12,
                                       std::size_t max_listed = 16) {
  ResonanceReport rep;
  std::size_t count = 0;
  const double scale = std::max(E, s.size() ? s.cwiseAbs().maxCoeff() : 0.0);
  for (Eigen::Index r = 0; r < space.reservoir_dim(); ++r) {
    const auto& n = space.occupation(r);
    double e = 0.0;
    int tot = 0;
    for (int j = 0; j < space.modes(); ++j) {
      e += n[j] * s[j];
      tot += n[j];
    }
    if (tot == 0) continue;
    for (double d : {0.0, E, -E}) {
      if (std::abs(e + d) > tol * scale) continue;
      if (++count > max_listed) continue;
      std::string occ;
      for (int j = 0; j < space.modes(); ++j)
        if (n[j]) occ += (occ.empty() ? "" : ",") + std::to_string(j) + ":" + std::to_string(n[j]);
      const char* lvl = d == 0.0 ? "0" : (d > 0 ? "+E" : "-E");
      rep.collisions.push_back("sum n_j s_j " + std::string(lvl) + " = 0 at {" + occ + "}");
    }
  }
  if (count > max_listed) rep.collisions.push_back("... " + std::to_string(count - max_listed) + " more");
  return rep;
}

inline LiouvilleanOperator assemble_L0(const TruncatedFock& space, const VecR& s, double E, double beta = 1.0) {
  detail::require(E > 0.0, "assemble_L0: need E > 0");
  LiouvilleanOperator L;
  L.E = E;
  L.beta = beta;
  const Mat2 h = detector_hamiltonian(E);
  const SpMat one_r = detail::identity(space.reservoir_dim());
  L.parts.L_D = detail::first_factor(h, one_r) - detail::second_factor(h, one_r);
  L.parts.dGamma = detail::kron(detail::identity(4), second_quantized(space, s));
  L.parts.lambda_I = SpMat(space.dim(), space.dim());
  L.parts.minus_lambda_JIJ = SpMat(space.dim(), space.dim());
  L.matrix = L.parts.L_D + L.parts.dGamma;
  L.matrix.makeCompressed();
  const auto res = find_resonances(space, s, E);
  if (res.resonant()) {
    std::string msg = "resonant mode grid:";
    for (const auto& c : res.collisions) msg += " " + c + ";";
    L.warnings.push_back(msg);
  }
  return L;
}

inline LiouvilleanOperator assemble_L0(const TruncatedFock& space, const ReservoirDiscretization& d, double E) {
  return assemble_L0(space, d.s, E, d.beta);
}

struct Coupling {
  SpMat I;    // G (x) 1 (x) Phi(f)
  SpMat JIJ;  // 1 (x) conj(G) (x) Phi(e^{-beta s/2} f)
  SpMat V() const { return I - JIJ; }
};

inline Coupling assemble_coupling(const TruncatedFock& space, const Mat2& G, const ReservoirDiscretization& d) {
  detail::require_hermitian2(G, "assemble_coupling");
  detail::require_shape(d.size() == space.modes(), "assemble_coupling: discretization does not match space");
  Coupling c;
  c.I = detail::first_factor(G, field_operator(space, d.f));
  c.JIJ = detail::second_factor(G.conjugate(), field_operator(space, d.modular_scaled()));
  return c;
}

inline LiouvilleanOperator assemble_liouvillean(const TruncatedFock& space, const ReservoirDiscretization& d,
                                                double E, const Mat2& G, double lambda) {
  LiouvilleanOperator L = assemble_L0(space, d, E);
  const Coupling c = assemble_coupling(space, G, d);
  L.lambda = lambda;
  L.parts.lambda_I = lambda * c.I;
  L.parts.minus_lambda_JIJ = -lambda * c.JIJ;
  L.matrix = L.parts.L_D + L.parts.dGamma + L.parts.lambda_I + L.parts.minus_lambda_JIJ;
  L.matrix.prune(cplx(0.0));
  L.matrix.makeCompressed();
  return L;
}

// J = J_D (x) Gamma(j_F): psi -> U conj(psi), U a signed permutation.
class ModularConjugation {
 public:
  ModularConjugation(const TruncatedFock& space, double zeta = pi) : perm_(space.dim()), phase_(space.dim()) {
    const int m = space.modes();
    const Eigen::Index R = space.reservoir_dim();
    const cplx ph = -std::exp(cplx(0.0, zeta));
    for (Eigen::Index r = 0; r < R; ++r) {
      const auto& n = space.occupation(r);
      TruncatedFock::Occupation pn(m);
      int tot = 0;
      for (int j = 0; j < m; ++j) {
        pn[j] = n[m - 1 - j];
        tot += n[j];
      }
      const auto pr = space.index_of(pn);
      if (!pr) throw structural_error("modular_conjugation: truncation is not closed under s -> -s");
      const cplx p = std::pow(ph, tot);
      for (int d1 = 0; d1 < 2; ++d1)
        for (int d2 = 0; d2 < 2; ++d2) {
          perm_[space.global(d1, d2, r)] = space.global(d2, d1, *pr);
          phase_[space.global(d1, d2, r)] = p;
        }
    }
  }

  static ModularConjugation checked(const TruncatedFock& space, const ReservoirDiscretization& d) {
    d.validate();
    detail::require_shape(d.size() == space.modes(), "modular_conjugation: discretization does not match space");
    return ModularConjugation(space, d.zeta);
  }

  VecC apply(const VecC& psi) const {
    VecC out(psi.size());
    for (Eigen::Index i = 0; i < psi.size(); ++i) out[perm_[i]] = phase_[i] * std::conj(psi[i]);
    return out;
  }

  // J A J as a matrix
  SpMat conjugate(const SpMat& a) const {
    Triplets t;
    t.reserve(a.nonZeros());
    for (int k = 0; k < a.outerSize(); ++k)
      for (SpMat::InnerIterator it(a, k); it; ++it)
        t.emplace_back(perm_[it.row()], perm_[it.col()], phase_[it.row()] * std::conj(it.value() * phase_[it.col()]));
    return detail::from_triplets(a.rows(), t);
  }

  // max entry of J A J + A
  double antisymmetry_error(const SpMat& a) const { return detail::max_abs(SpMat(conjugate(a) + a)); }

 private:
  std::vector<Eigen::Index> perm_;
  std::vector<cplx> phase_;
};

inline Mat2 sigma_x() {
  Mat2 g;
  g << 0, 1, 1, 0;
  return g;
}
inline Mat2 sigma_z() {
  Mat2 g;
  g << 1, 0, 0, -1;
  return g;
}
inline Mat2 raising() {
  Mat2 g = Mat2::Zero();
  g(0, 1) = 1.0;
  return g;
}

}  // namespace kmslab
