#pragma once

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>
#include <vector>

#include "../common.hpp"
#include "operators.hpp"

namespace kmslab {

struct KrylovOptions {
  int max_dim = 40;
  double tol = 1e-12;    // relative to the input norm, per unit of z
  int max_steps = 100000;
};

struct KrylovStats {
  int steps = 0;
  int matvecs = 0;
  double error_estimate = 0.0;
};

// Sparse Hermitian matrix prepared for repeated products. Real matrices act on
// the real and imaginary parts at once.
class HermitianOperator {
 public:
  explicit HermitianOperator(const SpMat& a) : complex_(a) {
    detail::require_shape(a.rows() == a.cols(), "HermitianOperator: matrix not square");
    real_ = true;
    for (int k = 0; k < a.outerSize() && real_; ++k)
      for (SpMat::InnerIterator it(a, k); it; ++it)
        if (it.value().imag() != 0.0) {
          real_ = false;
          break;
        }
    if (real_) re_ = a.real();
  }

  Eigen::Index rows() const { return complex_.rows(); }
  bool real() const { return real_; }

  void apply(const VecC& x, VecC& y) const {
    y.resize(x.size());
    if (!real_) {
      y.noalias() = complex_ * x;
      return;
    }
    using Pairs = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;
    Eigen::Map<const Pairs> in(reinterpret_cast<const double*>(x.data()), x.size(), 2);
    Eigen::Map<Pairs> out(reinterpret_cast<double*>(y.data()), y.size(), 2);
    out.noalias() = re_ * in;
  }

 private:
  const SpMat& complex_;
  Eigen::SparseMatrix<double, Eigen::RowMajor> re_;
  bool real_ = false;
};

namespace detail {

// exp(z T) e_1 for the leading m x m block of the Lanczos tridiagonal
inline VecC tridiagonal_expv(const VecR& alpha, const VecR& beta, int m, cplx z) {
  MatR T = MatR::Zero(m, m);
  for (int k = 0; k < m; ++k) {
    T(k, k) = alpha[k];
    if (k + 1 < m) T(k, k + 1) = T(k + 1, k) = beta[k];
  }
  Eigen::SelfAdjointEigenSolver<MatR> es(T);
  VecC c(m);
  for (int k = 0; k < m; ++k) c[k] = std::exp(z * es.eigenvalues()[k]) * es.eigenvectors()(0, k);
  return es.eigenvectors().cast<cplx>() * c;
}

// One Lanczos step of exp(z A) v with full reorthogonalization. The basis grows
// until the a-posteriori error meets tol or max_dim is reached; returns false if
// the error still exceeds tol.
inline bool lanczos_expv(const HermitianOperator& A, const VecC& v, cplx z, const KrylovOptions& opt, VecC& out,
                         double& err, int& matvecs) {
  const double nv = v.norm();
  if (nv == 0.0) {
    out = v;
    err = 0.0;
    return true;
  }
  const double target = opt.tol * nv * std::max(1.0, std::abs(z));
  const int m_max = static_cast<int>(std::min<Eigen::Index>(opt.max_dim, A.rows()));
  MatC V(A.rows(), m_max + 1);
  VecR alpha(m_max), beta(m_max);
  V.col(0) = v / nv;
  VecC w, y;
  int m = 0;
  for (; m < m_max; ++m) {
    A.apply(V.col(m), w);
    ++matvecs;
    // classical Gram-Schmidt, applied twice
    for (int pass = 0; pass < 2; ++pass) {
      const VecC c = V.leftCols(m + 1).adjoint() * w;
      if (pass == 0) alpha[m] = c[m].real();
      w.noalias() -= V.leftCols(m + 1) * c;
    }
    beta[m] = w.norm();
    if (beta[m] < 1e-14 * std::max(1.0, std::abs(alpha[m]))) {
      ++m;
      y = tridiagonal_expv(alpha, beta, m, z);
      err = 0.0;
      out = nv * (V.leftCols(m) * y);
      return true;
    }
    V.col(m + 1) = w / beta[m];
    if ((m + 1) % 5 == 0 || m + 1 == m_max) {
      y = tridiagonal_expv(alpha, beta, m + 1, z);
      err = nv * beta[m] * std::abs(y[m]);
      if (err <= target) {
        ++m;
        break;
      }
    }
  }
  out = nv * (V.leftCols(m) * y);
  return err <= target;
}

}  // namespace detail

// exp(z A) v for Hermitian A, adaptive substeps
inline VecC expm_multiply(const HermitianOperator& A, const VecC& v, cplx z, const KrylovOptions& opt = {},
                          KrylovStats* stats = nullptr) {
  detail::require_shape(A.rows() == v.size(), "expm_multiply: shape mismatch");
  VecC cur = v;
  double done = 0.0;
  double frac = 1.0;
  KrylovStats st;
  while (done < 1.0) {
    frac = std::min(frac, 1.0 - done);
    VecC next;
    double err = 0.0;
    if (detail::lanczos_expv(A, cur, frac * z, opt, next, err, st.matvecs)) {
      cur = std::move(next);
      done += frac;
      st.error_estimate += err;
      ++st.steps;
      frac *= 1.5;
    } else {
      frac *= 0.5;
      if (frac < 1e-12 || st.steps + 1 > opt.max_steps)
        throw numerical_error("expm_multiply: Krylov propagation did not converge (step fraction " +
                              std::to_string(frac) + ", error " + std::to_string(err) + ")");
    }
  }
  if (stats) *stats = st;
  return cur;
}

inline VecC expm_multiply(const SpMat& A, const VecC& v, cplx z, const KrylovOptions& opt = {},
                          KrylovStats* stats = nullptr) {
  return expm_multiply(HermitianOperator(A), v, z, opt, stats);
}

}  // namespace kmslab
