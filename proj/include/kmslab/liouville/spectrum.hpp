#pragma once

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <type_traits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "../common.hpp"
#include "../csv.hpp"
#include "../parallel.hpp"
#include "operators.hpp"

namespace kmslab {

struct SpectrumOptions {
  double theta_rel = 1e-8;        // kernel threshold relative to ||L||
  Eigen::Index dense_limit = 4096;
  Eigen::Index partial_dense_limit = 1024;  // dense even when only a few eigenvalues are wanted
  bool full = false;              // all eigenvalues of every block
  int n_eigs = 8;                 // per block, nearest zero, for iterative blocks
  double residual_tol = 1e-9;     // relative to ||L||
  Eigen::Index max_basis = 800;     // Krylov basis columns per block
  bool inertia_check = true;        // Sylvester count of eigenvalues in (-theta, theta)
  int threads = 1;
};

struct SpectrumReport {
  VecR eigenvalues;                 // sorted ascending
  VecR residuals;                   // ||L v - mu v|| for each eigenvalue, same order
  double norm = 0.0;
  double theta = 0.0;
  int kernel_dim = 0;
  Eigen::Index kernel_dim_inertia = 0;  // Sylvester inertia count, -1 if unavailable
  double gap = inf;                 // smallest |mu| above theta
  bool complete = true;             // every block fully diagonalized
  bool ambiguous = false;
  double symmetry_error = nan_value();  // max |mu_k + mu_{n-1-k}| when complete
  std::vector<Eigen::Index> block_sizes;
  std::vector<std::string> warnings;

  static double nan_value() { return std::numeric_limits<double>::quiet_NaN(); }

  double max_residual() const { return residuals.size() ? residuals.maxCoeff() : 0.0; }

  // |mu| sorted ascending
  VecR abs_sorted() const {
    VecR a = eigenvalues.cwiseAbs();
    std::sort(a.begin(), a.end());
    return a;
  }

  // second smallest |mu|, the separation of the split zero pair
  double second_smallest_abs() const {
    const VecR a = abs_sorted();
    return a.size() > 1 ? a[1] : nan_value();
  }

  void write_csv(const std::string& path) const {
    CsvWriter w(path);
    w.header({"index", "eigenvalue"});
    for (Eigen::Index k = 0; k < eigenvalues.size(); ++k) w.row({static_cast<double>(k), eigenvalues[k]});
  }

  std::string to_text() const {
    std::ostringstream os;
    os << "dimension blocks=" << block_sizes.size() << " computed=" << eigenvalues.size()
       << (complete ? " (full)" : " (partial)") << "\n";
    os << "norm_bound=" << fmt17(norm) << " theta=" << fmt17(theta) << "\n";
    os << "kernel_dim=" << kernel_dim << " gap=" << fmt17(gap) << "\n";
    if (kernel_dim_inertia >= 0) os << "kernel_dim_inertia=" << kernel_dim_inertia << "\n";
    os << "max_residual=" << fmt17(max_residual()) << "\n";
    if (complete) os << "symmetry_error=" << fmt17(symmetry_error) << "\n";
    for (const auto& w : warnings) os << "warning: " << w << "\n";
    return os.str();
  }
};

namespace detail {

// connected components of the sparsity graph
inline std::vector<std::vector<Eigen::Index>> components(const SpMat& m) {
  const Eigen::Index n = m.rows();
  std::vector<Eigen::Index> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](Eigen::Index x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it) {
      const auto a = find(it.row()), b = find(it.col());
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  std::vector<std::vector<Eigen::Index>> out;
  std::vector<Eigen::Index> label(n, -1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = find(i);
    if (label[r] < 0) {
      label[r] = static_cast<Eigen::Index>(out.size());
      out.emplace_back();
    }
    out[label[r]].push_back(i);
  }
  return out;
}

template <class Scalar>
Eigen::SparseMatrix<Scalar> sub_block(const SpMat& m, const std::vector<Eigen::Index>& idx) {
  std::vector<Eigen::Index> local(m.rows(), -1);
  for (std::size_t k = 0; k < idx.size(); ++k) local[idx[k]] = static_cast<Eigen::Index>(k);
  std::vector<Eigen::Triplet<Scalar>> t;
  for (auto c : idx)
    for (SpMat::InnerIterator it(m, c); it; ++it) {
      if constexpr (std::is_same_v<Scalar, double>)
        t.emplace_back(local[it.row()], local[c], it.value().real());
      else
        t.emplace_back(local[it.row()], local[c], it.value());
    }
  const auto n = static_cast<Eigen::Index>(idx.size());
  Eigen::SparseMatrix<Scalar> b(n, n);
  b.setFromTriplets(t.begin(), t.end());
  b.makeCompressed();
  return b;
}

struct BlockSpectrum {
  std::vector<double> mu, res;
  bool complete = true;
  Eigen::Index inertia_kernel = -1;
  std::string warning;
};

template <class Scalar>
BlockSpectrum dense_block(const Eigen::SparseMatrix<Scalar>& b) {
  using M = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const M d(b);
  Eigen::SelfAdjointEigenSolver<M> es(d);
  if (es.info() != Eigen::Success) throw numerical_error("spectrum_scan: dense eigensolver failed");
  BlockSpectrum out;
  for (Eigen::Index k = 0; k < d.rows(); ++k) {
    out.mu.push_back(es.eigenvalues()[k]);
    out.res.push_back((d * es.eigenvectors().col(k) - es.eigenvalues()[k] * es.eigenvectors().col(k)).norm());
  }
  return out;
}

template <class Scalar>
Eigen::SparseMatrix<Scalar> shifted(const Eigen::SparseMatrix<Scalar>& b, double shift) {
  Eigen::SparseMatrix<Scalar> s = b;
  for (Eigen::Index i = 0; i < b.rows(); ++i) s.coeffRef(i, i) -= Scalar(shift);
  s.makeCompressed();
  return s;
}

// number of negative pivots of an LDL^T factorization of b - shift
template <class Scalar>
Eigen::Index negative_count(const Eigen::SparseMatrix<Scalar>& b, double shift) {
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<Scalar>> f(shifted(b, shift));
  if (f.info() != Eigen::Success) return -1;
  Eigen::Index neg = 0;
  for (Eigen::Index i = 0; i < b.rows(); ++i) neg += std::real(f.vectorD()[i]) < 0.0;
  return neg;
}

// Block shift-invert Krylov for the k eigenvalues nearest zero, Rayleigh-Ritz on
// the inverse, residuals measured on the block itself.
template <class Scalar>
BlockSpectrum iterative_block(const Eigen::SparseMatrix<Scalar>& b, int k, double norm, const SpectrumOptions& opt) {
  using M = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index n = b.rows();
  const Eigen::Index bs = std::min<Eigen::Index>(n, std::max(k, 4));
  const Eigen::Index m_max = std::min<Eigen::Index>(n, std::max<Eigen::Index>(opt.max_basis, 4 * bs));
  const double sigma = 1e-7 * norm * (std::sqrt(5.0) - 1.0);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<Scalar>> f(shifted(b, sigma));
  if (f.info() != Eigen::Success) throw numerical_error("spectrum_scan: sparse factorization failed");

  M Q(n, m_max), W(n, m_max);
  M blk(n, bs);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < bs; ++j) {
      const double a = std::sin(1.0 + 0.7 * i + 1.3 * j * j + 0.11 * i * j);
      if constexpr (std::is_same_v<Scalar, double>)
        blk(i, j) = a;
      else
        blk(i, j) = Scalar(a, std::cos(0.3 + 0.9 * i - 0.5 * j));
    }
  Eigen::Index m = 0;
  BlockSpectrum out;
  out.complete = false;
  while (true) {
    // orthogonalize the new block against the basis, twice, then internally
    for (int pass = 0; pass < 2; ++pass)
      if (m > 0) blk -= Q.leftCols(m) * (Q.leftCols(m).adjoint() * blk);
    Eigen::ColPivHouseholderQR<M> qr(blk);
    const Eigen::Index r = std::min<Eigen::Index>(qr.rank(), m_max - m);
    if (r == 0) break;
    const M qb = (qr.householderQ() * M::Identity(n, bs)).leftCols(r);
    Q.middleCols(m, r) = qb;
    W.middleCols(m, r) = f.solve(qb);
    blk = W.middleCols(m, r);
    if (blk.cols() < bs) blk.conservativeResize(n, bs), blk.rightCols(bs - r).setZero();
    m += r;
    const bool last = m >= m_max || r < bs;
    if (m < 2 * bs && !last) continue;
    M H = Q.leftCols(m).adjoint() * W.leftCols(m);
    H = (0.5 * (H + H.adjoint())).eval();
    Eigen::SelfAdjointEigenSolver<M> es(H);
    std::vector<Eigen::Index> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto x, auto y) {
      return std::abs(es.eigenvalues()[x]) > std::abs(es.eigenvalues()[y]);
    });
    const Eigen::Index kk = std::min<Eigen::Index>(k, m);
    out.mu.clear();
    out.res.clear();
    bool ok = true;
    for (Eigen::Index j = 0; j < kk; ++j) {
      const auto x = (Q.leftCols(m) * es.eigenvectors().col(order[j])).eval();
      const auto lx = (b * x).eval();
      const double mu = std::real(x.dot(lx)) / x.squaredNorm();
      const double res = (lx - mu * x).norm() / x.norm();
      out.mu.push_back(mu);
      out.res.push_back(res);
      if (res > opt.residual_tol * norm) ok = false;
    }
    if (ok) {
      out.complete = m == n;
      return out;
    }
    if (last) break;
  }
  out.warning = "iterative eigensolver exhausted its basis; residuals above tolerance";
  return out;
}

inline bool is_real(const SpMat& m) {
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it)
      if (it.value().imag() != 0.0) return false;
  return true;
}

}  // namespace detail

inline SpectrumReport spectrum_scan(const SpMat& L, const SpectrumOptions& opt = {}) {
  detail::require_shape(L.rows() == L.cols(), "spectrum_scan: matrix not square");
  const double herm = hermiticity_error(L);
  SpectrumReport rep;
  rep.norm = operator_norm_bound(L);
  if (herm > 1e-13 * std::max(1.0, rep.norm)) throw domain_error("spectrum_scan: matrix is not Hermitian");
  rep.theta = opt.theta_rel * rep.norm;
  const auto blocks = detail::components(L);
  const bool real = detail::is_real(L);
  std::vector<detail::BlockSpectrum> parts(blocks.size());
  parallel_for(blocks.size(), opt.threads, [&](std::size_t c) {
    const auto& idx = blocks[c];
    const auto n = static_cast<Eigen::Index>(idx.size());
    const bool dense = n <= opt.dense_limit && (opt.full || n <= opt.partial_dense_limit);
    auto run = [&](const auto& b) {
      if (dense) return detail::dense_block(b);
      Eigen::Index inertia = -1;
      if (opt.inertia_check) {
        const auto lo = detail::negative_count(b, -rep.theta), hi = detail::negative_count(b, rep.theta);
        if (lo >= 0 && hi >= 0) inertia = hi - lo;
      }
      const int k = static_cast<int>(std::max<Eigen::Index>(opt.n_eigs, inertia + opt.n_eigs / 2));
      auto r = detail::iterative_block(b, k, rep.norm, opt);
      r.inertia_kernel = inertia;
      return r;
    };
    parts[c] = real ? run(detail::sub_block<double>(L, idx)) : run(detail::sub_block<cplx>(L, idx));
  });
  std::vector<std::pair<double, double>> all;
  for (std::size_t c = 0; c < parts.size(); ++c) {
    rep.block_sizes.push_back(static_cast<Eigen::Index>(blocks[c].size()));
    rep.complete = rep.complete && parts[c].complete;
    if (!parts[c].warning.empty()) rep.warnings.push_back(parts[c].warning);
    for (std::size_t k = 0; k < parts[c].mu.size(); ++k) all.emplace_back(parts[c].mu[k], parts[c].res[k]);
    if (!parts[c].complete && rep.kernel_dim_inertia >= 0) {
      if (parts[c].inertia_kernel < 0)
        rep.kernel_dim_inertia = -1;
      else
        rep.kernel_dim_inertia += parts[c].inertia_kernel;
    }
    if (parts[c].complete && rep.kernel_dim_inertia >= 0)
      for (double mu : parts[c].mu) rep.kernel_dim_inertia += std::abs(mu) < rep.theta;
  }
  std::sort(all.begin(), all.end());
  rep.eigenvalues.resize(all.size());
  rep.residuals.resize(all.size());
  for (std::size_t k = 0; k < all.size(); ++k) {
    rep.eigenvalues[k] = all[k].first;
    rep.residuals[k] = all[k].second;
    const double a = std::abs(all[k].first);
    if (a < rep.theta)
      ++rep.kernel_dim;
    else
      rep.gap = std::min(rep.gap, a);
    if (a > 1e-2 * rep.theta && a < 1e2 * rep.theta) rep.ambiguous = true;
  }
  if (rep.kernel_dim_inertia >= 0 && rep.kernel_dim_inertia != rep.kernel_dim)
    rep.warnings.push_back("inertia count " + std::to_string(rep.kernel_dim_inertia) +
                           " disagrees with computed kernel dimension " + std::to_string(rep.kernel_dim));
  if (rep.ambiguous)
    rep.warnings.push_back("kernel threshold lies inside an eigenvalue cluster (theta=" + fmt17(rep.theta) +
                           ", gap=" + fmt17(rep.gap) + ")");
  if (rep.max_residual() > opt.residual_tol * rep.norm)
    rep.warnings.push_back("eigenvalue residual " + fmt17(rep.max_residual()) + " above contract");
  if (rep.complete) {
    const auto n = rep.eigenvalues.size();
    rep.symmetry_error = 0.0;
    for (Eigen::Index k = 0; k < n; ++k)
      rep.symmetry_error = std::max(rep.symmetry_error, std::abs(rep.eigenvalues[k] + rep.eigenvalues[n - 1 - k]));
  }
  return rep;
}

inline SpectrumReport spectrum_scan(const LiouvilleanOperator& L, const SpectrumOptions& opt = {}) {
  SpectrumReport r = spectrum_scan(L.matrix, opt);
  r.warnings.insert(r.warnings.begin(), L.warnings.begin(), L.warnings.end());
  return r;
}

struct PowerFit {
  double exponent = 0.0;
  double prefactor = 0.0;
};

// least squares log y = log c + p log x
inline PowerFit fit_power_law(const VecR& x, const VecR& y) {
  detail::require_shape(x.size() == y.size() && x.size() >= 2, "fit_power_law: need two or more points");
  const VecR lx = x.array().log(), ly = y.array().log();
  const double mx = lx.mean(), my = ly.mean();
  const double sxx = (lx.array() - mx).square().sum();
  const double sxy = ((lx.array() - mx) * (ly.array() - my)).sum();
  PowerFit f;
  f.exponent = sxy / sxx;
  f.prefactor = std::exp(my - f.exponent * mx);
  return f;
}

}  // namespace kmslab
