#pragma once

#include <Eigen/Eigenvalues>

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "../common.hpp"
#include "../csv.hpp"
#include "../parallel.hpp"
#include "fock.hpp"
#include "krylov.hpp"
#include "operators.hpp"

namespace kmslab {

struct PerturbedKmsResult {
  VecC vector;
  double distance = 0.0;   // ||Omega_lambda - Omega_0||
  double slope = 0.0;      // distance / |lambda|
  KrylovStats stats;
};

// e^{-beta (L_0 + lambda I)/2} Omega_0, normalized
inline PerturbedKmsResult perturbed_kms_vector(const LiouvilleanOperator& L0, const SpMat& I, double lambda,
                                               const VecC& omega0, const KrylovOptions& opt = {}) {
  detail::require_shape(I.rows() == L0.dim() && omega0.size() == L0.dim(), "perturbed_kms_vector: shape mismatch");
  PerturbedKmsResult r;
  if (lambda == 0.0) {
    r.vector = omega0;
    return r;
  }
  const SpMat K = L0.matrix + lambda * I;
  VecC v = expm_multiply(K, omega0, cplx(-0.5 * L0.beta, 0.0), opt, &r.stats);
  const double n = v.norm();
  if (!std::isfinite(n) || n == 0.0) throw numerical_error("perturbed_kms_vector: exponential action failed");
  r.vector = v / n;
  r.distance = (r.vector - omega0).norm();
  r.slope = r.distance / std::abs(lambda);
  return r;
}

struct EvolveOptions {
  Eigen::Index dense_limit = 1500;
  KrylovOptions krylov{};
  double norm_tol = 1e-10;
  int threads = 1;
};

struct StateTrajectory {
  std::vector<double> t;
  std::vector<VecC> states;
  double norm_drift = 0.0;
  double energy_drift = 0.0;
  std::string method;
};

// psi(t) = e^{-i L t} psi0 on an increasing grid
inline StateTrajectory evolve(const SpMat& L, const VecC& psi0, const std::vector<double>& tgrid,
                              const EvolveOptions& opt = {}) {
  detail::require_shape(L.rows() == psi0.size(), "evolve: shape mismatch");
  for (std::size_t k = 1; k < tgrid.size(); ++k)
    detail::require(tgrid[k] > tgrid[k - 1], "evolve: time grid must be increasing");
  StateTrajectory tr;
  tr.t = tgrid;
  tr.states.resize(tgrid.size());
  const double n0 = psi0.norm();
  const double e0 = psi0.dot(L * psi0).real();
  if (L.rows() <= opt.dense_limit) {
    tr.method = "dense";
    Eigen::SelfAdjointEigenSolver<MatC> es{MatC(L)};
    if (es.info() != Eigen::Success) throw numerical_error("evolve: eigendecomposition failed");
    const VecC c = es.eigenvectors().adjoint() * psi0;
    parallel_for(tgrid.size(), opt.threads, [&](std::size_t k) {
      if (tgrid[k] == 0.0) {
        tr.states[k] = psi0;
        return;
      }
      VecC ck(c.size());
      for (Eigen::Index j = 0; j < c.size(); ++j) ck[j] = std::exp(cplx(0.0, -es.eigenvalues()[j] * tgrid[k])) * c[j];
      tr.states[k] = es.eigenvectors() * ck;
    });
  } else {
    tr.method = "krylov";
    const HermitianOperator op(L);
    VecC cur = psi0;
    double tc = 0.0;
    for (std::size_t k = 0; k < tgrid.size(); ++k) {
      if (tgrid[k] != tc) cur = expm_multiply(op, cur, cplx(0.0, -(tgrid[k] - tc)), opt.krylov);
      tc = tgrid[k];
      tr.states[k] = cur;
    }
  }
  for (const auto& s : tr.states) {
    tr.norm_drift = std::max(tr.norm_drift, std::abs(s.norm() - n0));
    tr.energy_drift = std::max(tr.energy_drift, std::abs(s.dot(L * s).real() - e0));
  }
  if (tr.norm_drift > opt.norm_tol * std::max(1.0, n0)) {
    std::ostringstream os;
    os << "evolve: norm drift " << tr.norm_drift << " exceeds tolerance using " << tr.method;
    throw numerical_error(os.str());
  }
  return tr;
}

// Density matrix as a weighted mixture of vectors, rho = sum_k p_k |psi_k><psi_k|
struct MixedState {
  std::vector<double> weights;
  std::vector<VecC> vectors;

  static MixedState pure(const VecC& v) { return {{1.0}, {v}}; }
  void validate() const {
    detail::require_shape(weights.size() == vectors.size() && !weights.empty(), "MixedState: empty or mismatched");
    double tr = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
      detail::require(weights[k] >= 0.0, "MixedState: negative weight");
      tr += weights[k] * vectors[k].squaredNorm();
    }
    detail::require(std::abs(tr - 1.0) < 1e-12, "MixedState: trace is not 1");
  }
};

// reduced state of the physical (first) detector factor
inline Mat2 reduced_detector_state(const TruncatedFock& space, const VecC& psi) {
  const Eigen::Index R = space.reservoir_dim();
  Mat2 rho = Mat2::Zero();
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int d2 = 0; d2 < 2; ++d2)
        rho(a, b) += psi.segment(space.global(b, d2, 0), R).dot(psi.segment(space.global(a, d2, 0), R));
  return rho;
}

inline double trace_distance(const Mat2& a, const Mat2& b) {
  const Mat2 d = 0.5 * ((a - b) + (a - b).adjoint());
  Eigen::SelfAdjointEigenSolver<Mat2> es(d);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

inline Mat2 detector_gibbs_state(double E, double beta) {
  Mat2 r = Mat2::Zero();
  const double x = std::exp(-beta * E);
  r(0, 0) = x / (1.0 + x);
  r(1, 1) = 1.0 / (1.0 + x);
  return r;
}

struct GoldenRuleWindow {
  double density_plus = 0.0;    // 4 pi |f_beta(E)|^2
  double density_minus = 0.0;   // 4 pi |f_beta(-E)|^2
  double rate_per_lambda2 = 0.0;
  double T_rec = 0.0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double suggested = 0.0;
  bool empty() const { return !(lambda_min < lambda_max); }
  double rate(double lambda) const { return rate_per_lambda2 * lambda * lambda; }
};

// Gamma(lambda) = 2 pi lambda^2 |G_{+-}|^2 (J(E) + J(-E)) kept in [5/T_rec, 0.2 E]
inline GoldenRuleWindow golden_rule_window(double E, double beta, const Mat2& G, double T_rec,
                                           const std::function<cplx(double)>& g = [](double q) {
                                             return default_coupling(q);
                                           }) {
  GoldenRuleWindow w;
  const double amp = glue_amplitude(E, beta);
  const double amn = glue_amplitude(-E, beta);
  w.density_plus = 4.0 * pi * std::norm(amp * g(E));
  w.density_minus = 4.0 * pi * std::norm(amn * g(E));
  w.rate_per_lambda2 = 2.0 * pi * std::norm(G(0, 1)) * (w.density_plus + w.density_minus);
  w.T_rec = T_rec;
  detail::require(w.rate_per_lambda2 > 0.0, "golden_rule_window: coupling has no transition matrix element at E");
  w.lambda_min = std::sqrt(5.0 / T_rec / w.rate_per_lambda2);
  w.lambda_max = std::sqrt(0.2 * E / w.rate_per_lambda2);
  w.suggested = std::sqrt(w.lambda_min * w.lambda_max);
  return w;
}

struct RteSeries {
  std::vector<double> t;
  std::vector<double> distance;
  double threshold = 0.05;
  double T_rec = 0.0;
  std::optional<double> first_below;
  double pre_recurrence_min = inf;
  double norm_drift = 0.0;

  bool converged() const { return first_below.has_value(); }

  void write_csv(const std::string& path) const {
    CsvWriter w(path);
    w.header({"t", "trace_distance"});
    for (std::size_t k = 0; k < t.size(); ++k) w.row({t[k], distance[k]});
  }

  std::string summary() const {
    std::ostringstream os;
    os << "T_rec=" << fmt17(T_rec) << "\n";
    os << "threshold=" << fmt17(threshold) << "\n";
    os << "pre_recurrence_min=" << fmt17(pre_recurrence_min) << "\n";
    if (first_below)
      os << "first_below=" << fmt17(*first_below) << "\n";
    else
      os << "first_below=none (not converged before T_rec)\n";
    return os.str();
  }
};

inline RteSeries rte_distance_series(const TruncatedFock& space, const SpMat& L, const MixedState& rho0,
                                     const std::vector<double>& tgrid, const Mat2& reference, double T_rec,
                                     double threshold = 0.05, const EvolveOptions& opt = {}) {
  rho0.validate();
  RteSeries s;
  s.t = tgrid;
  s.threshold = threshold;
  s.T_rec = T_rec;
  std::vector<Mat2> red(tgrid.size(), Mat2::Zero());
  for (std::size_t k = 0; k < rho0.vectors.size(); ++k) {
    const StateTrajectory tr = evolve(L, rho0.vectors[k], tgrid, opt);
    s.norm_drift = std::max(s.norm_drift, tr.norm_drift);
    for (std::size_t i = 0; i < tgrid.size(); ++i) red[i] += rho0.weights[k] * reduced_detector_state(space, tr.states[i]);
  }
  s.distance.resize(tgrid.size());
  for (std::size_t i = 0; i < tgrid.size(); ++i) {
    s.distance[i] = trace_distance(red[i], reference);
    if (tgrid[i] < T_rec) {
      s.pre_recurrence_min = std::min(s.pre_recurrence_min, s.distance[i]);
      if (!s.first_below && s.distance[i] < threshold) s.first_below = tgrid[i];
    }
  }
  return s;
}

enum class InitialState { excited, ground_boson, entangled };

inline InitialState parse_initial_state(const std::string& s) {
  if (s == "excited") return InitialState::excited;
  if (s == "ground_boson") return InitialState::ground_boson;
  if (s == "entangled") return InitialState::entangled;
  throw domain_error("unknown initial state '" + s + "'");
}

// Normal states of the uncoupled system as vectors in the standard form:
//   excited       v+ (x) v+ (x) reservoir KMS vector
//   ground_boson  v- (x) v- (x) a*(h) reservoir KMS vector, h = f / ||f||
//   entangled     (v+ v+ (x) a*(h) Omega_R + v- v- (x) Omega_R) / sqrt 2
inline VecC initial_state(const TruncatedFock& space, const ReservoirDiscretization& d, InitialState kind) {
  detail::require_shape(d.size() == space.modes(), "initial_state: discretization does not match space");
  const Eigen::Index R = space.reservoir_dim();
  const TruncatedFock::Occupation zero(space.modes(), 0);
  const Eigen::Index vac = *space.index_of(zero);
  VecC omega_r = VecC::Zero(R);
  omega_r[vac] = 1.0;
  VecC one = VecC::Zero(R);
  const VecC h = d.f / d.f.norm();
  for (int j = 0; j < space.modes(); ++j) {
    auto n = zero;
    n[j] = 1;
    const auto idx = space.index_of(n);
    if (!idx) throw structural_error("initial_state: truncation excludes single-boson states");
    one[*idx] = h[j];
  }
  VecC psi = VecC::Zero(space.dim());
  switch (kind) {
    case InitialState::excited:
      psi.segment(space.global(0, 0, 0), R) = omega_r;
      break;
    case InitialState::ground_boson:
      psi.segment(space.global(1, 1, 0), R) = one;
      break;
    case InitialState::entangled:
      psi.segment(space.global(0, 0, 0), R) = one / std::sqrt(2.0);
      psi.segment(space.global(1, 1, 0), R) = omega_r / std::sqrt(2.0);
      break;
  }
  return psi;
}

// operator A on the physical detector factor
inline SpMat detector_operator(const TruncatedFock& space, const Mat2& a) {
  return detail::first_factor(a, detail::identity(space.reservoir_dim()));
}

// 1 (x) 1 (x) exp(i theta Phi(h)), dense
inline MatC weyl_operator(const TruncatedFock& space, const VecC& h, double theta = 1.0) {
  const MatC phi(field_operator(space, h));
  Eigen::SelfAdjointEigenSolver<MatC> es(phi);
  const VecC ph = (cplx(0.0, theta) * es.eigenvalues().cast<cplx>()).array().exp();
  const MatC w = es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
  const Eigen::Index R = space.reservoir_dim();
  MatC out = MatC::Zero(4 * R, 4 * R);
  for (int k = 0; k < 4; ++k) out.block(k * R, k * R, R, R) = w;
  return out;
}

struct TomitaResult {
  double residual = 0.0;
  double boundary_weight = 0.0;  // weight of X Omega on the truncation boundary
  bool truncation_warning = false;
};

// || J e^{-beta L_0/2} X Omega_0 - X^* Omega_0 ||
inline TomitaResult tomita_residual(const TruncatedFock& space, const LiouvilleanOperator& L0,
                                    const ModularConjugation& J, const VecC& omega0, const MatC& X,
                                    double boundary_tol = 1e-12) {
  detail::require_shape(X.rows() == space.dim() && X.cols() == space.dim(), "tomita_residual: X shape mismatch");
  const VecC xo = X * omega0;
  VecC scaled(xo.size());
  const SpMat& D = L0.matrix;
  for (Eigen::Index i = 0; i < xo.size(); ++i) scaled[i] = std::exp(-0.5 * L0.beta * D.coeff(i, i).real()) * xo[i];
  TomitaResult r;
  r.residual = (J.apply(scaled) - X.adjoint() * omega0).norm();
  const Eigen::Index R = space.reservoir_dim();
  for (Eigen::Index i = 0; i < xo.size(); ++i)
    if (space.on_boundary(i % R)) r.boundary_weight += std::norm(xo[i]);
  r.truncation_warning = r.boundary_weight > boundary_tol;
  return r;
}

}  // namespace kmslab
