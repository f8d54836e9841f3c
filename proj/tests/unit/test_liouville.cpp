#include <gtest/gtest.h>

#include <kmslab/liouville.hpp>

#include <random>

using namespace kmslab;

namespace {

ReservoirDiscretization small_grid(int pairs = 3, double zeta = pi) {
  DiscretizationSpec ds;
  ds.pairs = pairs;
  return discretize_form_factor(1.0, ds, [](double q) { return default_coupling(q); }, zeta);
}

TruncatedFock space_for(const ReservoirDiscretization& d, int n_tot, bool exclude_pairs = false) {
  FockSpec fs;
  fs.n_tot_max = n_tot;
  fs.exclude_pairs = exclude_pairs;
  return TruncatedFock(static_cast<int>(d.size()), fs);
}

VecR sorted_eigenvalues(const SpMat& m) {
  Eigen::SelfAdjointEigenSolver<MatC> es{MatC(m)};
  return es.eigenvalues();
}

MatC dense_expm(const SpMat& m, cplx z) {
  Eigen::SelfAdjointEigenSolver<MatC> es{MatC(m)};
  const VecC e = (z * es.eigenvalues().cast<cplx>()).array().exp();
  return es.eigenvectors() * e.asDiagonal() * es.eigenvectors().adjoint();
}

VecC random_vector(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  VecC v(n);
  for (auto& x : v) x = {nd(rng), nd(rng)};
  return v / v.norm();
}

}  // namespace

TEST(DetectorGibbs, VectorAtLogFour) {
  const Eigen::Vector4cd v = detector_gibbs_vector(1.0, std::log(4.0));
  EXPECT_NEAR(v[0].real(), 0.5 / std::sqrt(1.25), 1e-15);
  EXPECT_NEAR(v[3].real(), 1.0 / std::sqrt(1.25), 1e-15);
  EXPECT_EQ(v[1], cplx(0.0));
  EXPECT_EQ(v[2], cplx(0.0));
}

TEST(DetectorGibbs, ColdLimitIsGroundPair) {
  const Eigen::Vector4cd v = detector_gibbs_vector(1.0, 800.0);
  EXPECT_LT(std::abs(v[0]), 1e-170);
  EXPECT_EQ(v[3], cplx(1.0));
}

TEST(DetectorGibbs, ReducedStateIsGibbs) {
  const ReservoirDiscretization d = small_grid();
  const TruncatedFock space = space_for(d, 2);
  const Mat2 rho = reduced_detector_state(space, uncoupled_kms_vector(space, 1.3, 0.7));
  EXPECT_LT((rho - detector_gibbs_state(1.3, 0.7)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(UncoupledLiouvillean, NoModesSpectrum) {
  const TruncatedFock space(0, FockSpec{});
  const LiouvilleanOperator L0 = assemble_L0(space, VecR(0), 1.5);
  ASSERT_EQ(L0.dim(), 4);
  const VecR ev = sorted_eigenvalues(L0.matrix);
  EXPECT_DOUBLE_EQ(ev[0], -1.5);
  EXPECT_DOUBLE_EQ(ev[1], 0.0);
  EXPECT_DOUBLE_EQ(ev[2], 0.0);
  EXPECT_DOUBLE_EQ(ev[3], 1.5);
  EXPECT_EQ((L0.matrix * uncoupled_kms_vector(space, 1.5, 1.0)).norm(), 0.0);
}

TEST(UncoupledLiouvillean, SingleModeSpectrumByEnumeration) {
  FockSpec fs;
  fs.truncation = Truncation::per_mode;
  fs.n_max = 1;
  const TruncatedFock space(1, fs);
  VecR s(1);
  s << 0.7;
  const VecR ev = sorted_eigenvalues(assemble_L0(space, s, 1.0).matrix);
  std::vector<double> oracle;
  for (double a : {-1.0, 0.0, 0.0, 1.0})
    for (double b : {0.0, 0.7}) oracle.push_back(a + b);
  std::sort(oracle.begin(), oracle.end());
  ASSERT_EQ(ev.size(), 8);
  for (int k = 0; k < 8; ++k) EXPECT_NEAR(ev[k], oracle[k], 1e-15);
}

TEST(UncoupledLiouvillean, AnnihilatesKmsVector) {
  const ReservoirDiscretization d = small_grid();
  const TruncatedFock space = space_for(d, 3);
  EXPECT_LT((assemble_L0(space, d, 1.0).matrix * uncoupled_kms_vector(space, 1.0, 1.0)).norm(), 1e-15);
}

TEST(UncoupledLiouvillean, ResonantGridIsReported) {
  const TruncatedFock space(2, FockSpec{});
  VecR s(2);
  s << -1.0, 1.0;
  const LiouvilleanOperator L0 = assemble_L0(space, s, 1.0);
  ASSERT_FALSE(L0.warnings.empty());
  EXPECT_NE(L0.warnings[0].find("resonant"), std::string::npos);
  // a boson at s together with one at -s has zero energy unless such pairs are excluded
  EXPECT_FALSE(assemble_L0(space_for(small_grid(), 2), small_grid(), 1.0).warnings.empty());
  EXPECT_TRUE(assemble_L0(space_for(small_grid(), 2, true), small_grid(), 1.0).warnings.empty());
}

TEST(Coupling, SingleModeFieldByEnumeration) {
  FockSpec fs;
  fs.truncation = Truncation::per_mode;
  fs.n_max = 1;
  const TruncatedFock space(1, fs);
  VecC f(1);
  f << cplx(0.3, -0.8);
  const MatC phi(field_operator(space, f));
  const Eigen::Index zero = *space.index_of({0}), one = *space.index_of({1});
  EXPECT_EQ(phi(zero, zero), cplx(0.0));
  EXPECT_EQ(phi(one, one), cplx(0.0));
  EXPECT_EQ(phi(one, zero), f[0]);
  EXPECT_EQ(phi(zero, one), std::conj(f[0]));
}

TEST(Coupling, ZeroMonopoleGivesZero) {
  const ReservoirDiscretization d = small_grid();
  const Coupling c = assemble_coupling(space_for(d, 2), Mat2::Zero(), d);
  EXPECT_EQ(c.I.norm(), 0.0);
  EXPECT_EQ(c.V().norm(), 0.0);
}

TEST(Coupling, VanishingVacuumExpectation) {
  const ReservoirDiscretization d = small_grid();
  const TruncatedFock space = space_for(d, 2);
  const VecC omega = uncoupled_kms_vector(space, 1.0, 1.0);
  EXPECT_LT(std::abs(omega.dot(assemble_coupling(space, sigma_x(), d).V() * omega)), 1e-16);
}

TEST(Coupling, NonHermitianMonopoleRejected) {
  const ReservoirDiscretization d = small_grid();
  EXPECT_THROW(assemble_coupling(space_for(d, 2), raising(), d), domain_error);
}

TEST(Liouvillean, HermitianAndJAntisymmetric) {
  for (double zeta : {pi, 1.0}) {
    const ReservoirDiscretization d = small_grid(3, zeta);
    const TruncatedFock space = space_for(d, 3);
    const ModularConjugation J = ModularConjugation::checked(space, d);
    for (double lambda : {0.0, 0.05, 0.3}) {
      const LiouvilleanOperator L = assemble_liouvillean(space, d, 1.0, sigma_x(), lambda);
      EXPECT_LT(hermiticity_error(L.matrix), 1e-13);
      EXPECT_LT(J.antisymmetry_error(L.matrix), 1e-12) << "zeta=" << zeta << " lambda=" << lambda;
    }
  }
}

TEST(Liouvillean, RealAtDefaultPhase) {
  const ReservoirDiscretization d = small_grid();
  const LiouvilleanOperator L = assemble_liouvillean(space_for(d, 2), d, 1.0, sigma_x(), 0.1);
  EXPECT_TRUE(HermitianOperator(L.matrix).real());
  const ReservoirDiscretization c = small_grid(3, 1.0);
  EXPECT_FALSE(HermitianOperator(assemble_liouvillean(space_for(c, 2), c, 1.0, sigma_x(), 0.1).matrix).real());
}

TEST(ModularConjugationOp, InvolutionFixingKmsVector) {
  const ReservoirDiscretization d = small_grid(3, 0.4);
  const TruncatedFock space = space_for(d, 3);
  const ModularConjugation J = ModularConjugation::checked(space, d);
  const VecC v = random_vector(space.dim(), 3);
  EXPECT_LT((J.apply(J.apply(v)) - v).cwiseAbs().maxCoeff(), 1e-15);
  const VecC omega = uncoupled_kms_vector(space, 1.0, 1.0);
  EXPECT_EQ((J.apply(omega) - omega).norm(), 0.0);
}

TEST(ModularConjugationOp, UnpairedModesRejected) {
  ReservoirDiscretization d;
  d.s = (VecR(2) << -1.0, 2.0).finished();
  d.w = VecR::Ones(2);
  d.f = VecC::Ones(2);
  EXPECT_THROW(ModularConjugation::checked(TruncatedFock(2, FockSpec{}), d), structural_error);
}

TEST(PerturbedKms, ZeroCouplingIsExact) {
  const ReservoirDiscretization d = small_grid();
  const TruncatedFock space = space_for(d, 2);
  const VecC omega = uncoupled_kms_vector(space, 1.0, 1.0);
  const PerturbedKmsResult r =
      perturbed_kms_vector(assemble_L0(space, d, 1.0), assemble_coupling(space, sigma_x(), d).I, 0.0, omega);
  EXPECT_EQ((r.vector - omega).norm(), 0.0);
}

TEST(PerturbedKms, DistanceIsLinearInLambda) {
  const ReservoirDiscretization d = small_grid(4);
  const TruncatedFock space = space_for(d, 3);
  const LiouvilleanOperator L0 = assemble_L0(space, d, 1.0);
  const SpMat I = assemble_coupling(space, sigma_x(), d).I;
  const VecC omega = uncoupled_kms_vector(space, 1.0, 1.0);
  const double a = perturbed_kms_vector(L0, I, 0.02, omega).slope;
  const double b = perturbed_kms_vector(L0, I, 0.01, omega).slope;
  EXPECT_TRUE(std::isfinite(a));
  EXPECT_NEAR(a / b, 1.0, 0.02);
}

TEST(PerturbedKms, KernelResidualShrinksWithTruncation) {
  const ReservoirDiscretization d = small_grid(4);
  double prev = inf;
  for (int nt : {1, 2, 3}) {
    const TruncatedFock space = space_for(d, nt);
    const PerturbedKmsResult pk = perturbed_kms_vector(assemble_L0(space, d, 1.0), assemble_coupling(space, sigma_x(), d).I,
                                                       0.05, uncoupled_kms_vector(space, 1.0, 1.0));
    const double res = (assemble_liouvillean(space, d, 1.0, sigma_x(), 0.05).matrix * pk.vector).norm();
    EXPECT_LT(res, prev) << "n_tot=" << nt;
    prev = res;
  }
}

TEST(Spectrum, MatchesDenseAndIsSymmetric) {
  const ReservoirDiscretization d = small_grid(3);
  const LiouvilleanOperator L = assemble_liouvillean(space_for(d, 2), d, 1.0, sigma_x(), 0.1);
  SpectrumOptions opt;
  opt.full = true;
  const SpectrumReport r = spectrum_scan(L, opt);
  const VecR dense = sorted_eigenvalues(L.matrix);
  ASSERT_EQ(r.eigenvalues.size(), dense.size());
  EXPECT_LT((r.eigenvalues - dense).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(r.symmetry_error, 1e-10);
  EXPECT_LT(r.max_residual(), 1e-9 * r.norm);
}

TEST(Spectrum, IterativeBlocksAgreeWithDense) {
  const ReservoirDiscretization d = small_grid(4);
  const LiouvilleanOperator L = assemble_liouvillean(space_for(d, 3), d, 1.0, sigma_x(), 0.1);
  SpectrumOptions it;
  it.dense_limit = 0;
  it.partial_dense_limit = 0;
  it.n_eigs = 6;
  const SpectrumReport r = spectrum_scan(L, it);
  EXPECT_FALSE(r.complete);
  const VecR dense = sorted_eigenvalues(L.matrix);
  for (double mu : r.eigenvalues) EXPECT_LT((dense.array() - mu).abs().minCoeff(), 1e-9) << "mu=" << mu;
  // the eigenvalue nearest zero is always found
  EXPECT_NEAR(r.abs_sorted()[0], dense.cwiseAbs().minCoeff(), 1e-9);
}

TEST(Spectrum, KernelDichotomy) {
  const ReservoirDiscretization d = small_grid(4);
  const TruncatedFock space = space_for(d, 3, true);
  EXPECT_EQ(spectrum_scan(assemble_liouvillean(space, d, 1.0, sigma_x(), 0.0)).kernel_dim, 2);
  EXPECT_EQ(spectrum_scan(assemble_liouvillean(space_for(d, 3), d, 1.0, sigma_x(), 0.0)).kernel_dim, 10);
  EXPECT_EQ(spectrum_scan(assemble_liouvillean(space, d, 1.0, sigma_z(), 0.1)).kernel_dim, 2);
}

TEST(Spectrum, NonHermitianRejected) {
  SpMat m(2, 2);
  m.insert(0, 1) = 1.0;
  EXPECT_THROW(spectrum_scan(m), domain_error);
}

TEST(PowerLaw, RecoversExactExponent) {
  VecR x(4), y(4);
  x << 0.01, 0.02, 0.04, 0.08;
  y = 3.0 * x.array().square();
  const PowerFit f = fit_power_law(x, y);
  EXPECT_NEAR(f.exponent, 2.0, 1e-12);
  EXPECT_NEAR(f.prefactor, 3.0, 1e-10);
}

TEST(Krylov, MatchesDenseExponential) {
  for (double zeta : {pi, 1.0}) {
    const ReservoirDiscretization d = small_grid(3, zeta);
    const SpMat L = assemble_liouvillean(space_for(d, 3), d, 1.0, sigma_x(), 0.2).matrix;
    const VecC v = random_vector(L.rows(), 9);
    for (cplx z : {cplx(0.0, -3.0), cplx(0.0, 25.0), cplx(-0.5, 0.0)}) {
      const VecC ref = dense_expm(L, z) * v;
      EXPECT_LT((expm_multiply(L, v, z) - ref).norm(), 1e-10 * ref.norm()) << "zeta=" << zeta << " z=" << z;
    }
  }
}

TEST(Krylov, RealAndComplexPathsAgree) {
  const ReservoirDiscretization d = small_grid(3);
  const SpMat L = assemble_liouvillean(space_for(d, 2), d, 1.0, sigma_x(), 0.2).matrix;
  const VecC v = random_vector(L.rows(), 4);
  const HermitianOperator op(L);
  ASSERT_TRUE(op.real());
  VecC a, b;
  op.apply(v, a);
  b = L * v;
  EXPECT_LT((a - b).norm(), 1e-14 * b.norm());
}

TEST(Evolve, InitialPointAndConservation) {
  const ReservoirDiscretization d = small_grid(3);
  const TruncatedFock space = space_for(d, 3);
  const SpMat L = assemble_liouvillean(space, d, 1.0, sigma_x(), 0.2).matrix;
  const VecC psi = initial_state(space, d, InitialState::entangled);
  const std::vector<double> t{0.0, 1.0, 5.0, 20.0};
  for (Eigen::Index limit : {Eigen::Index{100000}, Eigen::Index{0}}) {
    EvolveOptions opt;
    opt.dense_limit = limit;
    const StateTrajectory tr = evolve(L, psi, t, opt);
    EXPECT_EQ((tr.states[0] - psi).norm(), 0.0);
    EXPECT_LT(tr.norm_drift, 1e-10);
    EXPECT_LT(tr.energy_drift, 1e-10);
  }
  EvolveOptions dense, krylov;
  krylov.dense_limit = 0;
  EXPECT_LT((evolve(L, psi, t, dense).states.back() - evolve(L, psi, t, krylov).states.back()).norm(), 1e-9);
}

TEST(Evolve, KmsVectorIsStationaryWithoutCoupling) {
  const ReservoirDiscretization d = small_grid(3);
  const TruncatedFock space = space_for(d, 2);
  const VecC omega = uncoupled_kms_vector(space, 1.0, 1.0);
  const StateTrajectory tr = evolve(assemble_L0(space, d, 1.0).matrix, omega, {0.0, 3.0, 50.0});
  for (const auto& s : tr.states) EXPECT_LT((s - omega).norm(), 1e-12);
}

TEST(InitialStates, NormalizedAndDistinct) {
  const ReservoirDiscretization d = small_grid(3);
  const TruncatedFock space = space_for(d, 2);
  for (auto k : {InitialState::excited, InitialState::ground_boson, InitialState::entangled})
    EXPECT_NEAR(initial_state(space, d, k).norm(), 1.0, 1e-14);
  const Mat2 ex = reduced_detector_state(space, initial_state(space, d, InitialState::excited));
  EXPECT_NEAR(ex(0, 0).real(), 1.0, 1e-15);
  const Mat2 gr = reduced_detector_state(space, initial_state(space, d, InitialState::ground_boson));
  EXPECT_NEAR(gr(1, 1).real(), 1.0, 1e-15);
  EXPECT_THROW(parse_initial_state("thermal"), domain_error);
}

TEST(Rte, DecoupledDistanceIsConstant) {
  const ReservoirDiscretization d = small_grid(3);
  const TruncatedFock space = space_for(d, 2);
  const VecC psi = initial_state(space, d, InitialState::excited);
  std::vector<double> t;
  for (int k = 0; k <= 20; ++k) t.push_back(k * 0.5);
  const RteSeries s = rte_distance_series(space, assemble_L0(space, d, 1.0).matrix, MixedState::pure(psi), t,
                                          detector_gibbs_state(1.0, 1.0), d.recurrence_time());
  for (double x : s.distance) EXPECT_NEAR(x, s.distance.front(), 1e-12);
  EXPECT_FALSE(s.converged());
}

TEST(Rte, PerturbedKmsStateStaysAtReference) {
  const ReservoirDiscretization d = discretize_form_factor(1.0, band_spec(1.0, 1.0, 4));
  const TruncatedFock space = space_for(d, 2);
  const double lambda = 0.05;
  const PerturbedKmsResult pk = perturbed_kms_vector(assemble_L0(space, d, 1.0), assemble_coupling(space, sigma_x(), d).I,
                                                     lambda, uncoupled_kms_vector(space, 1.0, 1.0));
  const double T_rec = d.recurrence_time();
  std::vector<double> t;
  for (int k = 0; k <= 50; ++k) t.push_back(T_rec * k / 50.0);
  const RteSeries s = rte_distance_series(space, assemble_liouvillean(space, d, 1.0, sigma_x(), lambda).matrix,
                                          MixedState::pure(pk.vector), t, reduced_detector_state(space, pk.vector), T_rec);
  EXPECT_LT(*std::max_element(s.distance.begin(), s.distance.end()), 0.05);
}

TEST(GoldenRule, WindowIsOrdered) {
  const ReservoirDiscretization d = discretize_form_factor(1.0, band_spec(1.0, 1.0, 8));
  const GoldenRuleWindow w = golden_rule_window(1.0, 1.0, sigma_x(), d.recurrence_time());
  ASSERT_FALSE(w.empty());
  EXPECT_GE(w.suggested, w.lambda_min);
  EXPECT_LE(w.suggested, w.lambda_max);
  EXPECT_GE(w.rate(w.lambda_min) * d.recurrence_time(), 5.0 - 1e-9);
}

TEST(Tomita, IdentityAndDetectorOperators) {
  const ReservoirDiscretization d = small_grid(3);
  const TruncatedFock space = space_for(d, 2);
  const LiouvilleanOperator L0 = assemble_L0(space, d, 1.0);
  const ModularConjugation J = ModularConjugation::checked(space, d);
  const VecC omega = uncoupled_kms_vector(space, 1.0, 1.0);
  EXPECT_LT(tomita_residual(space, L0, J, omega, MatC::Identity(space.dim(), space.dim())).residual, 1e-15);
  EXPECT_LT(tomita_residual(space, L0, J, omega, MatC(detector_operator(space, raising()))).residual, 1e-8);
}

TEST(Tomita, SingleModeResidualShrinksWithCutoff) {
  DiscretizationSpec one;
  one.pairs = 1;
  one.sampling = ModeSampling::midpoint;
  one.s_min = 0.5;
  one.s_max = 1.5;
  const ReservoirDiscretization d = discretize_form_factor(1.0, one);
  double prev = inf;
  for (int nm : {2, 3, 4}) {
    FockSpec fs;
    fs.truncation = Truncation::per_mode;
    fs.n_max = nm;
    const TruncatedFock space(2, fs);
    const TomitaResult r = tomita_residual(space, assemble_L0(space, d, 1.0), ModularConjugation::checked(space, d),
                                           uncoupled_kms_vector(space, 1.0, 1.0), weyl_operator(space, d.f / d.f.norm(), 0.5));
    EXPECT_LT(r.residual, prev) << "n_max=" << nm;
    EXPECT_TRUE(r.truncation_warning);
    prev = r.residual;
  }
}
