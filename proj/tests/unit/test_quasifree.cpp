#include <gtest/gtest.h>

#include <kmslab/quasifree.hpp>

#include <Eigen/Eigenvalues>

using namespace kmslab;

namespace {

MomentumFunction packet(double center, double width = 0.5, double mass = 0.0) {
  return sample_radial(RadialGridSpec{}, [=](double q) { return cplx(std::exp(-(q - center) * (q - center) / width)); },
                       mass);
}

MomentumFunction coupling() {
  return sample_radial(RadialGridSpec{}, [](double q) { return default_coupling(q); });
}

MomentumFunction scaled(MomentumFunction f, cplx c) {
  f.values *= c;
  return f;
}

MomentumFunction sum(MomentumFunction f, const MomentumFunction& g) {
  f.values += g.values;
  return f;
}

}  // namespace

TEST(WeylExpectation, ZeroDataGivesOne) {
  const MomentumFunction zero = scaled(coupling(), 0.0);
  EXPECT_EQ(weyl_expectation(QuasiFreeState::kms(1.0), zero), 1.0);
  EXPECT_EQ(weyl_expectation(QuasiFreeState::vacuum(), zero), 1.0);
}

TEST(WeylExpectation, IncreasesWithBeta) {
  const MomentumFunction f = packet(1.0);
  const double hot = weyl_expectation(QuasiFreeState::kms(0.5), f);
  const double cold = weyl_expectation(QuasiFreeState::kms(2.0), f);
  EXPECT_LT(hot, cold);
  EXPECT_GT(hot, 0.0);
  EXPECT_LE(cold, 1.0);
}

TEST(WeylExpectation, DecreasesUnderScaling) {
  const QuasiFreeState st = QuasiFreeState::kms(1.0);
  const MomentumFunction f = packet(1.0);
  double prev = weyl_expectation(st, f);
  for (double c : {1.5, 2.0, 3.0}) {
    const double cur = weyl_expectation(st, scaled(f, cplx(0.0, c)));
    EXPECT_LT(cur, prev);
    prev = cur;
  }
}

TEST(WeylExpectation, ColdLimitMatchesVacuum) {
  const MomentumFunction f = coupling();
  EXPECT_NEAR(weyl_expectation(QuasiFreeState::kms(1e3), f), weyl_expectation(QuasiFreeState::vacuum(), f), 1e-6);
}

TEST(TwoPoint, DiagonalIsPositive) {
  for (const QuasiFreeState& st : {QuasiFreeState::kms(1.0), QuasiFreeState::vacuum()}) {
    const cplx w = two_point(st, packet(2.0), packet(2.0));
    EXPECT_GT(w.real(), 0.0);
    EXPECT_EQ(w.imag(), 0.0);
  }
}

TEST(TwoPoint, MatchesGluedInnerProduct) {
  const MomentumFunction f = coupling();
  const MomentumFunction g = sample_radial(RadialGridSpec{}, [](double q) { return cplx(std::exp(-q), 0.3 * q * std::exp(-q * q)); });
  for (double beta : {0.5, 1.0, 2.0}) {
    const cplx a = two_point(QuasiFreeState::kms(beta), f, g);
    const cplx b = two_point_glued(f, g, beta);
    EXPECT_LT(std::abs(a - b), 1e-12 * std::abs(a)) << "beta=" << beta;
  }
}

TEST(TwoPoint, CommutatorIsStateIndependent) {
  const MomentumFunction f = packet(2.0);
  const MomentumFunction g = sample_radial(RadialGridSpec{}, [](double q) { return cplx(std::exp(-(q - 1.5) * (q - 1.5)), 0.4 * std::exp(-q)); });
  auto commutator = [&](double beta) {
    const QuasiFreeState st = QuasiFreeState::kms(beta);
    return 0.5 * (two_point(st, f, g) - two_point(st, g, f)).imag();
  };
  const double ref = commutator(1.0);
  EXPECT_GT(std::abs(ref), 1e-3);
  EXPECT_NEAR(commutator(0.5), ref, 1e-10);
  EXPECT_NEAR(commutator(2.0), ref, 1e-10);
  EXPECT_NEAR(0.5 * (two_point(QuasiFreeState::vacuum(), f, g) - two_point(QuasiFreeState::vacuum(), g, f)).imag(), ref, 1e-10);
}

TEST(TwoPoint, GramMatrixIsPositive) {
  const QuasiFreeState st = QuasiFreeState::kms(1.0);
  for (double c : {0.5, 1.5, 3.0}) EXPECT_GE(gram_min_eigenvalue(st, packet(1.0), packet(c)), -1e-12);
  EXPECT_GE(gram_min_eigenvalue(st, packet(1.0), scaled(packet(1.0), cplx(0.0, 2.0))), -1e-12);
}

TEST(TwoPoint, SeparatedPacketsDecouple) {
  const QuasiFreeState st = QuasiFreeState::kms(1.0);
  // packet translated to z = x along the axis
  auto at = [](double x) {
    return sample_axial({}, [=](double q, double c) { return std::exp(-(q - 2.0) * (q - 2.0) / 0.5) * std::polar(1.0, -q * c * x); });
  };
  for (double a : {10.0, 20.0}) {
    const AxialMomentumFunction f = at(-0.5 * a), g = at(0.5 * a);
    const double norms = std::sqrt(two_point(st, f, f).real() * two_point(st, g, g).real());
    EXPECT_LT(std::abs(two_point(st, f, g)), 1e-3 * norms) << "a=" << a;
  }
}

TEST(TwoPoint, RejectsMismatchedMass) {
  EXPECT_THROW(two_point(QuasiFreeState::kms(1.0), packet(1.0, 0.5, 1.0), packet(1.0, 0.5, 1.0)), domain_error);
}

TEST(TwoPoint, RadialDataRejectedForBoostedState) {
  const QuasiFreeState st = QuasiFreeState::kms(1.0, 0.0, BoostSpec::from_velocity(0.5));
  EXPECT_THROW(two_point(st, packet(1.0), packet(1.0)), domain_error);
  const AxialMomentumFunction f = broadcast(packet(1.0), 16);
  EXPECT_GT(two_point(st, f, f).real(), 0.0);
}

TEST(WeylCorrelator, ProductRuleAtTimeZero) {
  const QuasiFreeState st = QuasiFreeState::kms(1.0);
  const MomentumFunction f = scaled(packet(2.0), 0.3);
  const MomentumFunction g = scaled(sample_radial(RadialGridSpec{}, [](double q) { return cplx(std::exp(-q), std::exp(-q * q)); }), 0.4);
  // omega(W(g) W(f)) = e^{-i Im<g,f>} omega(W(f + g))
  const cplx oracle = std::exp(-I * two_point_glued(g, f, 1.0).imag()) * weyl_expectation(st, sum(f, g));
  EXPECT_LT(std::abs(weyl_correlator(st, g, f, 0.0) - oracle), 1e-12);
}

TEST(WeylCorrelator, ZeroPartnerGivesExpectation) {
  const QuasiFreeState st = QuasiFreeState::kms(1.0);
  const MomentumFunction f = packet(2.0);
  EXPECT_EQ(weyl_correlator(st, scaled(f, 0.0), f, 3.0), cplx(weyl_expectation(st, f)));
}

TEST(WeylCorrelator, BoundedByOne) {
  const QuasiFreeState st = QuasiFreeState::kms(1.0);
  for (double t : {0.0, 1.0, 5.0, 20.0}) EXPECT_LE(std::abs(weyl_correlator(st, packet(1.5), packet(2.0), t)), 1.0);
}

TEST(Mixing, MasslessCorrelatorsDecay) {
  const QuasiFreeState st = QuasiFreeState::kms(1.0);
  const MomentumFunction f = packet(2.0), g = packet(1.5);
  const MixingReport r = mixing_decay(st, f, g, 200.0, 50.0, 0.1, 2);
  EXPECT_NEAR(r.t0_value, std::abs(two_point(st, g, f)), 1e-12 * r.t0_value);
  EXPECT_LT(r.sup_after, 1e-3 * r.t0_value);
  const double prod = weyl_expectation(st, f) * weyl_expectation(st, g);
  EXPECT_NEAR(std::abs(weyl_correlator(st, g, f, 60.0)), prod, 1e-3);
}

TEST(Mixing, RejectsThresholdBeyondRange) {
  EXPECT_THROW(mixing_decay(QuasiFreeState::kms(1.0), packet(1.0), packet(1.0), 10.0, 20.0), domain_error);
}

TEST(DetailedBalance, KmsStatePassesAndConverges) {
  const QuasiFreeState st = QuasiFreeState::kms(1.0);
  const MomentumFunction f = coupling();
  BalanceOptions a;
  a.threads = 4;
  BalanceOptions b = a;
  b.span = 2.0 * a.span;
  const double e1 = kms_balance_check(st, f, f, a).max_err;
  const double e2 = kms_balance_check(st, f, f, b).max_err;
  EXPECT_LT(e1, 1e-3);
  EXPECT_LT(e2, e1);
}

TEST(DetailedBalance, VacuumHasPositiveSpectrum) {
  BalanceOptions opt;
  opt.threads = 4;
  EXPECT_LT(kms_balance_check(QuasiFreeState::vacuum(), coupling(), coupling(), opt).max_err, 1e-3);
}

TEST(DetailedBalance, BoostedStateFailsInLabFrame) {
  // probe peaked along the boost axis
  const AxialMomentumFunction f =
      sample_axial({}, [](double q, double c) { return default_coupling(q) * std::exp(-4.0 * (1.0 - c)); });
  BalanceOptions opt;
  opt.threads = 4;
  EXPECT_GT(kms_balance_check(QuasiFreeState::kms(1.0, 0.0, BoostSpec::from_velocity(0.5)), f, f, opt).max_err, 0.1);
  EXPECT_LT(kms_balance_check(QuasiFreeState::kms(1.0), f, f, opt).max_err, 1e-3);
}

TEST(DetailedBalance, ShortSpanReportsRequiredSpan) {
  BalanceOptions opt;
  opt.span = 20.0;
  try {
    kms_balance_check(QuasiFreeState::kms(1.0), coupling(), coupling(), opt);
    FAIL() << "expected a resolution error";
  } catch (const domain_error& e) {
    EXPECT_NE(std::string(e.what()).find("required span"), std::string::npos);
  }
}
