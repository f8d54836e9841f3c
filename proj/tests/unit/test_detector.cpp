#include <gtest/gtest.h>

#include <kmslab/detector.hpp>

using namespace kmslab;

namespace {

cplx coth(cplx x) { return std::cosh(x) / std::sinh(x); }

// massless thermal Wightman function at separation (t, r), both continued to t - i eps
cplx thermal_wightman(double beta, double v, double tau, double eps) {
  const double g = 1.0 / std::sqrt(1.0 - v * v);
  const cplx z(tau, -eps);
  if (v == 0.0) return -1.0 / (4.0 * beta * beta * std::pow(std::sinh(pi * z / beta), 2));
  const cplx t = g * z, r = g * v * z;
  return (coth(pi * (r + t) / beta) + coth(pi * (r - t) / beta)) / (8.0 * pi * beta * r);
}

VecR energies(std::initializer_list<double> e) {
  VecR r(static_cast<Eigen::Index>(e.size()));
  Eigen::Index i = 0;
  for (double x : e) r[i++] = x;
  return r;
}

}  // namespace

TEST(Wightman, RestVacuumClosedForm) {
  const WightmanOptions opt;
  for (double tau = 0.1; tau <= 10.0; tau *= 1.5) {
    const cplx exact = -1.0 / (4.0 * pi * pi * std::pow(cplx(tau, -opt.eps), 2));
    const cplx w = pullback_wightman(QuasiFreeState::vacuum(), Trajectory::rest(), tau, opt);
    EXPECT_LT(std::abs(w / exact - 1.0), 1e-4) << "tau=" << tau;
  }
}

TEST(Wightman, ThermalClosedFormAtRestAndInMotion) {
  const WightmanOptions opt;
  for (double v : {0.0, 0.5}) {
    const Trajectory traj = v == 0.0 ? Trajectory::rest() : Trajectory::inertial(v);
    for (double tau = 0.1; tau <= 5.0; tau *= 1.5) {
      const cplx exact = thermal_wightman(1.0, v, tau, opt.eps);
      const cplx w = pullback_wightman(QuasiFreeState::kms(1.0), traj, tau, opt);
      EXPECT_LT(std::abs(w / exact - 1.0), 1e-4) << "v=" << v << " tau=" << tau;
    }
  }
}

TEST(Wightman, NegativeTimeIsConjugate) {
  const QuasiFreeState st = QuasiFreeState::kms(1.0);
  const cplx a = pullback_wightman(st, Trajectory::inertial(0.3), 0.7);
  const cplx b = pullback_wightman(st, Trajectory::inertial(0.3), -0.7);
  EXPECT_LT(std::abs(a - std::conj(b)), 1e-14 * std::abs(a));
}

TEST(Wightman, AcceleratedThermalIsUnsupported) {
  EXPECT_THROW(pullback_wightman(QuasiFreeState::kms(1.0), Trajectory::accelerated(1.0), 0.5), unsupported_error);
}

TEST(Response, DetailedBalanceAtRest) {
  const VecR e = energies({0.5, 1.0, 2.0, 3.0});
  const ResponseCurve rc = response_curve(QuasiFreeState::kms(1.0), Trajectory::rest(), both_signs(e));
  for (Eigen::Index i = 0; i < e.size(); ++i)
    EXPECT_NEAR(rc.rates[i] / rc.rates[e.size() + i] / std::exp(-e[i]), 1.0, 0.02) << "E=" << e[i];
}

TEST(Response, TimeDomainAgreesWithModeSum) {
  ResponseOptions td;
  td.method = ResponseMethod::time_domain;
  td.threads = 4;
  for (double E : {1.0, -1.0}) {
    const double a = response_rate(QuasiFreeState::kms(1.0), Trajectory::inertial(0.3), E);
    const double b = response_rate(QuasiFreeState::kms(1.0), Trajectory::inertial(0.3), E, td);
    EXPECT_NEAR(b / a, 1.0, 0.01) << "E=" << E;
  }
}

TEST(Response, VacuumDoesNotExcite) {
  const double up = response_rate(QuasiFreeState::vacuum(), Trajectory::rest(), 1.0);
  const double down = response_rate(QuasiFreeState::vacuum(), Trajectory::rest(), -1.0);
  EXPECT_GT(down, 0.0);
  EXPECT_LT(up, 1e-4 * down);
}

TEST(Response, UnruhTemperature) {
  ResponseOptions opt;
  opt.threads = 4;
  const BoostInvarianceReport r = boost_invariance_check(Trajectory::accelerated(2.0 * pi), BoostSpec{}, energies({0.5, 1.0}), opt);
  for (Eigen::Index i = 0; i < 2; ++i) EXPECT_NEAR(r.ratio[i] / std::exp(-r.energies[i]), 1.0, 0.02);
}

TEST(Response, ProfileOnMovingDetectorIsUnsupported) {
  ResponseOptions opt;
  opt.profile = [](double q) { return std::exp(-q * q); };
  EXPECT_THROW(response_rate(QuasiFreeState::kms(1.0), Trajectory::inertial(0.5), 1.0, opt), unsupported_error);
}

TEST(EffectiveTemperature, RestFrameIsPlanckian) {
  const BetaEffCurve c = effective_temperature_curve(1.0, 0.0, energies({0.5, 1.0, 2.0, 3.0}));
  EXPECT_LT((c.beta_eff.array() - 1.0).abs().maxCoeff(), 0.01);
}

TEST(EffectiveTemperature, MovingBathIsNotPlanckian) {
  const BetaEffCurve c = effective_temperature_curve(1.0, 0.5, energies({0.5, 1.0, 2.0, 3.0}));
  EXPECT_GT(c.spread(), 0.05);
  EXPECT_LT((c.beta_eff - c.beta_eff_mirror).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EffectiveTemperature, BoostedRestDetectorIsNotPlanckian) {
  const VecR e = energies({0.5, 1.0, 2.0, 3.0});
  const ResponseCurve rc = response_curve(QuasiFreeState::kms(1.0), Trajectory::rest().boosted(BoostSpec{1.0}), both_signs(e));
  EXPECT_GT(beta_eff_from(rc, e).spread(), 0.05);
}

TEST(EffectiveTemperature, ExcitationVanishesNearLightSpeed) {
  double prev = inf;
  for (double v : {0.5, 0.9, 0.99}) {
    const double r = response_rate(QuasiFreeState::kms(1.0, 0.0, BoostSpec::from_velocity(v)), Trajectory::rest(), 1.0);
    EXPECT_LT(r, prev) << "v=" << v;
    prev = r;
  }
}

TEST(BoostInvariance, AcceleratedRatioIndependentOfBoost) {
  ResponseOptions opt;
  opt.threads = 4;
  const VecR e = energies({0.1, 0.25});
  const BoostInvarianceReport a = boost_invariance_check(Trajectory::accelerated(1.0), BoostSpec{}, e, opt);
  const BoostInvarianceReport b = boost_invariance_check(Trajectory::accelerated(1.0), BoostSpec{1.0}, e, opt);
  EXPECT_LT(a.max_rel_err, 0.02);
  EXPECT_LT(b.max_rel_err, 0.02);
  EXPECT_LT((b.ratio.array() / a.ratio.array() - 1.0).abs().maxCoeff(), 0.02);
}
