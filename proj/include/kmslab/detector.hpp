#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "common.hpp"
#include "csv.hpp"
#include "oneparticle.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"
#include "quasifree.hpp"

namespace kmslab {

struct DetectorSpec {
  double gap = 1.0;
  double lambda = 0.0;
  Eigen::Matrix2cd G = (Eigen::Matrix2cd() << 0.0, 1.0, 1.0, 0.0).finished();

  void validate() const {
    detail::require(gap > 0.0, "DetectorSpec: gap must be > 0");
    detail::require((G - G.adjoint()).cwiseAbs().maxCoeff() < 1e-14, "DetectorSpec: monopole G must be Hermitian");
  }
  bool off_diagonal_coupling() const { return std::abs(G(0, 1)) > 0.0; }
};

enum class TrajectoryKind { rest, inertial, accelerated };

struct Trajectory {
  TrajectoryKind kind = TrajectoryKind::rest;
  double v = 0.0;  // inertial velocity along x1
  double a = 0.0;  // proper acceleration
  BoostSpec boost{};  // Lorentz boost applied to the whole worldline

  static Trajectory rest() { return {}; }
  static Trajectory inertial(double v) {
    detail::require(std::abs(v) < 1.0, "Trajectory: inertial velocity must satisfy |v| < 1");
    return {TrajectoryKind::inertial, v, 0.0, {}};
  }
  static Trajectory accelerated(double a) {
    detail::require(a > 0.0, "Trajectory: acceleration must be > 0");
    return {TrajectoryKind::accelerated, 0.0, a, {}};
  }
  Trajectory boosted(BoostSpec b) const {
    Trajectory t = *this;
    t.boost.rapidity += b.rapidity;
    return t;
  }

  // (t, x1) in the lab; transverse coordinates vanish.
  Eigen::Vector2d position(double tau) const {
    Eigen::Vector2d x;
    switch (kind) {
      case TrajectoryKind::rest: x << tau, 0.0; break;
      case TrajectoryKind::inertial: {
        const double g = 1.0 / std::sqrt((1.0 - v) * (1.0 + v));
        x << g * tau, g * v * tau;
        break;
      }
      case TrajectoryKind::accelerated: x << std::sinh(a * tau) / a, std::cosh(a * tau) / a; break;
    }
    const double ch = std::cosh(boost.rapidity), sh = std::sinh(boost.rapidity);
    return {ch * x[0] + sh * x[1], sh * x[0] + ch * x[1]};
  }

  // Rapidity of an inertial worldline (rest or inertial kinds).
  double rapidity() const {
    detail::require(kind != TrajectoryKind::accelerated, "Trajectory: accelerated worldline has no single rapidity");
    return std::atanh(v) + boost.rapidity;
  }

  std::string describe() const {
    switch (kind) {
      case TrajectoryKind::rest: return "rest rapidity=" + fmt17(boost.rapidity);
      case TrajectoryKind::inertial: return "inertial v=" + fmt17(v) + " rapidity=" + fmt17(boost.rapidity);
      default: return "accelerated a=" + fmt17(a) + " rapidity=" + fmt17(boost.rapidity);
    }
  }
};

// |S(q)|^2 of a spatial smearing profile in the detector rest frame.
using SmearingProfile = std::function<double(double)>;

namespace detail {

// sin(w)/w for complex w
inline cplx sinc(cplx w) { return std::abs(w) < 1e-4 ? 1.0 - w * w / 6.0 + w * w * w * w / 120.0 : std::sin(w) / w; }
inline double sinc(double w) { return std::abs(w) < 1e-4 ? 1.0 - w * w / 6.0 + w * w * w * w / 120.0 : std::sin(w) / w; }
// sinh(w)/w for complex w
inline cplx sinhc(cplx w) { return std::abs(w) < 1e-4 ? 1.0 + w * w / 6.0 + w * w * w * w / 120.0 : std::sinh(w) / w; }

// relative velocity of an inertial worldline with respect to the state's rest frame
inline double relative_velocity(const QuasiFreeState& s, const Trajectory& traj) {
  return std::tanh(traj.rapidity() - s.frame.rapidity);
}

inline void check_stationary(const QuasiFreeState& s, const Trajectory& traj) {
  s.validate();
  require(s.mass == 0.0, "detector: the response module is implemented for the massless field");
  if (traj.kind == TrajectoryKind::accelerated && s.kind != StateKind::vacuum)
    throw unsupported_error("detector: accelerated worldline in a thermal state is not stationary");
}

// Interval-based vacuum Wightman function W = -1/(4 pi^2 ((dt - i eps)^2 - dx^2)).
inline cplx vacuum_interval(const Trajectory& traj, double tau0, double tau, double eps) {
  const Eigen::Vector2d x1 = traj.position(tau0 + 0.5 * tau);
  const Eigen::Vector2d x2 = traj.position(tau0 - 0.5 * tau);
  const cplx dt = cplx(x1[0] - x2[0], -eps);
  const double dx = x1[1] - x2[1];
  return -1.0 / (4.0 * pi * pi * (dt * dt - dx * dx));
}

}  // namespace detail

struct WightmanOptions {
  double eps = 1e-3;
  double tau0 = 0.0;        // base point for accelerated worldlines
  double q_cut = 40.0;      // thermal integrand cutoff in units of 1/beta
  int panel_order = 16;
};

// W(x(tau0 + tau/2), x(tau0 - tau/2)) for a stationary configuration.
inline cplx pullback_wightman(const QuasiFreeState& s, const Trajectory& traj, double tau,
                              const WightmanOptions& opt = {}) {
  detail::check_stationary(s, traj);
  detail::require(opt.eps > 0.0, "pullback_wightman: eps must be > 0");
  if (traj.kind == TrajectoryKind::accelerated) return detail::vacuum_interval(traj, opt.tau0, tau, opt.eps);
  if (tau < 0.0) return std::conj(pullback_wightman(s, traj, -tau, opt));

  const double v = detail::relative_velocity(s, traj);
  const double g = 1.0 / std::sqrt((1.0 - v) * (1.0 + v));
  const cplx z(tau, -opt.eps);
  const double pref = 1.0 / (4.0 * pi * pi);

  // vacuum term, contour rotated onto the negative imaginary q axis (q = -i x)
  cplx vac = 0.0;
  {
    const double decay = g * ((1.0 - std::abs(v)) * tau + opt.eps);
    const double x_max = 46.0 / decay;
    auto integrand = [&](double x) { return -x * std::exp(-x * g * z) * detail::sinhc(x * g * v * z); };
    vac = integrate_panels(integrand, 0.0, x_max, x_max / 64.0, opt.panel_order);
  }
  cplx th = 0.0;
  if (s.kind == StateKind::kms) {
    // mu e^{+i q (tau - i eps)} as written for the analytic strip; converges for eps (1+|v|) gamma < beta
    detail::require(opt.eps * g * (1.0 + std::abs(v)) < s.beta, "pullback_wightman: eps too large for beta");
    const double q_max = opt.q_cut / (s.beta - opt.eps * g * (1.0 + std::abs(v)));
    const double osc = g * (1.0 + std::abs(v)) * tau;
    const double h = std::min(q_max / 32.0, osc > 0.0 ? pi / (2.0 * osc) : q_max);
    auto integrand = [&](double q) {
      const double mu = q > 0.0 ? q / std::expm1(s.beta * q) : 1.0 / s.beta;  // q mu(q)
      const cplx sc = detail::sinc(q * g * v * z);
      return mu * (std::exp(-I * q * g * z) + std::exp(I * q * g * z)) * sc;
    };
    th = integrate_panels(integrand, 0.0, q_max, h, opt.panel_order);
  }
  return pref * (vac + th);
}

// ---------------------------------------------------------------- response

struct WindowSpec {
  double sigma = 0.0;       // 0: 20 / min |E|
  double extent = 8.0;      // tau range in units of sigma
  double h = 0.0;           // 0: automatic
  bool estimate_bias = true;
  double bias_tolerance = 5e-3;
};

struct ResponseCurve {
  VecR energies;
  VecR rates;
  VecR bias;        // estimated absolute window bias per energy
  double sigma = 0.0;
  double h = 0.0;
  double floor = 0.0;  // declared window floor (absolute)
  double peak = 0.0;
  bool bias_warning = false;
  std::string window = "gaussian";

  void write_csv(const std::string& path) const {
    CsvWriter w(path);
    w.header({"E", "rate"});
    for (Eigen::Index i = 0; i < energies.size(); ++i) w.row({energies[i], rates[i]});
  }
};

enum class ResponseMethod { automatic, time_domain };

struct ResponseOptions {
  ResponseMethod method = ResponseMethod::automatic;  // automatic: mode sum unless accelerated
  WindowSpec window{};
  SmearingProfile profile{};  // empty: point-like detector
  double q_cut = 40.0;
  double acceleration_cutoff = 300.0;  // |a tau|/2 beyond which the Rindler term is below e^{-600}
  int threads = 1;
};

namespace detail {

// W(tau) - W_vac,rest(tau) at eps -> 0 on tau > 0.
class RegularPart {
 public:
  RegularPart(const QuasiFreeState& s, const Trajectory& traj, const ResponseOptions& opt, double tau_max)
      : s_(s), traj_(traj), opt_(opt) {
    if (traj.kind == TrajectoryKind::accelerated) {
      if (opt.profile) throw unsupported_error("response: smearing profiles are not supported on accelerated worldlines");
      return;
    }
    v_ = relative_velocity(s, traj);
    g_ = 1.0 / std::sqrt((1.0 - v_) * (1.0 + v_));
    if (opt.profile && v_ != 0.0)
      throw unsupported_error("response: smearing profiles are supported for detectors at rest in the state frame");
    if (s.kind != StateKind::kms) return;
    const double q_max = opt.q_cut / s.beta;
    const double osc = g_ * (1.0 + std::abs(v_)) * tau_max;
    // two oscillation periods of the largest tau per 16-node panel
    const int panels = std::max(64, static_cast<int>(std::ceil(q_max * osc / (4.0 * pi))));
    nodes_ = gl_panels(0.0, q_max, panels, 16);
    weight_.resize(nodes_.x.size());
    for (Eigen::Index i = 0; i < nodes_.x.size(); ++i) {
      const double q = nodes_.x[i];
      const double prof = opt.profile ? opt.profile(q) : 1.0;
      weight_[i] = nodes_.w[i] * prof * q / std::expm1(s.beta * q) / (2.0 * pi * pi);
    }
  }

  cplx operator()(double tau) const {
    if (traj_.kind == TrajectoryKind::accelerated) {
      if (0.5 * traj_.a * tau > opt_.acceleration_cutoff) return 1.0 / (4.0 * pi * pi * tau * tau);
      const cplx w = vacuum_interval(traj_, 0.0, tau, 0.0);
      return w + 1.0 / (4.0 * pi * pi * tau * tau);
    }
    if (s_.kind != StateKind::kms) return 0.0;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < nodes_.x.size(); ++i) {
      const double q = nodes_.x[i];
      acc += weight_[i] * std::cos(q * g_ * tau) * sinc(q * g_ * v_ * tau);
    }
    return acc;
  }

 private:
  const QuasiFreeState& s_;
  const Trajectory& traj_;
  const ResponseOptions& opt_;
  double v_ = 0.0, g_ = 1.0;
  Nodes nodes_;
  VecR weight_;
};

// Windowed transform of the rest vacuum term: (1/4 pi^2) int q |S|^2 sqrt(2 pi) sigma e^{-sigma^2 (E+q)^2/2}
inline double singular_rate(double E, double sigma, const SmearingProfile& profile) {
  if (E >= 0.0 && sigma * E > 40.0) return 0.0;
  const double c = std::sqrt(2.0 * pi) * sigma / (4.0 * pi * pi);
  const double lo = std::max(0.0, -E - 12.0 / sigma), hi = std::max(lo, -E + 12.0 / sigma);
  if (hi <= 0.0) return 0.0;
  auto f = [&](double q) {
    const double d = sigma * (E + q);
    return q * (profile ? profile(q) : 1.0) * std::exp(-0.5 * d * d);
  };
  return c * integrate_panels(f, lo, hi, 0.25 / sigma, 16);
}

}  // namespace detail

inline double default_sigma(const VecR& energies) {
  double emin = inf;
  for (Eigen::Index i = 0; i < energies.size(); ++i)
    if (energies[i] != 0.0) emin = std::min(emin, std::abs(energies[i]));
  return 20.0 / emin;
}

// R(E) = int dtau e^{-i E tau} w(tau) W(tau), Gaussian window w.
namespace detail {

// pi [erf(sigma (b - x)/sqrt 2) - erf(sigma (a - x)/sqrt 2)] = int_a^b w_hat(x - Omega) dOmega
inline double window_mass(double x, double a, double b, double sigma) {
  const double r = sigma / std::sqrt(2.0);
  return pi * (std::erf(r * (b - x)) - std::erf(r * (a - x)));
}

// Windowed thermal part computed mode by mode: the tau integral of each plane
// wave e^{-/+ i Omega tau} against the window is w_hat(E +/- Omega), and the
// Doppler average over cos(theta) is done in closed form.
inline double mode_sum_regular_rate(const QuasiFreeState& s, double v, double E, double sigma,
                                    const SmearingProfile& profile, double q_cut) {
  if (s.kind != StateKind::kms) return 0.0;
  const double g = 1.0 / std::sqrt((1.0 - v) * (1.0 + v));
  const double k = std::sqrt((1.0 + std::abs(v)) / (1.0 - std::abs(v)));
  const double reach = 12.0 / sigma;
  const double e = std::abs(E);
  const double lo = std::max(0.0, (e - reach) / k), hi = std::min(q_cut / s.beta, (e + reach) * k);
  if (hi <= lo) return 0.0;
  auto f = [&](double q) {
    const double qmu = q / std::expm1(s.beta * q);
    const double prof = profile ? profile(q) : 1.0;
    const double a = q / k, b = q * k;
    double avg;
    if (sigma * (b - a) < 1e-6) {
      const double w = std::sqrt(2.0 * pi) * sigma;
      avg = w * (std::exp(-0.5 * sigma * sigma * (E + q) * (E + q)) + std::exp(-0.5 * sigma * sigma * (E - q) * (E - q)));
    } else {
      avg = (window_mass(-E, a, b, sigma) + window_mass(E, a, b, sigma)) / (b - a);
    }
    return qmu * prof * avg;
  };
  return integrate_panels(f, lo, hi, 0.25 / (sigma * k), 16) / (4.0 * pi * pi);
}

}  // namespace detail

// R(E) = int dtau e^{-i E tau} w(tau) W(tau), Gaussian window w.
inline ResponseCurve response_curve(const QuasiFreeState& s, const Trajectory& traj, const VecR& energies,
                                    const ResponseOptions& opt = {}) {
  detail::check_stationary(s, traj);
  detail::require(energies.size() > 0, "response: no energies");
  const double sigma = opt.window.sigma > 0.0 ? opt.window.sigma : default_sigma(energies);
  const bool mode_sum = traj.kind != TrajectoryKind::accelerated && opt.method != ResponseMethod::time_domain;
  double v = 0.0;
  if (traj.kind != TrajectoryKind::accelerated) v = detail::relative_velocity(s, traj);
  if (opt.profile && (traj.kind == TrajectoryKind::accelerated || v != 0.0))
    throw unsupported_error("response: smearing profiles are supported for detectors at rest in the state frame");

  ResponseCurve r;
  r.energies = energies;
  r.rates.resize(energies.size());
  r.bias.setZero(energies.size());
  r.sigma = sigma;

  std::function<std::pair<double, double>(double, double)> rate_at;
  VecC wreg;
  int K = 0;
  double h = 0.0;
  if (mode_sum) {
    rate_at = [&](double E, double sig) {
      const double reg = detail::mode_sum_regular_rate(s, v, E, sig, opt.profile, opt.q_cut);
      const double sing = detail::singular_rate(E, sig, opt.profile);
      return std::pair{reg + sing, std::abs(reg) + std::abs(sing)};
    };
  } else {
    const double tau_max = opt.window.extent * sigma;
    const double emax = energies.cwiseAbs().maxCoeff();
    double content = s.kind == StateKind::kms ? opt.q_cut / s.beta : 0.0;
    if (traj.kind == TrajectoryKind::accelerated) content = 6.0 * traj.a;
    else content *= std::sqrt((1.0 + std::abs(v)) / (1.0 - std::abs(v)));
    h = opt.window.h > 0.0 ? opt.window.h : 0.9 * std::min(0.1, 2.0 * pi / (emax + content));
    K = static_cast<int>(std::ceil(tau_max / h));
    const detail::RegularPart reg(s, traj, opt, K * h);
    wreg.resize(K);
    parallel_for(static_cast<std::size_t>(K), opt.threads, [&](std::size_t k) { wreg[k] = reg((k + 0.5) * h); });
    rate_at = [&](double E, double sig) {
      double acc = 0.0, mag = 0.0;
      for (int k = 0; k < K; ++k) {
        const double tau = (k + 0.5) * h;
        const double w = std::exp(-0.5 * tau * tau / (sig * sig));
        const cplx term = w * std::polar(1.0, -E * tau) * wreg[k];
        acc += term.real();
        mag += std::abs(term);
      }
      const double sing = detail::singular_rate(E, sig, opt.profile);
      return std::pair{2.0 * h * acc + sing, 2.0 * h * mag + sing};
    };
  }
  r.h = h;

  double roundoff = 0.0;
  std::vector<std::pair<double, double>> out(energies.size()), half(energies.size());
  parallel_for(static_cast<std::size_t>(energies.size()), opt.threads, [&](std::size_t i) {
    out[i] = rate_at(energies[i], sigma);
    if (opt.window.estimate_bias) half[i] = rate_at(energies[i], sigma / std::sqrt(2.0));
  });
  for (Eigen::Index i = 0; i < energies.size(); ++i) {
    r.rates[i] = out[i].first;
    roundoff = std::max(roundoff, out[i].second);
    if (opt.window.estimate_bias) r.bias[i] = std::abs(out[i].first - half[i].first);
  }
  r.peak = r.rates.cwiseAbs().maxCoeff();
  const double truncation = mode_sum ? 0.0 : std::exp(-0.5 * opt.window.extent * opt.window.extent);
  r.floor = 64.0 * std::numeric_limits<double>::epsilon() * roundoff + truncation * roundoff;
  for (Eigen::Index i = 0; i < energies.size(); ++i)
    if (r.bias[i] > opt.window.bias_tolerance * std::abs(r.rates[i]) + r.floor) r.bias_warning = true;
  return r;
}

inline double response_rate(const QuasiFreeState& s, const Trajectory& traj, double E, const ResponseOptions& opt = {}) {
  VecR e(1);
  e[0] = E;
  return response_curve(s, traj, e, opt).rates[0];
}

// ---------------------------------------------------------------- effective temperature

struct BetaEffCurve {
  VecR energies;       // positive energies
  VecR beta_eff;       // -ln(R(E)/R(-E))/E
  VecR beta_eff_mirror;  // same quantity reconstructed from the E -> -E evaluation
  ResponseCurve response;

  double spread() const { return beta_eff.maxCoeff() - beta_eff.minCoeff(); }

  void write_csv(const std::string& path) const {
    CsvWriter w(path);
    w.header({"E", "beta_eff"});
    for (Eigen::Index i = 0; i < energies.size(); ++i) w.row({energies[i], beta_eff[i]});
  }
};

inline BetaEffCurve beta_eff_from(const ResponseCurve& rc, const VecR& energies) {
  const Eigen::Index n = energies.size();
  BetaEffCurve r{energies, VecR(n), VecR(n), rc};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double up = rc.rates[i], down = rc.rates[n + i];
    r.beta_eff[i] = -std::log(up / down) / energies[i];
    r.beta_eff_mirror[i] = -std::log(down / up) / (-energies[i]);
  }
  return r;
}

inline VecR both_signs(const VecR& e) {
  VecR all(2 * e.size());
  all << e, -e;
  return all;
}

// Detector at rest in the lab; KMS state whose rest frame moves with velocity v.
inline BetaEffCurve effective_temperature_curve(double beta, double v, const VecR& energies,
                                                const ResponseOptions& opt = {}) {
  detail::require(std::abs(v) < 1.0, "effective_temperature_curve: |v| must be < 1");
  detail::require((energies.array() > 0.0).all(), "effective_temperature_curve: energies must be positive");
  const QuasiFreeState s = QuasiFreeState::kms(beta, 0.0, BoostSpec::from_velocity(v));
  return beta_eff_from(response_curve(s, Trajectory::rest(), both_signs(energies), opt), energies);
}

struct BoostInvarianceReport {
  VecR energies;
  VecR ratio;     // R(E)/R(-E)
  VecR expected;  // e^{-2 pi E / a}
  double max_rel_err = 0.0;
  ResponseCurve response;
};

inline BoostInvarianceReport boost_invariance_check(const Trajectory& traj, const BoostSpec& boost, const VecR& energies,
                                                    const ResponseOptions& opt = {}) {
  detail::require(traj.kind == TrajectoryKind::accelerated, "boost_invariance_check: needs an accelerated worldline");
  const Trajectory t = traj.boosted(boost);
  BoostInvarianceReport r;
  r.energies = energies;
  r.response = response_curve(QuasiFreeState::vacuum(), t, both_signs(energies), opt);
  const Eigen::Index n = energies.size();
  r.ratio.resize(n);
  r.expected.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    r.ratio[i] = r.response.rates[i] / r.response.rates[n + i];
    r.expected[i] = std::exp(-2.0 * pi * energies[i] / traj.a);
    r.max_rel_err = std::max(r.max_rel_err, std::abs(r.ratio[i] / r.expected[i] - 1.0));
  }
  return r;
}

}  // namespace kmslab
