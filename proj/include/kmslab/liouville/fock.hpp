#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "../common.hpp"
#include "../oneparticle.hpp"
#include "../quadrature.hpp"

namespace kmslab {

enum class ModeSampling { gauss_legendre, midpoint };

struct DiscretizationSpec {
  int pairs = 12;         // N = 2 * pairs modes
  double s_min = 1e-4;    // in units of 1/beta
  double s_max = 4.0;     // in units of Lambda
  ModeSampling sampling = ModeSampling::gauss_legendre;
  int panels = 1;         // Gauss-Legendre panels over [s_min, s_max]
  std::optional<std::uint64_t> seed;  // randomizes the interval endpoints
  double jitter = 0.1;    // relative endpoint perturbation when seeded
};

// Discretized glued form factor: modes at s_j (ordered, +/- pairs), weights w_j,
// coupling amplitudes f_j = sqrt(4 pi w_j) f_beta(s_j).
struct ReservoirDiscretization {
  VecR s;
  VecR w;
  VecC f;
  double beta = 1.0;
  double zeta = pi;

  Eigen::Index size() const { return s.size(); }
  Eigen::Index partner(Eigen::Index j) const { return size() - 1 - j; }

  void validate() const {
    detail::require_shape(s.size() == w.size() && s.size() == f.size(), "ReservoirDiscretization: size mismatch");
    detail::require_shape(detail::strictly_increasing(s), "ReservoirDiscretization: s must be strictly increasing");
    for (Eigen::Index j = 0; j < size(); ++j)
      detail::require_shape(s[j] != 0.0 && s[j] == -s[partner(j)], "ReservoirDiscretization: modes are not +/- paired");
  }

  double norm2() const { return f.squaredNorm(); }

  // smallest spacing between neighbouring modes of the same sign
  double min_spacing() const {
    double d = inf;
    for (Eigen::Index j = 1; j < size(); ++j)
      if (s[j] * s[j - 1] > 0.0) d = std::min(d, s[j] - s[j - 1]);
    return d;
  }

  double recurrence_time() const { return 2.0 * pi / min_spacing(); }

  // f_j e^{-beta s_j / 2}
  VecC modular_scaled() const {
    VecC r = f;
    for (Eigen::Index j = 0; j < size(); ++j) r[j] *= std::exp(-0.5 * beta * s[j]);
    return r;
  }
};

inline Nodes positive_mode_nodes(const DiscretizationSpec& spec, double beta) {
  detail::require(spec.pairs >= 1, "discretize: need at least one mode pair");
  double lo = spec.s_min / beta, hi = spec.s_max;
  if (spec.seed) {
    std::mt19937_64 rng(*spec.seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    lo *= 1.0 + spec.jitter * u(rng);
    hi *= 1.0 + spec.jitter * u(rng);
  }
  detail::require(0.0 < lo && lo < hi, "discretize: need 0 < s_min < s_max");
  if (spec.sampling == ModeSampling::midpoint) {
    Nodes n{VecR(spec.pairs), VecR(spec.pairs)};
    const double h = (hi - lo) / spec.pairs;
    for (int i = 0; i < spec.pairs; ++i) {
      n.x[i] = lo + (i + 0.5) * h;
      n.w[i] = h;
    }
    return n;
  }
  detail::require(spec.pairs % spec.panels == 0, "discretize: pairs must be a multiple of panels");
  return gl_panels(lo, hi, spec.panels, spec.pairs / spec.panels);
}

// Samples the glued form factor of the radial coupling g on the mode nodes.
inline ReservoirDiscretization discretize_form_factor(double beta, const DiscretizationSpec& spec,
                                                      const std::function<cplx(double)>& g = [](double q) {
                                                        return default_coupling(q);
                                                      },
                                                      double zeta = pi) {
  const Nodes n = positive_mode_nodes(spec, beta);
  MomentumFunction kappa{n.x, n.w, VecC(n.x.size()), 0.0, QuadratureRule::gauss_legendre};
  for (Eigen::Index i = 0; i < n.x.size(); ++i) kappa.values[i] = g(n.x[i]);
  const GluedVector fb = kms_glue(kappa, beta, zeta);
  ReservoirDiscretization d{fb.sgrid, fb.weights, VecC(fb.size()), beta, zeta};
  for (Eigen::Index j = 0; j < fb.size(); ++j) d.f[j] = std::sqrt(4.0 * pi * fb.weights[j]) * fb.values[j];
  d.validate();
  return d;
}

// Band of modes centred on +/- E with total width B (resolves the golden-rule rate).
inline DiscretizationSpec band_spec(double E, double B, int pairs) {
  DiscretizationSpec s;
  s.pairs = pairs;
  s.sampling = ModeSampling::midpoint;
  s.s_min = E - 0.5 * B;
  s.s_max = E + 0.5 * B;
  return s;
}

enum class Truncation { total, per_mode };

struct FockSpec {
  Truncation truncation = Truncation::total;
  int n_tot_max = 3;
  int n_max = 1;              // per-mode cutoff when truncation = per_mode
  bool exclude_pairs = false; // drop states occupying both s and -s
};

// C^2 (x) C^2 (x) truncated Fock space. Global index (2 d1 + d2) * R + r, with
// d = 0 the excited level v+ and d = 1 the ground level v-.
class TruncatedFock {
 public:
  using Occupation = std::vector<std::uint8_t>;

  TruncatedFock(int modes, const FockSpec& spec) : modes_(modes), spec_(spec) {
    detail::require(modes >= 0, "TruncatedFock: negative mode count");
    detail::require(spec.n_tot_max >= 0 && spec.n_max >= 0, "TruncatedFock: negative cutoff");
    detail::require(spec.n_max <= 255 && spec.n_tot_max <= 255, "TruncatedFock: cutoff too large");
    Occupation occ(modes, 0);
    enumerate(occ, 0, 0);
    for (std::size_t r = 0; r < basis_.size(); ++r) index_.emplace(key(basis_[r]), static_cast<Eigen::Index>(r));
  }

  int modes() const { return modes_; }
  const FockSpec& spec() const { return spec_; }
  Eigen::Index reservoir_dim() const { return static_cast<Eigen::Index>(basis_.size()); }
  Eigen::Index dim() const { return 4 * reservoir_dim(); }
  const Occupation& occupation(Eigen::Index r) const { return basis_[r]; }

  std::optional<Eigen::Index> index_of(const Occupation& n) const {
    const auto it = index_.find(key(n));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  Eigen::Index global(int d1, int d2, Eigen::Index r) const { return (2 * d1 + d2) * reservoir_dim() + r; }

  int total(Eigen::Index r) const {
    int t = 0;
    for (auto v : basis_[r]) t += v;
    return t;
  }

  // true when one more boson in some mode would leave the truncation
  bool on_boundary(Eigen::Index r) const {
    if (spec_.truncation == Truncation::total) return total(r) >= spec_.n_tot_max;
    for (auto v : basis_[r])
      if (v >= spec_.n_max) return true;
    return false;
  }

 private:
  bool admissible(const Occupation& n, int mode, int value, int used) const {
    if (spec_.truncation == Truncation::total && used + value > spec_.n_tot_max) return false;
    if (spec_.truncation == Truncation::per_mode && value > spec_.n_max) return false;
    if (spec_.exclude_pairs && value > 0) {
      const int p = modes_ - 1 - mode;
      if (p < mode && n[p] > 0) return false;
    }
    return true;
  }

  void enumerate(Occupation& n, int mode, int used) {
    if (mode == modes_) {
      basis_.push_back(n);
      return;
    }
    for (int v = 0;; ++v) {
      if (!admissible(n, mode, v, used)) break;
      n[mode] = static_cast<std::uint8_t>(v);
      enumerate(n, mode + 1, used + v);
    }
    n[mode] = 0;
  }

  static std::string key(const Occupation& n) { return std::string(n.begin(), n.end()); }

  int modes_;
  FockSpec spec_;
  std::vector<Occupation> basis_;
  std::unordered_map<std::string, Eigen::Index> index_;
};

}  // namespace kmslab
