#include <CLI11.hpp>

#include <kmslab/kmslab.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace kmslab;

namespace {

struct RunContext {
  ExperimentConfig cfg;
  fs::path out;
  std::string subcommand;
  int threads = 1;

  std::string path(const std::string& name) const { return (out / name).string(); }
};

RadialGridSpec radial_spec(const ExperimentConfig& c) {
  RadialGridSpec g;
  g.s_min = c.num("global", "grid_s_min");
  g.s_max = c.num("global", "grid_s_max");
  g.n = static_cast<int>(c.integer("global", "grid_n"));
  g.rule = parse_rule(c.str("global", "grid_rule"));
  return g;
}

QuasiFreeState lab_state(const ExperimentConfig& c) {
  return QuasiFreeState::kms(c.num("global", "beta"), c.num("global", "mass"),
                             BoostSpec::from_velocity(c.num("global", "frame_v")));
}

Mat2 coupling_matrix(const std::string& name) { return name == "sigma_z" ? sigma_z() : sigma_x(); }

std::function<cplx(double)> packet(double center, double width) {
  return [=](double q) { return cplx(std::exp(-(q - center) * (q - center) / (2.0 * width * width))); };
}

// ---------------------------------------------------------------- subcommands

int run_formfactor(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  const RadialGridSpec spec = radial_spec(c);
  const MomentumFunction g = sample_radial(spec, [](double q) { return default_coupling(q); }, c.num("global", "mass"));
  const GluedVector fb = kms_glue(g, c.num("global", "beta"), c.num("global", "zeta"));
  write_csv(ctx.path("formfactor.csv"), fb);
  write_sidecar(ctx.path("formfactor.meta"), sidecar(fb, spec));
  std::cout << "jf_identity_max_err=" << fmt17(jf_identity_residual(fb)) << "\n";
  return 0;
}

int run_kms_check(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  const QuasiFreeState st = lab_state(c);
  const MomentumFunction f = sample_radial(radial_spec(c), [](double q) { return default_coupling(q); }, st.mass);
  BalanceOptions opt;
  opt.span = c.num("kms", "span");
  opt.dt = c.num("kms", "dt");
  opt.sigma = c.num("kms", "sigma");
  opt.threads = ctx.threads;
  const double step = c.num("kms", "nu_step"), top = c.num("kms", "nu_max");
  const int count = static_cast<int>(std::floor(top / step + 1e-9));
  detail::require(count >= 1, "kms-check: nu_max must be >= nu_step");
  opt.nu_grid.resize(count);
  for (int k = 0; k < count; ++k) opt.nu_grid[k] = (k + 1) * step;
  const BalanceReport r = st.boosted() ? kms_balance_check(st, broadcast(f, 16), broadcast(f, 16), opt)
                                       : kms_balance_check(st, f, f, opt);
  CsvWriter w(ctx.path("balance.csv"));
  w.header({"nu", "re_w_plus", "im_w_plus", "re_w_minus", "im_w_minus", "residual"});
  for (Eigen::Index i = 0; i < r.nu_grid.size(); ++i)
    w.row({r.nu_grid[i], r.w_plus[i].real(), r.w_plus[i].imag(), r.w_minus[i].real(), r.w_minus[i].imag(),
           r.residual[i]});
  std::ofstream(ctx.path("balance.txt")) << r.to_text();
  std::cout << "state=" << st.describe() << "\n" << r.to_text();
  return 0;
}

int run_mixing(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  const QuasiFreeState st = lab_state(c);
  const RadialGridSpec spec = radial_spec(c);
  const double width = c.num("mixing", "width");
  const double tmax = c.num("mixing", "t_max"), T = c.num("mixing", "T"), dt = c.num("mixing", "dt");
  auto unit = [&](auto p) {
    p.values /= std::sqrt(two_point(st, p, p).real());
    return p;
  };
  auto make = [&](const char* key) { return sample_radial(spec, packet(c.num("mixing", key), width), st.mass); };
  const MixingReport r =
      st.boosted()
          ? mixing_decay(st, unit(broadcast(make("center_f"), 16)), unit(broadcast(make("center_g"), 16)), tmax, T, dt,
                         ctx.threads)
          : mixing_decay(st, unit(make("center_f")), unit(make("center_g")), tmax, T, dt, ctx.threads);
  CsvWriter w(ctx.path("mixing.csv"));
  w.header({"t", "magnitude", "factorization"});
  for (Eigen::Index k = 0; k < r.magnitude.size(); ++k)
    w.row({r.series.times[k], r.magnitude[k], r.factorization[k]});
  std::cout << "state=" << st.describe() << "\n";
  std::cout << "t0_value=" << fmt17(r.t0_value) << "\n";
  std::cout << "sup_after_T_relative=" << fmt17(r.sup_after / r.t0_value) << "\n";
  std::cout << "factorization_t0=" << fmt17(r.factorization_t0) << "\n";
  std::cout << "sup_factorization_after_T_relative=" << fmt17(r.sup_factorization_after / r.factorization_t0)
            << "\n";
  return 0;
}

int run_response(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  const std::string kind = c.str("trajectory", "kind");
  Trajectory traj = Trajectory::rest();
  if (kind == "inertial") traj = Trajectory::inertial(c.num("trajectory", "v"));
  if (kind == "accelerated") traj = Trajectory::accelerated(c.num("trajectory", "a"));
  traj = traj.boosted(BoostSpec{c.num("trajectory", "eta")});
  const QuasiFreeState st = kind == "accelerated" ? QuasiFreeState::vacuum(c.num("global", "mass")) : lab_state(c);

  const long n = c.integer("detector", "E_count");
  const double e0 = c.num("detector", "E_min"), e1 = c.num("detector", "E_max");
  VecR energies(n);
  for (long k = 0; k < n; ++k) energies[k] = n == 1 ? e0 : e0 + (e1 - e0) * k / (n - 1);

  ResponseOptions opt;
  opt.method = c.str("response", "method") == "time_domain" ? ResponseMethod::time_domain : ResponseMethod::automatic;
  opt.window.sigma = c.num("response", "sigma");
  opt.threads = ctx.threads;
  const ResponseCurve rc = response_curve(st, traj, both_signs(energies), opt);
  const BetaEffCurve be = beta_eff_from(rc, energies);
  rc.write_csv(ctx.path("rates.csv"));
  CsvWriter w(ctx.path("response.csv"));
  w.header({"E", "rate_up", "rate_down", "balance", "beta_eff"});
  for (long k = 0; k < n; ++k) {
    const double up = rc.rates[k], down = rc.rates[n + k];
    w.row({energies[k], up, down, up / down, be.beta_eff[k]});
  }
  std::cout << "state=" << st.describe() << "\ntrajectory=" << traj.describe() << "\n";
  std::cout << "window_sigma=" << fmt17(rc.sigma) << "\n";
  if (rc.bias_warning) std::cout << "warning: estimated window bias exceeds tolerance\n";
  std::cout << "beta_eff_spread=" << fmt17(be.spread()) << "\n";
  for (long k = 0; k < n; ++k)
    std::cout << "E=" << fmt17(energies[k]) << " balance=" << fmt17(rc.rates[k] / rc.rates[n + k])
              << " beta_eff=" << fmt17(be.beta_eff[k]) << "\n";
  return 0;
}

struct LiouvilleSetup {
  ReservoirDiscretization d;
  TruncatedFock space;
  double E;
  Mat2 G;
};

LiouvilleSetup liouville_setup(const ExperimentConfig& c) {
  const long N = c.integer("liouville", "N_modes");
  const double E = c.num("detector", "E");
  DiscretizationSpec ds;
  if (c.str("liouville", "sampling") == "band") {
    ds = band_spec(E, c.num("liouville", "band_width"), static_cast<int>(N / 2));
  } else {
    ds.pairs = static_cast<int>(N / 2);
    ds.s_min = c.num("liouville", "s_min");
    ds.s_max = c.num("liouville", "s_max");
  }
  if (const auto seed = c.seed()) {
    ds.seed = seed;
    ds.jitter = c.num("liouville", "jitter");
  }
  const ReservoirDiscretization d = discretize_form_factor(c.num("global", "beta"), ds,
                                                           [](double q) { return default_coupling(q); },
                                                           c.num("global", "zeta"));
  FockSpec fsp;
  fsp.n_tot_max = static_cast<int>(c.integer("liouville", "n_tot_max"));
  fsp.exclude_pairs = c.flag("liouville", "exclude_pairs");
  return {d, TruncatedFock(static_cast<int>(d.size()), fsp), E, coupling_matrix(c.str("detector", "G"))};
}

int run_rte_spectrum(const RunContext& ctx) {
  const LiouvilleSetup ls = liouville_setup(ctx.cfg);
  std::vector<double> lambdas{0.0};
  for (double l : ctx.cfg.list("liouville", "lambdas")) lambdas.push_back(l);
  SpectrumOptions so;
  so.threads = ctx.threads;
  std::cout << "modes=" << ls.d.size() << " dim=" << ls.space.dim() << "\n";
  CsvWriter sweep(ctx.path("sweep.csv"));
  sweep.header({"lambda", "kernel_dim", "kernel_dim_inertia", "gap", "splitting"});
  std::ofstream kernel(ctx.path("kernel.txt"));
  VecR xs(static_cast<Eigen::Index>(lambdas.size() - 1)), ys(xs.size());
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    const LiouvilleanOperator L = assemble_liouvillean(ls.space, ls.d, ls.E, ls.G, lambdas[k]);
    const SpectrumReport r = spectrum_scan(L, so);
    r.write_csv(ctx.path("spectrum_" + std::to_string(k) + ".csv"));
    sweep.row({lambdas[k], static_cast<double>(r.kernel_dim), static_cast<double>(r.kernel_dim_inertia), r.gap,
               r.second_smallest_abs()});
    kernel << "[lambda=" << fmt17(lambdas[k]) << "]\n" << r.to_text();
    std::cout << "lambda=" << fmt17(lambdas[k]) << " kernel_dim=" << r.kernel_dim
              << " kernel_dim_inertia=" << r.kernel_dim_inertia << " splitting=" << fmt17(r.second_smallest_abs())
              << "\n";
    for (const auto& w : r.warnings) std::cout << "warning: " << w.substr(0, 200) << "\n";
    if (k > 0) {
      xs[k - 1] = lambdas[k];
      ys[k - 1] = r.second_smallest_abs();
    }
  }
  if (xs.size() >= 2 && (ys.array() > 0.0).all())
    std::cout << "fit_exponent=" << fmt17(fit_power_law(xs, ys).exponent) << "\n";
  else
    std::cout << "fit_exponent=undefined (fewer than two positive splittings)\n";
  return 0;
}

int run_rte_evolve(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  const LiouvilleSetup ls = liouville_setup(c);
  const double beta = ls.d.beta;
  const double T_rec = ls.d.recurrence_time();
  const GoldenRuleWindow win = golden_rule_window(ls.E, beta, ls.G, T_rec);
  const double lambda = c.num("liouville", "lambda") > 0.0 ? c.num("liouville", "lambda") : win.suggested;
  std::cout << "modes=" << ls.d.size() << " dim=" << ls.space.dim() << "\n";
  std::cout << "T_rec=" << fmt17(T_rec) << "\n";
  std::cout << "golden_rule_window=[" << fmt17(win.lambda_min) << ", " << fmt17(win.lambda_max) << "]\n";
  std::cout << "lambda=" << fmt17(lambda) << "\n";
  if (win.empty() || lambda < win.lambda_min || lambda > win.lambda_max)
    std::cout << "warning: lambda lies outside the golden-rule window\n";

  const LiouvilleanOperator L0 = assemble_L0(ls.space, ls.d, ls.E);
  const Coupling cp = assemble_coupling(ls.space, ls.G, ls.d);
  const LiouvilleanOperator L = assemble_liouvillean(ls.space, ls.d, ls.E, ls.G, lambda);
  const VecC omega0 = uncoupled_kms_vector(ls.space, ls.E, beta);
  const PerturbedKmsResult pk = perturbed_kms_vector(L0, cp.I, lambda, omega0);
  const Mat2 ref = reduced_detector_state(ls.space, pk.vector);
  std::cout << "reference_gibbs_distance=" << fmt17(trace_distance(ref, detector_gibbs_state(ls.E, beta))) << "\n";

  const double tmax = c.num("liouville", "t_max") > 0.0 ? c.num("liouville", "t_max") : T_rec;
  const long nt = c.integer("liouville", "t_count");
  std::vector<double> tgrid(nt);
  for (long k = 0; k < nt; ++k) tgrid[k] = tmax * k / (nt - 1);

  const std::string which = c.str("liouville", "initial");
  std::vector<std::string> names =
      which == "all" ? std::vector<std::string>{"excited", "ground_boson", "entangled"} : std::vector{which};
  EvolveOptions eo;
  eo.threads = ctx.threads;
  std::ofstream summary(ctx.path("rte_summary.txt"));
  for (const auto& name : names) {
    const VecC psi = initial_state(ls.space, ls.d, parse_initial_state(name));
    const RteSeries s = rte_distance_series(ls.space, L.matrix, MixedState::pure(psi), tgrid, ref, T_rec,
                                            c.num("liouville", "threshold"), eo);
    s.write_csv(ctx.path("rte_" + name + ".csv"));
    summary << "[" << name << "]\n" << s.summary();
    std::cout << "[" << name << "]\n" << s.summary();
  }
  return 0;
}

int run_disjoint(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  const QuasiFreeState s1 = QuasiFreeState::kms(c.num("global", "beta"));
  const BoostSpec b = BoostSpec::from_velocity(c.num("disjointness", "v"));
  const QuasiFreeState s2 = c.str("disjointness", "state2") == "vacuum"
                                ? QuasiFreeState::vacuum(0.0, b)
                                : QuasiFreeState::kms(c.num("disjointness", "beta2"), 0.0, b);
  const long n = c.integer("disjointness", "n_max_modes"), nc = c.integer("disjointness", "c_bins");
  if (n % nc) throw config_error("config: [disjointness] n_max_modes must be a multiple of c_bins");
  const ModeFamily fam = uniform_cells(c.num("disjointness", "s_lo"), c.num("disjointness", "s_hi"),
                                       static_cast<int>(n / nc), static_cast<int>(nc));
  const ModeOrdering ord = c.str("disjointness", "ordering") == "weight" ? ModeOrdering::weight : ModeOrdering::natural;
  const OverlapSeries s = overlap_decay(s1, s2, fam, ord, 0.01, ctx.threads);
  s.write_csv(ctx.path("fidelity.csv"));
  fam.write_csv(ctx.path("family.csv"));
  std::cout << "state1=" << s1.describe() << "\nstate2=" << s2.describe() << "\n" << s.summary();
  return 0;
}

void write_manifest(const RunContext& ctx) {
  std::ofstream m(ctx.path("manifest.txt"));
  if (!m) throw std::runtime_error("cannot write manifest in " + ctx.out.string());
  m << "tool=kmslab\nversion=" << version() << "\nsubcommand=" << ctx.subcommand << "\n\n" << ctx.cfg.to_ini();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kmslab: KMS states, detectors and return to equilibrium"};
  app.fallthrough();
  app.require_subcommand(1);

  std::string config_path, out_dir = "kmslab-out";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::vector<std::string> assignments;
  app.add_option("--config", config_path, "key=value configuration file with [section] headers");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "seed for randomized mode-grid jitter (0 disables jitter)");
  app.add_option("--threads", threads, "worker threads");
  app.add_option("--set", assignments, "override a configuration entry, section.key=value");

  const std::map<std::string, std::pair<std::string, int (*)(const RunContext&)>> commands = {
      {"formfactor", {"emit f_beta and the modular identity residual", run_formfactor}},
      {"kms-check", {"Fourier detailed-balance report", run_kms_check}},
      {"mixing", {"two-point and Weyl-correlator decay series", run_mixing}},
      {"response", {"detector response rates and beta_eff curve", run_response}},
      {"rte-spectrum", {"lambda sweep of the Liouvillean kernel and gap", run_rte_spectrum}},
      {"rte-evolve", {"reduced-detector trace distance series", run_rte_evolve}},
      {"disjoint", {"fidelity series of restricted states", run_disjoint}},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, entry] : commands) subs[name] = app.add_subcommand(name, entry.first);

  std::optional<std::string> r_traj;
  std::optional<double> r_beta, r_v, r_a, r_eta;
  auto* resp = subs["response"];
  resp->add_option("--trajectory", r_traj, "rest|inertial|accelerated");
  resp->add_option("--beta", r_beta, "inverse temperature of the field state");
  resp->add_option("--v", r_v, "inertial detector velocity");
  resp->add_option("--a", r_a, "proper acceleration");
  resp->add_option("--eta", r_eta, "rapidity of a boost applied to the worldline");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ConversionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const CLI::ParseError& e) {
    const auto extra = app.remaining();
    if (!extra.empty() && extra.front().rfind("-", 0) != 0)
      std::cerr << "error: unknown subcommand '" << extra.front() << "'\n\n" << app.help();
    else
      std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  RunContext ctx;
  for (const auto& [name, sub] : subs)
    if (sub->parsed()) ctx.subcommand = name;

  try {
    auto& cfg = ctx.cfg;
    if (!config_path.empty()) cfg.merge_file(config_path);
    cfg.apply_environment();
    for (const auto& a : assignments) cfg.set_assignment(a);
    if (seed) cfg.set("global", "seed", std::to_string(*seed));
    if (threads) cfg.set("global", "threads", std::to_string(*threads));
    if (r_traj) cfg.set("trajectory", "kind", *r_traj);
    if (r_beta) cfg.set("global", "beta", fmt17(*r_beta));
    if (r_v) cfg.set("trajectory", "v", fmt17(*r_v));
    if (r_a) cfg.set("trajectory", "a", fmt17(*r_a));
    if (r_eta) cfg.set("trajectory", "eta", fmt17(*r_eta));
    cfg.validate();
    ctx.threads = static_cast<int>(cfg.integer("global", "threads"));
    ctx.out = out_dir;
    fs::create_directories(ctx.out);
    write_manifest(ctx);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    return commands.at(ctx.subcommand).second(ctx);
  } catch (const numerical_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const structural_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
}
