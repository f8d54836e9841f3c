#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"
#include "csv.hpp"

namespace kmslab {

struct config_error : domain_error {
  using domain_error::domain_error;
};

// Sectioned key=value configuration. Every key has a default; files and
// KMSLAB_<SECTION>_<KEY> environment variables may only override known keys.
class ExperimentConfig {
 public:
  ExperimentConfig() {
    const std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>> table = {
        {"global",
         {{"beta", "1"},
          {"mass", "0"},
          {"zeta", fmt17(pi)},
          {"frame_v", "0"},
          {"grid_s_min", "1e-4"},
          {"grid_s_max", "40"},
          {"grid_n", "2048"},
          {"grid_rule", "trapezoid"},
          {"seed", "0"},
          {"threads", "1"}}},
        {"kms", {{"span", "200"}, {"dt", "0.05"}, {"sigma", "0"}, {"nu_step", "0.05"}, {"nu_max", "5"}}},
        {"mixing", {{"t_max", "200"}, {"dt", "0.1"}, {"T", "50"}, {"center_f", "2"}, {"center_g", "1.5"}, {"width", "0.5"}}},
        {"detector", {{"E", "1"}, {"lambda", "0.05"}, {"G", "sigma_x"}, {"E_min", "0.5"}, {"E_max", "3"}, {"E_count", "6"}}},
        {"trajectory", {{"kind", "rest"}, {"v", "0"}, {"a", "1"}, {"eta", "0"}}},
        {"response", {{"method", "automatic"}, {"sigma", "0"}}},
        {"liouville",
         {{"sampling", "gauss_legendre"},
          {"N_modes", "24"},
          {"n_tot_max", "3"},
          {"exclude_pairs", "true"},
          {"s_min", "1e-4"},
          {"s_max", "4"},
          {"band_width", "1"},
          {"jitter", "0.1"},
          {"lambdas", "0.02,0.04,0.08"},
          {"lambda", "0"},
          {"t_max", "0"},
          {"t_count", "301"},
          {"initial", "excited"},
          {"threshold", "0.05"}}},
        {"disjointness",
         {{"beta2", "2"},
          {"v", "0"},
          {"state2", "kms"},
          {"n_max_modes", "200"},
          {"s_lo", "0.1"},
          {"s_hi", "5"},
          {"c_bins", "1"},
          {"ordering", "weight"}}},
    };
    for (const auto& [sec, keys] : table)
      for (const auto& [k, v] : keys) tree_.put(boost::property_tree::ptree::path_type(sec + "." + k, '.'), v);
  }

  void merge_file(const std::string& path) {
    boost::property_tree::ptree in;
    try {
      boost::property_tree::read_ini(path, in);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw config_error(std::string("config: ") + e.what());
    }
    for (const auto& [sec, body] : in) {
      if (body.empty()) throw config_error("config: key '" + sec + "' outside a section");
      for (const auto& [k, v] : body) set(sec, k, v.data());
    }
  }

  void apply_environment() {
    for (const auto& [sec, body] : tree_)
      for (const auto& [k, v] : body) {
        std::string name = "KMSLAB_" + sec + "_" + k;
        std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::toupper(c); });
        if (const char* val = std::getenv(name.c_str())) set(sec, k, val);
      }
  }

  void set(const std::string& sec, const std::string& key, const std::string& value) {
    auto s = tree_.get_child_optional(sec);
    if (!s) throw config_error("config: unknown section [" + sec + "]");
    auto k = s->get_child_optional(key);
    if (!k) throw config_error("config: unknown key [" + sec + "] " + key);
    k->put_value(value);
  }

  // "section.key=value"
  void set_assignment(const std::string& a) {
    const auto eq = a.find('='), dot = a.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
      throw config_error("config: expected section.key=value, got '" + a + "'");
    set(a.substr(0, dot), a.substr(dot + 1, eq - dot - 1), a.substr(eq + 1));
  }

  std::string str(const std::string& sec, const std::string& key) const {
    auto v = tree_.get_optional<std::string>(boost::property_tree::ptree::path_type(sec + "." + key, '.'));
    if (!v) throw config_error("config: unknown key [" + sec + "] " + key);
    return *v;
  }

  double num(const std::string& sec, const std::string& key) const {
    const std::string s = str(sec, key);
    try {
      std::size_t pos = 0;
      const double x = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return x;
    } catch (const std::exception&) {
      throw config_error("config: [" + sec + "] " + key + " is not a number ('" + s + "')");
    }
  }

  long integer(const std::string& sec, const std::string& key) const {
    const double x = num(sec, key);
    if (x != std::floor(x)) throw config_error("config: [" + sec + "] " + key + " must be an integer");
    return static_cast<long>(x);
  }

  std::uint64_t seed() const {
    const std::string s = str("global", "seed");
    const auto bad = [&] { return config_error("config: [global] seed must be an unsigned integer ('" + s + "')"); };
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](unsigned char ch) { return std::isdigit(ch); })) throw bad();
    try {
      return std::stoull(s);
    } catch (const std::exception&) {
      throw bad();
    }
  }

  bool flag(const std::string& sec, const std::string& key) const {
    const std::string s = str(sec, key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw config_error("config: [" + sec + "] " + key + " must be true or false");
  }

  std::vector<double> list(const std::string& sec, const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(str(sec, key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        out.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw config_error("config: [" + sec + "] " + key + " has a non-numeric entry '" + item + "'");
      }
    }
    return out;
  }

  std::string choice(const std::string& sec, const std::string& key, const std::vector<std::string>& allowed) const {
    const std::string s = str(sec, key);
    if (std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
      std::string opts;
      for (const auto& a : allowed) opts += (opts.empty() ? "" : "|") + a;
      throw config_error("config: [" + sec + "] " + key + " must be one of " + opts + " (got '" + s + "')");
    }
    return s;
  }

  void validate() const {
    auto positive = [&](const char* sec, const char* key) {
      const double x = num(sec, key);
      if (!(x > 0.0)) throw config_error(std::string("config: [") + sec + "] " + key + " must be > 0 (got " + fmt17(x) + ")");
    };
    auto nonneg = [&](const char* sec, const char* key) {
      const double x = num(sec, key);
      if (!(x >= 0.0)) throw config_error(std::string("config: [") + sec + "] " + key + " must be >= 0 (got " + fmt17(x) + ")");
    };
    auto velocity = [&](const char* sec, const char* key) {
      const double x = num(sec, key);
      if (!(std::abs(x) < 1.0)) throw config_error(std::string("config: [") + sec + "] " + key + " must satisfy |v| < 1");
    };
    positive("global", "beta");
    nonneg("global", "mass");
    num("global", "zeta");
    velocity("global", "frame_v");
    positive("global", "grid_s_min");
    positive("global", "grid_s_max");
    if (num("global", "grid_s_max") <= num("global", "grid_s_min"))
      throw config_error("config: [global] grid_s_max must exceed grid_s_min");
    if (integer("global", "grid_n") < 2) throw config_error("config: [global] grid_n must be >= 2");
    choice("global", "grid_rule", {"trapezoid", "gauss_legendre"});
    seed();
    if (integer("global", "threads") < 1) throw config_error("config: [global] threads must be >= 1");
    positive("kms", "span");
    positive("kms", "dt");
    nonneg("kms", "sigma");
    positive("kms", "nu_step");
    positive("kms", "nu_max");
    positive("mixing", "t_max");
    positive("mixing", "dt");
    nonneg("mixing", "T");
    positive("mixing", "width");
    positive("detector", "E");
    nonneg("detector", "lambda");
    choice("detector", "G", {"sigma_x", "sigma_z"});
    positive("detector", "E_min");
    positive("detector", "E_max");
    if (integer("detector", "E_count") < 1) throw config_error("config: [detector] E_count must be >= 1");
    choice("trajectory", "kind", {"rest", "inertial", "accelerated"});
    velocity("trajectory", "v");
    positive("trajectory", "a");
    num("trajectory", "eta");
    choice("response", "method", {"automatic", "time_domain"});
    nonneg("response", "sigma");
    choice("liouville", "sampling", {"gauss_legendre", "band"});
    const long n = integer("liouville", "N_modes");
    if (n < 2 || n % 2) throw config_error("config: [liouville] N_modes must be an even number >= 2");
    if (integer("liouville", "n_tot_max") < 1) throw config_error("config: [liouville] n_tot_max must be >= 1");
    flag("liouville", "exclude_pairs");
    positive("liouville", "s_min");
    positive("liouville", "s_max");
    positive("liouville", "band_width");
    nonneg("liouville", "jitter");
    for (double l : list("liouville", "lambdas"))
      if (!(l > 0.0)) throw config_error("config: [liouville] lambdas entries must be > 0");
    nonneg("liouville", "lambda");
    nonneg("liouville", "t_max");
    if (integer("liouville", "t_count") < 2) throw config_error("config: [liouville] t_count must be >= 2");
    choice("liouville", "initial", {"excited", "ground_boson", "entangled", "all"});
    positive("liouville", "threshold");
    positive("disjointness", "beta2");
    velocity("disjointness", "v");
    choice("disjointness", "state2", {"kms", "vacuum"});
    if (integer("disjointness", "n_max_modes") < 1) throw config_error("config: [disjointness] n_max_modes must be >= 1");
    nonneg("disjointness", "s_lo");
    positive("disjointness", "s_hi");
    if (integer("disjointness", "c_bins") < 1) throw config_error("config: [disjointness] c_bins must be >= 1");
    choice("disjointness", "ordering", {"natural", "weight"});
  }

  std::string to_ini() const {
    std::ostringstream os;
    boost::property_tree::write_ini(os, tree_);
    return os.str();
  }

  bool operator==(const ExperimentConfig& o) const { return to_ini() == o.to_ini(); }

 private:
  boost::property_tree::ptree tree_;
};

}  // namespace kmslab
