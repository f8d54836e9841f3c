#include <gtest/gtest.h>

#include <kmslab/config.hpp>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sys/wait.h>

using namespace kmslab;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
};

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("kmslab-test-" + name);
  fs::remove_all(p);
  return p;
}

CliRun cli(const std::string& args, const fs::path& out) {
  const std::string cmd = std::string(KMSLAB_CLI_PATH) + " " + args + " --out " + out.string() + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {-1, ""};
  std::string text;
  std::array<char, 4096> buf;
  while (std::fgets(buf.data(), buf.size(), pipe)) text += buf.data();
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, text};
}

double field(const std::string& text, const std::string& key) {
  std::smatch m;
  if (!std::regex_search(text, m, std::regex(key + "=([-+0-9.eE]+|inf|nan)"))) return std::nan("");
  return std::stod(m[1]);
}

}  // namespace

TEST(ExperimentConfig, RoundTripsThroughIni) {
  ExperimentConfig a;
  a.set("global", "beta", "2.5");
  a.set("liouville", "lambdas", "0.01,0.02");
  const fs::path dir = scratch("roundtrip");
  fs::create_directories(dir);
  std::ofstream(dir / "cfg.ini") << a.to_ini();
  ExperimentConfig b;
  b.merge_file((dir / "cfg.ini").string());
  EXPECT_TRUE(a == b);
  EXPECT_EQ(b.num("global", "beta"), 2.5);
  EXPECT_EQ(b.list("liouville", "lambdas"), (std::vector<double>{0.01, 0.02}));
  EXPECT_FALSE(ExperimentConfig() == b);
}

TEST(ExperimentConfig, EnvironmentOverridesDefaults) {
  ::setenv("KMSLAB_GLOBAL_BETA", "3.25", 1);
  ExperimentConfig c;
  c.apply_environment();
  ::unsetenv("KMSLAB_GLOBAL_BETA");
  EXPECT_EQ(c.num("global", "beta"), 3.25);
}

TEST(ExperimentConfig, UnknownEntriesRejected) {
  ExperimentConfig c;
  EXPECT_THROW(c.set("global", "betta", "1"), config_error);
  EXPECT_THROW(c.set("nowhere", "beta", "1"), config_error);
  const fs::path dir = scratch("unknown");
  fs::create_directories(dir);
  std::ofstream(dir / "cfg.ini") << "[kms]\nspan = 100\nwidth = 3\n";
  EXPECT_THROW(c.merge_file((dir / "cfg.ini").string()), config_error);
}

TEST(ExperimentConfig, Assignment) {
  ExperimentConfig c;
  c.set_assignment("detector.E=2.5");
  EXPECT_EQ(c.num("detector", "E"), 2.5);
  c.set_assignment("liouville.initial=all");
  EXPECT_EQ(c.str("liouville", "initial"), "all");
  EXPECT_THROW(c.set_assignment("detector.E"), config_error);
  EXPECT_THROW(c.set_assignment("E=2"), config_error);
}

TEST(ExperimentConfig, ValidationCatchesBadValues) {
  EXPECT_NO_THROW(ExperimentConfig().validate());
  const std::vector<std::string> bad = {"global.beta=-1",        "global.frame_v=1",        "global.grid_rule=simpson",
                                        "liouville.N_modes=7",   "liouville.lambdas=0.1,x", "disjointness.ordering=random",
                                        "global.seed=-3",        "detector.E=abc",          "liouville.exclude_pairs=maybe"};
  for (const auto& a : bad) {
    ExperimentConfig c;
    c.set_assignment(a);
    EXPECT_THROW(c.validate(), config_error) << a;
  }
}

TEST(Cli, ExitCodes) {
  const fs::path out = scratch("codes");
  EXPECT_EQ(cli("formfactor", out).code, 0);
  EXPECT_TRUE(fs::exists(out / "manifest.txt"));
  EXPECT_EQ(cli("bogus", out).code, 1);
  EXPECT_EQ(cli("--set global.beta=-1 formfactor", out).code, 2);
  EXPECT_EQ(cli("--set global.nothing=1 formfactor", out).code, 2);
}

TEST(Cli, ManifestRecordsEffectiveConfig) {
  const fs::path out = scratch("manifest");
  ASSERT_EQ(cli("--set global.beta=1.75 formfactor", out).code, 0);
  std::ifstream in(out / "manifest.txt");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_NE(text.find("subcommand=formfactor"), std::string::npos);
  EXPECT_NE(text.find("beta=1.75"), std::string::npos);
}

TEST(Cli, FormFactorIdentity) {
  const CliRun r = cli("formfactor", scratch("formfactor"));
  ASSERT_EQ(r.code, 0);
  EXPECT_LT(field(r.out, "jf_identity_max_err"), 1e-12);
}

TEST(Cli, RestResponseIsPlanckian) {
  const CliRun r = cli("--set detector.E_min=1 --set detector.E_count=1 response --trajectory rest --beta 1", scratch("response"));
  ASSERT_EQ(r.code, 0);
  EXPECT_NEAR(field(r.out, "balance") / std::exp(-1.0), 1.0, 0.02);
}
