#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fraclap/commands.hpp"
#include "fraclap/config.hpp"
#include "fraclap/linearization.hpp"
#include "helpers.hpp"

using namespace fraclap;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("fraclap_test_config_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig small_config() {
  RunConfig c;
  c.domain.n_elements = 32;
  c.eps_points = 4;
  c.n_starts = 3;
  return c;
}

}  // namespace

TEST(Config, DefaultsAreValid) { EXPECT_NO_THROW(validate(RunConfig{})); }

TEST(Config, ParsesNestedTables) {
  const auto j = nlohmann::json::parse(R"({
    "domain": {"kind": "rectangle", "lx": 2, "ly": 1, "nx": 4, "ny": 2},
    "params": {"s": 0.25, "q": 2.5},
    "eps": 0.2,
    "eps_grid": {"min": 0.01, "max": 0.5, "points": 5},
    "solver": {"tol": 1e-8, "max_iter": 50, "n_starts": 3, "cluster_tol": 1e-3, "tol_inv": 1e-6},
    "assembly": {"gauss_order": 3, "singular_levels": 3},
    "refine": false, "seed": 99, "threads": 2, "output": "x.csv"})");
  const RunConfig c = config_from_json(j);
  EXPECT_EQ(c.domain.kind, "rectangle");
  EXPECT_EQ(c.domain.nx, 4);
  EXPECT_EQ(c.s, 0.25);
  EXPECT_EQ(c.q, 2.5);
  EXPECT_EQ(*c.eps, 0.2);
  EXPECT_EQ(c.eps_points, 5);
  EXPECT_EQ(c.solver.max_iter, 50);
  EXPECT_EQ(c.n_starts, 3);
  EXPECT_EQ(c.solver.tol_inv, 1e-6);
  EXPECT_EQ(c.assembly.gauss_order, 3);
  EXPECT_FALSE(c.refine);
  EXPECT_EQ(c.seed, 99u);
  EXPECT_EQ(c.solver.threads, 2u);
  EXPECT_EQ(c.output, "x.csv");
  EXPECT_NO_THROW(validate(c));
  EXPECT_EQ(c.params().n, 2);
}

TEST(Config, RejectsInvalidInput) {
  using nlohmann::json;
  EXPECT_THROW(config_from_json(json::parse(R"({"bogus": 1})")), ValidationError);
  EXPECT_THROW(config_from_json(json::parse(R"({"params": {"s": 0.5, "r": 2}})")), ValidationError);
  EXPECT_THROW(config_from_json(json::parse(R"({"seed": -1})")), ValidationError);
  EXPECT_THROW(config_from_json(json::parse(R"({"domain": {"n_elements": 3.5}})")), ValidationError);
  EXPECT_THROW(config_from_json(json::parse(R"({"params": {"q": "four"}})")), ValidationError);
  EXPECT_THROW(validate(config_from_json(json::parse(R"({"params": {"s": 1.2}})"))), ValidationError);
  EXPECT_THROW(validate(config_from_json(json::parse(R"({"domain": {"a": 1, "b": 0}})"))), ValidationError);
  EXPECT_THROW(validate(config_from_json(json::parse(R"({"domain": {"kind": "disk"}})"))), ValidationError);
  EXPECT_THROW(validate(config_from_json(json::parse(R"({"domain": {"n_elements": 5000}})"))), ValidationError);
  EXPECT_THROW(validate(config_from_json(json::parse(R"({"eps_grid": {"max": 2}})"))), ValidationError);
  EXPECT_THROW(validate(config_from_json(json::parse(R"({"solver": {"n_starts": 1}})"))), ValidationError);
  EXPECT_THROW(validate(config_from_json(json::parse(R"({"eps": -0.1})"))), ValidationError);
}

TEST(Config, Overrides) {
  nlohmann::json j = nlohmann::json::object();
  apply_override(j, "params.q=3.5");
  apply_override(j, "domain.kind=rectangle");
  apply_override(j, "refine=false");
  const RunConfig c = config_from_json(j);
  EXPECT_EQ(c.q, 3.5);
  EXPECT_EQ(c.domain.kind, "rectangle");
  EXPECT_FALSE(c.refine);
  EXPECT_THROW(apply_override(j, "novalue"), ValidationError);
  EXPECT_THROW(apply_override(j, "a..b=1"), ValidationError);
}

TEST(Config, SamplesLoad) {
  for (const char* name : {"interval_q4.json", "long_interval_split.json", "square_q3.json"}) {
    const RunConfig c = config_from_json(read_json_file(std::string(FRACLAP_SAMPLES_DIR) + "/" + name));
    EXPECT_NO_THROW(validate(c)) << name;
  }
  EXPECT_THROW(read_json_file("/nonexistent/config.json"), ValidationError);
}

TEST(Commands, ExtremalReport) {
  RunConfig c = small_config();
  c.eps = 1e-3;
  std::ostringstream out;
  EXPECT_EQ(cmd_extremal(c, out), kExitOk);
  const auto j = nlohmann::json::parse(out.str());
  EXPECT_TRUE(j["converged"].get<bool>());
  EXPECT_NEAR(j["S_scaled"].get<double>(), 1.0, 2e-2);
  EXPECT_EQ(j["lambda"].get<double>(), j["S_scaled"].get<double>());
  EXPECT_EQ(j["u"].size(), 33u);
  EXPECT_LE(j["residual"].get<double>(), 1e-9);
  EXPECT_TRUE(j.contains("S") && j.contains("iterations"));
}

TEST(Commands, ExtremalExitCodes) {
  RunConfig c = small_config();
  c.eps = 1e-3;
  c.solver.max_iter = 1;
  std::ostringstream out, err;
  EXPECT_EQ(guarded([&] { return cmd_extremal(c, out); }, err), kExitNoConvergence);
  EXPECT_FALSE(nlohmann::json::parse(out.str())["converged"].get<bool>());
  c.solver.max_iter = 20000;
  c.q = 2.0;
  EXPECT_EQ(guarded([&] { return cmd_extremal(c, out); }, err), kExitInvalid);
  EXPECT_NE(err.str().find("q != 2"), std::string::npos);
  c.q = 4.0;
  c.eps.reset();
  EXPECT_EQ(guarded([&] { return cmd_extremal(c, out); }, err), kExitInvalid);
}

TEST(Commands, SweepCsvAndSidecar) {
  const fs::path dir = scratch_dir("sweep");
  RunConfig c = small_config();
  c.output = (dir / "s.csv").string();
  std::ostringstream err;
  ASSERT_EQ(cmd_sweep(c, err), kExitOk);
  std::istringstream csv(slurp(dir / "s.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "eps,S_scaled,lambda_eps,dist_const_q,mu_min,n_clusters,converged");
  int rows = 0;
  double prev = 0.0;
  while (std::getline(csv, line)) {
    ++rows;
    const double eps = std::stod(line.substr(0, line.find(',')));
    EXPECT_GT(eps, prev);
    prev = eps;
  }
  EXPECT_EQ(rows, 4);
  EXPECT_FALSE(fs::exists(dir / "s.csv.tmp"));

  const auto side = nlohmann::json::parse(slurp(dir / "s.csv.json"));
  const auto f = build_energy_forms(build_interval_mesh(0, 1, 32), c.params());
  const double expect = epsilon0_lower_bound(poincare_constant(f).c, c.params(), 1.0).eps0_theoretical;
  EXPECT_NEAR(side["eps0_theoretical"].get<double>(), expect, 1e-12 * expect);
  EXPECT_EQ(side["eps0_estimate"]["detection_mode"], "none");
  EXPECT_EQ(side["eps0_estimate"]["eps0_numerical"], "not-found-in-range");
  fs::remove_all(dir);
}

TEST(Commands, SweepNeedsOutput) {
  RunConfig c = small_config();
  std::ostringstream err;
  EXPECT_EQ(guarded([&] { return cmd_sweep(c, err); }, err), kExitInvalid);
}

TEST(Commands, FormatKeepsSeventeenDigits) {
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(std::stod(format_double(1.0 / 3.0)), 1.0 / 3.0);
}

TEST(Commands, PoincareAndBound) {
  RunConfig c = small_config();
  c.q = 2.0;
  std::ostringstream out;
  EXPECT_EQ(cmd_poincare(c, out), kExitOk);
  const auto j = nlohmann::json::parse(out.str());
  const auto f = build_energy_forms(build_interval_mesh(0, 1, 32), c.params());
  EXPECT_NEAR(j["c"].get<double>(), mean_zero_spectrum(f).mu_min, 1e-12);

  c.q = 3.0;
  std::ostringstream b;
  EXPECT_EQ(cmd_bound(c, 2.0, b), kExitOk);
  EXPECT_NEAR(nlohmann::json::parse(b.str())["eps0_theoretical"].get<double>(), 1.0, 1e-15);

  c.q = 1.0;
  std::ostringstream err;
  EXPECT_EQ(guarded([&] { return cmd_bound(c, 2.0, b); }, err), kExitInvalid);
}

TEST(Commands, AtomicWriteReplaces) {
  const fs::path dir = scratch_dir("atomic");
  const std::string p = (dir / "f.txt").string();
  write_atomic(p, "first");
  write_atomic(p, "second");
  EXPECT_EQ(slurp(p), "second");
  EXPECT_FALSE(fs::exists(p + ".tmp"));
  EXPECT_THROW(write_atomic((dir / "missing" / "f.txt").string(), "x"), ValidationError);
  fs::remove_all(dir);
}
