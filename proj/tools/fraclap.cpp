// fraclap: extremals, eps sweeps and Poincare bounds for the regional
// fractional Sobolev quotient.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fraclap/commands.hpp"
#include "fraclap/config.hpp"
#include "fraclap/verify/acceptance.hpp"

namespace {

struct Flags {
  std::string config_path;
  std::string out;
  std::optional<long long> seed;
  std::optional<int> threads;
  std::vector<std::string> sets;
  std::optional<double> c;
  std::vector<int> only;
};

fraclap::RunConfig load(const Flags& f) {
  nlohmann::json j = f.config_path.empty() ? nlohmann::json::object() : fraclap::read_json_file(f.config_path);
  for (const auto& s : f.sets) fraclap::apply_override(j, s);
  if (f.seed) {
    fraclap::detail::require(*f.seed >= 0, "--seed must be nonnegative");
    j["seed"] = static_cast<std::uint64_t>(*f.seed);
  }
  if (f.threads) j["threads"] = *f.threads;
  if (!f.out.empty()) j["output"] = f.out;
  fraclap::RunConfig cfg = fraclap::config_from_json(j);
  fraclap::validate(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Extremals of the regional fractional Sobolev quotient on contracted domains"};
  app.require_subcommand(1);
  Flags f;
  app.add_option("--config", f.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--out", f.out, "output path (overrides the config)");
  app.add_option("--seed", f.seed, "random seed (overrides the config)");
  app.add_option("--threads", f.threads, "worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
  app.add_option("--set", f.sets, "config override key.path=value (repeatable)");

  auto* extremal = app.add_subcommand("extremal", "minimize the scaled quotient at a single eps");
  auto* sweep = app.add_subcommand("sweep", "eps sweep to CSV with a JSON sidecar");
  auto* poincare = app.add_subcommand("poincare", "discrete Poincare constant");
  auto* bound = app.add_subcommand("bound", "lower bound on the uniqueness threshold");
  bound->add_option("--c", f.c, "use this constant instead of computing it");
  auto* verify = app.add_subcommand("verify", "run the acceptance suite");
  verify->add_option("--only", f.only, "criterion numbers to run");
  for (auto* sub : {extremal, sweep, poincare, bound, verify}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : fraclap::kExitInvalid;
  }

  if (*verify) {
    fraclap::verify::AcceptanceOptions opts;
    if (f.threads) opts.threads = static_cast<unsigned>(*f.threads);
    opts.only.insert(f.only.begin(), f.only.end());
    return fraclap::guarded([&] { return fraclap::verify::cmd_verify(opts); });
  }

  return fraclap::guarded([&] {
    const fraclap::RunConfig cfg = load(f);
    if (*extremal) return fraclap::cmd_extremal(cfg);
    if (*sweep) return fraclap::cmd_sweep(cfg);
    if (*poincare) return fraclap::cmd_poincare(cfg);
    return fraclap::cmd_bound(cfg, f.c);
  });
}
