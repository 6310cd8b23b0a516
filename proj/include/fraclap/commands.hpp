#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include <json.hpp>

#include "fraclap/config.hpp"
#include "fraclap/extremal.hpp"
#include "fraclap/poincare.hpp"
#include "fraclap/scan.hpp"

namespace fraclap {

enum ExitCode : int { kExitOk = 0, kExitInvalid = 1, kExitNoConvergence = 2 };

/// Writes to a sibling temporary file, then renames it over path.
inline void write_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw ValidationError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw ValidationError("cannot move output into place at '" + path + "'");
  }
}

/// %.17g: enough digits to round-trip any double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline void emit(const RunConfig& cfg, const std::string& text, std::ostream& out) {
  if (cfg.output.empty())
    out << text;
  else
    write_atomic(cfg.output, text);
}

struct Prepared {
  std::shared_ptr<const Mesh> mesh;
  EnergyForms forms;
};

inline Prepared prepare(const RunConfig& cfg) {
  validate(cfg);
  Prepared p;
  p.mesh = std::make_shared<const Mesh>(cfg.domain.build());
  p.forms = build_energy_forms(p.mesh, cfg.params(), cfg.assembly);
  return p;
}

inline nlohmann::json node_list(const Mesh& m) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& pt : m.nodes()) {
    if (m.dimension() == 1)
      nodes.push_back(pt.x);
    else
      nodes.push_back({pt.x, pt.y});
  }
  return nodes;
}

inline std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

}  // namespace detail

/// Single minimization at cfg.eps from the constant plus seeded noise.
inline int cmd_extremal(const RunConfig& cfg, std::ostream& out = std::cout) {
  require_extremal_exponent(cfg.params());
  detail::require(cfg.eps.has_value(), "extremal needs a single 'eps' in the config");
  const detail::Prepared p = detail::prepare(cfg);
  const ExtremalResult r = minimize_rayleigh(p.forms, *cfg.eps, random_start(p.forms, cfg.seed, 0), cfg.solver);

  nlohmann::json j;
  j["eps"] = r.eps;
  j["S"] = r.S;
  j["S_scaled"] = r.S_scaled;
  j["lambda"] = r.lambda;
  j["residual"] = r.residual_norm;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["nodes"] = detail::node_list(*p.mesh);
  j["u"] = std::vector<double>(r.u.coeffs.data(), r.u.coeffs.data() + r.u.coeffs.size());
  detail::emit(cfg, detail::dump(j), out);
  return r.converged ? kExitOk : kExitNoConvergence;
}

inline std::string sweep_csv(const std::vector<ScanRecord>& records) {
  std::string csv = "eps,S_scaled,lambda_eps,dist_const_q,mu_min,n_clusters,converged\n";
  for (const auto& r : records) {
    csv += format_double(r.eps) + ',' + format_double(r.S_scaled) + ',' + format_double(r.lambda_eps) + ',' +
           format_double(r.dist_const_q) + ',' + format_double(r.mu_min) + ',' + std::to_string(r.n_clusters) + ',' +
           (r.converged ? "true" : "false") + '\n';
  }
  return csv;
}

inline nlohmann::json estimate_json(const Eps0Estimate& e) {
  nlohmann::json j;
  j["found"] = e.found;
  if (e.found)
    j["eps0_numerical"] = e.eps0_numerical;
  else
    j["eps0_numerical"] = "not-found-in-range";
  j["detection_mode"] = to_string(e.detection_mode);
  j["eps_lo"] = e.eps_lo;
  j["eps_hi"] = e.eps_hi;
  j["bisection_steps"] = e.bisection_steps;
  j["below_range"] = e.below_range;
  j["eps0_theoretical"] = e.eps0_theoretical;
  j["c_used"] = e.c_used;
  j["poincare_converged"] = e.poincare_converged;
  j["eps_constant_crossing"] = std::isfinite(e.eps_constant_crossing) ? nlohmann::json(e.eps_constant_crossing) : nlohmann::json();
  j["prediction_consistent"] = e.prediction_consistent;
  return j;
}

/// Sweep CSV at cfg.output plus a JSON sidecar at cfg.output + ".json".
inline int cmd_sweep(const RunConfig& cfg, std::ostream& err = std::cerr) {
  require_extremal_exponent(cfg.params());
  detail::require(!cfg.output.empty(), "sweep needs an output path (--out or 'output' in the config)");
  const detail::Prepared p = detail::prepare(cfg);
  const SweepOptions so = cfg.sweep_options();
  const std::vector<ScanRecord> records = eps_sweep(p.forms, so);
  const Eps0Estimate est = estimate_eps0(records, cfg.refine, p.forms, so);

  nlohmann::json side;
  side["eps0_estimate"] = estimate_json(est);
  side["eps0_theoretical"] = est.eps0_theoretical;
  side["c_used"] = est.c_used;
  side["params"] = {{"s", cfg.s}, {"q", cfg.q}, {"n", cfg.domain.dimension()}};
  side["measure"] = p.mesh->measure();
  side["num_nodes"] = p.mesh->num_nodes();
  side["seed"] = cfg.seed;
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& r : records)
    if (!r.error.empty()) failures.push_back({{"eps", r.eps}, {"error", r.error}});
  side["failures"] = failures;

  write_atomic(cfg.output, sweep_csv(records));
  write_atomic(cfg.output + ".json", detail::dump(side));
  for (const auto& r : records)
    if (!r.converged) err << "warning: eps=" << format_double(r.eps) << " did not converge" << (r.error.empty() ? "" : ": " + r.error) << "\n";
  return kExitOk;
}

inline int cmd_poincare(const RunConfig& cfg, std::ostream& out = std::cout) {
  const detail::Prepared p = detail::prepare(cfg);
  const PoincareResult r = poincare_constant(p.forms, cfg.solver);
  nlohmann::json j;
  j["c"] = r.c;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["residual"] = r.residual;
  j["s"] = cfg.s;
  j["q"] = cfg.q;
  j["measure"] = p.mesh->measure();
  detail::emit(cfg, detail::dump(j), out);
  return r.converged ? kExitOk : kExitNoConvergence;
}

/// Threshold bound; c comes from c_override when given, else from the
/// discrete Poincare constant of the configured mesh.
inline int cmd_bound(const RunConfig& cfg, std::optional<double> c_override = {}, std::ostream& out = std::cout) {
  const FractionalParams params = cfg.params();
  detail::require(params.q > 1.0, "bound needs q > 1");
  validate(cfg);
  const Mesh mesh = cfg.domain.build();
  double c = 0.0;
  bool converged = true;
  if (c_override) {
    c = *c_override;
  } else {
    const detail::Prepared p = detail::prepare(cfg);
    const PoincareResult r = poincare_constant(p.forms, cfg.solver);
    c = r.c;
    converged = r.converged;
  }
  const EpsilonBound b = epsilon0_lower_bound(c, params, mesh.measure());
  nlohmann::json j;
  j["eps0_theoretical"] = b.eps0_theoretical;
  j["c_used"] = b.c_used;
  j["c_converged"] = converged;
  j["s"] = b.s;
  j["q"] = b.q;
  j["measure"] = b.measure;
  detail::emit(cfg, detail::dump(j), out);
  return converged ? kExitOk : kExitNoConvergence;
}

/// Maps library exceptions to exit codes, printing the message on err.
template <class Fn>
int guarded(Fn&& fn, std::ostream& err = std::cerr) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNoConvergence;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
}

}  // namespace fraclap
