#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "fraclap/assembly.hpp"
#include "fraclap/error.hpp"
#include "fraclap/mesh.hpp"
#include "fraclap/params.hpp"
#include "fraclap/scan.hpp"

namespace fraclap {

struct DomainSpec {
  std::string kind = "interval";  ///< "interval" or "rectangle"
  double a = 0.0, b = 1.0;
  int n_elements = 128;
  double lx = 1.0, ly = 1.0;
  int nx = 16, ny = 16;

  Mesh build() const {
    if (kind == "interval") return build_interval_mesh(a, b, n_elements);
    return build_rect_mesh(lx, ly, nx, ny);
  }
  int dimension() const { return kind == "interval" ? 1 : 2; }
};

struct RunConfig {
  DomainSpec domain;
  double s = 0.5;
  double q = 4.0;
  std::optional<double> eps;
  double eps_min = 1e-3, eps_max = 1e-1;
  int eps_points = 13;
  SolverOptions solver;
  int n_starts = 8;
  AssemblyOptions assembly;
  bool refine = true;
  std::uint64_t seed = 0;
  std::string output;

  FractionalParams params() const { return FractionalParams::make(s, q, domain.dimension()); }

  SweepOptions sweep_options() const {
    SweepOptions o;
    o.eps_min = eps_min;
    o.eps_max = eps_max;
    o.points = eps_points;
    o.n_starts = n_starts;
    o.seed = seed;
    o.solver = solver;
    return o;
  }
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  require(obj.is_object(), "'" + where + "' must be a table");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) throw ValidationError("unknown key '" + it.key() + "' in " + where);
}

template <class T>
void read(const json& obj, const char* key, T& dst, const std::string& where) {
  if (!obj.contains(key)) return;
  if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>)
    require(obj.at(key).is_number_integer(), "'" + std::string(key) + "' in " + where + " must be an integer");
  try {
    dst = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("bad value for '" + std::string(key) + "' in " + where);
  }
}

inline void read_seed(const json& obj, std::uint64_t& dst) {
  if (!obj.contains("seed")) return;
  const json& v = obj.at("seed");
  require(v.is_number_integer() && (v.is_number_unsigned() || v.get<std::int64_t>() >= 0),
          "seed must be a nonnegative integer");
  dst = v.get<std::uint64_t>();
}

}  // namespace detail

/// Checks every field against the mesh and parameter rules without assembling.
inline void validate(const RunConfig& c) {
  detail::require(c.domain.kind == "interval" || c.domain.kind == "rectangle",
                  "domain kind must be 'interval' or 'rectangle'");
  const Mesh mesh = c.domain.build();
  detail::check_node_cap(mesh);
  (void)c.params();
  if (c.eps) detail::require(std::isfinite(*c.eps) && *c.eps > 0.0, "eps must be positive");
  (void)geometric_grid(c.eps_min, c.eps_max, c.eps_points);
  detail::require(std::isfinite(c.solver.tol) && c.solver.tol > 0.0, "solver tol must be positive");
  detail::require(c.solver.max_iter >= 0, "solver max_iter must be nonnegative");
  detail::require(c.solver.cluster_tol > 0.0, "cluster_tol must be positive");
  detail::require(c.solver.energy_match >= 0.0, "energy_match must be nonnegative");
  detail::require(c.solver.tol_inv >= 0.0, "tol_inv must be nonnegative");
  detail::require(c.n_starts >= 2, "n_starts must be at least 2");
  detail::validate_options(c.assembly);
}

/// Reads a config tree. Unknown keys are rejected.
inline RunConfig config_from_json(const nlohmann::json& j) {
  using detail::read;
  RunConfig c;
  detail::reject_unknown(j, {"domain", "params", "eps", "eps_grid", "solver", "assembly", "refine", "seed", "threads", "output"},
                         "config");
  if (j.contains("domain")) {
    const auto& d = j.at("domain");
    detail::reject_unknown(d, {"kind", "a", "b", "n_elements", "lx", "ly", "nx", "ny"}, "domain");
    read(d, "kind", c.domain.kind, "domain");
    read(d, "a", c.domain.a, "domain");
    read(d, "b", c.domain.b, "domain");
    read(d, "n_elements", c.domain.n_elements, "domain");
    read(d, "lx", c.domain.lx, "domain");
    read(d, "ly", c.domain.ly, "domain");
    read(d, "nx", c.domain.nx, "domain");
    read(d, "ny", c.domain.ny, "domain");
  }
  if (j.contains("params")) {
    const auto& p = j.at("params");
    detail::reject_unknown(p, {"s", "q"}, "params");
    read(p, "s", c.s, "params");
    read(p, "q", c.q, "params");
  }
  if (j.contains("eps") && !j.at("eps").is_null()) {
    double e = 0.0;
    read(j, "eps", e, "config");
    c.eps = e;
  }
  if (j.contains("eps_grid")) {
    const auto& g = j.at("eps_grid");
    detail::reject_unknown(g, {"min", "max", "points"}, "eps_grid");
    read(g, "min", c.eps_min, "eps_grid");
    read(g, "max", c.eps_max, "eps_grid");
    read(g, "points", c.eps_points, "eps_grid");
  }
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    detail::reject_unknown(s, {"tol", "max_iter", "n_starts", "cluster_tol", "energy_match", "tol_inv"}, "solver");
    read(s, "tol", c.solver.tol, "solver");
    read(s, "max_iter", c.solver.max_iter, "solver");
    read(s, "n_starts", c.n_starts, "solver");
    read(s, "cluster_tol", c.solver.cluster_tol, "solver");
    read(s, "energy_match", c.solver.energy_match, "solver");
    read(s, "tol_inv", c.solver.tol_inv, "solver");
  }
  if (j.contains("assembly")) {
    const auto& a = j.at("assembly");
    detail::reject_unknown(a, {"gauss_order", "singular_levels"}, "assembly");
    read(a, "gauss_order", c.assembly.gauss_order, "assembly");
    read(a, "singular_levels", c.assembly.singular_levels, "assembly");
  }
  read(j, "refine", c.refine, "config");
  detail::read_seed(j, c.seed);
  if (j.contains("threads")) {
    int t = 0;
    read(j, "threads", t, "config");
    detail::require(t >= 0, "threads must be nonnegative");
    c.solver.threads = static_cast<unsigned>(t);
    c.assembly.threads = static_cast<unsigned>(t);
  }
  read(j, "output", c.output, "config");
  return c;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file '" + path + "'");
  try {
    return nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

/// Applies "a.b.c=value" to a config tree; value is parsed as JSON, falling
/// back to a plain string.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  detail::require(eq != std::string::npos && eq > 0, "override must look like key.path=value");
  const std::string path = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  nlohmann::json* node = &j;
  std::stringstream ss(path);
  std::string key;
  std::vector<std::string> keys;
  while (std::getline(ss, key, '.')) keys.push_back(key);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    detail::require(!keys[i].empty(), "empty key in override path '" + path + "'");
    if (!node->is_object()) *node = nlohmann::json::object();
    node = &(*node)[keys[i]];
  }
  *node = value;
}

}  // namespace fraclap
