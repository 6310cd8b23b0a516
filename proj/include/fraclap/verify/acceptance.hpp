#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "fraclap/assembly.hpp"
#include "fraclap/commands.hpp"
#include "fraclap/extremal.hpp"
#include "fraclap/linearization.hpp"
#include "fraclap/poincare.hpp"
#include "fraclap/scan.hpp"
#include "fraclap/verify/oracles.hpp"

namespace fraclap::verify {

struct CriterionResult {
  int id = 0;
  std::string title;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct AcceptanceOptions {
  unsigned threads = 0;
  int n_starts = 4;
  std::set<int> only;   ///< empty: run all
  std::string workdir;  ///< scratch directory for the CLI round trip; empty: system temp
};

namespace detail {

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline std::shared_ptr<const Mesh> unit_interval(int n) { return std::make_shared<const Mesh>(build_interval_mesh(0.0, 1.0, n)); }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct SweepCase {
  double s, q;
  std::shared_ptr<EnergyForms> forms;
  std::vector<ScanRecord> records;
};

class Suite {
public:
  explicit Suite(AcceptanceOptions o) : opts_(std::move(o)) {}

  std::vector<CriterionResult> run(std::ostream& log) {
    std::vector<CriterionResult> out;
    const std::vector<std::pair<int, std::function<CriterionResult()>>> all = {
        {1, [&] { return bounded_by_constant(); }},  {2, [&] { return small_eps_limit(); }},
        {3, [&] { return scaling_identities(); }},   {4, [&] { return linear_seminorm(); }},
        {5, [&] { return jacobian_consistency(); }}, {6, [&] { return constant_spectrum(); }},
        {7, [&] { return three_node_oracle(); }},    {8, [&] { return threshold_bound(); }},
        {9, [&] { return weak_residuals(); }},       {10, [&] { return determinism(); }}};
    for (const auto& [id, fn] : all) {
      if (!opts_.only.empty() && !opts_.only.count(id)) continue;
      const auto t0 = std::chrono::steady_clock::now();
      CriterionResult r;
      try {
        r = fn();
      } catch (const std::exception& e) {
        r.passed = false;
        r.detail = std::string("exception: ") + e.what();
      }
      r.id = id;
      r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      char head[96];
      std::snprintf(head, sizeof head, "%s [%2d] ", r.passed ? "PASS" : "FAIL", id);
      log << head << r.title << ": " << r.detail << " (" << fmt("%.1f", r.seconds) << " s)" << std::endl;
      out.push_back(std::move(r));
    }
    return out;
  }

private:
  AcceptanceOptions opts_;
  std::vector<SweepCase> bound_cases_;
  std::vector<ScanRecord> limit_records_;
  std::shared_ptr<EnergyForms> limit_forms_;

  SolverOptions solver() const {
    SolverOptions s;
    s.threads = opts_.threads;
    return s;
  }

  SweepOptions sweep(double lo, double hi, int points) const {
    SweepOptions o;
    o.eps_min = lo;
    o.eps_max = hi;
    o.points = points;
    o.n_starts = opts_.n_starts;
    o.seed = 0;
    o.solver = solver();
    return o;
  }

  std::shared_ptr<EnergyForms> forms(std::shared_ptr<const Mesh> m, double s, double q) const {
    AssemblyOptions a;
    a.threads = opts_.threads;
    return std::make_shared<EnergyForms>(build_energy_forms(std::move(m), FractionalParams::make(s, q, 1), a));
  }

  void ensure_bound_cases() {
    if (!bound_cases_.empty()) return;
    const auto mesh = unit_interval(128);
    for (double s : {0.25, 0.5, 0.75})
      for (double q : {1.5, 3.0, 4.0}) {
        if (!(q < critical_exponent(s, 1))) continue;
        SweepCase c{s, q, forms(mesh, s, q), {}};
        c.records = eps_sweep(*c.forms, sweep(1e-3, 1.0, 13));
        bound_cases_.push_back(std::move(c));
      }
  }

  void ensure_limit_records() {
    if (limit_forms_) return;
    limit_forms_ = forms(unit_interval(256), 0.5, 4.0);
    limit_records_ = eps_sweep(*limit_forms_, sweep(1e-3, 1e-1, 13));
  }

  CriterionResult bounded_by_constant() {
    CriterionResult r{0, "quotient never exceeds the constant test function value", true, "", 0};
    const auto t0 = std::chrono::steady_clock::now();
    ensure_bound_cases();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    double worst = -std::numeric_limits<double>::infinity();
    std::size_t count = 0;
    for (const auto& c : bound_cases_)
      for (const auto& rec : c.records) {
        ++count;
        const double bound = std::pow(c.forms->mesh->measure(), 1.0 - 2.0 / c.q);
        const double excess = rec.S_scaled / bound - 1.0;
        worst = std::max(worst, excess);
        if (!(rec.S_scaled <= bound * (1.0 + 1e-9))) r.passed = false;
      }
    if (secs >= 60.0) r.passed = false;
    r.detail = std::to_string(bound_cases_.size()) + " (s,q) cases, " + std::to_string(count) +
               " records, max S_scaled/bound - 1 = " + fmt("%.3e", worst) + ", sweep time " + fmt("%.1f", secs) + " s";
    return r;
  }

  CriterionResult small_eps_limit() {
    CriterionResult r{0, "small-eps limit of the scaled constant and extremal (N=256)", false, "", 0};
    const auto t0 = std::chrono::steady_clock::now();
    ensure_limit_records();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const ScanRecord& lo = limit_records_.front();
    const ScanRecord& hi = limit_records_.back();
    const double gap_lo = std::abs(lo.S_scaled - 1.0), gap_hi = std::abs(hi.S_scaled - 1.0);
    r.passed = gap_lo <= 2e-2 && lo.dist_const_q <= 0.05 && gap_lo <= gap_hi && secs < 300.0;
    r.detail = "|S(1e-3)-1| = " + fmt("%.3e", gap_lo) + ", dist(1e-3) = " + fmt("%.3e", lo.dist_const_q) +
               ", |S(1e-1)-1| = " + fmt("%.3e", gap_hi) + ", sweep time " + fmt("%.1f", secs) + " s";
    return r;
  }

  CriterionResult scaling_identities() {
    CriterionResult r{0, "contracted-mesh assembly matches the scaled quotient", true, "", 0};
    const auto mesh = unit_interval(64);
    std::mt19937_64 rng(20240611);
    std::normal_distribution<double> nd(0.0, 1.0);
    double worst = 0.0;
    for (double s : {0.25, 0.5, 0.75})
      for (double q : {1.5, 3.0}) {
        const auto ref = forms(mesh, s, q);
        for (double eps : {0.25, 0.03}) {
          const auto scaled = forms(std::make_shared<const Mesh>(scale_mesh(*mesh, eps)), s, q);
          for (int k = 0; k < 20; ++k) {
            Vector u(static_cast<Eigen::Index>(mesh->num_nodes()));
            for (auto& v : u) v = nd(rng);
            const double direct = direct_contracted_quotient(*scaled, u);
            const double formula = scaled_quotient(u, eps, *ref);
            worst = std::max(worst, std::abs(direct - formula) / std::abs(direct));
          }
        }
      }
    r.passed = worst <= 1e-10;
    r.detail = "20 random functions x eps {0.25, 0.03} x 6 (s,q), max relative gap " + fmt("%.3e", worst);
    return r;
  }

  CriterionResult linear_seminorm() {
    CriterionResult r{0, "closed-form seminorm of u(x)=x with mesh convergence", true, "", 0};
    constexpr double kRoundoffFloor = 1e-12;
    std::ostringstream os;
    for (double s : {0.25, 0.5, 0.75}) {
      const double exact = linear_seminorm_exact(s);
      double prev = -1.0;
      os << "s=" << s << ":";
      for (int n : {64, 128, 256}) {
        const auto mesh = unit_interval(n);
        const auto f = forms(mesh, s, 3.0);
        const Vector u = interpolate(*mesh, [](const Point& p) { return p.x; });
        const double err = std::abs(u.dot(f->K * u) - exact) / exact;
        os << " " << fmt("%.2e", err);
        if (n == 256 && !(err <= 1e-3)) r.passed = false;
        if (prev >= 0.0 && !(err < prev || std::max(err, prev) <= kRoundoffFloor)) r.passed = false;
        prev = err;
      }
      os << "; ";
    }
    r.detail = "relative errors at N=64,128,256: " + os.str() + "errors below " + fmt("%.0e", kRoundoffFloor) +
               " count as round-off";
    return r;
  }

  CriterionResult jacobian_consistency() {
    CriterionResult r{0, "Jacobian against central differences of the residual", true, "", 0};
    const auto mesh = unit_interval(48);
    std::mt19937_64 rng(77);
    std::normal_distribution<double> nd(0.0, 1.0);
    double worst = 0.0;
    int states = 0;
    for (double q : {1.5, 4.0}) {
      const auto f = forms(mesh, 0.5, q);
      for (int k = 0; k < 10; ++k) {
        const double eps = k % 2 == 0 ? 0.5 : 1.0;
        Vector u(static_cast<Eigen::Index>(mesh->num_nodes())), v(u.size());
        for (auto& x : u) x = 1.0 + 0.1 * nd(rng);
        for (auto& x : v) x = nd(rng);
        u /= f->lq_norm(u);
        const double lambda = scaled_quotient(u, eps, *f);
        const Vector Jv = assemble_jacobian(u, eps, lambda, *f) * v;
        const Vector fd = residual_directional_fd(*f, u, v, eps, lambda, 1e-5);
        worst = std::max(worst, (fd - Jv).norm() / Jv.norm());
        ++states;
      }
    }
    r.passed = worst <= 1e-6;
    r.detail = std::to_string(states) + " near-constant states (q in {1.5, 4}), max relative error " + fmt("%.3e", worst);
    return r;
  }

  CriterionResult constant_spectrum() {
    CriterionResult r{0, "tangent spectrum at the constant state", true, "", 0};
    const auto mesh = unit_interval(128);
    double worst = 0.0;
    int checks = 0;
    for (double s : {0.25, 0.5, 0.75}) {
      const double c2 = mean_zero_spectrum(*forms(mesh, s, 2.0)).mu_min;
      for (double q : {1.5, 3.0, 4.0}) {
        if (!(q < critical_exponent(s, 1))) continue;
        const auto f = forms(mesh, s, q);
        const double measure = mesh->measure();
        const Vector u = Vector::Constant(static_cast<Eigen::Index>(mesh->num_nodes()), std::pow(measure, -1.0 / q));
        const double lambda = std::pow(measure, 1.0 - 2.0 / q);
        for (double eps : {0.01, 0.1, 0.5}) {
          const double mu = linearized_spectrum(u, eps, lambda, *f).mu_min;
          const double predicted = c2 - std::pow(eps, 2.0 * s) * (q - 2.0);
          worst = std::max(worst, std::abs(mu - predicted));
          ++checks;
        }
      }
    }
    r.passed = worst <= 1e-8;
    r.detail = std::to_string(checks) + " (s,q,eps) triples at N=128, max |mu_min - prediction| = " + fmt("%.3e", worst);
    return r;
  }

  CriterionResult three_node_oracle() {
    CriterionResult r{0, "3-node minimizer against exhaustive sphere search", false, "", 0};
    const auto mesh = unit_interval(2);
    const auto f = forms(mesh, 0.5, 4.0);
    const double eps = 0.5;
    const MultistartResult ms = multistart_extremals(*f, eps, 8, 0, solver());
    const ExtremalResult& best = ms.best();
    const SphereSearch oracle = sphere_search_3node(*mesh, f->K, f->M, 0.5, eps);
    const double gap = std::abs(best.S - oracle.S);
    r.passed = best.converged && gap <= 1e-4;
    r.detail = "S solver = " + fmt("%.12f", best.S) + ", S search = " + fmt("%.12f", oracle.S) + ", gap " + fmt("%.3e", gap);
    return r;
  }

  CriterionResult threshold_bound() {
    CriterionResult r{0, "detected uniqueness threshold respects the Poincare bound", false, "", 0};
    const auto f = forms(unit_interval(128), 0.5, 4.0);
    SweepOptions so = sweep(1e-3, 1.0, 13);
    so.n_starts = 8;
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<ScanRecord> recs = eps_sweep(*f, so);
    const Eps0Estimate est = estimate_eps0(recs, true, *f, so);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string detail = "eps0_theoretical = " + fmt("%.6f", est.eps0_theoretical) + " (c = " + fmt("%.6f", est.c_used) +
                         "), constant-state crossing " + fmt("%.6f", est.eps_constant_crossing);
    bool ok = est.poincare_converged && secs < 900.0;
    if (est.found) {
      ok = ok && est.eps_lo >= est.eps0_theoretical * (1.0 - so.bracket_rtol);
      detail += ", " + std::string(to_string(est.detection_mode)) + " bracket [" + fmt("%.6f", est.eps_lo) + ", " +
                fmt("%.6f", est.eps_hi) + "]";
    } else {
      int below = 0;
      for (const auto& rec : recs)
        if (rec.eps < est.eps0_theoretical) {
          ++below;
          ok = ok && rec.n_clusters == 1 && rec.mu_min > 0.0;
        }
      detail += ", no crossing in range; " + std::to_string(below) + " records below the bound all unique with mu_min > 0";
    }
    r.passed = ok;
    r.detail = detail;
    return r;
  }

  CriterionResult weak_residuals() {
    CriterionResult r{0, "weak residual of extremals and of the constant state", true, "", 0};
    ensure_bound_cases();
    ensure_limit_records();
    double worst_ext = 0.0, worst_const = 0.0;
    int n_ext = 0;
    auto check_case = [&](const EnergyForms& f, const std::vector<ScanRecord>& recs) {
      const double q = f.params.q, measure = f.mesh->measure();
      const Vector c = Vector::Constant(static_cast<Eigen::Index>(f.size()), std::pow(measure, -1.0 / q));
      for (const auto& rec : recs) {
        if (rec.converged) {
          const double res = weak_residual(rec.u, rec.eps, rec.lambda_eps, f);
          worst_ext = std::max(worst_ext, res);
          ++n_ext;
          if (!(res <= 1e-9)) r.passed = false;
        }
        const double rc = weak_residual(c, rec.eps, std::pow(measure, 1.0 - 2.0 / q), f);
        worst_const = std::max(worst_const, rc);
        if (!(rc <= 1e-10)) r.passed = false;
      }
    };
    for (const auto& c : bound_cases_) check_case(*c.forms, c.records);
    check_case(*limit_forms_, limit_records_);
    r.detail = std::to_string(n_ext) + " converged extremals, max residual " + fmt("%.3e", worst_ext) +
               "; constant state max residual " + fmt("%.3e", worst_const);
    return r;
  }

  CriterionResult determinism() {
    namespace fs = std::filesystem;
    CriterionResult r{0, "sweep output is byte-identical across runs and thread counts", false, "", 0};
    const fs::path dir = opts_.workdir.empty()
                             ? fs::temp_directory_path() / ("fraclap_acceptance_" + std::to_string(::getpid()))
                             : fs::path(opts_.workdir);
    fs::create_directories(dir);
    RunConfig cfg;
    cfg.domain.n_elements = 64;
    cfg.eps_min = 1e-3;
    cfg.eps_max = 1e-1;
    cfg.eps_points = 5;
    cfg.n_starts = opts_.n_starts;
    cfg.seed = 12345;
    std::vector<std::string> csv, side;
    std::ostringstream sink;
    for (unsigned threads : {1u, 3u, 1u}) {
      cfg.solver.threads = threads;
      cfg.assembly.threads = threads;
      cfg.output = (dir / ("sweep_t" + std::to_string(threads) + "_" + std::to_string(csv.size()) + ".csv")).string();
      if (cmd_sweep(cfg, sink) != kExitOk) {
        r.detail = "sweep exited with an error";
        return r;
      }
      csv.push_back(slurp(cfg.output));
      side.push_back(slurp(cfg.output + ".json"));
    }
    std::error_code ec;
    if (opts_.workdir.empty()) fs::remove_all(dir, ec);
    const bool same = csv[0] == csv[1] && csv[0] == csv[2] && side[0] == side[1] && side[0] == side[2];
    r.passed = same && !csv[0].empty();
    r.detail = "three sweeps (threads 1, 3, 1): " + std::string(same ? "identical" : "different") + " CSV and sidecar (" +
               std::to_string(csv[0].size()) + " bytes)";
    return r;
  }
};

}  // namespace detail

inline std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& opts, std::ostream& log = std::cout) {
  return detail::Suite(opts).run(log);
}

/// Runs the suite; exit 0 when every selected criterion passes, 2 otherwise.
inline int cmd_verify(const AcceptanceOptions& opts, std::ostream& log = std::cout) {
  const auto results = run_acceptance(opts, log);
  const auto failed = std::count_if(results.begin(), results.end(), [](const auto& r) { return !r.passed; });
  log << results.size() - static_cast<std::size_t>(failed) << "/" << results.size() << " criteria passed" << std::endl;
  return failed == 0 ? kExitOk : kExitNoConvergence;
}

}  // namespace fraclap::verify
