#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fhn/errors.hpp"
#include "fhn/harness.hpp"
#include "json.hpp"

namespace fhn {

std::string to_string(Abscissa a) {
  switch (a) {
    case Abscissa::eps: return "eps";
    case Abscissa::sqrt_eps: return "sqrt_eps";
    case Abscissa::eps_sqrt_log: return "eps_sqrt_log";
  }
  return "?";
}

double abscissa_value(Abscissa a, double eps) {
  switch (a) {
    case Abscissa::eps: return eps;
    case Abscissa::sqrt_eps: return std::sqrt(eps);
    case Abscissa::eps_sqrt_log: return eps * std::sqrt(std::abs(std::log(eps)) + 1.0);
  }
  return eps;
}

RateFit fit_rate(std::span<const std::pair<double, double>> errors, Abscissa abscissa) {
  RateFit f;
  std::vector<double> x, y;
  for (const auto& [eps, e] : errors) {
    if (!(eps > 0.0) || !(e > 0.0) || !std::isfinite(e)) continue;
    x.push_back(std::log(abscissa_value(abscissa, eps)));
    y.push_back(std::log(e));
  }
  if (x.size() < 3) {
    f.reason = "fewer than 3 positive finite errors (" + std::to_string(x.size()) + ")";
    return f;
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i] / n, my += y[i] / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0) {
    f.reason = "degenerate abscissae";
    return f;
  }
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    f.residuals.push_back(r);
    ss_res += r * r;
  }
  f.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : (ss_res == 0.0 ? 1.0 : 0.0);
  f.ok = true;
  return f;
}

namespace {

std::vector<double> correlated_gaussian(const PhaseGrid& g, double cv, double cw, double sv, double sw, double corr) {
  std::vector<double> f(g.size());
  for (int i = 0; i < g.nv(); ++i)
    for (int j = 0; j < g.nw(); ++j) {
      const double w = g.w.node(j) - cw, v = g.v.node(i) - cv - corr * w;
      f[static_cast<std::size_t>(i) * g.nw() + j] = std::exp(-0.5 * (v * v / (sv * sv) + w * w / (sw * sw)));
    }
  double m = 0.0;
  for (double x : f) m += x;
  for (double& x : f) x /= m * g.cell_area();
  return f;
}

// Quadrature functionals evaluated on one grid, in a fixed order.
std::vector<std::pair<std::string, double>> functional_panel(const PhaseGrid& g, const WeightSpec& wm,
                                                             const WeightSpec& wb) {
  const double rho = 1.5;
  const auto f = correlated_gaussian(g, 0.2, -0.1, 0.8, 0.7, 0.3);
  const auto h = correlated_gaussian(g, 0.5, 0.2, 0.9, 0.6, -0.2);
  const Slice sf{f, g}, sh{h, g};
  DensityField one(SpatialGrid(1), g, std::vector<double>(f), 0.0);
  const std::vector<double> rr{rho};
  const Projection pr = projection_pi(one, rr);
  // Product test slice M_rho (x) N(0, 1/(2 kappa)) for the weighted norms.
  const auto p = correlated_gaussian(g, 0.0, 0.0, 1.0 / std::sqrt(rho), std::sqrt(0.5 / wm.kappa), 0.0);
  const Slice sp{p, g};
  const auto marg = w_marginal(sp);
  std::vector<std::pair<std::string, double>> out{
      {"boltzmann_entropy", boltzmann_entropy(sf)},
      {"free_energy", free_energy(sf, rho)},
      {"fisher_information", fisher_information(sf, rho).value},
      {"relative_entropy", relative_entropy(sf, rho)},
      {"product_l1_distance", product_l1_distance(sf, rho)},
      {"l1_distance", l1_distance(sf, sh)},
      {"half_entropy", half_entropy(sf, sh)},
      {"half_fisher", half_fisher(sf, sh)},
      {"weighted_norm_k0", weighted_norm(sp, 0, wm, rho).value},
      {"weighted_norm_k1", weighted_norm(sp, 1, wm, rho).value},
      {"weighted_norm_k2", weighted_norm(sp, 2, wm, rho).value},
      {"marginal_norm_k0", weighted_norm_marginal(marg, g.w, 0, wb).value},
      {"marginal_norm_k1", weighted_norm_marginal(marg, g.w, 1, wb).value},
      {"marginal_norm_k2", weighted_norm_marginal(marg, g.w, 2, wb).value},
      {"perp_norm_k0", weighted_norm(pr.perp.slice(0), 0, wm, rho).value},
      {"fp_dissipation", fp_dissipation(pr.perp.slice(0), rho, wm).value},
      {"equicontinuity_m1", equicontinuity_m1(sf)},
      {"moment_q2", moment_q(one, 2)[0]},
      {"centered_moment_q4", centered_moment_q(one, 4)[0]},
  };
  return out;
}

}  // namespace

CriterionResult oracle_equivalence(const ExperimentSpec& spec) {
  CriterionResult r{7, "direct and rescaled solvers agree; quadrature converged", {}, {}};
  const CrossValidationSpec& cv = spec.cross;
  if (cv.enabled) {
    Check c{"direct vs rescaled max_x L1 at eps=" + std::to_string(cv.epsilon) + " <= " + std::to_string(cv.tolerance),
            false, ""};
    try {
      const SpatialGrid space(spec.grid.nx);
      const Model model = spec.model.build(space);
      const InitialState init = make_initial_state(spec, model);
      const double dt = cv.dt;
      const long steps = std::lround(cv.t / dt);
      const PhaseGrid direct(cv.nv, cv.nw, cv.Lv, cv.Lw);
      CoupledState st = make_coupled_state(init.nu0, init.macro0, cv.epsilon, model);
      DensityField mu = press_down(st.nu, st.macro, st.theta, direct);
      mu.normalize();
      const RescaledStepOptions ro{spec.solver.transport, spec.solver.cfl_safety, spec.solver.recenter_tol};
      const DirectStepOptions dopt{spec.solver.transport, spec.solver.cfl_safety};
      for (long n = 1; n <= steps; ++n) {
        st = step_rescaled_coupled(st, dt, model, ro);
        mu = step_direct_kinetic(mu, dt, cv.epsilon, model, dopt);
      }
      DensityField back = press_down(st.nu, st.macro, st.theta, direct);
      back.normalize();
      double worst = 0.0;
      for (int ix = 0; ix < space.nx; ++ix) worst = std::max(worst, l1_distance(mu.slice(ix), back.slice(ix)));
      c.pass = worst <= cv.tolerance;
      char buf[128];
      std::snprintf(buf, sizeof buf, "max L1 %.3e at t=%g", worst, steps * dt);
      c.detail = buf;
    } catch (const std::exception& e) {
      c.detail = std::string("failed: ") + e.what();
    }
    r.checks.push_back(c);
  }
  if (spec.oracle.enabled) {
    const PhaseGrid coarse(spec.grid.nv, spec.grid.nw, spec.grid.Lv, spec.grid.Lw);
    const int q = spec.oracle.refinement;
    const PhaseGrid fine(q * (spec.grid.nv - 1) + 1, q * (spec.grid.nw - 1) + 1, spec.grid.Lv, spec.grid.Lw);
    const WeightSpec wm{spec.weight.kappa, WeightVariant::m_eps};
    const WeightSpec wb{spec.weight.kappa, WeightVariant::bar_m};
    const auto a = functional_panel(coarse, wm, wb);
    const auto b = functional_panel(fine, wm, wb);
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double scale = std::max(std::abs(b[k].second), 1e-12);
      const double rel = std::abs(a[k].second - b[k].second) / scale;
      char buf[160];
      std::snprintf(buf, sizeof buf, "coarse %.8g, refined %.8g, relative %.2e", a[k].second, b[k].second, rel);
      r.checks.push_back({a[k].first + " within " + std::to_string(spec.oracle.tolerance) + " of refined grid",
                          std::isfinite(rel) && rel <= spec.oracle.tolerance, buf});
    }
  }
  return r;
}

std::string make_run_id(const std::string& config_text, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](unsigned char c) {
    h ^= c;
    h *= 1099511628211ULL;
  };
  for (char c : config_text) mix(static_cast<unsigned char>(c));
  for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>(seed >> (8 * i)));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

std::string eps_tag(double eps) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", eps);
  return buf;
}

}  // namespace

void emit_report(const SweepReport& report, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const SweepData& s = report.sweep;

  std::ofstream m(fs::path(dir) / "metrics.csv");
  if (!m) throw std::runtime_error("cannot write " + dir + "/metrics.csv");
  m << "run_id,eps,t,metric,value,flag\n";
  for (const auto& run : s.runs) {
    const std::string e = num(run.epsilon);
    if (!run.ok) {
      m << report.run_id << "," << e << "," << num(s.spec.solver.t_end) << ",run_failed,nan,"
        << csv_field(run.failure) << "\n";
      continue;
    }
    for (const auto& [name, vals] : run.series) {
      const auto fl = run.flags.find(name);
      for (std::size_t k = 0; k < vals.size(); ++k) {
        m << report.run_id << "," << e << "," << num(run.t[k]) << "," << name << "," << num(vals[k]) << ",";
        if (fl != run.flags.end() && k < fl->second.size()) m << csv_field(fl->second[k]);
        m << "\n";
      }
    }
    const double T = run.t.empty() ? s.spec.solver.t_end : run.t.back();
    for (const auto& [name, v] : run.scalars)
      m << report.run_id << "," << e << "," << num(T) << "," << name << "," << num(v) << ",scalar\n";
  }

  for (const auto& run : s.runs) {
    std::ofstream d(fs::path(dir) / ("diagnostics_eps" + eps_tag(run.epsilon) + ".csv"));
    d << "run_id,t,x,functional_name,value,flags\n";
    for (const auto& row : run.diagnostics)
      d << report.run_id << "," << num(row.t) << "," << row.x << "," << row.name << "," << num(row.value) << ","
        << csv_field(row.flags) << "\n";
  }

  using nlohmann::ordered_json;
  ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["run_id"] = report.run_id;
  bool any_failed = false;
  for (const auto& run : s.runs) any_failed = any_failed || !run.ok;
  std::string status = s.runs.empty() ? "empty" : (any_failed ? "failed" : "ok");
  j["status"] = status;
  j["epsilons"] = s.spec.epsilons;
  j["seed"] = s.spec.seed;
  ordered_json fits = ordered_json::array(), crit = ordered_json::array();
  long passed = 0, failed = 0;
  for (const auto& c : report.criteria) {
    ordered_json cj;
    cj["id"] = c.id;
    cj["title"] = c.title;
    cj["pass"] = c.pass();
    ordered_json checks = ordered_json::array();
    for (const auto& k : c.checks) {
      checks.push_back({{"name", k.name}, {"pass", k.pass}, {"detail", k.detail}});
      (k.pass ? passed : failed)++;
    }
    cj["checks"] = checks;
    crit.push_back(cj);
    for (const auto& f : c.fits) {
      ordered_json fj;
      fj["criterion"] = c.id;
      fj["name"] = f.name;
      fj["metric"] = f.metric;
      fj["abscissa"] = to_string(f.abscissa);
      fj["gated"] = f.gated;
      std::vector<double> ex, ve;
      for (const auto& [a, b] : f.data) ex.push_back(a), ve.push_back(b);
      fj["eps"] = ex;
      fj["values"] = ve;
      fj["ok"] = f.fit.ok;
      fj["reason"] = f.fit.reason;
      fj["slope"] = f.fit.slope;
      fj["intercept"] = f.fit.intercept;
      fj["r_squared"] = f.fit.r_squared;
      fj["residuals"] = f.fit.residuals;
      fits.push_back(fj);
    }
  }
  j["criteria"] = crit;
  j["fits"] = fits;
  j["assertions"] = {{"passed", passed}, {"failed", failed}};
  ordered_json tel = ordered_json::array();
  for (const auto& run : s.runs) {
    ordered_json t;
    t["eps"] = run.epsilon;
    t["ok"] = run.ok;
    t["failure"] = run.failure;
    t["mass_defect"] = run.telemetry.mass_defect;
    t["positivity_clamps"] = run.telemetry.positivity_clamps;
    t["closure_defect"] = run.closure_defect;
    tel.push_back(t);
  }
  j["telemetry"] = tel;
  j["floor"] = {{"computed", s.floor.computed},
                {"l1", s.floor.l1},
                {"marginal", s.floor.marginal},
                {"l1_subtracted", s.floor.l1_subtracted},
                {"marginal_subtracted", s.floor.marginal_subtracted}};
  std::ofstream js(fs::path(dir) / "summary.json");
  js << j.dump(2) << "\n";
}

}  // namespace fhn
