#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>

#include "fhn/harness.hpp"
#include "fhn/macro_solver.hpp"

namespace fhn {

namespace {

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt2(const char* f, double a, double b) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::vector<const EpsilonRun*> ok_runs(const SweepData& s) {
  std::vector<const EpsilonRun*> out;
  for (const auto& r : s.runs)
    if (r.ok) out.push_back(&r);
  return out;
}

Check runs_completed(const SweepData& s) {
  Check c{"all epsilon runs completed", true, ""};
  if (s.runs.empty()) {
    c.pass = false;
    c.detail = "no runs";
  }
  for (const auto& r : s.runs)
    if (!r.ok) {
      c.pass = false;
      c.detail += fmt("eps=%g: ", r.epsilon) + r.failure + "; ";
    }
  if (c.pass) c.detail = std::to_string(s.runs.size()) + " runs";
  return c;
}

Check count_check(const std::string& name, const CheckCount& c) {
  std::ostringstream os;
  os << c.violated << " violations in " << c.checked << " evaluations, worst excess " << c.worst;
  return {name, c.checked > 0 && c.violated == 0, os.str()};
}

CheckCount merged(const SweepData& s, const std::string& key) {
  CheckCount out;
  for (const auto* r : ok_runs(s)) {
    auto it = r->checks.find(key);
    if (it == r->checks.end()) continue;
    if (out.checked == 0 || it->second.worst > out.worst) out.worst = it->second.worst;
    out.checked += it->second.checked;
    out.violated += it->second.violated;
  }
  return out;
}

NamedFit make_fit(const SweepData& s, const std::string& name, const std::string& metric, Abscissa ab, bool gated) {
  NamedFit f;
  f.name = name;
  f.metric = metric;
  f.abscissa = ab;
  f.gated = gated;
  for (const auto* r : ok_runs(s)) f.data.emplace_back(r->epsilon, r->scalars.at(metric));
  f.fit = fit_rate(f.data, ab);
  return f;
}

Check slope_check(const NamedFit& f, double lo, double hi, double r2) {
  Check c{f.name + " slope in [" + fmt("%g", lo) + ", " + fmt("%g", hi) + "], R^2 >= " + fmt("%g", r2), false, ""};
  if (!f.fit.ok) {
    c.detail = "fit refused: " + f.fit.reason;
    return c;
  }
  c.pass = f.fit.slope >= lo && f.fit.slope <= hi && f.fit.r_squared >= r2;
  c.detail = fmt2("slope %.4f, R^2 %.4f", f.fit.slope, f.fit.r_squared);
  return c;
}

// Largest max/min quotient between consecutive entries.
double worst_variation(const std::vector<double>& v) {
  double w = 1.0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    const double a = v[i - 1], b = v[i];
    if (!(a > 0.0) || !(b > 0.0)) return INFINITY;
    w = std::max(w, std::max(a / b, b / a));
  }
  return w;
}

}  // namespace

bool CriterionResult::pass() const {
  if (checks.empty()) return false;
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

std::string CriterionResult::summary_line() const {
  int passed = 0;
  std::string failing;
  for (const auto& c : checks) {
    if (c.pass)
      ++passed;
    else
      failing += (failing.empty() ? "" : "; ") + c.name;
  }
  std::ostringstream os;
  os << "criterion " << id << " " << (pass() ? "PASS" : "FAIL") << " [" << title << "] " << passed << "/"
     << checks.size() << " checks";
  if (!failing.empty()) os << "; failing: " << failing;
  return os.str();
}

CriterionResult check_structural(const SweepData& s) {
  CriterionResult r{1, "structural exactness", {}, {}};
  const ExperimentSpec& spec = s.spec;
  const SpatialGrid space(spec.grid.nx);
  const Model model = spec.model.build(space);
  const auto& rho = model.rho0().values;

  bool exact = true;
  for (double eps : spec.epsilons)
    for (double rr : rho) exact = exact && theta(0.0, rr, eps) == 1.0;
  r.checks.push_back({"theta(0) = 1 exactly", exact, exact ? "all nodes and epsilons" : "mismatch"});

  double res = 0.0;
  for (const auto* run : ok_runs(s)) res = std::max(res, run->scalars.at("theta_residual_max"));
  r.checks.push_back({"theta ODE residual <= " + fmt("%g", spec.tol.theta_residual),
                      !ok_runs(s).empty() && res <= spec.tol.theta_residual, fmt("max residual %.3g", res)});

  // Discrete Maxwellian fixed point of the implicit Fokker-Planck step.
  const InitialState init = make_initial_state(spec, model);
  DensityField eq(space, init.nu0.grid(), 0.0);
  for (int ix = 0; ix < space.nx; ++ix) {
    const auto M = maxwellian(rho[ix], eq.grid().v).values;
    for (int i = 0; i < eq.grid().nv(); ++i)
      for (int j = 0; j < eq.grid().nw(); ++j) eq.at(ix, i, j) = M[i] * init.bar_nu0[j];
  }
  double fp = 0.0;
  for (double eps : spec.epsilons) {
    std::vector<double> pref(space.nx, 1.0 / eps);
    const DensityField out = fokker_planck_step(eq, spec.solver.dt, pref, rho);
    for (std::size_t k = 0; k < out.data().size(); ++k) fp = std::max(fp, std::abs(out.data()[k] - eq.data()[k]));
  }
  r.checks.push_back({"Fokker-Planck fixed point <= " + fmt("%g", spec.tol.fixed_point), fp <= spec.tol.fixed_point,
                      fmt("max entry change %.3g", fp)});

  double md = 0.0;
  for (const auto* run : ok_runs(s)) md = std::max(md, run->telemetry.mass_defect);
  long clamps = 0;
  for (const auto* run : ok_runs(s)) clamps += run->telemetry.positivity_clamps;
  r.checks.push_back({"per-step mass defect <= " + fmt("%g", spec.tol.mass_defect),
                      !ok_runs(s).empty() && md <= spec.tol.mass_defect,
                      fmt("max defect %.3g, ", md) + std::to_string(clamps) + " positivity clamps"});
  r.checks.push_back(runs_completed(s));
  return r;
}

CriterionResult run_l1_rate(const SweepData& s) {
  const Tolerances& tol = s.spec.tol;
  CriterionResult r{2, "sqrt(eps) rate of the time-integrated L1 error", {}, {}};
  r.checks.push_back(runs_completed(s));
  NamedFit nu = make_fit(s, "rescaled-frame L1", "l1_rate_metric_fit_input", Abscissa::eps, true);
  NamedFit mu = make_fit(s, "physical-frame L1", "l1_mu_rate_metric", Abscissa::eps, true);
  r.checks.push_back(slope_check(nu, tol.l1_slope_min, tol.l1_slope_max, tol.r2_min));
  r.checks.push_back(slope_check(mu, tol.l1_slope_min, tol.l1_slope_max, tol.r2_min));
  r.fits.push_back(std::move(nu));
  r.fits.push_back(std::move(mu));
  r.fits.push_back(make_fit(s, "rescaled-frame pointwise L1 sup", "l1_sup", Abscissa::eps, false));
  return r;
}

CriterionResult run_marginal_rate(const SweepData& s) {
  const Tolerances& tol = s.spec.tol;
  CriterionResult r{3, "eps sqrt|ln eps| marginal rate and remainder envelopes", {}, {}};
  r.checks.push_back(runs_completed(s));
  NamedFit marg = make_fit(s, "marginal H0(bar m)", "marginal_rate_metric_fit_input", Abscissa::eps_sqrt_log, true);
  r.checks.push_back(slope_check(marg, tol.marginal_slope_min, tol.marginal_slope_max, tol.r2_min));
  r.fits.push_back(std::move(marg));
  r.fits.push_back(make_fit(s, "marginal H0(bar m), unweighted sup", "marginal_raw_sup", Abscissa::eps_sqrt_log, false));

  const auto runs = ok_runs(s);
  if (runs.empty()) return r;
  auto layer_range = [](double t, double eps) { return t > 0.0 && t <= eps; };
  auto sqrt_range = [](double t, double eps) { return t >= 5.0 * eps * std::abs(std::log(eps)); };

  // Constants fitted on the coarsest epsilon, then frozen.
  const EpsilonRun& c0 = *runs.front();
  double C_layer = 0.0, C_sqrt = 0.0;
  int n_layer0 = 0, n_sqrt0 = 0;
  for (std::size_t k = 0; k < c0.t.size(); ++k) {
    if (!c0.flags.at("nu_perp_h0")[k].empty()) continue;
    const double v = c0.series.at("nu_perp_h0")[k];
    if (layer_range(c0.t[k], c0.epsilon)) {
      C_layer = std::max(C_layer, v / c0.series.at("layer_envelope")[k]);
      ++n_layer0;
    }
    if (sqrt_range(c0.t[k], c0.epsilon)) {
      C_sqrt = std::max(C_sqrt, v / std::sqrt(c0.epsilon));
      ++n_sqrt0;
    }
  }
  long in_layer = 0, tot_layer = 0, in_sqrt = 0, tot_sqrt = 0, diverged = 0;
  double worst_layer = 0.0, worst_sqrt = 0.0;
  for (const auto* run : runs) {
    for (std::size_t k = 0; k < run->t.size(); ++k) {
      if (!run->flags.at("nu_perp_h0")[k].empty()) {
        ++diverged;
        continue;
      }
      const double v = run->series.at("nu_perp_h0")[k];
      const double t = run->t[k];
      if (layer_range(t, run->epsilon)) {
        const double bound = tol.envelope_margin * C_layer * run->series.at("layer_envelope")[k];
        ++tot_layer;
        if (v <= bound) ++in_layer;
        if (bound > 0.0) worst_layer = std::max(worst_layer, v / bound);
      }
      if (sqrt_range(t, run->epsilon)) {
        const double bound = tol.envelope_margin * C_sqrt * std::sqrt(run->epsilon);
        ++tot_sqrt;
        if (v <= bound) ++in_sqrt;
        if (bound > 0.0) worst_sqrt = std::max(worst_sqrt, v / bound);
      }
    }
  }
  std::ostringstream d1, d2;
  d1 << in_layer << "/" << tot_layer << " samples contained, C=" << C_layer << " from " << n_layer0
     << " samples at eps=" << c0.epsilon << ", worst ratio " << worst_layer << ", diverged " << diverged;
  d2 << in_sqrt << "/" << tot_sqrt << " samples contained, C=" << C_sqrt << " from " << n_sqrt0
     << " samples at eps=" << c0.epsilon << ", worst ratio " << worst_sqrt;
  r.checks.push_back({"initial-layer envelope contains ||nu_perp|| for t <= eps",
                      n_layer0 > 0 && tot_layer > 0 && in_layer == tot_layer, d1.str()});
  r.checks.push_back({"sqrt(eps) envelope contains ||nu_perp|| for t >= 5 eps|ln eps|",
                      n_sqrt0 > 0 && tot_sqrt > 0 && in_sqrt == tot_sqrt, d2.str()});
  if (s.spec.initial_data == InitialData::well_prepared) {
    double v0 = 0.0;
    for (const auto* run : runs) v0 = std::max(v0, run->series.at("nu_perp_h0").front());
    r.checks.push_back({"well-prepared data has nu_perp(0) = 0", v0 <= 1e-12, fmt("max %.3g", v0)});
  }
  return r;
}

CriterionResult validate_preliminary(const SweepData& s) {
  const Tolerances& tol = s.spec.tol;
  CriterionResult r{4, "uniform moment, variance and error-term bounds", {}, {}};
  r.checks.push_back(runs_completed(s));
  const auto runs = ok_runs(s);
  if (runs.empty()) return r;
  for (const std::string key : {"ratio_D2", "ratio_D4", "ratio_E", "M2", "M4"}) {
    std::vector<double> maxima;
    std::ostringstream d;
    d << "max per eps:";
    bool finite = true;
    for (const auto* run : runs) {
      const auto& v = run->series.at(key);
      const double m = *std::max_element(v.begin(), v.end());
      finite = finite && std::isfinite(m);
      maxima.push_back(m);
      d << " " << m;
    }
    const double var = worst_variation(maxima);
    d << "; worst consecutive variation " << var;
    r.checks.push_back({key + " bounded uniformly (variation < " + fmt("%g", tol.ratio_variation_max) + "x)",
                        finite && var < tol.ratio_variation_max, d.str()});
  }

  // Macro error against C min(e^{Ct}(E_mac + eps), 1); C by bisection on the
  // coarsest epsilon. Initial macro data coincide, so E_mac = 0.
  const double E_mac = 0.0;
  auto env = [&](double C, double t, double eps) { return C * std::min(std::exp(C * t) * (E_mac + eps), 1.0); };
  const EpsilonRun& c0 = *runs.front();
  auto contained = [&](double C) {
    for (std::size_t k = 0; k < c0.t.size(); ++k)
      if (c0.series.at("macro_error")[k] > env(C, c0.t[k], c0.epsilon)) return false;
    return true;
  };
  double lo = 0.0, hi = 1.0;
  while (!contained(hi) && hi < 1e6) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (contained(mid) ? hi : lo) = mid;
  }
  const double C = hi;
  long in = 0, tot = 0;
  double worst = 0.0;
  for (const auto* run : runs)
    for (std::size_t k = 0; k < run->t.size(); ++k) {
      const double bound = tol.envelope_margin * env(C, run->t[k], run->epsilon);
      const double e = run->series.at("macro_error")[k];
      ++tot;
      if (e <= bound) ++in;
      if (bound > 0.0) worst = std::max(worst, e / bound);
    }
  std::ostringstream d;
  d << in << "/" << tot << " samples contained, fitted C=" << C << " at eps=" << c0.epsilon << ", worst ratio "
    << worst;
  r.checks.push_back({"macro error within the fitted min(e^{Ct}(E_mac+eps),1) envelope", C < 1e6 && in == tot, d.str()});
  return r;
}

namespace {

// Smooth random density: a few correlated Gaussian bumps.
std::vector<double> random_smooth_slice(const PhaseGrid& g, std::mt19937_64& rng, double sv_max) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> f(g.size(), 0.0);
  const int bumps = 1 + static_cast<int>(U(rng) * 3.0);
  for (int q = 0; q < bumps; ++q) {
    const double cv = -1.5 + 3.0 * U(rng), cw = -1.0 + 2.0 * U(rng);
    const double sv = 0.4 + (sv_max - 0.4) * U(rng), sw = 0.4 + 0.5 * U(rng);
    const double corr = -0.5 + U(rng), amp = 0.2 + 0.8 * U(rng);
    for (int i = 0; i < g.nv(); ++i)
      for (int j = 0; j < g.nw(); ++j) {
        const double w = g.w.node(j) - cw, v = g.v.node(i) - cv - corr * w;
        f[static_cast<std::size_t>(i) * g.nw() + j] += amp * std::exp(-0.5 * (v * v / (sv * sv) + w * w / (sw * sw)));
      }
  }
  double m = 0.0;
  for (double x : f) m += x;
  for (double& x : f) x /= m * g.cell_area();
  return f;
}

std::vector<double> random_rough_density(std::size_t n, double cell, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> f(n);
  const double zero_frac = U(rng) * 0.5;
  double m = 0.0;
  for (double& x : f) {
    const double u = U(rng);
    x = U(rng) < zero_frac ? 0.0 : u * u * u;
    m += x;
  }
  if (m == 0.0) f[0] = m = 1.0;
  for (double& x : f) x /= m * cell;
  return f;
}

}  // namespace

CriterionResult inequality_suite(const SweepData& s) {
  const ExperimentSpec& spec = s.spec;
  const Tolerances& tol = spec.tol;
  CriterionResult r{5, "inequality suites and limit-profile identities", {}, {}};
  r.checks.push_back(runs_completed(s));
  for (const std::string key : {"csiszar_kullback", "sandwich_limit", "sandwich_projection", "log_sobolev",
                                "gaussian_poincare", "p_ineq_first", "p_ineq_second", "entropy_rate_monitor"})
    r.checks.push_back(count_check("solver outputs: " + key, merged(s, key)));

  // Randomized property checks.
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const PhaseGrid g(48, 40, 6.0, 6.0);
  CheckCount sandwich, ck, lsi, gp, p1, p2;
  for (int k = 0; k < spec.random_pairs; ++k) {
    const auto f = random_rough_density(g.size(), g.cell_area(), rng);
    const auto h = random_rough_density(g.size(), g.cell_area(), rng);
    const SandwichResult sw = ck_sandwich(Slice{f, g}, Slice{h, g}, tol.sandwich_abs);
    sandwich.add(sw.lower_ok && sw.upper_ok, -std::min(sw.lower_slack, sw.upper_slack));
    const double rho = 1.2 + 0.6 * U(rng);
    const InequalityResult c = csiszar_kullback(Slice{f, g}, rho);
    ck.add(c.ok, c.lhs - c.rhs);
  }
  const int n_smooth = std::max(1, spec.random_pairs / 10);
  const WeightSpec wm{spec.weight.kappa, WeightVariant::m_eps};
  for (int k = 0; k < n_smooth; ++k) {
    const double rho = 1.2 + 0.6 * U(rng);
    const auto f = random_smooth_slice(g, rng, 1.0);
    const Slice sf{f, g};
    const InequalityResult l = log_sobolev(sf, rho);
    lsi.add(l.ok, l.lhs - l.rhs);
    DensityField one(SpatialGrid(1), g, std::vector<double>(f), 0.0);
    const std::vector<double> rr{rho};
    const Projection pr = projection_pi(one, rr);
    const InequalityResult pc = gaussian_poincare(pr.perp.slice(0), rho, wm, g.dv() * g.dv());
    gp.add(pc.ok, pc.lhs - pc.rhs);
    const PoincarePair pp = poincare_pair(sf, rho, wm, g.dw() * g.dw());
    p1.add(pp.first.ok, pp.first.lhs - pp.first.rhs);
    p2.add(pp.second.ok, pp.second.lhs - pp.second.rhs);
  }
  r.checks.push_back(count_check("random pairs: sandwich", sandwich));
  r.checks.push_back(count_check("random densities: csiszar_kullback", ck));
  r.checks.push_back(count_check("random smooth: log_sobolev", lsi));
  r.checks.push_back(count_check("random smooth: gaussian_poincare", gp));
  r.checks.push_back(count_check("random smooth: p_ineq_first", p1));
  r.checks.push_back(count_check("random smooth: p_ineq_second", p2));

  // Exact limit marginal on a fixed fine axis: growth of the H^k(bar m) norms
  // and constancy of ||w d_w bar_nu||_1.
  const SpatialGrid space(spec.grid.nx);
  const Model model = spec.model.build(space);
  const InitialState init = make_initial_state(spec, model);
  const Axis axis0 = init.nu0.grid().w;
  const Axis fine(8 * (axis0.n - 1) + 1, axis0.half_width);
  const double b = spec.model.adaptation.b;
  const WeightSpec wb{spec.weight.kappa, WeightVariant::bar_m};
  auto wdw = [&](const std::vector<double>& p) {
    double acc = 0.0;
    for (int j = 1; j + 1 < fine.n; ++j) acc += std::abs(fine.node(j) * (p[j + 1] - p[j - 1]) / (2.0 * fine.spacing()));
    return acc * fine.spacing();
  };
  const std::vector<double> p0 = evolve_bar_nu(init.bar_nu0, axis0, 0.0, b, fine);
  const double n0[2] = {weighted_norm_marginal(p0, fine, 0, wb).value, weighted_norm_marginal(p0, fine, 1, wb).value};
  const double c0 = wdw(p0);
  CheckCount growth, constancy;
  for (double t : sample_times(spec)) {
    const std::vector<double> p = evolve_bar_nu(init.bar_nu0, axis0, t, b, fine);
    for (int k = 0; k < 2; ++k) {
      const double bound = std::exp((k + 0.5) * b * t) * n0[k];
      const double v = weighted_norm_marginal(p, fine, k, wb).value;
      growth.add(v <= bound * (1.0 + tol.lemma_bar_nu_rel), v / bound);
    }
    const double rel = std::abs(wdw(p) - c0) / c0;
    constancy.add(rel <= tol.lemma_bar_nu_rel, rel);
  }
  r.checks.push_back(count_check("limit marginal: H^k(bar m) growth e^{(k+1/2)bt}, worst ratio", growth));
  r.checks.push_back(count_check("limit marginal: ||w d_w bar_nu||_1 constant, worst relative change", constancy));
  return r;
}

CriterionResult equicontinuity_suite(const SweepData& s) {
  CriterionResult r{6, "equicontinuity modulus bound", {}, {}};
  r.checks.push_back(runs_completed(s));
  const CheckCount c = merged(s, "equicontinuity");
  Check k = count_check("||nu - tau nu||_1 <= C(|e^{bt}w0| + |e^{bt}w0|^{1/2}), worst ratio", c);
  const auto runs = ok_runs(s);
  if (!runs.empty())
    k.detail += fmt2("; m1=%.4g, C=%.4g", runs.front()->scalars.at("m1"), runs.front()->scalars.at("equicontinuity_C"));
  r.checks.push_back(k);
  return r;
}

bool SweepReport::all_pass() const {
  return !criteria.empty() &&
         std::all_of(criteria.begin(), criteria.end(), [](const CriterionResult& c) { return c.pass(); });
}

SweepReport run_validation(const ExperimentSpec& spec, bool include_oracles) {
  SweepReport rep;
  rep.sweep = run_sweep(spec);
  if (spec.epsilons.empty()) return rep;
  rep.criteria.push_back(check_structural(rep.sweep));
  rep.criteria.push_back(run_l1_rate(rep.sweep));
  rep.criteria.push_back(run_marginal_rate(rep.sweep));
  rep.criteria.push_back(validate_preliminary(rep.sweep));
  rep.criteria.push_back(inequality_suite(rep.sweep));
  rep.criteria.push_back(equicontinuity_suite(rep.sweep));
  if (include_oracles) rep.criteria.push_back(oracle_equivalence(spec));
  return rep;
}

}  // namespace fhn
