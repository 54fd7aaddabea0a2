#include "fhn/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "fhn/errors.hpp"
#include "fhn/interp.hpp"
#include "fhn/macro_solver.hpp"

namespace fhn {

std::string to_string(InitialData d) {
  switch (d) {
    case InitialData::well_prepared: return "well_prepared";
    case InitialData::ill_prepared_wide: return "ill_prepared_wide";
    case InitialData::ill_prepared_shifted: return "ill_prepared_shifted";
  }
  return "?";
}

InitialData initial_data_from_string(const std::string& s) {
  if (s == "well_prepared") return InitialData::well_prepared;
  if (s == "ill_prepared_wide") return InitialData::ill_prepared_wide;
  if (s == "ill_prepared_shifted") return InitialData::ill_prepared_shifted;
  throw std::invalid_argument("unknown initial data '" + s + "'");
}

void GridSpec::validate() const {
  if (nx < 1) throw std::invalid_argument("nx must be >= 1");
  if (nv < 8 || nw < 8) throw std::invalid_argument("nv and nw must be >= 8");
  if (!(Lv > 0.0) || !(Lw > 0.0)) throw std::invalid_argument("Lv and Lw must be > 0");
}

Model ModelConfig::build(const SpatialGrid& space) const {
  SpatialDensity rho = rho0_kind == "constant" ? constant_density(space, rho0_base, m_star)
                                               : cosine_density(space, rho0_base, rho0_amplitude, m_star);
  return Model(drift, adaptation, kernel, std::move(rho), space);
}

std::vector<double> ModelConfig::V0(const SpatialGrid& space) const {
  std::vector<double> v(space.nx);
  for (int i = 0; i < space.nx; ++i) v[i] = V0_base + V0_amplitude * std::cos(2.0 * std::numbers::pi * space.x(i));
  return v;
}

void ModelConfig::validate() const {
  drift.validate();
  adaptation.validate();
  if (rho0_kind != "cosine" && rho0_kind != "constant") throw std::invalid_argument("rho0 kind must be cosine or constant");
  if (!(m_star > 0.0 && m_star <= 1.0)) throw std::invalid_argument("m_star must lie in (0, 1]");
}

void ExperimentSpec::validate() const {
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    if (!(epsilons[i] > 0.0 && epsilons[i] <= 1.0)) throw std::invalid_argument("epsilons must lie in (0, 1]");
    if (i > 0 && !(epsilons[i] < epsilons[i - 1])) throw std::invalid_argument("epsilons must be strictly decreasing");
  }
  if (!(w_variance > 0.0)) throw std::invalid_argument("w_variance must be > 0");
  if (n_geometric < 0 || n_uniform < 0) throw std::invalid_argument("sample counts must be >= 0");
  grid.validate();
  model.validate();
  solver.validate();
  weight.validate(model.adaptation.b);
  if (!(alpha_star > 0.0)) throw std::invalid_argument("alpha_star must be > 0");
  if (random_pairs < 0) throw std::invalid_argument("random_pairs must be >= 0");
  for (int k : monitor_shifts)
    if (k <= 0 || k >= grid.nw) throw std::invalid_argument("monitor shifts must lie in [1, nw)");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
}

std::vector<double> sample_times(const ExperimentSpec& spec) {
  const double dt = spec.solver.dt, T = spec.solver.t_end;
  const long steps = std::lround(T / dt);
  std::vector<long> idx{0};
  if (spec.n_geometric > 0) {
    const double t0 = dt, t1 = std::min(spec.geometric_t_max, T);
    for (int k = 0; k < spec.n_geometric; ++k) {
      const double f = spec.n_geometric == 1 ? 0.0 : static_cast<double>(k) / (spec.n_geometric - 1);
      idx.push_back(std::lround(t0 * std::pow(t1 / t0, f) / dt));
    }
  }
  for (int k = 1; k <= spec.n_uniform; ++k) idx.push_back(std::lround(T * k / spec.n_uniform / dt));
  for (long& i : idx) i = std::clamp(i, 0L, steps);
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  std::vector<double> t;
  for (long i : idx) t.push_back(i * dt);
  return t;
}

namespace {

std::vector<double> gaussian_profile(const Axis& ax, double mean, double var) {
  std::vector<double> p(ax.n);
  double m = 0.0;
  for (int j = 0; j < ax.n; ++j) {
    const double d = ax.node(j) - mean;
    p[j] = std::exp(-0.5 * d * d / var);
    m += p[j];
  }
  m *= ax.spacing();
  for (double& x : p) x /= m;
  return p;
}

}  // namespace

InitialState make_initial_state(const ExperimentSpec& spec, const Model& model) {
  const GridSpec& gs = spec.grid;
  const SpatialGrid space(gs.nx);
  const PhaseGrid grid(gs.nv, gs.nw, gs.Lv, gs.Lw);
  InitialState s;
  s.nu0 = DensityField(space, grid, 0.0);
  s.bar_nu0 = gaussian_profile(grid.w, 0.0, spec.w_variance);
  for (int ix = 0; ix < gs.nx; ++ix) {
    const double rho = model.rho0().values[ix];
    std::vector<double> vp;
    switch (spec.initial_data) {
      case InitialData::well_prepared:
        vp = maxwellian(rho, grid.v).values;
        break;
      case InitialData::ill_prepared_wide:
        vp = maxwellian(rho / 3.0, grid.v).values;
        break;
      case InitialData::ill_prepared_shifted: {
        vp.assign(grid.nv(), 0.0);
        for (int i = 0; i < grid.nv(); ++i) {
          const double v = grid.v.node(i);
          vp[i] = 0.5 * (maxwellian_density(rho, v - 1.0) + maxwellian_density(rho, v + 1.0));
        }
        double m = 0.0;
        for (double x : vp) m += x;
        for (double& x : vp) x /= m * grid.dv();
        break;
      }
    }
    for (int i = 0; i < grid.nv(); ++i)
      for (int j = 0; j < grid.nw(); ++j) s.nu0.at(ix, i, j) = vp[i] * s.bar_nu0[j];
  }
  s.macro0.V = spec.model.V0(space);
  s.macro0.W.assign(gs.nx, spec.model.W0);
  s.bar_mu0.assign(gs.nx, gaussian_profile(grid.w, spec.model.W0, spec.w_variance));
  return s;
}

void CheckCount::add(bool ok, double excess) {
  if (checked == 0 || excess > worst) worst = excess;
  ++checked;
  if (!ok) ++violated;
}

namespace {

// Per-node weighted H0 norm of a signed slice.
double norm_h(std::span<const double> values, const PhaseGrid& g, int k, const WeightSpec& w, double rho,
              bool* diverged) {
  const NormResult r = weighted_norm(Slice{values, g}, k, w, rho);
  if (r.diverged && diverged) *diverged = true;
  return r.value;
}

struct Series {
  EpsilonRun& run;
  void push(const std::string& name, double v) { run.series[name].push_back(v); }
  void push_flag(const std::string& name, double v, bool flag, const char* text) {
    run.series[name].push_back(v);
    run.flags[name].push_back(flag ? text : "");
  }
};

}  // namespace

EpsilonRun run_epsilon(const ExperimentSpec& spec, double eps) {
  EpsilonRun run;
  run.epsilon = eps;
  const auto clock0 = std::chrono::steady_clock::now();
  try {
    const SpatialGrid space(spec.grid.nx);
    const Model model = spec.model.build(space);
    const InitialState init = make_initial_state(spec, model);
    const int nx = space.nx;
    const auto& rho = model.rho0().values;
    const double b = model.adaptation().b;
    const double m_star = model.rho0().m_star;
    const double dt = spec.solver.dt;
    const long steps = std::lround(spec.solver.t_end / dt);
    const std::vector<double> ts = sample_times(spec);
    const Axis axis0 = init.nu0.grid().w;
    const Axis vax = init.nu0.grid().v;
    const double dw0 = axis0.spacing();
    const WeightSpec wm{spec.weight.kappa, WeightVariant::m_eps};
    const WeightSpec wbar{spec.weight.kappa, WeightVariant::bar_m};
    const WeightSpec wminus{spec.weight.kappa, WeightVariant::m_minus};

    CoupledState st = make_coupled_state(init.nu0, init.macro0, eps, model);
    LimitState lim = make_limit_state(init.macro0.V, init.bar_mu0, axis0, model);
    std::vector<Pchip> mu0_interp;
    for (const auto& p : lim.bar_mu0) mu0_interp.emplace_back(p);
    const RescaledStepOptions opt{spec.solver.transport, spec.solver.cfl_safety, spec.solver.recenter_tol};

    std::vector<std::vector<double>> Mv(nx);
    for (int ix = 0; ix < nx; ++ix) Mv[ix] = maxwellian(rho[ix], vax).values;

    double m1 = 0.0;
    for (int ix = 0; ix < nx; ++ix) m1 = std::max(m1, equicontinuity_m1(init.nu0.slice(ix)));
    const double C_eq = equicontinuity_constant(m1, b);
    run.scalars["m1"] = m1;
    run.scalars["equicontinuity_C"] = C_eq;

    std::vector<double> int_l1(nx, 0.0), int_mu(nx, 0.0), prev_l1(nx, 0.0), prev_mu(nx, 0.0);
    double l1_metric = 0.0, mu_metric = 0.0, marg_metric = 0.0, marg_raw = 0.0, l1_sup = 0.0;
    const std::size_t nshift = spec.monitor_shifts.size();
    std::vector<std::vector<double>> prevH(nshift, std::vector<double>(nx, 0.0));
    CheckCount& monitor = run.checks["entropy_rate_monitor"];
    double monitor_margin_min = INFINITY;
    double theta_residual = 0.0;
    std::size_t next_sample = 0;

    std::vector<double> target(init.nu0.grid().size()), mu_target(target.size()), diff(target.size());

    auto evaluate = [&](long n) {
      const double t = st.t;
      const PhaseGrid& g = st.nu.grid();
      const int nv = g.nv(), nw = g.nw();
      const double cell = g.cell_area();
      const double eb = std::exp(b * t);
      const std::vector<double> bar_lim = evolve_bar_nu(init.bar_nu0, axis0, t, b, g.w);
      const bool sample = next_sample < ts.size() && std::lround(ts[next_sample] / dt) == n;

      double l1_max = 0.0, int_max = 0.0, int_mu_max = 0.0, marg_max = 0.0;
      for (int ix = 0; ix < nx; ++ix) {
        const Slice s = st.nu.slice(ix);
        const double th = st.theta.values[ix];
        // Limit in the rescaled frame and the blown-up physical-frame profile.
        const double shift = (st.macro.V[ix] - lim.V[ix]) / th;
        std::vector<double> Mshift(nv), mub(nw);
        for (int i = 0; i < nv; ++i) Mshift[i] = maxwellian_density(rho[ix], vax.node(i) + shift);
        for (int j = 0; j < nw; ++j)
          mub[j] = eb * mu0_interp[ix](axis0.index_of(eb * (st.macro.W[ix] + g.w.node(j)) - lim.Z[ix]));
        double l1 = 0.0, l1mu = 0.0;
        for (int i = 0; i < nv; ++i)
          for (int j = 0; j < nw; ++j) {
            const std::size_t k = static_cast<std::size_t>(i) * nw + j;
            target[k] = Mv[ix][i] * bar_lim[j];
            mu_target[k] = Mshift[i] * mub[j];
            l1 += std::abs(s.values[k] - target[k]);
            l1mu += std::abs(s.values[k] - mu_target[k]);
          }
        l1 *= cell;
        l1mu *= cell;
        if (n > 0) {
          int_l1[ix] += 0.5 * dt * (prev_l1[ix] + l1);
          int_mu[ix] += 0.5 * dt * (prev_mu[ix] + l1mu);
        }
        prev_l1[ix] = l1;
        prev_mu[ix] = l1mu;
        l1_max = std::max(l1_max, l1);
        int_max = std::max(int_max, int_l1[ix]);
        int_mu_max = std::max(int_mu_max, int_mu[ix]);

        const std::vector<double> bar = w_marginal(s);
        std::vector<double> bd(nw);
        for (int j = 0; j < nw; ++j) bd[j] = bar[j] - bar_lim[j];
        marg_max = std::max(marg_max, weighted_norm_marginal(bd, g.w, 0, wbar).value);

        // Entropy-rate monitor against the grid translate tau_k f.
        for (std::size_t q = 0; q < nshift; ++q) {
          const int kk = spec.monitor_shifts[q];
          const std::vector<double> tf = translate_w(s, kk);
          const double H = half_entropy(s, Slice{tf, g});
          if (n > 0) {
            const double w0 = kk * dw0;
            const double t_old = t - dt;
            const double R = 0.25 * w0 * w0 * 0.5 * (std::exp(-2.0 * b * t_old) + std::exp(-2.0 * b * t));
            const double budget = spec.tol.monitor_scale * (dt + dw0 * dw0);
            const double rate = (H - prevH[q][ix]) / dt;
            monitor.add(rate <= R + budget, rate - R);
            monitor_margin_min = std::min(monitor_margin_min, R + budget - rate);
          }
          prevH[q][ix] = H;
        }
      }
      l1_sup = std::max(l1_sup, l1_max);
      l1_metric = std::max(l1_metric, int_max / eb);
      mu_metric = std::max(mu_metric, int_mu_max / eb);
      marg_metric = std::max(marg_metric, marg_max / eb);
      marg_raw = std::max(marg_raw, marg_max);
      if (!sample) return;
      ++next_sample;

      Series S{run};
      run.t.push_back(t);
      S.push("l1_nu_frame", l1_max);
      S.push("l1_int_nu_frame", int_max);
      S.push("l1_int_mu_frame", int_mu_max);
      S.push("marginal_h0", marg_max);

      double macro_err = 0.0, D2 = 0.0, D4 = 0.0, M2 = 0.0, M4 = 0.0, Eabs = 0.0;
      double rD2 = 0.0, rD4 = 0.0, rE = 0.0;
      double perp0 = 0.0, perp1 = 0.0, lim0 = 0.0, marg1 = 0.0;
      double mum[3] = {0.0, 0.0, 0.0};
      bool div_perp = false, div_lim = false, div_mum = false;
      double free_e = -INFINITY, fisher = 0.0, relent = 0.0, floored = 0.0;
      double eq_ratio = 0.0;
      const Projection proj = projection_pi(st.nu, rho);
      CheckCount& ck = run.checks["csiszar_kullback"];
      CheckCount& sw_lim = run.checks["sandwich_limit"];
      CheckCount& sw_proj = run.checks["sandwich_projection"];
      CheckCount& lsi = run.checks["log_sobolev"];
      CheckCount& gp = run.checks["gaussian_poincare"];
      CheckCount& p1 = run.checks["p_ineq_first"];
      CheckCount& p2 = run.checks["p_ineq_second"];
      CheckCount& eqc = run.checks["equicontinuity"];

      const double dw = g.dw();
      std::vector<int> shifts;
      for (int k = 1; k < nw && k * dw <= spec.equicontinuity_max_shift * (1.0 + 1e-12); ++k) shifts.push_back(k);
      const auto eqtab = equicontinuity_modulus(st.nu, shifts);

      for (int ix = 0; ix < nx; ++ix) {
        const Slice s = st.nu.slice(ix);
        const double th = st.theta.values[ix];
        const double r = rho[ix];
        theta_residual = std::max(theta_residual,
                                  std::abs(0.5 * theta_sq_rate(t, r, eps) + r / eps * th * th - r));
        macro_err = std::max({macro_err, std::abs(st.macro.V[ix] - lim.V[ix]), std::abs(st.macro.W[ix] - lim.W[ix])});
        double d2 = 0.0, d4 = 0.0, m2 = 0.0, m4 = 0.0;
        for (int i = 0; i < nv; ++i) {
          const double v = vax.node(i), u = st.macro.V[ix] + th * v;
          for (int j = 0; j < nw; ++j) {
            const double f = s(i, j);
            const double ww = st.macro.W[ix] + g.w.node(j);
            const double q2 = u * u + ww * ww;
            d2 += v * v * f;
            d4 += v * v * v * v * f;
            m2 += q2 * f;
            m4 += q2 * q2 * f;
          }
        }
        d2 *= cell * th * th;
        d4 *= cell * th * th * th * th;
        m2 *= cell;
        m4 *= cell;
        D2 = std::max(D2, d2);
        D4 = std::max(D4, d4);
        M2 = std::max(M2, m2);
        M4 = std::max(M4, m4);
        const double Ei = std::abs(st.E[ix]);
        Eabs = std::max(Eabs, Ei);
        rD2 = std::max(rD2, d2 / (std::exp(-2.0 * m_star * t / eps) + eps));
        rD4 = std::max(rD4, d4 / (std::exp(-4.0 * m_star * t / eps) + eps * eps));
        rE = std::max(rE, Ei / (std::exp(-2.0 * m_star * t / eps) + eps));

        // Limit profile in the rescaled frame.
        for (int i = 0; i < nv; ++i)
          for (int j = 0; j < nw; ++j) {
            const std::size_t k = static_cast<std::size_t>(i) * nw + j;
            target[k] = Mv[ix][i] * bar_lim[j];
            diff[k] = s.values[k] - target[k];
          }
        lim0 = std::max(lim0, norm_h(diff, g, 0, wm, r, &div_lim));
        const Slice perp = proj.perp.slice(ix);
        perp0 = std::max(perp0, norm_h(perp.values, g, 0, wm, r, &div_perp));
        perp1 = std::max(perp1, norm_h(perp.values, g, 1, wm, r, &div_perp));
        {
          const std::vector<double> bar = w_marginal(s);
          std::vector<double> bd(nw);
          for (int j = 0; j < nw; ++j) bd[j] = bar[j] - bar_lim[j];
          marg1 = std::max(marg1, weighted_norm_marginal(bd, g.w, 1, wbar).value);
        }
        // Physical-frame weighted errors with voltage moments (v - V)^i.
        {
          const double shift = (st.macro.V[ix] - lim.V[ix]) / th;
          std::vector<double> mub(nw);
          for (int j = 0; j < nw; ++j)
            mub[j] = eb * mu0_interp[ix](axis0.index_of(eb * (st.macro.W[ix] + g.w.node(j)) - lim.Z[ix]));
          for (int p = 0; p < 3; ++p) {
            for (int i = 0; i < nv; ++i) {
              const double v = vax.node(i);
              const double Mi = maxwellian_density(r, v + shift);
              const double vp = std::pow(th * v, p);
              for (int j = 0; j < nw; ++j) {
                const std::size_t k = static_cast<std::size_t>(i) * nw + j;
                diff[k] = vp * (s.values[k] - Mi * mub[j]);
              }
            }
            mum[p] = std::max(mum[p], norm_h(diff, g, 0, wminus, r, &div_mum));
          }
        }

        const EntropyReport er = entropy_report(s, r);
        free_e = std::max(free_e, er.E_free);
        fisher = std::max(fisher, er.I_fisher);
        relent = std::max(relent, er.H_relative);
        floored = std::max(floored, er.floored_fraction);
        const std::string fflag = er.unreliable ? "unreliable" : "";
        run.diagnostics.push_back({t, ix, "boltzmann_entropy", er.H, ""});
        run.diagnostics.push_back({t, ix, "free_energy", er.E_free, ""});
        run.diagnostics.push_back({t, ix, "fisher_information", er.I_fisher, fflag});
        run.diagnostics.push_back({t, ix, "relative_entropy", er.H_relative, ""});
        run.diagnostics.push_back({t, ix, "floored_fraction", er.floored_fraction, ""});

        // Inequalities on solver output.
        const InequalityResult c = csiszar_kullback(s, r);
        ck.add(c.ok, c.lhs - c.rhs);
        const SandwichResult sl = ck_sandwich(s, Slice{target, g}, spec.tol.sandwich_abs);
        sw_lim.add(sl.lower_ok && sl.upper_ok, -std::min(sl.lower_slack, sl.upper_slack));
        const SandwichResult sp = ck_sandwich(s, proj.pi.slice(ix), spec.tol.sandwich_abs);
        sw_proj.add(sp.lower_ok && sp.upper_ok, -std::min(sp.lower_slack, sp.upper_slack));
        run.diagnostics.push_back({t, ix, "half_entropy_vs_limit", sl.h_half, ""});
        run.diagnostics.push_back({t, ix, "half_fisher_vs_limit", half_fisher(s, Slice{target, g}), ""});
        if (!er.unreliable) {
          const InequalityResult l = log_sobolev(s, r);
          lsi.add(l.ok, l.lhs - l.rhs);
        }
        const InequalityResult pc = gaussian_poincare(perp, r, wm, g.dv() * g.dv());
        gp.add(pc.ok, pc.lhs - pc.rhs);
        const PoincarePair pp = poincare_pair(s, r, wm, dw * dw);
        p1.add(pp.first.ok, pp.first.lhs - pp.first.rhs);
        p2.add(pp.second.ok, pp.second.lhs - pp.second.rhs);

        for (std::size_t q = 0; q < shifts.size(); ++q) {
          const double y = shifts[q] * dw * eb;
          const double bound = C_eq * (y + std::sqrt(y));
          const double ratio = eqtab[ix][q] / bound;
          eqc.add(ratio <= 1.0, ratio);
          eq_ratio = std::max(eq_ratio, ratio);
        }
      }
      S.push("macro_error", macro_err);
      S.push("D2", D2);
      S.push("D4", D4);
      S.push("M2", M2);
      S.push("M4", M4);
      S.push("E_abs", Eabs);
      S.push("ratio_D2", rD2);
      S.push("ratio_D4", rD4);
      S.push("ratio_E", rE);
      S.push_flag("nu_perp_h0", perp0, div_perp, "diverged");
      S.push_flag("nu_perp_h1", perp1, div_perp, "diverged");
      S.push_flag("nu_minus_limit_h0", lim0, div_lim, "diverged");
      S.push("marginal_h1", marg1);
      for (int p = 0; p < 3; ++p) S.push_flag("mu_frame_m_minus_moment" + std::to_string(p), mum[p], div_mum, "diverged");
      S.push("layer_envelope",
             std::exp(-spec.alpha_star * t / eps) * std::pow(eps, -spec.alpha_star / (2.0 * m_star)));
      S.push("free_energy", free_e);
      S.push("fisher_information", fisher);
      S.push("relative_entropy", relent);
      S.push("floored_fraction", floored);
      S.push("equicontinuity_ratio", eq_ratio);
      S.push("theta_min", *std::min_element(st.theta.values.begin(), st.theta.values.end()));
    };

    evaluate(0);
    for (long n = 1; n <= steps; ++n) {
      st = step_rescaled_coupled(st, dt, model, opt);
      lim = step_limit_V(lim, dt, model);
      evaluate(n);
    }
    run.scalars["l1_rate_metric"] = l1_metric;
    run.scalars["l1_mu_rate_metric"] = mu_metric;
    run.scalars["marginal_rate_metric"] = marg_metric;
    run.scalars["marginal_raw_sup"] = marg_raw;
    run.scalars["l1_sup"] = l1_sup;
    run.scalars["theta_residual_max"] = theta_residual;
    run.scalars["monitor_min_margin"] = std::isfinite(monitor_margin_min) ? monitor_margin_min : 0.0;
    run.scalars["mass_defect_max"] = st.telemetry.mass_defect;
    run.scalars["positivity_clamps"] = st.telemetry.positivity_clamps;
    run.scalars["closure_defect"] = st.closure_defect;
    run.telemetry = st.telemetry;
    run.closure_defect = st.closure_defect;
    run.ok = true;
  } catch (const std::exception& e) {
    run.ok = false;
    run.failure = e.what();
  }
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock0).count();
  return run;
}

SweepData run_sweep(const ExperimentSpec& spec) {
  spec.validate();
  SweepData out;
  out.spec = spec;
  out.runs.resize(spec.epsilons.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < spec.epsilons.size(); i = next++) out.runs[i] = run_epsilon(spec, spec.epsilons[i]);
  };
  const int nt = std::min<int>(spec.threads, static_cast<int>(std::max<std::size_t>(1, spec.epsilons.size())));
  if (nt <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < nt; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  if (spec.floor_estimate && !out.runs.empty() && out.runs.back().ok) {
    ExperimentSpec coarse = spec;
    coarse.grid.nv = spec.grid.nv / 2;
    coarse.grid.nw = spec.grid.nw / 2;
    coarse.solver.dt = 2.0 * spec.solver.dt;
    coarse.monitor_shifts.clear();
    coarse.equicontinuity_max_shift = 0.0;
    const EpsilonRun c = run_epsilon(coarse, spec.epsilons.back());
    if (c.ok) {
      const EpsilonRun& f = out.runs.back();
      out.floor.computed = true;
      out.floor.l1 = std::abs(c.scalars.at("l1_rate_metric") - f.scalars.at("l1_rate_metric"));
      out.floor.marginal = std::abs(c.scalars.at("marginal_rate_metric") - f.scalars.at("marginal_rate_metric"));
    }
  }
  // Floor subtraction when the floor exceeds 10% of the smallest error.
  auto apply_floor = [&](const std::string& metric, double floor, bool& flag) {
    double smallest = INFINITY;
    for (const auto& r : out.runs)
      if (r.ok) smallest = std::min(smallest, r.scalars.at(metric));
    flag = out.floor.computed && std::isfinite(smallest) && floor > 0.1 * smallest;
    for (auto& r : out.runs)
      if (r.ok) r.scalars[metric + "_fit_input"] = flag ? r.scalars.at(metric) - floor : r.scalars.at(metric);
  };
  apply_floor("l1_rate_metric", out.floor.l1, out.floor.l1_subtracted);
  apply_floor("marginal_rate_metric", out.floor.marginal, out.floor.marginal_subtracted);
  return out;
}

}  // namespace fhn
