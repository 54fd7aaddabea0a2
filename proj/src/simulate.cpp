#include "fhn/simulate.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fhn/macro_solver.hpp"

namespace fhn {

SimulationResult run_simulation(const RunConfig& cfg, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const ExperimentSpec& spec = cfg.experiment;
  const double eps = cfg.simulate_epsilon;
  const SpatialGrid space(spec.grid.nx);
  const Model model = spec.model.build(space);
  const InitialState init = make_initial_state(spec, model);
  const double dt = spec.solver.dt;
  const long steps = std::lround(spec.solver.t_end / dt);
  const std::vector<double> ts = sample_times(spec);
  const bool direct = spec.solver.mode == SolverMode::direct_kinetic;

  SimulationResult res;
  std::ofstream csv(fs::path(dir) / "trajectory.csv");
  if (!csv) throw std::runtime_error("cannot write " + dir + "/trajectory.csv");
  csv << "mode,eps,t,x,V,W,V_limit,W_limit\n";
  auto row = [&](double t, const MacroFields& m, const LimitState& lim) {
    char buf[256];
    for (int ix = 0; ix < space.nx; ++ix) {
      std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", to_string(spec.solver.mode).c_str(),
                    eps, t, space.x(ix), m.V[ix], m.W[ix], lim.V[ix], lim.W[ix]);
      csv << buf;
    }
  };

  CoupledState st = make_coupled_state(init.nu0, init.macro0, eps, model);
  DensityField mu;
  if (direct) {
    mu = press_down(st.nu, st.macro, st.theta, init.nu0.grid());
    mu.normalize();
  }
  LimitState lim = make_limit_state(init.macro0.V, init.bar_mu0, init.nu0.grid().w, model);
  const RescaledStepOptions ro{spec.solver.transport, spec.solver.cfl_safety, spec.solver.recenter_tol};
  const DirectStepOptions dopt{spec.solver.transport, spec.solver.cfl_safety};
  std::size_t next = 0;
  try {
    for (long n = 0; n <= steps; ++n) {
      if (n > 0) {
        if (direct) {
          StepTelemetry tel;
          mu = step_direct_kinetic(mu, dt, eps, model, dopt, &tel);
          res.telemetry.merge(tel);
        } else {
          st = step_rescaled_coupled(st, dt, model, ro);
          res.telemetry = st.telemetry;
        }
        lim = step_limit_V(lim, dt, model);
      }
      while (next < ts.size() && std::lround(ts[next] / dt) == n) {
        row(n * dt, direct ? macro_moments(mu) : st.macro, lim);
        ++next;
      }
      const int every = spec.solver.checkpoint_every;
      if (every > 0 && n % every == 0) {
        char stem[64];
        std::snprintf(stem, sizeof stem, "checkpoint_%08ld", n);
        const std::string path = (fs::path(dir) / stem).string();
        if (direct)
          write_checkpoint(path, mu, eps, macro_moments(mu), res.telemetry);
        else
          write_checkpoint(path, st);
      }
      res.steps = n;
    }
    res.ok = true;
  } catch (const std::exception& e) {
    res.failure = e.what();
  }
  return res;
}

}  // namespace fhn
