#include "bgmpc/harness.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <utility>

#include "bgmpc/rng.hpp"

namespace bgmpc {

const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::I: return "I";
    case Scenario::II: return "II";
    case Scenario::III: return "III";
  }
  return "?";
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "I" || s == "1") return Scenario::I;
  if (s == "II" || s == "2") return Scenario::II;
  if (s == "III" || s == "3") return Scenario::III;
  throw std::invalid_argument("unknown scenario '" + s + "' (use I, II or III)");
}

SimModels::SimModels(PowerNetwork net0, BuildingCluster cluster0, HorizonConfig horizon0,
                     CostConfig costs0, BoundConfig bounds0, BangBangOptions bang0,
                     GridDisturbance grid_forecast0,
                     std::vector<BuildingDisturbance> bldg_forecast0, Eigen::VectorXd x_g00,
                     Eigen::VectorXd x_b00)
    : net_storage_(std::move(net0)),
      cluster_storage_(std::move(cluster0)),
      net(net_storage_),
      cluster(cluster_storage_),
      horizon(horizon0),
      costs(std::move(costs0)),
      bounds(std::move(bounds0)),
      bang(bang0),
      grid_forecast(std::move(grid_forecast0)),
      bldg_forecast(std::move(bldg_forecast0)),
      x_g0(std::move(x_g00)),
      x_b0(std::move(x_b00)),
      dae(net_storage_),
      grid_model(dae, horizon0.h_g, GearScheme::of_order(horizon0.order)),
      bldg_model(cluster_storage_, horizon0.h_b, GearScheme::of_order(horizon0.order)),
      ptdf_mat(ptdf(net_storage_)) {
  horizon.validate();
  bounds.validate();
  if (cluster.size() != net.n_buildings())
    throw std::invalid_argument("cluster size does not match buildings attached to network");
  if (x_g0.size() != 2 * net.n_buses() || x_b0.size() != 2 * cluster.size())
    throw std::invalid_argument("initial state dimension mismatch");
  if (static_cast<int>(grid_forecast.base_load_pu.size()) != net.n_buses() ||
      static_cast<int>(grid_forecast.misc_load_kw.size()) != cluster.size() ||
      static_cast<int>(bldg_forecast.size()) != cluster.size())
    throw std::invalid_argument("forecast dimension mismatch");
  if (costs.q_diag.size() != 2 * net.n_buses() || costs.r_diag.size() != net.n_generators())
    throw std::invalid_argument("cost weight dimension mismatch");
}

void ScenarioConfig::validate(const HorizonConfig& horizon) const {
  horizon.validate();
  const double blocks = t_final / horizon.t_p;
  if (t_final <= 0 || std::abs(blocks - std::llround(blocks)) > 1e-9)
    throw std::invalid_argument("T_final must be a positive multiple of T_p");
  if (noise.load_std < 0 || noise.model_std < 0)
    throw std::invalid_argument("noise fractions must be >= 0");
}

namespace {

void push_history(std::vector<Eigen::VectorXd>& hist, const Eigen::VectorXd& x) {
  hist.insert(hist.begin(), x);
  hist.pop_back();
}

StepSeries perturb_relative(const StepSeries& s, double rel_std, Rng& rng, bool clamp_nonneg) {
  return s.map([&](double, double v) {
    const double x = v * (1.0 + rel_std * rng.gaussian());
    return clamp_nonneg ? std::max(0.0, x) : x;
  });
}

struct Realization {
  GridDisturbance grid;
  std::vector<BuildingDisturbance> bldg;
};

Realization realize(const SimModels& m, double load_std, std::uint64_t seed) {
  Realization r;
  r.grid.forecast = false;
  if (load_std == 0.0) {
    r.grid.base_load_pu = m.grid_forecast.base_load_pu;
    r.grid.misc_load_kw = m.grid_forecast.misc_load_kw;
    r.bldg = m.bldg_forecast;
    return r;
  }
  Rng rng(seed);
  for (const auto& s : m.grid_forecast.base_load_pu)
    r.grid.base_load_pu.push_back(perturb_relative(s, load_std, rng, true));
  for (const auto& s : m.grid_forecast.misc_load_kw)
    r.grid.misc_load_kw.push_back(perturb_relative(s, load_std, rng, true));
  for (const auto& d : m.bldg_forecast)
    r.bldg.push_back({perturb_relative(d.t_amb_c, load_std, rng, false),
                      perturb_relative(d.q_sol_w, load_std, rng, true),
                      perturb_relative(d.q_int_w, load_std, rng, true)});
  return r;
}

double dispatch_cost(const PowerNetwork& net, const Eigen::VectorXd& u) {
  double c = 0.0;
  for (int m = 0; m < net.n_generators(); ++m) {
    const auto& g = net.generators()[static_cast<std::size_t>(m)];
    c += g.cost_quadratic * u(m) * u(m) + g.cost_linear * u(m) + g.cost_constant;
  }
  return c;
}

struct WarmStart {
  Eigen::VectorXd x, y;
  bool have = false;
};

QpSolution solve_checked(const QuadraticProgram& qp, const ScenarioConfig& cfg,
                         WarmStart& ws, double t, const char* branch, SolveStats& stats) {
  const bool usable = cfg.warm_start && ws.have && ws.x.size() == qp.num_vars();
  const Eigen::VectorXd* init = usable ? &ws.x : nullptr;
  // The constraint stack keeps its shape between solves of one branch, so
  // the previous multipliers are a valid dual hint as well.
  const Eigen::VectorXd* init_dual = usable && ws.y.size() > 0 ? &ws.y : nullptr;
  QpSolution sol = solve(qp, cfg.qp_tol, init, init_dual);
  stats.iterations += sol.iterations;
  stats.worst_residual =
      std::max({stats.worst_residual, sol.primal_residual, sol.dual_residual});
  if (sol.status != QpStatus::optimal)
    throw ScenarioError(t, std::string(branch) + " solve " + to_string(sol.status) +
                               (sol.message.empty() ? "" : "; " + sol.message));
  ws.x = sol.primal;
  ws.y = sol.dual;
  ws.have = true;
  return sol;
}

// Building loads over one look-ahead horizon, one column per grid step,
// taken from a fixed trajectory (columns at h_b cadence; the last column
// extends past its end).
Eigen::MatrixXd horizon_loads(const Eigen::MatrixXd& source, int j0, int kg, int ratio) {
  Eigen::MatrixXd out(source.rows(), kg);
  for (int k = 1; k <= kg; ++k) {
    const int interval = (j0 + k - 1) / ratio;  // 0-based global building interval
    out.col(k - 1) = source.col(std::min<int>(interval, static_cast<int>(source.cols()) - 1));
  }
  return out;
}

// The moving-horizon loop shared by all scenarios. When `ub_source` is null
// the building controls are decision variables (the full coupling); otherwise
// they are data and only grid problems are solved, with closed-loop building
// states supplied in `xb_closed`.
ScenarioRun engine(const SimModels& m, const ScenarioConfig& cfg, const Realization& real,
                   const Eigen::MatrixXd* ub_source, const Eigen::MatrixXd* xb_closed,
                   SolveStats carried_stats) {
  const HorizonConfig& hz = m.horizon;
  const int n = m.net.n_buses();
  const int n_g = m.net.n_generators();
  const int n_b = m.cluster.size();
  const int per_tp = hz.grid_steps();
  const int ratio = hz.grid_steps_per_building();
  const int n_g_steps = static_cast<int>(std::llround(cfg.t_final / hz.h_g));
  const int n_b_steps = static_cast<int>(std::llround(cfg.t_final / hz.h_b));
  const int n_blocks = static_cast<int>(std::llround(cfg.t_final / hz.t_p));
  const bool joint = ub_source == nullptr;
  const int s = hz.order;

  ScenarioRun run;
  run.scenario = cfg.scenario;
  run.t0 = cfg.t0;
  run.t_final = cfg.t_final;
  run.horizon = hz;
  run.stats = carried_stats;
  run.x_g.resize(2 * n, n_g_steps + 1);
  run.x_b.resize(2 * n_b, n_b_steps + 1);
  run.u_bar.resize(n_g, n_blocks);
  run.delta_u.resize(n_g, n_g_steps);
  run.u_b_kw.resize(n_b, n_b_steps);
  run.w_g_realized.resize(n + n_b, n_g_steps);
  run.w_b_realized.resize(3 * n_b, n_b_steps);
  run.x_g.col(0) = m.x_g0;
  run.x_b.col(0) = m.x_b0;

  std::vector<Eigen::VectorXd> ghist(static_cast<std::size_t>(s), m.x_g0);
  std::vector<Eigen::VectorXd> bhist(static_cast<std::size_t>(s), m.x_b0);
  Eigen::VectorXd ubar = Eigen::VectorXd::Zero(n_g);
  Eigen::VectorXd ub_applied = Eigen::VectorXd::Zero(n_b);
  WarmStart ws_full, ws_bldg, ws_grid;
  WarmStart ws_full_sparse, ws_grid_sparse;

  // Exact condensed solver for the branches whose building loads are data;
  // it skips the stacked state variables entirely (first order only).
  std::unique_ptr<CondensedGridMpc> fast;
  if (s == 1) fast = std::make_unique<CondensedGridMpc>(m.dae, m.grid_model, m.costs,
                                                        m.bounds, hz);
  auto solve_grid_fast = [&](const MpcInputs& min, const Eigen::MatrixXd& loads,
                             const GridMpcOptions& opts, WarmStart& ws, double t,
                             const char* branch)
      -> std::unique_ptr<CondensedGridMpc::Result> {
    if (!fast) return nullptr;
    const Eigen::VectorXd* wx = nullptr;
    const Eigen::VectorXd* wy = nullptr;
    if (cfg.warm_start && ws.have) {
      wx = &ws.x;
      wy = ws.y.size() > 0 ? &ws.y : nullptr;
    }
    auto r = std::make_unique<CondensedGridMpc::Result>(fast->solve(min, loads, opts, wx, wy));
    if (r->status == QpStatus::infeasible)
      throw ScenarioError(t, std::string(branch) + " solve infeasible" +
                                 (r->message.empty() ? "" : "; " + r->message));
    if (r->status != QpStatus::optimal || !r->bounds_ok) return nullptr;  // sparse fallback
    run.stats.iterations += r->iterations;
    run.stats.worst_residual = std::max(run.stats.worst_residual, r->worst_residual);
    ws.x = r->raw_primal;
    ws.y = r->raw_dual;
    ws.have = true;
    return r;
  };

  const double wg_cost = hz.h_g / hz.t_p;
  const double wb_cost = hz.h_b / hz.t_p;

  for (int j = 0; j < n_g_steps; ++j) {
    const double t = cfg.t0 + j * hz.h_g;
    const bool at_tp = j % per_tp == 0;
    const bool at_hb = j % ratio == 0;

    MpcInputs in;
    in.t0 = t;
    in.grid_history = ghist;
    in.bldg_history = bhist;
    in.grid_forecast = &m.grid_forecast;
    in.bldg_forecast = &m.bldg_forecast;

    Eigen::VectorXd du_applied;

    if (joint) {
      if (at_tp) {
        JointMpcOptions opts;
        auto qp = assemble_btg_gmpc(m.dae, m.grid_model, m.cluster, m.bldg_model, m.ptdf_mat,
                                    in, m.costs, m.bounds, hz, opts);
        auto sol = solve_checked(qp, cfg, ws_full, t, "joint", run.stats);
        ubar = variable_slice(qp, sol, Quantity::setpoint, std::nullopt, 0, 0);
        run.u_bar.col(j / per_tp) = ubar;
        run.lopf_cost += dispatch_cost(m.net, ubar);
        ub_applied = variable_slice(qp, sol, Quantity::hvac, std::nullopt, 1, 1);
        du_applied = variable_slice(qp, sol, Quantity::regulation, std::nullopt, 1, 1);
        ++run.stats.full_solves;
      } else if (at_hb) {
        JointMpcOptions opts;
        opts.optimize_setpoint = false;
        opts.fixed_setpoint = ubar;
        opts.lopf_rows = false;
        auto qp = assemble_btg_gmpc(m.dae, m.grid_model, m.cluster, m.bldg_model, m.ptdf_mat,
                                    in, m.costs, m.bounds, hz, opts);
        auto sol = solve_checked(qp, cfg, ws_bldg, t, "building", run.stats);
        ub_applied = variable_slice(qp, sol, Quantity::hvac, std::nullopt, 1, 1);
        du_applied = variable_slice(qp, sol, Quantity::regulation, std::nullopt, 1, 1);
        ++run.stats.building_solves;
      } else {
        GridMpcOptions opts;
        opts.optimize_setpoint = false;
        opts.fixed_setpoint = ubar;
        opts.lopf_rows = false;
        const Eigen::MatrixXd held = ub_applied.replicate(1, per_tp);
        if (auto r = solve_grid_fast(in, held, opts, ws_grid, t, "grid")) {
          du_applied = r->delta_u.col(0);
        } else {
          auto qp = assemble_grid_mpc(m.dae, m.grid_model, m.ptdf_mat, in, held, m.costs,
                                      m.bounds, hz, opts);
          auto sol = solve_checked(qp, cfg, ws_grid_sparse, t, "grid", run.stats);
          du_applied = variable_slice(qp, sol, Quantity::regulation, std::nullopt, 1, 1);
        }
        ++run.stats.grid_solves;
      }
    } else {
      const Eigen::MatrixXd loads = horizon_loads(*ub_source, j, per_tp, ratio);
      if (at_tp) {
        GridMpcOptions opts;
        if (auto r = solve_grid_fast(in, loads, opts, ws_full, t, "grid dispatch")) {
          ubar = r->u_bar;
          du_applied = r->delta_u.col(0);
        } else {
          auto qp = assemble_grid_mpc(m.dae, m.grid_model, m.ptdf_mat, in, loads, m.costs,
                                      m.bounds, hz, opts);
          auto sol = solve_checked(qp, cfg, ws_full_sparse, t, "grid dispatch", run.stats);
          ubar = variable_slice(qp, sol, Quantity::setpoint, std::nullopt, 0, 0);
          du_applied = variable_slice(qp, sol, Quantity::regulation, std::nullopt, 1, 1);
        }
        run.u_bar.col(j / per_tp) = ubar;
        run.lopf_cost += dispatch_cost(m.net, ubar);
        ++run.stats.full_solves;
      } else {
        GridMpcOptions opts;
        opts.optimize_setpoint = false;
        opts.fixed_setpoint = ubar;
        opts.lopf_rows = false;
        if (auto r = solve_grid_fast(in, loads, opts, ws_grid, t, "grid")) {
          du_applied = r->delta_u.col(0);
        } else {
          auto qp = assemble_grid_mpc(m.dae, m.grid_model, m.ptdf_mat, in, loads, m.costs,
                                      m.bounds, hz, opts);
          auto sol = solve_checked(qp, cfg, ws_grid_sparse, t, "grid", run.stats);
          du_applied = variable_slice(qp, sol, Quantity::regulation, std::nullopt, 1, 1);
        }
        ++run.stats.grid_solves;
      }
      ub_applied = ub_source->col(
          std::min<int>(j / ratio, static_cast<int>(ub_source->cols()) - 1));
    }

    if (at_hb) run.u_b_kw.col(j / ratio) = ub_applied;
    run.delta_u.col(j) = du_applied;

    // Advance the grid with the realized disturbance at the step end.
    const double tn = cfg.t0 + (j + 1) * hz.h_g;
    const Eigen::VectorXd w = real.grid.at(tn);
    run.w_g_realized.col(j) = w;
    const Eigen::VectorXd u_g = ubar + du_applied;
    const Eigen::VectorXd x_next = m.grid_model.step(ghist, u_g, ub_applied, w);
    run.x_g.col(j + 1) = x_next;
    push_history(ghist, x_next);

    run.freq_cost += wg_cost * x_next.dot(m.costs.q_diag.cwiseProduct(x_next));
    run.regulation_cost += wg_cost * du_applied.dot(m.costs.r_diag.cwiseProduct(du_applied));

    if ((j + 1) % ratio == 0) {
      const int g = (j + 1) / ratio;  // completed building interval, 1-based
      const double tb = cfg.t0 + g * hz.h_b;
      const Eigen::VectorXd wb = stack_building_disturbance(real.bldg, tb);
      run.w_b_realized.col(g - 1) = wb;
      Eigen::VectorXd xb_next;
      if (joint)
        xb_next = m.bldg_model.step(bhist, ub_applied, wb);
      else
        xb_next = xb_closed->col(g);
      run.x_b.col(g) = xb_next;
      push_history(bhist, xb_next);
      run.hvac_cost += wb_cost * m.costs.price.at(tb) * ub_applied.sum();
    }
  }

  return run;
}

// Receding-horizon building MPC on its own (the decoupled design): at every
// h_b the cluster problem is solved over T_p and the first input applied.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> building_closed_loop(const SimModels& m,
                                                                 const ScenarioConfig& cfg,
                                                                 const Realization& real,
                                                                 SolveStats& stats) {
  const HorizonConfig& hz = m.horizon;
  const int n_b = m.cluster.size();
  const int n_steps = static_cast<int>(std::llround(cfg.t_final / hz.h_b));
  const int s = hz.order;

  Eigen::MatrixXd u(n_b, n_steps);
  Eigen::MatrixXd x(2 * n_b, n_steps + 1);
  x.col(0) = m.x_b0;
  std::vector<Eigen::VectorXd> hist(static_cast<std::size_t>(s), m.x_b0);
  WarmStart ws;

  for (int g = 0; g < n_steps; ++g) {
    const double t = cfg.t0 + g * hz.h_b;
    MpcInputs in;
    in.t0 = t;
    in.bldg_history = hist;
    in.bldg_forecast = &m.bldg_forecast;
    auto qp = assemble_building_mpc(m.cluster, m.bldg_model, in, m.costs, m.bounds, hz);
    auto sol = solve_checked(qp, cfg, ws, t, "building", stats);
    ++stats.building_solves;
    const Eigen::VectorXd u1 = variable_slice(qp, sol, Quantity::hvac, std::nullopt, 1, 1);
    const Eigen::VectorXd wb = stack_building_disturbance(real.bldg, t + hz.h_b);
    const Eigen::VectorXd x1 = m.bldg_model.step(hist, u1, wb);
    u.col(g) = u1;
    x.col(g + 1) = x1;
    push_history(hist, x1);
  }
  return {u, x};
}

}  // namespace

ScenarioRun run_algorithm1(const SimModels& m, const ScenarioConfig& cfg) {
  cfg.validate(m.horizon);
  const Realization real = realize(m, cfg.noise.load_std, cfg.seed);
  return engine(m, cfg, real, nullptr, nullptr, {});
}

ScenarioRun run_scenario(const SimModels& m, const ScenarioConfig& cfg) {
  cfg.validate(m.horizon);
  if (cfg.scenario == Scenario::III) return run_algorithm1(m, cfg);

  const Realization real = realize(m, cfg.noise.load_std, cfg.seed);
  const int n_b_steps = static_cast<int>(std::llround(cfg.t_final / m.horizon.h_b));

  if (cfg.scenario == Scenario::I) {
    // Thermostats run over the whole span plus one look-ahead horizon so
    // every grid solve sees actual (not extrapolated) building loads.
    const int extra = m.horizon.building_steps();
    auto tuned = bang_bang_tuned(m.cluster, m.bldg_model, m.bang, real.bldg, m.x_b0,
                                 n_b_steps + extra, cfg.t0, m.bounds);
    if (!tuned.feasible)
      throw ScenarioError(cfg.t0,
                          "bang-bang control cannot be tuned inside the zone band; worst "
                          "violation " +
                              std::to_string(tuned.run.max_violation));
    const Eigen::MatrixXd xb = tuned.run.x.leftCols(n_b_steps + 1);
    return engine(m, cfg, real, &tuned.run.u_kw, &xb, {});
  }

  // Scenario II.
  SolveStats stats;
  auto [ub, xb] = building_closed_loop(m, cfg, real, stats);
  return engine(m, cfg, real, &ub, &xb, stats);
}

// ---------------------------------------------------------------------------
// Nonlinear continuous-time replay.

ReplayResult replay_nonlinear(const SimModels& m, const ScenarioRun& run,
                              const NoiseConfig& noise, std::uint64_t seed,
                              const ReplayOptions& opts) {
  const HorizonConfig& hz = run.horizon;
  const int n = m.net.n_buses();
  const int n_b = m.cluster.size();
  const int substeps = static_cast<int>(std::llround(opts.inner_substeps));
  if (substeps < 1) throw std::invalid_argument("inner_substeps must be >= 1");
  const double h = hz.h_g / substeps;
  const int n_inner = run.grid_steps() * substeps;
  const int per_tp = hz.grid_steps();
  const int ratio = hz.grid_steps_per_building();

  Rng rng(seed);
  Realization real = realize(m, noise.load_std, rng.next_u64());

  // One-shot parametric perturbation of the building matrices.
  std::vector<BuildingStateSpace> blocks;
  blocks.reserve(static_cast<std::size_t>(n_b));
  for (int l = 0; l < n_b; ++l) blocks.push_back(m.cluster.block(l));
  if (noise.model_std > 0.0) {
    for (auto& blk : blocks) {
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) blk.a(r, c) *= 1.0 + noise.model_std * rng.gaussian();
      for (int r = 0; r < 2; ++r) blk.b_u(r) *= 1.0 + noise.model_std * rng.gaussian();
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 3; ++c) blk.b_w(r, c) *= 1.0 + noise.model_std * rng.gaussian();
    }
  }

  ReplayResult out;
  out.h_inner = h;
  out.x_g.resize(2 * n, n_inner + 1);
  out.x_b.resize(2 * n_b, n_inner + 1);
  out.x_g.col(0) = run.x_g.col(0);
  out.x_b.col(0) = run.x_b.col(0);

  const Eigen::MatrixXd e_dense = Eigen::MatrixXd(m.dae.e());
  const Eigen::MatrixXd a_lin_dense = Eigen::MatrixXd(m.dae.a_linear());
  const Eigen::MatrixXd a_nl_dense = Eigen::MatrixXd(m.dae.a_nonlinear());

  // 2x2 backward-Euler solves per building, factored once per building.
  std::vector<Eigen::Matrix2d> bldg_step_inv;
  bldg_step_inv.reserve(static_cast<std::size_t>(n_b));
  for (int l = 0; l < n_b; ++l)
    bldg_step_inv.push_back(
        (Eigen::Matrix2d::Identity() - h * blocks[static_cast<std::size_t>(l)].a).inverse());

  Eigen::VectorXd x = out.x_g.col(0);
  Eigen::VectorXd xb = out.x_b.col(0);

  for (int i = 1; i <= n_inner; ++i) {
    const double tau = run.t0 + i * h;
    const int jg = (i + substeps - 1) / substeps;  // 1-based grid step
    const int block = (jg - 1) / per_tp;
    const int interval = std::min((jg - 1) / ratio, run.building_steps() - 1);

    const Eigen::VectorXd u_g = run.u_bar.col(block) + run.delta_u.col(jg - 1);
    const Eigen::VectorXd u_b = run.u_b_kw.col(interval);
    const Eigen::VectorXd w = real.grid.at(tau);

    // Newton on E(x - x_prev) - h * rhs(x) = 0.
    const Eigen::VectorXd x_prev = x;
    int newton = 0;
    for (;; ++newton) {
      if (newton >= opts.max_newton)
        throw ScenarioError(tau, "replay Newton iteration did not converge");
      const Eigen::VectorXd xdot = (x - x_prev) / h;
      const Eigen::VectorXd g =
          h * m.dae.residual(x, xdot, u_g, u_b, w, !opts.force_linear_flows);
      if (g.lpNorm<Eigen::Infinity>() <= opts.newton_tol) break;
      Eigen::MatrixXd jac = e_dense;
      if (opts.force_linear_flows) {
        jac -= h * a_lin_dense;
      } else {
        jac -= h * a_nl_dense;
        jac.block(n, 0, n, n) -= h * m.dae.phi_jacobian(x.head(n));
      }
      x -= jac.partialPivLu().solve(g);
    }
    out.worst_newton_iterations = std::max(out.worst_newton_iterations, newton);
    out.x_g.col(i) = x;

    // Continuous building ODE, backward Euler per block.
    const Eigen::VectorXd wb = stack_building_disturbance(real.bldg, tau);
    for (int l = 0; l < n_b; ++l) {
      const auto& blk = blocks[static_cast<std::size_t>(l)];
      const Eigen::Vector2d rhs =
          xb.segment<2>(2 * l) +
          h * (blk.b_u * (kKwToW * u_b(l)) + blk.b_w * wb.segment<3>(3 * l));
      xb.segment<2>(2 * l) = bldg_step_inv[static_cast<std::size_t>(l)] * rhs;
    }
    out.x_b.col(i) = xb;
  }
  return out;
}

double max_freq_deviation_hz(const ReplayResult& replay) {
  const int n = static_cast<int>(replay.x_g.rows()) / 2;
  const double w = replay.x_g.bottomRows(n).cwiseAbs().maxCoeff();
  return w / (2.0 * 3.14159265358979323846);
}

double max_zone_band_excursion_c(const ReplayResult& replay, const BoundConfig& bounds,
                                 double t0) {
  const int n_b = static_cast<int>(replay.x_b.rows()) / 2;
  double worst = 0.0;
  for (int i = 0; i < replay.x_b.cols(); ++i) {
    const auto band = bounds.zone.band_at(t0 + i * replay.h_inner);
    for (int l = 0; l < n_b; ++l) {
      const double tz = replay.x_b(2 * l + 1, i);
      worst = std::max({worst, band.first - tz, tz - band.second});
    }
  }
  return worst;
}

}  // namespace bgmpc
