#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <memory>

#include "bgmpc/harness.hpp"
#include "test_util.hpp"

using namespace bgmpc;

namespace {

const BuildingParams kReference{1.16e-4, 1.16e-4, 6.55e-3, 1.133e9, 7.033e9, 3.0};

// Small self-contained bundle on the two-bus network.
std::unique_ptr<SimModels> small_models_on(const std::string& case_text, int n_b,
                                           HorizonConfig hz, double bl_pu = 0.3,
                                           double misc_kw = 30.0, double t_amb = 33.0,
                                           double q_int = 2.5e5, double price = 0.1) {
  auto net = attach_buildings_round_robin(parse_case(case_text), n_b);
  auto cluster = sample_cluster(kReference, n_b, 0.05, 3);

  GridDisturbance gf;
  for (int i = 0; i < net.n_buses(); ++i)
    gf.base_load_pu.push_back(StepSeries::constant(i == 1 ? bl_pu : 0.0));
  for (int i = 0; i < n_b; ++i) gf.misc_load_kw.push_back(StepSeries::constant(misc_kw));
  std::vector<BuildingDisturbance> bf;
  for (int i = 0; i < n_b; ++i)
    bf.push_back({StepSeries::constant(t_amb), StepSeries::constant(1e5),
                  StepSeries::constant(q_int)});

  CostConfig costs = CostConfig::defaults(net, 50000.0, StepSeries::constant(price));
  BoundConfig bounds;
  BangBangOptions bang;
  bang.setpoint_c = 22.25;

  Eigen::VectorXd x_g0 = Eigen::VectorXd::Zero(2 * net.n_buses());
  Eigen::VectorXd x_b0(2 * n_b);
  for (int l = 0; l < n_b; ++l) {
    x_b0(2 * l) = 27.0;
    x_b0(2 * l + 1) = 22.25;
  }
  return std::make_unique<SimModels>(std::move(net), std::move(cluster), hz, std::move(costs),
                                     bounds, bang, std::move(gf), std::move(bf),
                                     std::move(x_g0), std::move(x_b0));
}

std::unique_ptr<SimModels> small_models(int n_b, HorizonConfig hz, double bl_pu = 0.3,
                                        double misc_kw = 30.0, double t_amb = 33.0,
                                        double q_int = 2.5e5, double price = 0.1) {
  return small_models_on(testutil::two_bus_case_text(), n_b, hz, bl_pu, misc_kw, t_amb,
                         q_int, price);
}

ScenarioConfig config_for(Scenario s, double t_final, std::uint64_t seed = 1) {
  ScenarioConfig cfg;
  cfg.scenario = s;
  cfg.t_final = t_final;
  cfg.t0 = 12.0 * 3600.0;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("branch counter walks the schedule exactly") {
  // T_final = T_p = 900, h_b = 300, h_g = 10: one full solve, two building
  // solves, 87 grid-only solves.
  auto m = small_models(2, {900.0, 10.0, 300.0, 1});
  auto run = run_algorithm1(*m, config_for(Scenario::III, 900.0));
  CHECK(run.stats.full_solves == 1);
  CHECK(run.stats.building_solves == 2);
  CHECK(run.stats.grid_solves == 87);
  // Schedule exhaustiveness: every grid instant is handled by exactly one
  // branch.
  CHECK(run.stats.full_solves + run.stats.building_solves + run.stats.grid_solves == 90);
  CHECK(run.grid_steps() == 90);
  CHECK(run.building_steps() == 3);
  CHECK(run.u_bar.cols() == 1);
}

TEST_CASE("closed-loop states satisfy the discretized dynamics applied step by step") {
  auto m = small_models(2, {300.0, 10.0, 100.0, 1});
  auto run = run_algorithm1(*m, config_for(Scenario::III, 600.0));

  const int per_tp = m->horizon.grid_steps();
  const double hb0 = m->horizon.h_g * m->grid_model.scheme().beta0;
  for (int j = 0; j < run.grid_steps(); ++j) {
    const Eigen::VectorXd x_prev = run.x_g.col(j);
    const Eigen::VectorXd x_next = run.x_g.col(j + 1);
    const Eigen::VectorXd u_g = run.u_bar.col(j / per_tp) + run.delta_u.col(j);
    const Eigen::VectorXd u_b = run.u_b_kw.col(j / m->horizon.grid_steps_per_building());
    const Eigen::VectorXd w = run.w_g_realized.col(j);
    Eigen::VectorXd residual = m->grid_model.pencil() * x_next -
                               m->dae.e() * x_prev -
                               hb0 * (m->dae.a_ub() * u_b + m->dae.b_ug() * u_g +
                                      m->dae.b_wg() * w);
    CHECK(residual.lpNorm<Eigen::Infinity>() <= 1e-7);
  }
}

TEST_CASE("scenario I fixes thermostat loads before any grid solve") {
  auto m = small_models(3, {300.0, 10.0, 100.0, 1});
  auto run = run_scenario(*m, config_for(Scenario::I, 600.0));
  for (int g = 0; g < run.building_steps(); ++g)
    for (int l = 0; l < 3; ++l) {
      const double u = run.u_b_kw(l, g);
      CHECK((u == 0.0 || u == m->bang.u_max_kw));
    }
  CHECK(run.stats.building_solves == 0);
}

TEST_CASE("identical seeds give identical realizations across scenarios") {
  auto m = small_models(2, {300.0, 10.0, 100.0, 1});
  ScenarioConfig c1 = config_for(Scenario::I, 600.0, 42);
  c1.noise.load_std = 0.1;
  ScenarioConfig c3 = config_for(Scenario::III, 600.0, 42);
  c3.noise.load_std = 0.1;
  auto r1 = run_scenario(*m, c1);
  auto r3 = run_scenario(*m, c3);
  CHECK((r1.w_g_realized - r3.w_g_realized).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((r1.w_b_realized - r3.w_b_realized).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("zero weights and prices collapse every total to the dispatch cost") {
  auto m = small_models(2, {300.0, 10.0, 100.0, 1});
  m->costs.q_diag.setZero();
  m->costs.r_diag.setZero();
  m->costs.price = StepSeries::constant(0.0);
  // A cost-free controller is indifferent among feasible plans, so nothing
  // steers the loop away from future dead ends; open the bands wide to keep
  // every inner problem trivially feasible.
  m->bounds.freq_lo_hz = 0.0;
  m->bounds.freq_hi_hz = 120.0;
  m->bounds.zone.day_lo_c = m->bounds.zone.night_lo_c = 0.0;
  m->bounds.zone.day_hi_c = m->bounds.zone.night_hi_c = 50.0;
  for (Scenario s : {Scenario::I, Scenario::II, Scenario::III}) {
    ScenarioConfig cfg = config_for(s, 300.0);
    // The cost identities below hold at any solver accuracy.
    cfg.qp_tol.eps_abs = 1e-6;
    auto run = run_scenario(*m, cfg);
    CHECK(run.freq_cost == 0.0);
    CHECK(run.regulation_cost == 0.0);
    CHECK(run.hvac_cost == 0.0);
    CHECK(run.total() == run.lopf_cost);
  }
}

TEST_CASE("stationary instance repeats its block behavior") {
  // Constant disturbances and prices: after the first block's transient the
  // controller settles into a repeating pattern.
  auto m = small_models(2, {300.0, 10.0, 100.0, 1});
  auto run = run_algorithm1(*m, config_for(Scenario::III, 1200.0));
  REQUIRE(run.u_bar.cols() == 4);
  CHECK((run.u_bar.col(2) - run.u_bar.col(3)).lpNorm<Eigen::Infinity>() < 1e-4);
  // Applied building controls repeat across the last two blocks.
  const int kb = m->horizon.building_steps();
  Eigen::MatrixXd third = run.u_b_kw.middleCols(2 * kb, kb);
  Eigen::MatrixXd fourth = run.u_b_kw.middleCols(3 * kb, kb);
  CHECK((third - fourth).lpNorm<Eigen::Infinity>() < 1e-2);  // kW
}

TEST_CASE("scenario totals are ordered III <= II <= I on a representative instance") {
  auto m = small_models(4, {300.0, 10.0, 100.0, 1}, 0.3, 30.0, 34.0, 3e5);
  double totals[3] = {0, 0, 0};
  int i = 0;
  for (Scenario s : {Scenario::I, Scenario::II, Scenario::III})
    totals[i++] = run_scenario(*m, config_for(s, 900.0)).total();
  CHECK(totals[2] <= totals[1] * (1.0 + 1e-6));
  CHECK(totals[1] <= totals[0] * (1.0 + 1e-6));
}

TEST_CASE("aborts carry the instant and constraint of an infeasible solve") {
  auto m = small_models(1, {300.0, 10.0, 100.0, 1}, 0.3, 30.0, 45.0, 3e6);
  m->bounds.hvac_max_kw = 1.0;  // cannot hold the zone band
  m->x_b0(1) = 23.0;
  CHECK_THROWS_AS(run_algorithm1(*m, config_for(Scenario::III, 300.0)), ScenarioError);
}

// ---------------------------------------------------------------------------
// Nonlinear replay

TEST_CASE("replay with forced linear flows at the grid step reproduces the run") {
  auto m = small_models(2, {300.0, 10.0, 100.0, 1});
  auto run = run_algorithm1(*m, config_for(Scenario::III, 600.0));
  ReplayOptions opts;
  opts.inner_substeps = 1;
  opts.force_linear_flows = true;
  auto replay = replay_nonlinear(*m, run, {}, 7, opts);
  // Same integrator, same step: trajectories coincide to Newton tolerance.
  for (int j = 0; j <= run.grid_steps(); ++j)
    CHECK((replay.x_g.col(j) - run.x_g.col(j)).lpNorm<Eigen::Infinity>() < 1e-7);
}

TEST_CASE("gear-vs-replay gap shrinks linearly with the grid step") {
  // Rate check on an all-inertia network: a descriptor start off the
  // algebraic manifold produces an O(1/h) first-interval impulse that
  // swamps the integrator error being measured here.
  const std::string ode_case =
      "[case]\nbase_mva 100\nslack 1\n[bus]\n1 3 0\n2 2 50\n"
      "[gen]\n1 0 200 -50 50\n2 0 200 -50 50\n[gencost]\n0.02 10 0\n0.03 12 0\n"
      "[branch]\n1 2 10 500\n[dynamics]\n1 0.1 0.05 0\n2 0.08 0.04 0\n";
  // The electromechanical mode of this system has a period of about half a
  // second; the steps must resolve it or both integrators merely filter it.
  double prev_gap = -1.0;
  for (double h_g : {0.1, 0.05, 0.025}) {
    auto m = small_models_on(ode_case, 1, {3.0, h_g, 1.0, 1});
    auto run = run_algorithm1(*m, config_for(Scenario::III, 3.0));
    ReplayOptions opts;
    opts.inner_substeps = 20;
    opts.force_linear_flows = true;
    auto replay = replay_nonlinear(*m, run, {}, 7, opts);
    const int sub = 20;
    double gap = 0.0;
    for (int j = 1; j <= run.grid_steps(); ++j)
      gap = std::max(gap,
                     (replay.x_g.col(j * sub) - run.x_g.col(j)).lpNorm<Eigen::Infinity>());
    if (prev_gap > 0.0) {
      CHECK(gap < prev_gap);
      CHECK(prev_gap / gap == doctest::Approx(2.0).epsilon(0.5));
    }
    prev_gap = gap;
  }
}

TEST_CASE("equilibrium start with zero inputs stays put in the replay") {
  auto m = small_models(1, {300.0, 10.0, 100.0, 1}, 0.0, 0.0, 22.25, 0.0, 10.0);
  // Zero solar too, and start the buildings at ambient equilibrium.
  for (auto& d : m->bldg_forecast) d.q_sol_w = StepSeries::constant(0.0);
  m->grid_forecast.misc_load_kw[0] = StepSeries::constant(0.0);
  m->x_b0.setConstant(22.25);
  auto run = run_algorithm1(*m, config_for(Scenario::III, 300.0));
  auto replay = replay_nonlinear(*m, run, {}, 3);
  for (int i = 0; i <= 10; ++i) {
    CHECK(replay.x_g.col(i).lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK((replay.x_b.col(i).array() - 22.25).abs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("replay under the same seed is bit-identical") {
  auto m = small_models(2, {300.0, 10.0, 100.0, 1});
  auto run = run_algorithm1(*m, config_for(Scenario::III, 300.0));
  NoiseConfig noise{0.1, 0.1};
  auto a = replay_nonlinear(*m, run, noise, 99);
  auto b = replay_nonlinear(*m, run, noise, 99);
  CHECK((a.x_g - b.x_g).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((a.x_b - b.x_b).lpNorm<Eigen::Infinity>() == 0.0);
  auto c = replay_nonlinear(*m, run, noise, 100);
  CHECK((a.x_g - c.x_g).lpNorm<Eigen::Infinity>() > 0.0);
}

TEST_CASE("moderate noise keeps the replay near the nominal bands") {
  auto m = small_models(2, {300.0, 10.0, 100.0, 1});
  auto run = run_algorithm1(*m, config_for(Scenario::III, 600.0));
  NoiseConfig noise{0.1, 0.1};
  auto replay = replay_nonlinear(*m, run, noise, 5);
  CHECK(max_freq_deviation_hz(replay) <= 1.0);
  CHECK(max_zone_band_excursion_c(replay, m->bounds, run.t0) <= 2.0);
}

TEST_CASE("scenario config validation") {
  HorizonConfig hz{300.0, 10.0, 100.0, 1};
  ScenarioConfig cfg = config_for(Scenario::III, 450.0);
  CHECK_THROWS_AS(cfg.validate(hz), std::invalid_argument);
  cfg.t_final = 600.0;
  cfg.noise.load_std = -0.1;
  CHECK_THROWS_AS(cfg.validate(hz), std::invalid_argument);
  cfg.noise.load_std = 0.0;
  cfg.validate(hz);
}
