#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "bgmpc/reporting.hpp"
#include "bgmpc/timeseries.hpp"

using namespace bgmpc;

namespace {

// Hand-built run with known trajectories.
ScenarioRun synthetic_run(int n, int n_g, int n_b, int blocks) {
  ScenarioRun run;
  run.scenario = Scenario::III;
  run.t0 = 0.0;
  run.horizon = HorizonConfig{900.0, 10.0, 300.0, 1};
  run.t_final = blocks * run.horizon.t_p;
  const int ng_steps = blocks * run.horizon.grid_steps();
  const int nb_steps = blocks * run.horizon.building_steps();
  run.x_g = Eigen::MatrixXd::Zero(2 * n, ng_steps + 1);
  run.x_b = Eigen::MatrixXd::Constant(2 * n_b, nb_steps + 1, 22.0);
  run.u_bar = Eigen::MatrixXd::Zero(n_g, blocks);
  run.delta_u = Eigen::MatrixXd::Zero(n_g, ng_steps);
  run.u_b_kw = Eigen::MatrixXd::Zero(n_b, nb_steps);
  run.w_g_realized = Eigen::MatrixXd::Zero(n + n_b, ng_steps);
  run.w_b_realized = Eigen::MatrixXd::Zero(3 * n_b, nb_steps);
  return run;
}

CostConfig unit_costs(int n, int n_g) {
  CostConfig c;
  c.q_diag = Eigen::VectorXd::Ones(2 * n);
  c.r_diag = Eigen::VectorXd::Ones(n_g);
  c.lopf_quadratic = Eigen::VectorXd::Zero(n_g);
  c.lopf_linear = Eigen::VectorXd::Zero(n_g);
  c.lopf_constant = Eigen::VectorXd::Zero(n_g);
  c.price = StepSeries::constant(0.0);
  return c;
}

}  // namespace

TEST_CASE("all-zero trajectories give an all-zero breakdown") {
  auto run = synthetic_run(1, 1, 1, 1);
  run.x_b.setZero();
  auto b = cost_breakdown(run, unit_costs(1, 1));
  CHECK(b.freq_cost == 0.0);
  CHECK(b.regulation_cost == 0.0);
  CHECK(b.lopf_cost == 0.0);
  CHECK(b.hvac_cost == 0.0);
  CHECK(b.total == 0.0);
}

TEST_CASE("unit frequency deviation for one block costs exactly one") {
  // Q = I, single bus, omega = 1 rad/s at every step of one block:
  // (h_g/T_p) * (T_p/h_g) * 1 = 1 dollar, i.e. 1e-3 k$.
  auto run = synthetic_run(1, 1, 1, 1);
  run.x_g.row(1).setOnes();
  run.x_g(1, 0) = 0.0;  // the initial state is not part of the sum
  auto b = cost_breakdown(run, unit_costs(1, 1));
  CHECK(b.freq_cost == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(b.total_grid == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(b.total == doctest::Approx(1e-3).epsilon(1e-12));
}

TEST_CASE("breakdown parts always sum to the totals") {
  auto run = synthetic_run(2, 2, 3, 2);
  run.x_g.setConstant(0.01);
  run.delta_u.setConstant(0.05);
  run.u_bar.setConstant(0.7);
  run.u_b_kw.setConstant(120.0);
  CostConfig costs = unit_costs(2, 2);
  costs.lopf_quadratic.setConstant(100.0);
  costs.lopf_linear.setConstant(10.0);
  costs.price = StepSeries::constant(0.1);
  auto b = cost_breakdown(run, costs);
  CHECK(b.total_grid ==
        doctest::Approx(b.freq_cost + b.regulation_cost + b.lopf_cost).epsilon(1e-12));
  CHECK(b.total == doctest::Approx(b.total_grid + b.hvac_cost).epsilon(1e-12));
  CHECK(b.freq_cost > 0.0);
  CHECK(b.hvac_cost > 0.0);
}

TEST_CASE("percent reduction") {
  CHECK(percent_reduction(100.0, 80.0) == doctest::Approx(0.20));
  CHECK(percent_reduction(5.0, 5.0) == 0.0);
  // Published whole-system totals for the largest-gap case reduce by ~43.8%.
  CHECK(percent_reduction(1332.33, 748.54) == doctest::Approx(0.438).epsilon(2e-3));
  CHECK_THROWS_AS(percent_reduction(0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(percent_reduction(-2.0, 1.0), std::invalid_argument);
}

TEST_CASE("emit writes the documented files and they round-trip") {
  auto run = synthetic_run(2, 1, 2, 1);
  run.x_g.row(2).setConstant(0.02);  // omega bus 1
  run.u_b_kw.setConstant(250.0);
  run.u_bar.setConstant(0.9);
  CostConfig costs = unit_costs(2, 1);
  costs.price = StepSeries::constant(0.2);
  costs.lopf_linear.setConstant(10.0);
  auto b = cost_breakdown(run, costs);

  const auto dir = std::filesystem::temp_directory_path() / "bgmpc_emit_test";
  std::filesystem::remove_all(dir);
  emit(run, b, dir);

  for (const char* name : {"costs.csv", "trajectories.csv", "summary.json",
                           "plot_frequency.csv", "plot_temperature.csv", "plot_hvac.csv",
                           "plot_generation.csv"})
    CHECK(std::filesystem::exists(dir / name));

  // costs.csv re-parsed reproduces the breakdown.
  std::map<std::string, double> got;
  {
    std::ifstream again(dir / "costs.csv");
    std::string line;
    std::getline(again, line);  // header
    while (std::getline(again, line)) {
      auto c1 = line.find(','), c2 = line.rfind(',');
      got[line.substr(c1 + 1, c2 - c1 - 1)] = std::stod(line.substr(c2 + 1));
    }
  }
  CHECK(got.at("freq_deviation") == doctest::Approx(b.freq_cost).epsilon(1e-9));
  CHECK(got.at("dispatch") == doctest::Approx(b.lopf_cost).epsilon(1e-9));
  CHECK(got.at("hvac") == doctest::Approx(b.hvac_cost).epsilon(1e-9));
  CHECK(got.at("total") == doctest::Approx(b.total).epsilon(1e-9));

  // Envelopes keep min <= mean <= max at every time.
  std::ifstream env(dir / "plot_frequency.csv");
  std::stringstream es;
  es << env.rdbuf();
  auto ecols = csv::read_columns(es.str(), {"time_s", "min", "mean", "max"});
  REQUIRE(!ecols[0].empty());
  for (std::size_t i = 0; i < ecols[0].size(); ++i) {
    CHECK(ecols[1][i] <= ecols[2][i] + 1e-12);
    CHECK(ecols[2][i] <= ecols[3][i] + 1e-12);
  }

  // Breakdown recomputed from the emitted trajectories matches in-memory.
  std::ifstream traj(dir / "trajectories.csv");
  std::stringstream ts;
  ts << traj.rdbuf();
  double freq_cost = 0.0, hvac_cost = 0.0;
  {
    std::istringstream lines(ts.str());
    std::string line;
    std::getline(lines, line);
    while (std::getline(lines, line)) {
      std::istringstream row(line);
      std::string time_s, kind, entity, value;
      std::getline(row, time_s, ',');
      std::getline(row, kind, ',');
      std::getline(row, entity, ',');
      std::getline(row, value, ',');
      const double t = std::stod(time_s);
      const double v = std::stod(value);
      if (kind == "omega_radps" && t > run.t0)
        freq_cost += (run.horizon.h_g / run.horizon.t_p) * v * v;
      if (kind == "hvac_kw")
        hvac_cost += (run.horizon.h_b / run.horizon.t_p) * costs.price.at(t) * v;
    }
  }
  CHECK(freq_cost / 1e3 == doctest::Approx(b.freq_cost).epsilon(1e-6));
  CHECK(hvac_cost / 1e3 == doctest::Approx(b.hvac_cost).epsilon(1e-6));

  std::filesystem::remove_all(dir);
}

TEST_CASE("envelope aggregation is permutation invariant over buildings") {
  auto run = synthetic_run(1, 1, 3, 1);
  run.u_b_kw << 100, 150, 120,
                300, 250, 260,
                200, 180, 210;
  auto shuffled = run;
  shuffled.u_b_kw.row(0).swap(shuffled.u_b_kw.row(2));

  const auto d1 = std::filesystem::temp_directory_path() / "bgmpc_env_a";
  const auto d2 = std::filesystem::temp_directory_path() / "bgmpc_env_b";
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
  CostConfig costs = unit_costs(1, 1);
  emit(run, cost_breakdown(run, costs), d1);
  emit(shuffled, cost_breakdown(shuffled, costs), d2);
  std::ifstream a(d1 / "plot_hvac.csv"), bfile(d2 / "plot_hvac.csv");
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << bfile.rdbuf();
  CHECK(sa.str() == sb.str());
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}
