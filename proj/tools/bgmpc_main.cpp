// Command-line front end: run one scenario, compare the three designs,
// validate a run against the nonlinear replay, or exercise the built-in
// property checks.
//
// Exit codes: 0 ok, 1 internal error, 2 infeasible problem, 3 input error.

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "bgmpc/config.hpp"
#include "bgmpc/gear.hpp"
#include "bgmpc/harness.hpp"
#include "bgmpc/network.hpp"
#include "bgmpc/qp.hpp"
#include "bgmpc/reporting.hpp"
#include "bgmpc/rng.hpp"

using namespace bgmpc;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string case_path;
  std::string scenario = "III";
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  double noise_load = -1.0;
  double noise_model = -1.0;
  double t_final = -1.0;
  int buildings = -1;

  void add_to(CLI::App* cmd, bool with_scenario = true) {
    cmd->add_option("--config", config_path, "JSON run manifest");
    cmd->add_option("--case", case_path, "case file (overrides the manifest)");
    if (with_scenario)
      cmd->add_option("--scenario", scenario, "I, II or III")
          ->check(CLI::IsMember({"I", "II", "III"}));
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--seed", seed, "realization seed");
    cmd->add_option("--noise-load", noise_load, "relative load noise std");
    cmd->add_option("--noise-model", noise_model, "relative building-model noise std");
    cmd->add_option("--t-final", t_final, "simulated span in seconds");
    cmd->add_option("--buildings", buildings, "number of buildings");
  }

  RunManifest manifest(const CLI::App* cmd) const {
    RunManifest m;
    if (!config_path.empty()) m = RunManifest::from_json_file(config_path);
    if (!case_path.empty()) m.case_path = case_path;
    if (m.case_path.empty())
      throw std::runtime_error("no case file: pass --case or a manifest with a 'case' key");
    const auto* sopt = cmd->get_option_no_throw("--scenario");
    if (sopt && sopt->count()) m.scenario = scenario_from_string(scenario);
    if (cmd->count("--seed")) m.seed = seed;
    if (noise_load >= 0.0) m.noise.load_std = noise_load;
    if (noise_model >= 0.0) m.noise.model_std = noise_model;
    if (t_final > 0.0) m.t_final = t_final;
    if (buildings >= 0) m.n_buildings = buildings;
    return m;
  }
};

void print_breakdown(const std::string& label, const CostBreakdown& b) {
  std::printf("%-4s freq %10.4f  regulation %10.4f  dispatch %10.4f  hvac %10.4f  "
              "total_grid %10.4f  total %10.4f\n",
              label.c_str(), b.freq_cost, b.regulation_cost, b.lopf_cost, b.hvac_cost,
              b.total_grid, b.total);
}

int cmd_run(const CommonFlags& flags, const CLI::App* cmd) {
  RunManifest m = flags.manifest(cmd);
  auto models = build_models(m);
  auto cfg = scenario_config(m);
  std::printf("running scenario %s on %s: %d buses, %d generators, %d buildings, %.1f h\n",
              to_string(cfg.scenario), m.case_path.c_str(), models->net.n_buses(),
              models->net.n_generators(), models->net.n_buildings(), cfg.t_final / 3600.0);
  ScenarioRun run = run_scenario(*models, cfg);
  CostBreakdown b = cost_breakdown(run, models->costs);
  std::printf("solves: full %d, building %d, grid-only %d  (worst KKT residual %.1e)\n",
              run.stats.full_solves, run.stats.building_solves, run.stats.grid_solves,
              run.stats.worst_residual);
  std::printf("costs in k$:\n");
  print_breakdown(to_string(cfg.scenario), b);
  emit(run, b, flags.out_dir);
  std::printf("wrote %s/{costs.csv,trajectories.csv,summary.json,plot_*.csv}\n",
              flags.out_dir.c_str());
  return 0;
}

int cmd_compare(const CommonFlags& flags, const CLI::App* cmd) {
  RunManifest m = flags.manifest(cmd);
  auto models = build_models(m);
  std::vector<std::pair<std::string, CostBreakdown>> rows;
  std::printf("costs in k$:\n");
  for (Scenario s : {Scenario::I, Scenario::II, Scenario::III}) {
    RunManifest ms = m;
    ms.scenario = s;
    auto cfg = scenario_config(ms);
    ScenarioRun run = run_scenario(*models, cfg);
    CostBreakdown b = cost_breakdown(run, models->costs);
    print_breakdown(to_string(s), b);
    rows.emplace_back(to_string(s), b);
    emit(run, b,
         std::filesystem::path(flags.out_dir) / ("scenario_" + std::string(to_string(s))));
  }
  emit_comparison(rows, flags.out_dir);
  const auto& b1 = rows[0].second;
  const auto& b2 = rows[1].second;
  const auto& b3 = rows[2].second;
  std::printf("reductions: total I->III %.1f%%, total II->III %.1f%%, grid I->III %.1f%%, "
              "hvac I->II %.1f%%\n",
              100.0 * percent_reduction(b1.total, b3.total),
              100.0 * percent_reduction(b2.total, b3.total),
              100.0 * percent_reduction(b1.total_grid, b3.total_grid),
              100.0 * percent_reduction(b1.hvac_cost, b2.hvac_cost));
  std::printf("wrote %s/comparison.csv\n", flags.out_dir.c_str());
  return 0;
}

int cmd_validate(const CommonFlags& flags, const CLI::App* cmd) {
  RunManifest m = flags.manifest(cmd);
  if (flags.noise_load < 0.0) m.noise.load_std = 0.10;
  if (flags.noise_model < 0.0) m.noise.model_std = 0.10;
  auto models = build_models(m);
  auto cfg = scenario_config(m);
  // The controls come from the nominal forecast-driven run; the replay
  // perturbs reality around them.
  ScenarioConfig nominal = cfg;
  nominal.noise = {};
  ScenarioRun run = run_scenario(*models, nominal);
  auto replay = replay_nonlinear(*models, run, m.noise, cfg.seed);
  const double fdev = max_freq_deviation_hz(replay);
  const double excursion = max_zone_band_excursion_c(replay, models->bounds, run.t0);
  std::printf("nonlinear replay with %.0f%% load / %.0f%% model noise (seed %llu):\n",
              100.0 * m.noise.load_std, 100.0 * m.noise.model_std,
              static_cast<unsigned long long>(cfg.seed));
  std::printf("  max |f - 60| = %.4f Hz\n", fdev);
  std::printf("  max zone-band excursion = %.4f degC\n", excursion);
  std::printf("  worst Newton iterations per step = %d\n", replay.worst_newton_iterations);
  return 0;
}

int selftest_line(const char* name, bool ok) {
  std::printf("[%s] %s\n", ok ? "PASS" : "FAIL", name);
  return ok ? 0 : 1;
}

int cmd_selftest(const std::string& data_dir) {
  int failures = 0;

  {
    auto g2 = GearScheme::of_order(2);
    auto g3 = GearScheme::of_order(3);
    const bool ok = g2.beta0 == 2.0 / 3.0 && g2.alphas[0] == 4.0 / 3.0 &&
                    g2.alphas[1] == -1.0 / 3.0 && g3.beta0 == 6.0 / 11.0 &&
                    g3.alphas[2] == 2.0 / 11.0;
    failures += selftest_line("backward-differentiation coefficients", ok);
  }

  {
    bool ok = true;
    for (const char* name : {"case9.txt", "case14.txt", "case30.txt", "case57.txt"}) {
      auto net = parse_case_file(data_dir + "/" + name);
      Eigen::MatrixXd mat = ptdf(net);
      Rng rng(4);
      Eigen::VectorXd p(net.n_buses());
      for (int i = 0; i < p.size(); ++i) p(i) = rng.gaussian();
      p.array() -= p.mean();
      // Brute-force DC solve for the same injections.
      Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(net.n_buses(), net.n_buses());
      for (const auto& br : net.branches()) {
        lap(br.from - 1, br.from - 1) += br.susceptance;
        lap(br.to - 1, br.to - 1) += br.susceptance;
        lap(br.from - 1, br.to - 1) -= br.susceptance;
        lap(br.to - 1, br.from - 1) -= br.susceptance;
      }
      const int slack = net.slack_bus() - 1;
      Eigen::MatrixXd red = lap;
      red.row(slack).setZero();
      red.col(slack).setZero();
      red(slack, slack) = 1.0;
      Eigen::VectorXd pr = p;
      pr(slack) = 0.0;
      Eigen::VectorXd theta = red.fullPivLu().solve(pr);
      Eigen::VectorXd flows(net.n_branches());
      for (int r = 0; r < net.n_branches(); ++r) {
        const auto& br = net.branches()[static_cast<std::size_t>(r)];
        flows(r) = br.susceptance * (theta(br.from - 1) - theta(br.to - 1));
      }
      ok = ok && (mat * p - flows).lpNorm<Eigen::Infinity>() < 1e-9;
    }
    failures += selftest_line("PTDF against direct DC power flow on bundled cases", ok);
  }

  {
    // Small random strictly convex box QPs against a projected-gradient run.
    Rng rng(11);
    bool ok = true;
    for (int trial = 0; trial < 20 && ok; ++trial) {
      const int n = 2 + static_cast<int>(rng.next_u64() % 9);
      Eigen::MatrixXd mtx(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) mtx(i, j) = rng.gaussian();
      Eigen::MatrixXd h = mtx * mtx.transpose() + Eigen::MatrixXd::Identity(n, n);
      Eigen::VectorXd q(n), lo(n), hi(n);
      for (int i = 0; i < n; ++i) {
        q(i) = rng.gaussian();
        lo(i) = -1.5;
        hi(i) = 1.5;
      }
      QuadraticProgram qp(n);
      for (int i = 0; i < n; ++i) {
        qp.add_quadratic(i, i, 0.5 * h(i, i));
        for (int j = i + 1; j < n; ++j) qp.add_quadratic(i, j, h(i, j));
        qp.add_linear(i, q(i));
        qp.set_bounds(i, lo(i), hi(i));
      }
      auto sol = solve(qp);
      Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
      const double step =
          1.0 / Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h).eigenvalues().maxCoeff();
      for (int k = 0; k < 200000; ++k) {
        Eigen::VectorXd xn = (x - step * (h * x + q)).cwiseMax(lo).cwiseMin(hi);
        if ((xn - x).lpNorm<Eigen::Infinity>() < 1e-12) break;
        x = xn;
      }
      ok = sol.status == QpStatus::optimal &&
           (sol.primal - x).lpNorm<Eigen::Infinity>() < 1e-6;
    }
    failures += selftest_line("QP solver against projected gradient", ok);
  }

  {
    BuildingParams ref{1.16e-4, 1.16e-4, 6.55e-3, 1.133e9, 7.033e9, 3.0};
    auto blk = building_matrices(ref);
    Eigen::Vector3d w(35.0, 0.0, 0.0);
    Eigen::Vector2d ss = -blk.a.fullPivLu().solve(blk.b_w * w);
    const bool ok = std::abs(ss(1) - 35.0) < 1e-9 &&
                    (-blk.a.fullPivLu().solve(blk.b_u * 300e3 + blk.b_w * w))(1) < 35.0;
    failures += selftest_line("building steady state interpolates toward ambient", ok);
  }

  if (failures == 0)
    std::printf("selftest: all checks passed\n");
  else
    std::printf("selftest: %d check(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"building/grid co-optimization toolkit"};
  app.require_subcommand(1);

  CommonFlags run_flags, cmp_flags, val_flags;
  std::string data_dir = "data";

  CLI::App* run_cmd = app.add_subcommand("run", "simulate one scenario and emit results");
  run_flags.add_to(run_cmd);
  CLI::App* cmp_cmd =
      app.add_subcommand("compare", "run scenarios I, II and III side by side");
  cmp_flags.add_to(cmp_cmd, false);
  CLI::App* val_cmd = app.add_subcommand(
      "validate", "replay optimal controls through the nonlinear model under noise");
  val_flags.add_to(val_cmd);
  CLI::App* self_cmd = app.add_subcommand("selftest", "run built-in property checks");
  self_cmd->add_option("--data", data_dir, "directory with the bundled case files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 3;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(run_flags, run_cmd);
    if (cmp_cmd->parsed()) return cmd_compare(cmp_flags, cmp_cmd);
    if (val_cmd->parsed()) return cmd_validate(val_flags, val_cmd);
    if (self_cmd->parsed()) return cmd_selftest(data_dir);
  } catch (const ScenarioError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return 2;
  } catch (const CaseFormatError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 3;
  } catch (const NetworkError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 3;
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    if (what.find("manifest") != std::string::npos ||
        what.find("cannot open") != std::string::npos ||
        what.find("no case file") != std::string::npos ||
        what.find("csv") != std::string::npos) {
      std::cerr << "input error: " << what << "\n";
      return 3;
    }
    std::cerr << "error: " << what << "\n";
    return 1;
  }
  return 0;
}
