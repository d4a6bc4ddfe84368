#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "bgmpc/building.hpp"
#include "bgmpc/controllers.hpp"
#include "bgmpc/gear.hpp"
#include "bgmpc/grid_dae.hpp"
#include "bgmpc/network.hpp"
#include "bgmpc/qp.hpp"

namespace bgmpc {

enum class Scenario { I, II, III };
const char* to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

struct NoiseConfig {
  double load_std = 0.0;   // relative std applied per disturbance sample
  double model_std = 0.0;  // relative std applied once to the building matrices
};

class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(double t, const std::string& what)
      : std::runtime_error("t=" + std::to_string(t) + "s: " + what), instant_(t) {}
  double instant() const { return instant_; }

 private:
  double instant_;
};

// Everything a run needs, with stable addresses: the discrete models keep
// pointers into the network/cluster stored here, so the bundle is pinned in
// memory (no copy, no move).
class SimModels {
 private:
  // Storage lives first so the references and models below may bind to it.
  PowerNetwork net_storage_;
  BuildingCluster cluster_storage_;

 public:
  SimModels(PowerNetwork net, BuildingCluster cluster, HorizonConfig horizon,
            CostConfig costs, BoundConfig bounds, BangBangOptions bang,
            GridDisturbance grid_forecast, std::vector<BuildingDisturbance> bldg_forecast,
            Eigen::VectorXd x_g0, Eigen::VectorXd x_b0);
  SimModels(const SimModels&) = delete;
  SimModels& operator=(const SimModels&) = delete;

  const PowerNetwork& net;
  const BuildingCluster& cluster;
  HorizonConfig horizon;
  CostConfig costs;
  BoundConfig bounds;
  BangBangOptions bang;
  GridDisturbance grid_forecast;
  std::vector<BuildingDisturbance> bldg_forecast;
  Eigen::VectorXd x_g0, x_b0;
  GridDae dae;
  DiscreteGridModel grid_model;
  DiscreteBuildingModel bldg_model;
  Eigen::MatrixXd ptdf_mat;
};

struct ScenarioConfig {
  Scenario scenario = Scenario::III;
  double t_final = 3600.0;        // must be a multiple of T_p
  double t0 = 12.0 * 3600.0;      // wall-clock start, aligns the zone schedule
  std::uint64_t seed = 1;         // realization noise seed
  NoiseConfig noise;              // 0 disables; MPC always sees the forecast
  QpTolerances qp_tol;
  bool warm_start = true;

  void validate(const HorizonConfig& horizon) const;
};

struct SolveStats {
  int full_solves = 0;
  int grid_solves = 0;
  int building_solves = 0;
  long iterations = 0;
  double worst_residual = 0.0;
};

// Closed-loop record of one scenario. Column j of x_g is the state at
// t0 + j h_g; control column j-1 is the value applied over the j-th step.
struct ScenarioRun {
  Scenario scenario = Scenario::III;
  double t0 = 0.0, t_final = 0.0;
  HorizonConfig horizon;

  Eigen::MatrixXd x_g;        // 2n x (N_g + 1)
  Eigen::MatrixXd x_b;        // 2n_b x (N_b + 1)
  Eigen::MatrixXd u_bar;      // n_g x (T_final / T_p)
  Eigen::MatrixXd delta_u;    // n_g x N_g
  Eigen::MatrixXd u_b_kw;     // n_b x N_b
  Eigen::MatrixXd w_g_realized;  // (n + n_b) x N_g
  Eigen::MatrixXd w_b_realized;  // 3n_b x N_b

  // Eq.-weighted category costs in dollars over the whole run.
  double freq_cost = 0.0;
  double regulation_cost = 0.0;
  double lopf_cost = 0.0;
  double hvac_cost = 0.0;
  double total() const { return freq_cost + regulation_cost + lopf_cost + hvac_cost; }

  SolveStats stats;

  int grid_steps() const { return static_cast<int>(delta_u.cols()); }
  int building_steps() const { return static_cast<int>(u_b_kw.cols()); }
};

// The moving-horizon schedule: a full joint solve at multiples of T_p,
// building-and-grid solves at other multiples of h_b, grid-only solves in
// between; only first control instances are applied, states advance with the
// discrete models against realized disturbances.
ScenarioRun run_algorithm1(const SimModels& models, const ScenarioConfig& config);

// Scenario I: thermostat buildings + receding-horizon grid control.
// Scenario II: standalone building MPC, then the grid loop with those loads.
// Scenario III: run_algorithm1. All share parameters and realizations.
ScenarioRun run_scenario(const SimModels& models, const ScenarioConfig& config);

struct ReplayOptions {
  double inner_substeps = 10.0;    // h_inner = h_g / inner_substeps
  bool force_linear_flows = false; // for discretization-consistency checks
  int max_newton = 25;
  double newton_tol = 1e-10;
};

struct ReplayResult {
  double h_inner = 0.0;
  Eigen::MatrixXd x_g;  // 2n x (N_inner + 1)
  Eigen::MatrixXd x_b;  // 2n_b x (N_inner + 1)
  int worst_newton_iterations = 0;
};

// Replays recorded controls through the nonlinear continuous-time DAE (sine
// flows, implicit backward-differentiation at h_g/substeps with Newton
// iteration) and the continuous building ODE, optionally with per-sample
// load noise and a one-shot perturbation of the building matrices.
ReplayResult replay_nonlinear(const SimModels& models, const ScenarioRun& run,
                              const NoiseConfig& noise, std::uint64_t seed,
                              const ReplayOptions& opts = {});

// Worst-case |f - 60| in Hz over a replayed grid trajectory.
double max_freq_deviation_hz(const ReplayResult& replay);
// Worst excursion (degC) of any zone temperature beyond the scheduled band.
double max_zone_band_excursion_c(const ReplayResult& replay, const BoundConfig& bounds,
                                 double t0);

}  // namespace bgmpc
