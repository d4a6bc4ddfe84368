#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "bgmpc/building.hpp"
#include "bgmpc/gear.hpp"
#include "bgmpc/grid_dae.hpp"
#include "bgmpc/network.hpp"
#include "bgmpc/qp.hpp"
#include "bgmpc/timeseries.hpp"

namespace bgmpc {

// Horizon and step sizes. h_b/h_g, T_p/h_b and T_p/h_g must all be positive
// integers.
struct HorizonConfig {
  double t_p = 900.0;
  double h_g = 10.0;
  double h_b = 300.0;
  int order = 1;

  int grid_steps() const;                 // T_p / h_g
  int building_steps() const;             // T_p / h_b
  int grid_steps_per_building() const;    // h_b / h_g
  void validate() const;
};

// Objective weights. q_diag is the diagonal of Q over [angles; frequencies]
// ($/(rad/s)^2 on frequency entries, typically zero on angles); r_diag is
// the diagonal of R ($/p.u.^2), by convention the generators' quadratic cost
// coefficients. price is the electricity price c_b in $/kWh.
struct CostConfig {
  Eigen::VectorXd q_diag;  // 2n
  Eigen::VectorXd r_diag;  // n_g
  StepSeries price;
  // Dispatch cost curve J(u) = sum c2 u^2 + c1 u + c0, copied per generator.
  Eigen::VectorXd lopf_quadratic, lopf_linear, lopf_constant;  // n_g each

  double dispatch_cost(const Eigen::VectorXd& u_bar) const;

  static CostConfig defaults(const PowerNetwork& net, double q_k, StepSeries price);
};

// Scheduled zone-temperature comfort band; the day band applies between
// day_start_s and day_end_s (seconds into a 24 h day).
struct ZoneSchedule {
  double day_start_s = 8.0 * 3600.0;
  double day_end_s = 20.0 * 3600.0;
  double day_lo_c = 21.5, day_hi_c = 23.0;
  double night_lo_c = 22.0, night_hi_c = 25.0;

  std::pair<double, double> band_at(double abs_time_s) const;
};

struct BoundConfig {
  double freq_lo_hz = 59.0, freq_hi_hz = 61.0;
  ZoneSchedule zone;
  double hvac_min_kw = 0.0, hvac_max_kw = 800.0;

  double omega_lo() const;  // rad/s deviation
  double omega_hi() const;
  void validate() const;
};

// Shared state/forecast inputs for one MPC instance starting at absolute
// time t0. History vectors are ordered most recent first:
// grid_history[j] = x_g(t0 - j h_g), bldg_history[j] = x_b(t0 - j h_b);
// `order` entries each are required.
struct MpcInputs {
  double t0 = 0.0;
  std::vector<Eigen::VectorXd> grid_history;
  std::vector<Eigen::VectorXd> bldg_history;
  const GridDisturbance* grid_forecast = nullptr;
  const std::vector<BuildingDisturbance>* bldg_forecast = nullptr;
};

// Steady-state dispatch: min J(u) over generator setpoints subject to
// generation bounds, supply-demand balance and PTDF line limits. u_b and
// w_misc are per-building kW, w_bl is per-bus p.u.
QuadraticProgram assemble_lopf(const PowerNetwork& net, const Eigen::MatrixXd& ptdf_mat,
                               const Eigen::VectorXd& u_b_kw,
                               const Eigen::VectorXd& w_misc_kw,
                               const Eigen::VectorXd& w_bl_pu);

// Building-cluster MPC: linear cost of HVAC energy over the horizon subject
// to the discretized thermal dynamics, HVAC bounds and the scheduled zone
// band.
QuadraticProgram assemble_building_mpc(const BuildingCluster& cluster,
                                       const DiscreteBuildingModel& model,
                                       const MpcInputs& in, const CostConfig& costs,
                                       const BoundConfig& bounds,
                                       const HorizonConfig& horizon);

struct GridMpcOptions {
  bool optimize_setpoint = true;
  Eigen::VectorXd fixed_setpoint;  // n_g, used when !optimize_setpoint
  bool lopf_rows = true;           // generation bounds + PTDF limits
};

// Grid-side MPC with the building loads fixed: u_b_fixed_kw is n_b x K_g,
// one column per grid step.
QuadraticProgram assemble_grid_mpc(const GridDae& dae, const DiscreteGridModel& model,
                                   const Eigen::MatrixXd& ptdf_mat,
                                   const MpcInputs& in, const Eigen::MatrixXd& u_b_fixed_kw,
                                   const CostConfig& costs, const BoundConfig& bounds,
                                   const HorizonConfig& horizon,
                                   const GridMpcOptions& opts = {});

struct JointMpcOptions {
  bool optimize_setpoint = true;
  Eigen::VectorXd fixed_setpoint;
  bool lopf_rows = true;
};

// The joint building/grid problem. Each building control variable is shared
// by all h_b/h_g grid dynamics rows inside its building interval (the
// multi-rate coupling is realized by aliasing, not by extra equality rows).
// The supply-demand balance is omitted: it is implied by the discretized
// algebraic rows.
QuadraticProgram assemble_btg_gmpc(const GridDae& dae, const DiscreteGridModel& grid_model,
                                   const BuildingCluster& cluster,
                                   const DiscreteBuildingModel& bldg_model,
                                   const Eigen::MatrixXd& ptdf_mat, const MpcInputs& in,
                                   const CostConfig& costs, const BoundConfig& bounds,
                                   const HorizonConfig& horizon,
                                   const JointMpcOptions& opts = {});

// Exact condensed form of the grid-side MPC for first-order discretization:
// the state equalities are eliminated through the precomputed impulse
// responses of the discrete pencil, leaving a small dense program over
// [u_bar?; delta_u]. Frequency bounds are dropped from the program and
// verified on the reconstructed trajectory instead; `Result::bounds_ok`
// is false when that verification fails (callers then fall back to the
// sparse formulation, which carries the bounds explicitly).
class CondensedGridMpc {
 public:
  CondensedGridMpc(const GridDae& dae, const DiscreteGridModel& model,
                   const CostConfig& costs, const BoundConfig& bounds,
                   const HorizonConfig& horizon);

  struct Result {
    QpStatus status = QpStatus::iteration_limit;
    Eigen::VectorXd u_bar;      // n_g (fixed value echoed when not optimized)
    Eigen::MatrixXd delta_u;    // n_g x K_g
    Eigen::MatrixXd x_g;        // 2n x K_g, states at steps 1..K_g
    double objective = 0.0;     // identical convention to assemble_grid_mpc
    int iterations = 0;
    double worst_residual = 0.0;
    bool bounds_ok = true;      // frequency band verified on the trajectory
    std::string message;
    Eigen::VectorXd raw_primal, raw_dual;  // warm-start handoff
  };

  Result solve(const MpcInputs& in, const Eigen::MatrixXd& u_b_fixed_kw,
               const GridMpcOptions& opts, const Eigen::VectorXd* warm_primal = nullptr,
               const Eigen::VectorXd* warm_dual = nullptr) const;

 private:
  const GridDae* dae_;
  const DiscreteGridModel* model_;
  CostConfig costs_;
  BoundConfig bounds_;
  HorizonConfig horizon_;
  int n_ = 0, n_g_ = 0, kg_ = 0;
  Eigen::MatrixXd a1_;                  // pencil^{-1} E
  Eigen::MatrixXd b_du_;                // pencil^{-1} h b0 B_ug
  Eigen::MatrixXd b_ub_;                // pencil^{-1} h b0 A_ub (per kW)
  Eigen::MatrixXd b_w_;                 // pencil^{-1} h b0 B_wg
  std::vector<Eigen::MatrixXd> imp_;    // A1^i B_du, i = 0..K_g-1
  std::vector<Eigen::MatrixXd> cum_;    // sum_{i<=k-1} imp_[i] (effect of u_bar at step k)
  Eigen::MatrixXd h_du_;                // constant Hessian block over delta_u
  Eigen::MatrixXd h_bar_du_;            // u_bar x delta_u cross block
  Eigen::MatrixXd h_bar_;               // u_bar block (from the x'Qx term)
  Eigen::MatrixXd ptdf_mat_, ptdf_pg_, ptdf_pp_;
};

// Thermostat control: switch the HVAC to u_max above setpoint + deadband,
// off below setpoint - deadband, hold the mode inside the band. Simulated
// with the same discrete building model the MPC uses.
struct BangBangOptions {
  double setpoint_c = 22.22;
  double deadband_c = 0.5;
  double u_max_kw = 800.0;
};

struct BangBangResult {
  Eigen::MatrixXd u_kw;  // n_b x n_steps; column k-1 is u(t0 + k h_b)
  Eigen::MatrixXd x;     // 2 n_b x (n_steps + 1); column 0 is the initial state
  bool within_bounds = true;     // zone band and HVAC bounds respected
  double max_violation = 0.0;    // degC or kW, whichever is worst
  std::vector<std::string> violations;
};

BangBangResult bang_bang(const BuildingCluster& cluster, const DiscreteBuildingModel& model,
                         const BangBangOptions& opts,
                         const std::vector<BuildingDisturbance>& disturbance,
                         const Eigen::VectorXd& x0, int n_steps, double t0,
                         const BoundConfig& bounds);

// Halves the deadband (up to 10 times) until the simulated trajectory
// respects the zone band; feasible == false if it never does.
struct TunedBangBang {
  BangBangResult run;
  double deadband_c = 0.0;
  bool feasible = false;
};

TunedBangBang bang_bang_tuned(const BuildingCluster& cluster,
                              const DiscreteBuildingModel& model, BangBangOptions opts,
                              const std::vector<BuildingDisturbance>& disturbance,
                              const Eigen::VectorXd& x0, int n_steps, double t0,
                              const BoundConfig& bounds);

// Stacked [T_amb, Q_sol, Q_int] per building at time t.
Eigen::VectorXd stack_building_disturbance(const std::vector<BuildingDisturbance>& d,
                                           double t_s);

}  // namespace bgmpc
