#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "bgmpc/timeseries.hpp"

namespace bgmpc {

// Lumped 3R-2C envelope parameters of one building.
struct BuildingParams {
  double r1 = 0.0;      // wall <-> zone resistance, degC/W
  double r2 = 0.0;      // ambient <-> wall resistance, degC/W
  double r_win = 0.0;   // ambient <-> zone (window) resistance, degC/W
  double c_wall = 0.0;  // lumped wall/roof capacity, J/degC
  double c_zone = 0.0;  // zone capacity, J/degC
  double mu_hvac = 0.0; // HVAC coefficient of performance, dimensionless

  // mu_hvac == 0 is tolerated (zero-gain HVAC); everything else must be
  // strictly positive.
  bool valid() const {
    return r1 > 0 && r2 > 0 && r_win > 0 && c_wall > 0 && c_zone > 0 && mu_hvac >= 0;
  }
};

// Continuous-time state space of one building, state [T_wall, T_zone].
// Input u is HVAC electric power in W; cooling removes heat from the zone,
// so b_u(1) = -mu/C_zone and raising u lowers T_zone. Disturbance
// w = [T_amb (degC), Q_sol (W), Q_int (W)].
struct BuildingStateSpace {
  Eigen::Matrix2d a;
  Eigen::Vector2d b_u;
  Eigen::Matrix<double, 2, 3> b_w;
};

BuildingStateSpace building_matrices(const BuildingParams& p);

// Uncontrollable building inputs as sample-and-hold series.
struct BuildingDisturbance {
  StepSeries t_amb_c;
  StepSeries q_sol_w;
  StepSeries q_int_w;

  Eigen::Vector3d at(double t_s) const {
    return {t_amb_c.at(t_s), q_sol_w.at(t_s), q_int_w.at(t_s)};
  }
};

// Reads the disturbance CSV (columns time_s, T_amb_C, Q_sol_W, Q_int_W).
BuildingDisturbance read_disturbance_csv(const std::string& text);

// A cluster of independently parameterized buildings with block-diagonal
// dynamics; blocks are stored per building and never materialized densely.
// Cluster-level HVAC inputs are in kW (the grid-facing unit), converted to W
// against the per-building matrices internally.
class BuildingCluster {
 public:
  explicit BuildingCluster(std::vector<BuildingParams> params);

  int size() const { return static_cast<int>(params_.size()); }
  const BuildingParams& params(int l) const {
    return params_.at(static_cast<std::size_t>(l));
  }
  const BuildingStateSpace& block(int l) const {
    return blocks_.at(static_cast<std::size_t>(l));
  }

  // x_b' = A_b x_b + B_ub u_b + B_wb w_b, evaluated blockwise.
  // x: 2 n_b ([T_wall, T_zone] per building), u: n_b (kW), w: 3 n_b.
  Eigen::VectorXd derivative(const Eigen::VectorXd& x, const Eigen::VectorXd& u_kw,
                             const Eigen::VectorXd& w) const;

  // Dense assemblies for small clusters (tests, replay Jacobians).
  Eigen::MatrixXd dense_a() const;
  Eigen::MatrixXd dense_b_u_kw() const;  // input in kW
  Eigen::MatrixXd dense_b_w() const;

 private:
  std::vector<BuildingParams> params_;
  std::vector<BuildingStateSpace> blocks_;
};

// Draws n_b parameter sets independently Gaussian around `reference` with
// relative standard deviation `spread`; draws below 1% of the reference are
// redrawn to keep every parameter positive. Deterministic under `seed`.
BuildingCluster sample_cluster(const BuildingParams& reference, int n_b, double spread,
                               std::uint64_t seed);

constexpr double kKwToW = 1000.0;

}  // namespace bgmpc
