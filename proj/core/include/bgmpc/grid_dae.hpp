#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <string>
#include <vector>

#include "bgmpc/network.hpp"
#include "bgmpc/timeseries.hpp"

namespace bgmpc {

// Descriptor-form grid dynamics E_g x' = A_g x + Phi(delta) + A_ub u_b
// + B_ug u_g + B_wg w_g, state x = [delta_1..delta_n, omega_1..omega_n]
// (rad, rad/s deviation from synchronous). Rows of E_g vanish on buses
// without inertia, making those frequency rows algebraic.
//
// Unit bridge: u_b and the misc-load half of w_g are kW and are scaled to
// p.u. inside A_ub / B_wg; everything else is p.u. on the network base.
class GridDae {
 public:
  explicit GridDae(const PowerNetwork& net);

  int n() const { return n_; }
  int n_buildings() const { return n_b_; }
  const PowerNetwork& network() const { return net_; }

  const Eigen::SparseMatrix<double>& e() const { return e_; }
  // A_g with the linearized flows (-Laplacian in the frequency block).
  const Eigen::SparseMatrix<double>& a_linear() const { return a_linear_; }
  // A_g of the nonlinear form: flows live in phi(), not here.
  const Eigen::SparseMatrix<double>& a_nonlinear() const { return a_nonlinear_; }
  const Eigen::SparseMatrix<double>& a_ub() const { return a_ub_; }
  const Eigen::SparseMatrix<double>& b_ug() const { return b_ug_; }
  const Eigen::SparseMatrix<double>& b_wg() const { return b_wg_; }

  // Weighted graph Laplacian of branch susceptances (n x n).
  const Eigen::SparseMatrix<double>& laplacian() const { return laplacian_; }

  // Sine power flows as they enter the right-hand side: zero angle block,
  // then -sum_j b_kj sin(delta_k - delta_j) per frequency row.
  Eigen::VectorXd phi(const Eigen::VectorXd& delta) const;

  // d(phi frequency block)/d(delta), n x n, for Newton iterations.
  Eigen::MatrixXd phi_jacobian(const Eigen::VectorXd& delta) const;

  // E xdot - (A x + [phi] + A_ub u_b + B_ug u_g + B_wg w); zero iff the
  // trajectory satisfies the DAE. u_b in kW, w = [P_BL p.u.; P_misc kW].
  Eigen::VectorXd residual(const Eigen::VectorXd& x, const Eigen::VectorXd& xdot,
                           const Eigen::VectorXd& u_g, const Eigen::VectorXd& u_b_kw,
                           const Eigen::VectorXd& w, bool nonlinear) const;

 private:
  PowerNetwork net_;
  int n_ = 0;
  int n_b_ = 0;
  Eigen::SparseMatrix<double> e_, a_linear_, a_nonlinear_, a_ub_, b_ug_, b_wg_, laplacian_;
};

// Uncontrollable grid-side inputs: nodal base loads (p.u.) and per-building
// miscellaneous loads (kW), each sample-and-hold. `forecast` marks the
// predicted series the controllers see, as opposed to a realized one.
struct GridDisturbance {
  std::vector<StepSeries> base_load_pu;  // one per bus
  std::vector<StepSeries> misc_load_kw;  // one per building
  bool forecast = true;

  // Stacked [P_BL_1..P_BL_n, P_misc_1..P_misc_nb] at time t.
  Eigen::VectorXd at(double t_s) const;
};

// Base-load CSV: columns time_s, bus, P_BL_pu. Misc-load CSV: columns
// time_s, building, P_misc_kW. Every entity must carry the same time grid.
std::vector<StepSeries> read_base_load_csv(const std::string& text, int n_buses);
std::vector<StepSeries> read_misc_load_csv(const std::string& text, int n_buildings);

}  // namespace bgmpc
