#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <memory>
#include <span>
#include <vector>

#include "bgmpc/building.hpp"
#include "bgmpc/grid_dae.hpp"

namespace bgmpc {

// Backward-differentiation coefficients of order s:
//   beta0 = 1 / sum_{i=1..s} 1/i,
//   alpha_i = (-1)^{i+1} beta0 sum_{j=i..s} (1/j) C(j,i).
// Computed in integer rational arithmetic, rounded once.
struct GearScheme {
  int order = 1;
  double beta0 = 1.0;
  std::vector<double> alphas;

  // Throws std::invalid_argument outside 1 <= s <= 6 (BDF is zero-unstable
  // beyond order 6).
  static GearScheme of_order(int s);
};

// One-step transition operator for the grid descriptor pencil
// (E_g - h beta0 A_g), held as a sparse LU factorization:
//   x(k) = pencil^{-1} [ sum_i alpha_i E_g x(k-i)
//                        + h beta0 (A_ub u_b + B_ug u_g + B_wg w) ].
class DiscreteGridModel {
 public:
  DiscreteGridModel(const GridDae& dae, double h_g, const GearScheme& scheme);

  // history[0] = x(k-1), history[1] = x(k-2), ...; needs scheme().order entries.
  Eigen::VectorXd step(std::span<const Eigen::VectorXd> history,
                       const Eigen::VectorXd& u_g, const Eigen::VectorXd& u_b_kw,
                       const Eigen::VectorXd& w) const;

  double h() const { return h_; }
  const GearScheme& scheme() const { return scheme_; }
  const GridDae& dae() const { return *dae_; }
  const Eigen::SparseMatrix<double>& pencil() const { return pencil_; }
  Eigen::VectorXd solve_pencil(const Eigen::VectorXd& rhs) const { return lu_->solve(rhs); }

 private:
  const GridDae* dae_;
  double h_;
  GearScheme scheme_;
  Eigen::SparseMatrix<double> pencil_;
  std::shared_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu_;
};

// Blockwise counterpart for the building cluster ODE: per-building 2x2
// pencils (I - h beta0 A_l), inverted exactly.
class DiscreteBuildingModel {
 public:
  DiscreteBuildingModel(const BuildingCluster& cluster, double h_b, const GearScheme& scheme);

  Eigen::VectorXd step(std::span<const Eigen::VectorXd> history,
                       const Eigen::VectorXd& u_kw, const Eigen::VectorXd& w) const;

  double h() const { return h_; }
  const GearScheme& scheme() const { return scheme_; }
  const BuildingCluster& cluster() const { return *cluster_; }
  // (I - h beta0 A_l) for building l, used for dynamics rows in MPC form.
  const Eigen::Matrix2d& pencil_block(int l) const {
    return pencils_.at(static_cast<std::size_t>(l));
  }

 private:
  const BuildingCluster* cluster_;
  double h_;
  GearScheme scheme_;
  std::vector<Eigen::Matrix2d> pencils_;
  std::vector<Eigen::Matrix2d> abar_;  // pencil^{-1}
};

}  // namespace bgmpc
