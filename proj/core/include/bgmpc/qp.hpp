#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace bgmpc {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Physical meaning of a decision variable, for tracing solver output back
// to quantities. `unit_scale` converts a primal value to physical units
// (e.g. HVAC variables are carried in MW inside the QP but sliced in kW).
enum class Quantity {
  setpoint,     // generator dispatch setpoint, p.u.
  regulation,   // generator setpoint deviation, p.u.
  angle,        // bus voltage angle, rad
  frequency,    // bus frequency deviation, rad/s
  hvac,         // building cooling power, kW physical
  wall_temp,    // degC
  zone_temp,    // degC
  generic
};
const char* to_string(Quantity q);

struct VarName {
  Quantity kind = Quantity::generic;
  int entity = 0;  // 1-based generator/bus/building id
  int time = 0;    // step index within the horizon
  double unit_scale = 1.0;
};

// Sparse convex QP
//   minimize    1/2 x'Hx + q'x + c
//   subject to  A_eq x = b_eq,  lo <= A_in x <= hi,  xl <= x <= xu,
// with named variables. Rows carry labels so infeasibility reports can
// point at a physical constraint.
class QuadraticProgram {
 public:
  explicit QuadraticProgram(int n_vars);

  int num_vars() const { return n_; }
  int num_equalities() const { return static_cast<int>(eq_rhs_.size()); }
  int num_inequalities() const { return static_cast<int>(in_lo_.size()); }

  // Adds coeff * x_i * x_j to the objective (i == j adds coeff * x_i^2).
  void add_quadratic(int i, int j, double coeff);
  void add_linear(int i, double coeff);
  void add_constant(double c) { constant_ += c; }

  using Row = std::vector<std::pair<int, double>>;
  int add_equality(Row row, double rhs, std::string label = {});
  int add_inequality(Row row, double lo, double hi, std::string label = {});
  // Intersects the variable's box with [lo, hi].
  void set_bounds(int var, double lo, double hi);

  void set_name(int var, VarName name);
  const VarName& name(int var) const { return names_.at(static_cast<std::size_t>(var)); }
  std::optional<int> find_variable(Quantity kind, int entity, int time) const;

  Eigen::SparseMatrix<double> hessian() const;  // symmetric, 1/2 x'Hx form
  const Eigen::VectorXd& linear() const { return q_; }
  double constant() const { return constant_; }
  Eigen::SparseMatrix<double> eq_matrix() const;
  Eigen::SparseMatrix<double> in_matrix() const;
  const Eigen::VectorXd& eq_rhs() const;
  const std::vector<double>& in_lo() const { return in_lo_; }
  const std::vector<double>& in_hi() const { return in_hi_; }
  const Eigen::VectorXd& lower_bounds() const { return xl_; }
  const Eigen::VectorXd& upper_bounds() const { return xu_; }
  const std::string& eq_label(int r) const { return eq_labels_.at(static_cast<std::size_t>(r)); }
  const std::string& in_label(int r) const { return in_labels_.at(static_cast<std::size_t>(r)); }

  double objective_value(const Eigen::VectorXd& x) const;

  // Dimension checks, bound ordering, and a PSD check of the Hessian by
  // attempted Cholesky factorization. Throws std::invalid_argument.
  void validate() const;

  // Plain-text triplet dump (docs/qp_dump_format.md).
  void dump(std::ostream& out) const;

 private:
  int n_;
  std::vector<Eigen::Triplet<double>> h_trips_;
  Eigen::VectorXd q_;
  double constant_ = 0.0;
  std::vector<Eigen::Triplet<double>> eq_trips_;
  std::vector<double> eq_rhs_;
  mutable Eigen::VectorXd eq_rhs_vec_;
  std::vector<Eigen::Triplet<double>> in_trips_;
  std::vector<double> in_lo_, in_hi_;
  Eigen::VectorXd xl_, xu_;
  std::vector<VarName> names_;
  std::vector<std::string> eq_labels_, in_labels_;
};

struct QpTolerances {
  double eps_abs = 1e-8;    // primal/dual tolerance on the scaled problem
  double eps_infeas = 1e-7; // certificate tolerance
  int max_iterations = 100000;
};

enum class QpStatus { optimal, infeasible, unbounded, iteration_limit };
const char* to_string(QpStatus s);

struct QpSolution {
  QpStatus status = QpStatus::iteration_limit;
  Eigen::VectorXd primal;
  Eigen::VectorXd dual;  // stacked [eq; ineq; box] multipliers
  double objective = 0.0;
  double primal_residual = 0.0;  // unscaled infinity norms
  double dual_residual = 0.0;
  int iterations = 0;
  std::string message;  // on infeasibility: the most-violated constraint label
};

// Deterministic operator-splitting solve with Ruiz equilibration and an
// active-set polish step. Identical inputs (including the optional primal
// and dual initial points) produce bit-identical results. The dual hint
// must match the stacked multiplier layout of QpSolution::dual.
QpSolution solve(const QuadraticProgram& qp, const QpTolerances& tol = {},
                 const Eigen::VectorXd* initial = nullptr,
                 const Eigen::VectorXd* initial_dual = nullptr);

// Extracts the physical values of named variables with time index in
// [t_first, t_last], ordered by (time, variable index). `entity` of nullopt
// selects all entities.
Eigen::VectorXd variable_slice(const QuadraticProgram& qp, const QpSolution& sol,
                               Quantity kind, std::optional<int> entity, int t_first,
                               int t_last);

}  // namespace bgmpc
