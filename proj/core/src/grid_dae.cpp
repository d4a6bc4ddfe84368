#include "bgmpc/grid_dae.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include "bgmpc/building.hpp"

namespace bgmpc {

namespace {
using Triplets = std::vector<Eigen::Triplet<double>>;
}

GridDae::GridDae(const PowerNetwork& net) : net_(net) {
  n_ = net.n_buses();
  n_b_ = net.n_buildings();
  const int n = n_;
  const double kw_to_pu = 1.0 / (kKwToW * net.base_mva());

  Triplets te;
  for (int k = 0; k < n; ++k) {
    te.emplace_back(k, k, 1.0);  // angle block
    const double m = net.buses()[static_cast<std::size_t>(k)].inertia;
    if (m != 0.0) te.emplace_back(n + k, n + k, m);
  }
  e_.resize(2 * n, 2 * n);
  e_.setFromTriplets(te.begin(), te.end());

  Triplets tl;
  for (const auto& br : net.branches()) {
    const int k = br.from - 1, j = br.to - 1;
    tl.emplace_back(k, k, br.susceptance);
    tl.emplace_back(j, j, br.susceptance);
    tl.emplace_back(k, j, -br.susceptance);
    tl.emplace_back(j, k, -br.susceptance);
  }
  laplacian_.resize(n, n);
  laplacian_.setFromTriplets(tl.begin(), tl.end());

  // Shared part of A_g: d(delta)/dt = omega rows, and -(D_k + D'_k) damping.
  Triplets ta;
  for (int k = 0; k < n; ++k) {
    ta.emplace_back(k, n + k, 1.0);
    const auto& bus = net.buses()[static_cast<std::size_t>(k)];
    const double d = bus.damping + bus.load_damping;
    if (d != 0.0) ta.emplace_back(n + k, n + k, -d);
  }
  a_nonlinear_.resize(2 * n, 2 * n);
  a_nonlinear_.setFromTriplets(ta.begin(), ta.end());

  Triplets tal = ta;
  for (int c = 0; c < laplacian_.outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(laplacian_, c); it; ++it)
      tal.emplace_back(n + static_cast<int>(it.row()), static_cast<int>(it.col()),
                       -it.value());
  a_linear_.resize(2 * n, 2 * n);
  a_linear_.setFromTriplets(tal.begin(), tal.end());

  Triplets tub;
  for (int c = 0; c < net.bldg_incidence().outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(net.bldg_incidence(), c); it; ++it)
      tub.emplace_back(n + static_cast<int>(it.row()), static_cast<int>(it.col()),
                       -kw_to_pu * it.value());
  a_ub_.resize(2 * n, n_b_);
  a_ub_.setFromTriplets(tub.begin(), tub.end());

  Triplets tug;
  for (int c = 0; c < net.gen_incidence().outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(net.gen_incidence(), c); it; ++it)
      tug.emplace_back(n + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  b_ug_.resize(2 * n, net.n_generators());
  b_ug_.setFromTriplets(tug.begin(), tug.end());

  // w = [P_BL (p.u., n); P_misc (kW, n_b)], both entering as loads.
  Triplets twg;
  for (int k = 0; k < n; ++k) twg.emplace_back(n + k, k, -1.0);
  for (int c = 0; c < net.bldg_incidence().outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(net.bldg_incidence(), c); it; ++it)
      twg.emplace_back(n + static_cast<int>(it.row()), n + static_cast<int>(it.col()),
                       -kw_to_pu * it.value());
  b_wg_.resize(2 * n, n + n_b_);
  b_wg_.setFromTriplets(twg.begin(), twg.end());
}

Eigen::VectorXd GridDae::phi(const Eigen::VectorXd& delta) const {
  if (delta.size() != n_) throw std::invalid_argument("phi: delta must have n entries");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(2 * n_);
  for (const auto& br : net_.branches()) {
    const int k = br.from - 1, j = br.to - 1;
    const double flow = br.susceptance * std::sin(delta(k) - delta(j));
    out(n_ + k) -= flow;
    out(n_ + j) += flow;
  }
  return out;
}

Eigen::MatrixXd GridDae::phi_jacobian(const Eigen::VectorXd& delta) const {
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n_, n_);
  for (const auto& br : net_.branches()) {
    const int k = br.from - 1, j = br.to - 1;
    const double g = br.susceptance * std::cos(delta(k) - delta(j));
    jac(k, k) -= g;
    jac(k, j) += g;
    jac(j, j) -= g;
    jac(j, k) += g;
  }
  return jac;
}

Eigen::VectorXd GridDae::residual(const Eigen::VectorXd& x, const Eigen::VectorXd& xdot,
                                  const Eigen::VectorXd& u_g, const Eigen::VectorXd& u_b_kw,
                                  const Eigen::VectorXd& w, bool nonlinear) const {
  if (x.size() != 2 * n_ || xdot.size() != 2 * n_)
    throw std::invalid_argument("grid residual: state dimension mismatch");
  if (u_g.size() != net_.n_generators() || u_b_kw.size() != n_b_ ||
      w.size() != n_ + n_b_)
    throw std::invalid_argument("grid residual: input dimension mismatch");

  Eigen::VectorXd rhs = a_ub_ * u_b_kw + b_ug_ * u_g + b_wg_ * w;
  if (nonlinear) {
    rhs += a_nonlinear_ * x + phi(x.head(n_));
  } else {
    rhs += a_linear_ * x;
  }
  return e_ * xdot - rhs;
}

Eigen::VectorXd GridDisturbance::at(double t_s) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(base_load_pu.size() + misc_load_kw.size()));
  Eigen::Index i = 0;
  for (const auto& s : base_load_pu) out(i++) = s.at(t_s);
  for (const auto& s : misc_load_kw) out(i++) = s.at(t_s);
  return out;
}

namespace {

// Pivots long-format rows (time, entity, value) into one series per entity.
std::vector<StepSeries> pivot_long_csv(const std::string& text, const char* entity_col,
                                       const char* value_col, int n_entities) {
  auto cols = csv::read_columns(text, {"time_s", entity_col, value_col});
  std::map<int, std::pair<std::vector<double>, std::vector<double>>> per_entity;
  for (std::size_t i = 0; i < cols[0].size(); ++i) {
    const int entity = static_cast<int>(cols[1][i]);
    if (entity < 1 || entity > n_entities)
      throw std::runtime_error(std::string("csv: ") + entity_col + " " +
                               std::to_string(entity) + " out of range 1.." +
                               std::to_string(n_entities));
    auto& [t, v] = per_entity[entity];
    t.push_back(cols[0][i]);
    v.push_back(cols[2][i]);
  }
  std::vector<StepSeries> out;
  out.reserve(static_cast<std::size_t>(n_entities));
  for (int e = 1; e <= n_entities; ++e) {
    auto it = per_entity.find(e);
    if (it == per_entity.end())
      throw std::runtime_error(std::string("csv: no rows for ") + entity_col + " " +
                               std::to_string(e));
    out.emplace_back(std::move(it->second.first), std::move(it->second.second));
  }
  return out;
}

}  // namespace

std::vector<StepSeries> read_base_load_csv(const std::string& text, int n_buses) {
  return pivot_long_csv(text, "bus", "P_BL_pu", n_buses);
}

std::vector<StepSeries> read_misc_load_csv(const std::string& text, int n_buildings) {
  return pivot_long_csv(text, "building", "P_misc_kW", n_buildings);
}

}  // namespace bgmpc
