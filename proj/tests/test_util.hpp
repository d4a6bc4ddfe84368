#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "bgmpc/gear.hpp"
#include "bgmpc/network.hpp"

// Shared fixtures and reference implementations for the test suites. The
// reference code here is written independently of the library paths it
// checks and should stay that way.

namespace testutil {

// Dense reference for one Gear step of E x' = A x + f: solves
// (E - h b0 A) x_k = sum_i alpha_i E x_{k-i} + h b0 f.
struct DenseGear {
  Eigen::MatrixXd e, a;
  double h = 0.0;
  bgmpc::GearScheme scheme;

  Eigen::VectorXd step(const std::vector<Eigen::VectorXd>& newest_first,
                       const Eigen::VectorXd& forcing) const {
    Eigen::MatrixXd pencil = e - h * scheme.beta0 * a;
    Eigen::VectorXd rhs = h * scheme.beta0 * forcing;
    for (int i = 1; i <= scheme.order; ++i)
      rhs += scheme.alphas[static_cast<std::size_t>(i - 1)] *
             (e * newest_first[static_cast<std::size_t>(i - 1)]);
    return pencil.fullPivLu().solve(rhs);
  }
};

// Brute-force DC power flow: solve the reduced susceptance system for the
// angles of one injection vector, then read branch flows off the angles.
inline Eigen::VectorXd dc_flows(const bgmpc::PowerNetwork& net, const Eigen::VectorXd& p) {
  const int n = net.n_buses();
  const int slack = net.slack_bus() - 1;
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n, n);
  for (const auto& br : net.branches()) {
    const int k = br.from - 1, j = br.to - 1;
    lap(k, k) += br.susceptance;
    lap(j, j) += br.susceptance;
    lap(k, j) -= br.susceptance;
    lap(j, k) -= br.susceptance;
  }
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(n);
  std::vector<int> keep;
  for (int k = 0; k < n; ++k)
    if (k != slack) keep.push_back(k);
  Eigen::MatrixXd red(n - 1, n - 1);
  Eigen::VectorXd pr(n - 1);
  for (int r = 0; r < n - 1; ++r) {
    pr(r) = p(keep[static_cast<std::size_t>(r)]);
    for (int c = 0; c < n - 1; ++c)
      red(r, c) = lap(keep[static_cast<std::size_t>(r)], keep[static_cast<std::size_t>(c)]);
  }
  Eigen::VectorXd tr = red.fullPivLu().solve(pr);
  for (int r = 0; r < n - 1; ++r) theta(keep[static_cast<std::size_t>(r)]) = tr(r);
  Eigen::VectorXd flows(net.n_branches());
  for (int r = 0; r < net.n_branches(); ++r) {
    const auto& br = net.branches()[static_cast<std::size_t>(r)];
    flows(r) = br.susceptance * (theta(br.from - 1) - theta(br.to - 1));
  }
  return flows;
}

inline std::string data_file(const std::string& name) {
  return std::string(BGMPC_DATA_DIR) + "/" + name;
}

// Two buses, one generator at bus 1, one line. If `algebraic_load_bus` the
// load bus carries no inertia/damping, making its frequency row algebraic.
inline std::string two_bus_case_text(bool algebraic_load_bus = true, double d_load = 0.0) {
  std::string dyn = "1 0.1 0.05 0\n";
  if (!algebraic_load_bus) dyn += "2 0 0 0.02\n";
  if (d_load > 0.0) dyn = "1 0.1 0.05 0\n2 0 0 " + std::to_string(d_load) + "\n";
  return "[case]\nbase_mva 100\nslack 1\n"
         "[bus]\n1 3 0\n2 1 50\n"
         "[gen]\n1 0 200 -50 50\n"
         "[gencost]\n0.02 10 0\n"
         "[branch]\n1 2 10 500\n"
         "[dynamics]\n" + dyn;
}

inline bgmpc::PowerNetwork two_bus_network(double d_load = 0.0) {
  return bgmpc::parse_case(two_bus_case_text(true, d_load));
}

}  // namespace testutil
