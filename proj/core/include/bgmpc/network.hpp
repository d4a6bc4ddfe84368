#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bgmpc {

// Raised for malformed case text; carries the offending line number.
class CaseFormatError : public std::runtime_error {
 public:
  CaseFormatError(int line, const std::string& what)
      : std::runtime_error("case file line " + std::to_string(line) + ": " + what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Raised for semantic problems (dangling references, disconnected graph, ...).
class NetworkError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Bus {
  int id = 0;                    // 1-based, contiguous
  double inertia = 0.0;          // M_k, p.u. * s^2
  double damping = 0.0;          // D_k, p.u. / (rad/s)
  double load_damping = 0.0;     // D'_k, frequency-sensitive load, p.u. / (rad/s)
  bool is_generator_bus = false;
  double base_load_mw = 0.0;     // static Pd from the case, used to seed load profiles
};

struct Branch {
  int from = 0;
  int to = 0;
  double susceptance = 0.0;  // b_kj, p.u., > 0
  double flow_limit = 0.0;   // F_max, p.u., > 0
};

struct Generator {
  int id = 0;   // 1-based position in the [gen] table
  int bus = 0;
  double cost_quadratic = 0.0;  // $/p.u.^2
  double cost_linear = 0.0;     // $/p.u.
  double cost_constant = 0.0;   // $
  double p_min = 0.0;           // p.u.
  double p_max = 0.0;           // p.u.
  double delta_min = 0.0;       // bound on setpoint deviation, p.u.
  double delta_max = 0.0;
};

// Validated, immutable description of a building-integrated power network.
// Powers are per-unit on base_mva except where a name says otherwise.
class PowerNetwork {
 public:
  PowerNetwork(std::vector<Bus> buses, std::vector<Branch> branches,
               std::vector<Generator> generators, double base_mva, int slack_bus);

  int n_buses() const { return static_cast<int>(buses_.size()); }
  int n_branches() const { return static_cast<int>(branches_.size()); }
  int n_generators() const { return static_cast<int>(generators_.size()); }
  int n_buildings() const { return static_cast<int>(building_bus_.size()); }

  const std::vector<Bus>& buses() const { return buses_; }
  const std::vector<Branch>& branches() const { return branches_; }
  const std::vector<Generator>& generators() const { return generators_; }

  double base_mva() const { return base_mva_; }
  double omega0() const { return omega0_; }  // rad/s, 2*pi*60
  int slack_bus() const { return slack_bus_; }

  // Generator-to-node incidence, n x n_g; column m has a single 1 at the
  // generator's bus.
  const Eigen::SparseMatrix<double>& gen_incidence() const { return gamma_; }
  // Building-to-node incidence, n x n_b; empty (n x 0) until buildings are
  // attached.
  const Eigen::SparseMatrix<double>& bldg_incidence() const { return pi_; }

  // Bus hosting building l (1-based l).
  int building_bus(int l) const { return building_bus_.at(static_cast<std::size_t>(l - 1)); }

  // Buses with no generator, in ascending id order.
  std::vector<int> load_buses() const;

 private:
  friend PowerNetwork attach_buildings(PowerNetwork net,
                                       const std::vector<std::pair<int, int>>& assignment);

  std::vector<Bus> buses_;
  std::vector<Branch> branches_;
  std::vector<Generator> generators_;
  std::vector<int> building_bus_;
  Eigen::SparseMatrix<double> gamma_;
  Eigen::SparseMatrix<double> pi_;
  double base_mva_ = 100.0;
  double omega0_ = 2.0 * 3.14159265358979323846 * 60.0;
  int slack_bus_ = 1;
};

// Parses the plain-text case format (sections [case], [bus], [gen],
// [branch], [gencost], [dynamics]; see docs/case_format.md). Flow limits and
// generator powers are MW in the file and converted to p.u. on read.
PowerNetwork parse_case(const std::string& text);
PowerNetwork parse_case_file(const std::string& path);

// Inverse of parse_case up to formatting: parse_case(serialize_case(net))
// reproduces the network exactly.
std::string serialize_case(const PowerNetwork& net);

// Returns a copy with the building-to-node incidence populated.
// `assignment[i] = {building id, bus id}` must cover buildings 1..n_b exactly
// once. An empty assignment yields an n x 0 incidence.
PowerNetwork attach_buildings(PowerNetwork net,
                              const std::vector<std::pair<int, int>>& assignment);

// Deterministic round-robin of n_b buildings over the network's load buses
// (or all buses when there are no pure load buses), starting at
// `first_offset`.
PowerNetwork attach_buildings_round_robin(PowerNetwork net, int n_b, int first_offset = 0);

// Power transfer distribution factors, n_l x n: row r, column k is the flow
// on branch r (oriented from->to) per unit injection at bus k withdrawn at
// the slack bus. Standard DC construction from the reduced nodal
// susceptance matrix.
Eigen::MatrixXd ptdf(const PowerNetwork& net);

}  // namespace bgmpc
