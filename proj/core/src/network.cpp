#include "bgmpc/network.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <fstream>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include "bgmpc/timeseries.hpp"

namespace bgmpc {

namespace {

bool parse_number(const std::string& tok, double& out) {
  try {
    std::size_t pos = 0;
    out = std::stod(tok, &pos);
    return pos == tok.size();
  } catch (const std::exception&) {
    return false;
  }
}

bool parse_int(const std::string& tok, int& out) {
  try {
    std::size_t pos = 0;
    out = std::stoi(tok, &pos);
    return pos == tok.size();
  } catch (const std::exception&) {
    return false;
  }
}

struct DynRow {
  double m = 0.0, d = 0.0, dp = 0.0;
};

}  // namespace

PowerNetwork::PowerNetwork(std::vector<Bus> buses, std::vector<Branch> branches,
                           std::vector<Generator> generators, double base_mva,
                           int slack_bus)
    : buses_(std::move(buses)),
      branches_(std::move(branches)),
      generators_(std::move(generators)),
      base_mva_(base_mva),
      slack_bus_(slack_bus) {
  const int n = n_buses();
  if (n == 0) throw NetworkError("network has no buses");
  if (base_mva_ <= 0.0) throw NetworkError("base_mva must be positive");

  for (int k = 0; k < n; ++k) {
    if (buses_[static_cast<std::size_t>(k)].id != k + 1)
      throw NetworkError("bus ids must be 1..n with no gaps");
  }

  std::set<int> gen_buses;
  for (const auto& g : generators_) {
    if (g.bus < 1 || g.bus > n)
      throw NetworkError("generator " + std::to_string(g.id) + " references unknown bus " +
                         std::to_string(g.bus));
    if (g.p_min > g.p_max)
      throw NetworkError("generator " + std::to_string(g.id) + ": p_min > p_max");
    if (g.cost_quadratic < 0.0)
      throw NetworkError("generator " + std::to_string(g.id) + ": negative quadratic cost");
    gen_buses.insert(g.bus);
  }

  for (auto& b : buses_) {
    const bool has_gen = gen_buses.count(b.id) > 0;
    b.is_generator_bus = has_gen;
    if (b.inertia < 0.0 || b.damping < 0.0 || b.load_damping < 0.0)
      throw NetworkError("bus " + std::to_string(b.id) + ": negative dynamics coefficient");
    if (!has_gen && (b.inertia != 0.0 || b.damping != 0.0))
      throw NetworkError("bus " + std::to_string(b.id) +
                         ": inertia/damping given but no generator attached");
    if (has_gen && b.inertia == 0.0 && b.damping == 0.0)
      throw NetworkError("bus " + std::to_string(b.id) +
                         ": generator bus needs inertia or damping in [dynamics]");
  }

  std::set<std::pair<int, int>> seen;
  for (const auto& br : branches_) {
    if (br.from < 1 || br.from > n || br.to < 1 || br.to > n)
      throw NetworkError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                         " references unknown bus");
    if (br.from == br.to)
      throw NetworkError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                         " is a self-loop");
    if (br.susceptance <= 0.0)
      throw NetworkError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                         ": susceptance must be > 0");
    if (br.flow_limit <= 0.0)
      throw NetworkError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                         ": flow limit must be > 0");
    auto key = std::minmax(br.from, br.to);
    if (!seen.insert(key).second)
      throw NetworkError("duplicate branch between buses " + std::to_string(key.first) +
                         " and " + std::to_string(key.second));
  }

  // Connectivity.
  if (n > 1) {
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
    for (const auto& br : branches_) {
      adj[static_cast<std::size_t>(br.from - 1)].push_back(br.to - 1);
      adj[static_cast<std::size_t>(br.to - 1)].push_back(br.from - 1);
    }
    std::vector<bool> visited(static_cast<std::size_t>(n), false);
    std::queue<int> q;
    q.push(0);
    visited[0] = true;
    int reached = 1;
    while (!q.empty()) {
      int v = q.front();
      q.pop();
      for (int w : adj[static_cast<std::size_t>(v)]) {
        if (!visited[static_cast<std::size_t>(w)]) {
          visited[static_cast<std::size_t>(w)] = true;
          ++reached;
          q.push(w);
        }
      }
    }
    if (reached != n) throw NetworkError("network graph is disconnected");
  }

  if (slack_bus_ < 1 || slack_bus_ > n)
    throw NetworkError("slack bus " + std::to_string(slack_bus_) + " does not exist");

  gamma_.resize(n, n_generators());
  std::vector<Eigen::Triplet<double>> trips;
  for (int m = 0; m < n_generators(); ++m)
    trips.emplace_back(generators_[static_cast<std::size_t>(m)].bus - 1, m, 1.0);
  gamma_.setFromTriplets(trips.begin(), trips.end());

  pi_.resize(n, 0);
}

std::vector<int> PowerNetwork::load_buses() const {
  std::vector<int> out;
  for (const auto& b : buses_)
    if (!b.is_generator_bus) out.push_back(b.id);
  return out;
}

PowerNetwork parse_case(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::string section;

  double base_mva = 100.0;
  int slack = 0;  // 0 = unset
  std::vector<Bus> buses;
  std::vector<Generator> gens;
  std::vector<Branch> branches;
  std::vector<std::array<double, 3>> gencost;
  std::map<int, DynRow> dynamics;

  while (std::getline(in, line)) {
    ++lineno;
    auto tok = csv::split_row(line);
    if (tok.empty()) continue;

    if (tok[0].front() == '[') {
      if (tok[0].back() != ']')
        throw CaseFormatError(lineno, "malformed section header " + tok[0]);
      section = tok[0].substr(1, tok[0].size() - 2);
      static const std::set<std::string> known = {"case", "bus",     "gen",
                                                  "branch", "gencost", "dynamics"};
      if (!known.count(section))
        throw CaseFormatError(lineno, "unknown section [" + section + "]");
      continue;
    }
    if (section.empty()) throw CaseFormatError(lineno, "data before any section header");

    if (section == "case") {
      if (tok.size() != 2) throw CaseFormatError(lineno, "expected 'key value'");
      if (tok[0] == "base_mva") {
        if (!parse_number(tok[1], base_mva) || base_mva <= 0.0)
          throw CaseFormatError(lineno, "bad base_mva");
      } else if (tok[0] == "slack") {
        if (!parse_int(tok[1], slack)) throw CaseFormatError(lineno, "bad slack bus id");
      } else {
        throw CaseFormatError(lineno, "unknown [case] key '" + tok[0] + "'");
      }
    } else if (section == "bus") {
      if (tok.size() != 3) throw CaseFormatError(lineno, "[bus] row needs: id type Pd_MW");
      Bus b;
      int type = 0;
      double pd = 0.0;
      if (!parse_int(tok[0], b.id) || !parse_int(tok[1], type) || !parse_number(tok[2], pd))
        throw CaseFormatError(lineno, "bad [bus] row");
      if (type < 1 || type > 3) throw CaseFormatError(lineno, "bus type must be 1, 2 or 3");
      b.base_load_mw = pd;
      if (type == 3 && slack == 0) slack = b.id;
      buses.push_back(b);
    } else if (section == "gen") {
      if (tok.size() != 5)
        throw CaseFormatError(lineno, "[gen] row needs: bus pmin_MW pmax_MW dmin_MW dmax_MW");
      Generator g;
      g.id = static_cast<int>(gens.size()) + 1;
      double pmin = 0, pmax = 0, dmin = 0, dmax = 0;
      if (!parse_int(tok[0], g.bus) || !parse_number(tok[1], pmin) ||
          !parse_number(tok[2], pmax) || !parse_number(tok[3], dmin) ||
          !parse_number(tok[4], dmax))
        throw CaseFormatError(lineno, "bad [gen] row");
      g.p_min = pmin;  // MW here; converted to p.u. below
      g.p_max = pmax;
      g.delta_min = dmin;
      g.delta_max = dmax;
      gens.push_back(g);
    } else if (section == "gencost") {
      if (tok.size() != 3)
        throw CaseFormatError(lineno, "[gencost] row needs: c2_$/MW^2 c1_$/MW c0_$");
      std::array<double, 3> c{};
      if (!parse_number(tok[0], c[0]) || !parse_number(tok[1], c[1]) ||
          !parse_number(tok[2], c[2]))
        throw CaseFormatError(lineno, "bad [gencost] row");
      gencost.push_back(c);
    } else if (section == "branch") {
      if (tok.size() != 4)
        throw CaseFormatError(lineno, "[branch] row needs: from to b_pu fmax_MW");
      Branch br;
      if (!parse_int(tok[0], br.from) || !parse_int(tok[1], br.to) ||
          !parse_number(tok[2], br.susceptance) || !parse_number(tok[3], br.flow_limit))
        throw CaseFormatError(lineno, "bad [branch] row");
      branches.push_back(br);
    } else if (section == "dynamics") {
      if (tok.size() != 4)
        throw CaseFormatError(lineno, "[dynamics] row needs: bus M D Dload");
      int bus = 0;
      DynRow d;
      if (!parse_int(tok[0], bus) || !parse_number(tok[1], d.m) ||
          !parse_number(tok[2], d.d) || !parse_number(tok[3], d.dp))
        throw CaseFormatError(lineno, "bad [dynamics] row");
      dynamics[bus] = d;
    }
  }

  if (buses.empty()) throw NetworkError("case has no [bus] section");
  if (!gencost.empty() && gencost.size() != gens.size())
    throw NetworkError("[gencost] rows must match [gen] rows");

  // MW -> p.u., and cost coefficients from the MW basis to the p.u. basis.
  for (std::size_t i = 0; i < gens.size(); ++i) {
    gens[i].p_min /= base_mva;
    gens[i].p_max /= base_mva;
    gens[i].delta_min /= base_mva;
    gens[i].delta_max /= base_mva;
    if (!gencost.empty()) {
      gens[i].cost_quadratic = gencost[i][0] * base_mva * base_mva;
      gens[i].cost_linear = gencost[i][1] * base_mva;
      gens[i].cost_constant = gencost[i][2];
    }
  }
  for (auto& br : branches) br.flow_limit /= base_mva;

  for (auto& b : buses) {
    auto it = dynamics.find(b.id);
    if (it != dynamics.end()) {
      b.inertia = it->second.m;
      b.damping = it->second.d;
      b.load_damping = it->second.dp;
    }
  }

  if (slack == 0) {
    // Default: first generator bus.
    if (!gens.empty()) slack = gens.front().bus;
    else slack = 1;
  }

  return PowerNetwork(std::move(buses), std::move(branches), std::move(gens), base_mva, slack);
}

PowerNetwork parse_case_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NetworkError("cannot open case file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_case(ss.str());
}

std::string serialize_case(const PowerNetwork& net) {
  std::ostringstream out;
  out.precision(17);
  out << "[case]\n";
  out << "base_mva " << net.base_mva() << "\n";
  out << "slack " << net.slack_bus() << "\n\n";

  out << "[bus]\n# id type Pd_MW\n";
  for (const auto& b : net.buses()) {
    int type = b.is_generator_bus ? (b.id == net.slack_bus() ? 3 : 2) : 1;
    // The slack marker is redundant with the [case] key but keeps the file
    // readable on its own.
    out << b.id << " " << type << " " << b.base_load_mw << "\n";
  }

  out << "\n[gen]\n# bus pmin_MW pmax_MW dmin_MW dmax_MW\n";
  for (const auto& g : net.generators())
    out << g.bus << " " << g.p_min * net.base_mva() << " " << g.p_max * net.base_mva() << " "
        << g.delta_min * net.base_mva() << " " << g.delta_max * net.base_mva() << "\n";

  out << "\n[gencost]\n# c2_$/MW^2 c1_$/MW c0_$\n";
  const double b2 = net.base_mva() * net.base_mva();
  for (const auto& g : net.generators())
    out << g.cost_quadratic / b2 << " " << g.cost_linear / net.base_mva() << " "
        << g.cost_constant << "\n";

  out << "\n[branch]\n# from to b_pu fmax_MW\n";
  for (const auto& br : net.branches())
    out << br.from << " " << br.to << " " << br.susceptance << " "
        << br.flow_limit * net.base_mva() << "\n";

  out << "\n[dynamics]\n# bus M_pu_s2 D_pu_per_radps Dload_pu_per_radps\n";
  for (const auto& b : net.buses())
    if (b.inertia != 0.0 || b.damping != 0.0 || b.load_damping != 0.0)
      out << b.id << " " << b.inertia << " " << b.damping << " " << b.load_damping << "\n";

  return out.str();
}

PowerNetwork attach_buildings(PowerNetwork net,
                              const std::vector<std::pair<int, int>>& assignment) {
  const int n = net.n_buses();
  const int n_b = static_cast<int>(assignment.size());

  std::vector<int> bus_of(static_cast<std::size_t>(n_b), 0);
  for (const auto& [bldg, bus] : assignment) {
    if (bldg < 1 || bldg > n_b)
      throw NetworkError("building id " + std::to_string(bldg) + " outside 1.." +
                         std::to_string(n_b));
    if (bus < 1 || bus > n)
      throw NetworkError("building " + std::to_string(bldg) + " assigned to unknown bus " +
                         std::to_string(bus));
    if (bus_of[static_cast<std::size_t>(bldg - 1)] != 0)
      throw NetworkError("building " + std::to_string(bldg) + " assigned twice");
    bus_of[static_cast<std::size_t>(bldg - 1)] = bus;
  }

  net.building_bus_ = bus_of;
  net.pi_.resize(n, n_b);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(n_b));
  for (int l = 0; l < n_b; ++l)
    trips.emplace_back(bus_of[static_cast<std::size_t>(l)] - 1, l, 1.0);
  net.pi_.setFromTriplets(trips.begin(), trips.end());
  return net;
}

PowerNetwork attach_buildings_round_robin(PowerNetwork net, int n_b, int first_offset) {
  std::vector<int> hosts = net.load_buses();
  if (hosts.empty())
    for (const auto& b : net.buses()) hosts.push_back(b.id);
  std::vector<std::pair<int, int>> assignment;
  assignment.reserve(static_cast<std::size_t>(n_b));
  for (int l = 1; l <= n_b; ++l) {
    const auto idx = static_cast<std::size_t>((l - 1 + first_offset) % hosts.size());
    assignment.emplace_back(l, hosts[idx]);
  }
  return attach_buildings(std::move(net), assignment);
}

Eigen::MatrixXd ptdf(const PowerNetwork& net) {
  const int n = net.n_buses();
  const int n_l = net.n_branches();
  const int slack = net.slack_bus() - 1;

  // Weighted graph Laplacian of the branch susceptances.
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n, n);
  for (const auto& br : net.branches()) {
    const int k = br.from - 1, j = br.to - 1;
    lap(k, k) += br.susceptance;
    lap(j, j) += br.susceptance;
    lap(k, j) -= br.susceptance;
    lap(j, k) -= br.susceptance;
  }

  // Remove the slack row/column and invert the remainder.
  Eigen::MatrixXd reduced(n - 1, n - 1);
  std::vector<int> keep;
  keep.reserve(static_cast<std::size_t>(n - 1));
  for (int k = 0; k < n; ++k)
    if (k != slack) keep.push_back(k);
  for (int r = 0; r < n - 1; ++r)
    for (int c = 0; c < n - 1; ++c)
      reduced(r, c) = lap(keep[static_cast<std::size_t>(r)], keep[static_cast<std::size_t>(c)]);

  Eigen::LLT<Eigen::MatrixXd> llt(reduced);
  if (llt.info() != Eigen::Success)
    throw NetworkError("reduced susceptance matrix is singular (disconnected network?)");

  // Angles per unit injection: theta = X p with the slack row/column zero.
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(n - 1, n - 1));
  for (int r = 0; r < n - 1; ++r)
    for (int c = 0; c < n - 1; ++c)
      x(keep[static_cast<std::size_t>(r)], keep[static_cast<std::size_t>(c)]) = inv(r, c);

  Eigen::MatrixXd out(n_l, n);
  for (int r = 0; r < n_l; ++r) {
    const auto& br = net.branches()[static_cast<std::size_t>(r)];
    out.row(r) = br.susceptance * (x.row(br.from - 1) - x.row(br.to - 1));
  }
  return out;
}

}  // namespace bgmpc
