#include "bgmpc/controllers.hpp"

#include <cmath>
#include <stdexcept>

namespace bgmpc {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDay = 24.0 * 3600.0;

int exact_ratio(double num, double den, const char* what) {
  const double r = num / den;
  const long long k = std::llround(r);
  if (k <= 0 || std::abs(r - static_cast<double>(k)) > 1e-9 * std::max(1.0, r))
    throw std::invalid_argument(std::string(what) + " must be a positive integer, got " +
                                std::to_string(r));
  return static_cast<int>(k);
}

}  // namespace

int HorizonConfig::grid_steps() const { return exact_ratio(t_p, h_g, "T_p/h_g"); }
int HorizonConfig::building_steps() const { return exact_ratio(t_p, h_b, "T_p/h_b"); }
int HorizonConfig::grid_steps_per_building() const { return exact_ratio(h_b, h_g, "h_b/h_g"); }

void HorizonConfig::validate() const {
  if (t_p <= 0 || h_g <= 0 || h_b <= 0)
    throw std::invalid_argument("horizon times must be positive");
  if (order < 1 || order > 6) throw std::invalid_argument("Gear order must be in 1..6");
  (void)grid_steps();
  (void)building_steps();
  (void)grid_steps_per_building();
}

double CostConfig::dispatch_cost(const Eigen::VectorXd& u_bar) const {
  double c = 0.0;
  for (Eigen::Index m = 0; m < u_bar.size(); ++m)
    c += lopf_quadratic(m) * u_bar(m) * u_bar(m) + lopf_linear(m) * u_bar(m) +
         lopf_constant(m);
  return c;
}

CostConfig CostConfig::defaults(const PowerNetwork& net, double q_k, StepSeries price) {
  CostConfig c;
  const int n = net.n_buses();
  const int n_g = net.n_generators();
  c.q_diag = Eigen::VectorXd::Zero(2 * n);
  c.q_diag.tail(n).setConstant(q_k);  // angles carry no penalty
  c.r_diag.resize(n_g);
  c.lopf_quadratic.resize(n_g);
  c.lopf_linear.resize(n_g);
  c.lopf_constant.resize(n_g);
  for (int m = 0; m < n_g; ++m) {
    const auto& g = net.generators()[static_cast<std::size_t>(m)];
    c.r_diag(m) = g.cost_quadratic;
    c.lopf_quadratic(m) = g.cost_quadratic;
    c.lopf_linear(m) = g.cost_linear;
    c.lopf_constant(m) = g.cost_constant;
  }
  c.price = std::move(price);
  return c;
}

std::pair<double, double> ZoneSchedule::band_at(double abs_time_s) const {
  double tod = std::fmod(abs_time_s, kDay);
  if (tod < 0) tod += kDay;
  const bool day = tod >= day_start_s && tod < day_end_s;
  return day ? std::make_pair(day_lo_c, day_hi_c) : std::make_pair(night_lo_c, night_hi_c);
}

double BoundConfig::omega_lo() const { return 2.0 * kPi * (freq_lo_hz - 60.0); }
double BoundConfig::omega_hi() const { return 2.0 * kPi * (freq_hi_hz - 60.0); }

void BoundConfig::validate() const {
  if (freq_lo_hz > freq_hi_hz) throw std::invalid_argument("frequency band inverted");
  if (hvac_min_kw > hvac_max_kw) throw std::invalid_argument("HVAC band inverted");
  if (zone.day_lo_c > zone.day_hi_c || zone.night_lo_c > zone.night_hi_c)
    throw std::invalid_argument("zone band inverted");
  if (!(zone.day_start_s >= 0 && zone.day_end_s <= kDay && zone.day_start_s < zone.day_end_s))
    throw std::invalid_argument("zone schedule must satisfy 0 <= start < end <= 24h");
}

Eigen::VectorXd stack_building_disturbance(const std::vector<BuildingDisturbance>& d,
                                           double t_s) {
  Eigen::VectorXd w(3 * static_cast<Eigen::Index>(d.size()));
  for (std::size_t l = 0; l < d.size(); ++l)
    w.segment<3>(3 * static_cast<Eigen::Index>(l)) = d[l].at(t_s);
  return w;
}

// ---------------------------------------------------------------------------
// LOPF

QuadraticProgram assemble_lopf(const PowerNetwork& net, const Eigen::MatrixXd& ptdf_mat,
                               const Eigen::VectorXd& u_b_kw,
                               const Eigen::VectorXd& w_misc_kw,
                               const Eigen::VectorXd& w_bl_pu) {
  const int n_g = net.n_generators();
  const int n = net.n_buses();
  const int n_b = net.n_buildings();
  if (u_b_kw.size() != n_b || w_misc_kw.size() != n_b || w_bl_pu.size() != n)
    throw std::invalid_argument("assemble_lopf: input dimension mismatch");

  QuadraticProgram qp(n_g);
  for (int m = 0; m < n_g; ++m) {
    const auto& g = net.generators()[static_cast<std::size_t>(m)];
    qp.add_quadratic(m, m, g.cost_quadratic);
    qp.add_linear(m, g.cost_linear);
    qp.add_constant(g.cost_constant);
    qp.set_bounds(m, g.p_min, g.p_max);
    qp.set_name(m, {Quantity::setpoint, m + 1, 0, 1.0});
  }

  // Net nodal load in p.u.: Pi (u_b + w_misc)/1000/base + w_BL.
  Eigen::VectorXd load = w_bl_pu;
  const double kw_to_pu = 1.0 / (kKwToW * net.base_mva());
  load += net.bldg_incidence() * ((u_b_kw + w_misc_kw) * kw_to_pu);

  // Supply-demand balance: column sums of Gamma are 1, so sum of setpoints
  // equals total load.
  QuadraticProgram::Row balance;
  for (int m = 0; m < n_g; ++m) balance.emplace_back(m, 1.0);
  qp.add_equality(std::move(balance), load.sum(), "power_balance");

  // Two-sided PTDF line limits on net injections Gamma u - load.
  Eigen::MatrixXd pg = ptdf_mat * net.gen_incidence();
  Eigen::VectorXd shift = ptdf_mat * load;  // constant part of the flow
  for (int r = 0; r < net.n_branches(); ++r) {
    QuadraticProgram::Row row;
    for (int m = 0; m < n_g; ++m)
      if (pg(r, m) != 0.0) row.emplace_back(m, pg(r, m));
    const double fmax = net.branches()[static_cast<std::size_t>(r)].flow_limit;
    qp.add_inequality(std::move(row), -fmax + shift(r), fmax + shift(r),
                      "line_limit[branch=" + std::to_string(r + 1) + "]");
  }
  return qp;
}

// ---------------------------------------------------------------------------
// Building MPC

QuadraticProgram assemble_building_mpc(const BuildingCluster& cluster,
                                       const DiscreteBuildingModel& model,
                                       const MpcInputs& in, const CostConfig& costs,
                                       const BoundConfig& bounds,
                                       const HorizonConfig& horizon) {
  horizon.validate();
  bounds.validate();
  const int n_b = cluster.size();
  const int kb_total = horizon.building_steps();
  const int s = horizon.order;
  if (static_cast<int>(in.bldg_history.size()) < s)
    throw std::invalid_argument("building MPC needs s history states");
  if (!in.bldg_forecast) throw std::invalid_argument("building MPC needs a forecast");

  // Layout: [u_b(1..K_b) | x_b(1..K_b)], u in MW inside the QP.
  const int nu = n_b * kb_total;
  QuadraticProgram qp(nu + 2 * n_b * kb_total);
  auto iu = [&](int kb, int l) { return (kb - 1) * n_b + l; };
  auto ix = [&](int kb, int i) { return nu + (kb - 1) * 2 * n_b + i; };

  const double hb0 = horizon.h_b * model.scheme().beta0;
  const double w_cost = horizon.h_b / horizon.t_p;

  for (int kb = 1; kb <= kb_total; ++kb) {
    const double t = in.t0 + kb * horizon.h_b;
    const double price = costs.price.at(t);
    const auto band = bounds.zone.band_at(t);
    const Eigen::VectorXd w = stack_building_disturbance(*in.bldg_forecast, t);

    for (int l = 0; l < n_b; ++l) {
      const int u = iu(kb, l);
      qp.set_name(u, {Quantity::hvac, l + 1, kb, kKwToW});
      qp.set_bounds(u, bounds.hvac_min_kw / kKwToW, bounds.hvac_max_kw / kKwToW);
      qp.add_linear(u, w_cost * price * kKwToW);

      const int xw = ix(kb, 2 * l), xz = ix(kb, 2 * l + 1);
      qp.set_name(xw, {Quantity::wall_temp, l + 1, kb, 1.0});
      qp.set_name(xz, {Quantity::zone_temp, l + 1, kb, 1.0});
      qp.set_bounds(xz, band.first, band.second);

      const auto& pen = model.pencil_block(l);
      const auto& blk = cluster.block(l);
      for (int r = 0; r < 2; ++r) {
        QuadraticProgram::Row row;
        row.emplace_back(ix(kb, 2 * l + r), pen(r, r));
        row.emplace_back(ix(kb, 2 * l + 1 - r), pen(r, 1 - r));
        double rhs = hb0 * blk.b_w.row(r).dot(w.segment<3>(3 * l));
        for (int i = 1; i <= s; ++i) {
          const double a = model.scheme().alphas[static_cast<std::size_t>(i - 1)];
          if (kb - i >= 1)
            row.emplace_back(ix(kb - i, 2 * l + r), -a);
          else
            rhs += a * in.bldg_history[static_cast<std::size_t>(i - kb)](2 * l + r);
        }
        const double bu = hb0 * blk.b_u(r) * kKwToW * kKwToW;  // per-MW coefficient
        if (bu != 0.0) row.emplace_back(u, -bu);
        qp.add_equality(std::move(row), rhs,
                        "bldg_dyn[k=" + std::to_string(kb) + ",bldg=" + std::to_string(l + 1) +
                            (r == 0 ? ",wall]" : ",zone]"));
      }
    }
  }
  return qp;
}

// ---------------------------------------------------------------------------
// Grid-side and joint MPC share one assembler.

namespace {

struct GridAssembly {
  const GridDae* dae = nullptr;
  const DiscreteGridModel* grid_model = nullptr;
  const BuildingCluster* cluster = nullptr;        // null => buildings fixed
  const DiscreteBuildingModel* bldg_model = nullptr;
  const Eigen::MatrixXd* ptdf_mat = nullptr;
  const Eigen::MatrixXd* u_b_fixed_kw = nullptr;   // n_b x K_g when fixed
  bool optimize_setpoint = true;
  Eigen::VectorXd fixed_setpoint;
  bool lopf_rows = true;
};

QuadraticProgram assemble_grid_like(const GridAssembly& ga, const MpcInputs& in,
                                    const CostConfig& costs, const BoundConfig& bounds,
                                    const HorizonConfig& horizon) {
  horizon.validate();
  bounds.validate();
  const GridDae& dae = *ga.dae;
  const PowerNetwork& net = dae.network();
  const int n = dae.n();
  const int n_g = net.n_generators();
  const int n_b = dae.n_buildings();
  const int kg_total = horizon.grid_steps();
  const int kb_total = horizon.building_steps();
  const int ratio = horizon.grid_steps_per_building();
  const int s = horizon.order;
  const bool bldg_var = ga.cluster != nullptr;

  if (static_cast<int>(in.grid_history.size()) < s)
    throw std::invalid_argument("grid MPC needs s history states");
  if (!in.grid_forecast) throw std::invalid_argument("grid MPC needs a grid forecast");
  if (bldg_var) {
    if (static_cast<int>(in.bldg_history.size()) < s)
      throw std::invalid_argument("joint MPC needs building history");
    if (!in.bldg_forecast) throw std::invalid_argument("joint MPC needs a building forecast");
  } else {
    if (!ga.u_b_fixed_kw || ga.u_b_fixed_kw->rows() != n_b ||
        ga.u_b_fixed_kw->cols() != kg_total)
      throw std::invalid_argument("grid MPC needs fixed building loads, n_b x K_g");
  }
  if (!ga.optimize_setpoint && ga.fixed_setpoint.size() != n_g)
    throw std::invalid_argument("fixed setpoint must have n_g entries");

  // Layout: [ubar? | du(1..K_g) | x_g(1..K_g) | u_b(1..K_b)? | x_b(1..K_b)?].
  const int base_du = ga.optimize_setpoint ? n_g : 0;
  const int base_xg = base_du + kg_total * n_g;
  const int base_ub = base_xg + kg_total * 2 * n;
  const int base_xb = base_ub + (bldg_var ? kb_total * n_b : 0);
  const int total = base_xb + (bldg_var ? kb_total * 2 * n_b : 0);

  auto i_ubar = [&](int m) { return m; };
  auto i_du = [&](int k, int m) { return base_du + (k - 1) * n_g + m; };
  auto i_xg = [&](int k, int i) { return base_xg + (k - 1) * 2 * n + i; };
  auto i_ub = [&](int kb, int l) { return base_ub + (kb - 1) * n_b + l; };
  auto i_xb = [&](int kb, int i) { return base_xb + (kb - 1) * 2 * n_b + i; };

  QuadraticProgram qp(total);

  // Objective: J(ubar) + (h_b/T_p) sum c_b'u_b + (h_g/T_p) sum (du'R du + x'Q x).
  if (ga.optimize_setpoint) {
    for (int m = 0; m < n_g; ++m) {
      const auto& g = net.generators()[static_cast<std::size_t>(m)];
      qp.add_quadratic(i_ubar(m), i_ubar(m), g.cost_quadratic);
      qp.add_linear(i_ubar(m), g.cost_linear);
      qp.add_constant(g.cost_constant);
      qp.set_name(i_ubar(m), {Quantity::setpoint, m + 1, 0, 1.0});
      if (ga.lopf_rows) qp.set_bounds(i_ubar(m), g.p_min, g.p_max);
    }
  } else if (ga.lopf_rows) {
    for (int m = 0; m < n_g; ++m) {
      const auto& g = net.generators()[static_cast<std::size_t>(m)];
      qp.add_constant(g.cost_quadratic * ga.fixed_setpoint(m) * ga.fixed_setpoint(m) +
                      g.cost_linear * ga.fixed_setpoint(m) + g.cost_constant);
    }
  }

  const double wg_cost = horizon.h_g / horizon.t_p;
  for (int k = 1; k <= kg_total; ++k) {
    for (int m = 0; m < n_g; ++m) {
      const auto& g = net.generators()[static_cast<std::size_t>(m)];
      const int du = i_du(k, m);
      qp.set_name(du, {Quantity::regulation, m + 1, k, 1.0});
      qp.set_bounds(du, g.delta_min, g.delta_max);
      if (costs.r_diag(m) != 0.0) qp.add_quadratic(du, du, wg_cost * costs.r_diag(m));
    }
    for (int i = 0; i < 2 * n; ++i) {
      const int x = i_xg(k, i);
      const bool is_freq = i >= n;
      qp.set_name(x, {is_freq ? Quantity::frequency : Quantity::angle, (i % n) + 1, k, 1.0});
      if (is_freq) qp.set_bounds(x, bounds.omega_lo(), bounds.omega_hi());
      if (costs.q_diag(i) != 0.0) qp.add_quadratic(x, x, wg_cost * costs.q_diag(i));
    }
  }

  // Grid dynamics in pencil form:
  //   P x(k) - sum_i alpha_i E x(k-i) - h b0 (A_ub u_b + B_ug(ubar + du))
  //     = sum_{history} alpha_i E x_hist + h b0 B_wg w(k).
  const double hg0 = horizon.h_g * ga.grid_model->scheme().beta0;
  const auto& alphas = ga.grid_model->scheme().alphas;
  Eigen::VectorXd ediag(2 * n);
  for (int i = 0; i < 2 * n; ++i) ediag(i) = dae.e().coeff(i, i);
  const Eigen::SparseMatrix<double, Eigen::RowMajor> pencil_rm = ga.grid_model->pencil();
  const Eigen::SparseMatrix<double, Eigen::RowMajor> a_ub_rm = dae.a_ub();
  const Eigen::SparseMatrix<double, Eigen::RowMajor> b_ug_rm = dae.b_ug();

  for (int k = 1; k <= kg_total; ++k) {
    const double t = in.t0 + k * horizon.h_g;
    const int kb = (k - 1) / ratio + 1;  // building interval holding u_b for step k
    const Eigen::VectorXd w = in.grid_forecast->at(t);
    const Eigen::VectorXd ww = hg0 * (dae.b_wg() * w);

    for (int r = 0; r < 2 * n; ++r) {
      QuadraticProgram::Row row;
      double rhs = ww(r);

      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(pencil_rm, r); it;
           ++it)
        row.emplace_back(i_xg(k, static_cast<int>(it.col())), it.value());

      if (ediag(r) != 0.0) {
        for (int i = 1; i <= s; ++i) {
          const double a = alphas[static_cast<std::size_t>(i - 1)] * ediag(r);
          if (k - i >= 1)
            row.emplace_back(i_xg(k - i, r), -a);
          else
            rhs += a * in.grid_history[static_cast<std::size_t>(i - k)](r);
        }
      }

      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(b_ug_rm, r); it;
           ++it) {
        const int m = static_cast<int>(it.col());
        row.emplace_back(i_du(k, m), -hg0 * it.value());
        if (ga.optimize_setpoint)
          row.emplace_back(i_ubar(m), -hg0 * it.value());
        else
          rhs += hg0 * it.value() * ga.fixed_setpoint(m);
      }

      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(a_ub_rm, r); it;
           ++it) {
        const int l = static_cast<int>(it.col());
        if (bldg_var)
          row.emplace_back(i_ub(kb, l), hg0 * it.value() * -1.0 * kKwToW);
        else
          rhs += hg0 * it.value() * (*ga.u_b_fixed_kw)(l, k - 1);
      }

      const bool is_freq = r >= n;
      qp.add_equality(std::move(row), rhs,
                      std::string(is_freq ? "grid_dyn_power[k=" : "grid_dyn_angle[k=") +
                          std::to_string(k) + ",bus=" + std::to_string((r % n) + 1) + "]");
    }
  }

  // Building variables, dynamics and bounds (joint problem only).
  if (bldg_var) {
    const double hb0 = horizon.h_b * ga.bldg_model->scheme().beta0;
    const double wb_cost = horizon.h_b / horizon.t_p;
    for (int kb = 1; kb <= kb_total; ++kb) {
      const double t = in.t0 + kb * horizon.h_b;
      const double price = costs.price.at(t);
      const auto band = bounds.zone.band_at(t);
      const Eigen::VectorXd w = stack_building_disturbance(*in.bldg_forecast, t);

      for (int l = 0; l < n_b; ++l) {
        const int u = i_ub(kb, l);
        qp.set_name(u, {Quantity::hvac, l + 1, kb, kKwToW});
        qp.set_bounds(u, bounds.hvac_min_kw / kKwToW, bounds.hvac_max_kw / kKwToW);
        qp.add_linear(u, wb_cost * price * kKwToW);

        const int xw = i_xb(kb, 2 * l), xz = i_xb(kb, 2 * l + 1);
        qp.set_name(xw, {Quantity::wall_temp, l + 1, kb, 1.0});
        qp.set_name(xz, {Quantity::zone_temp, l + 1, kb, 1.0});
        qp.set_bounds(xz, band.first, band.second);

        const auto& pen = ga.bldg_model->pencil_block(l);
        const auto& blk = ga.cluster->block(l);
        for (int r = 0; r < 2; ++r) {
          QuadraticProgram::Row row;
          row.emplace_back(i_xb(kb, 2 * l + r), pen(r, r));
          row.emplace_back(i_xb(kb, 2 * l + 1 - r), pen(r, 1 - r));
          double rhs = hb0 * blk.b_w.row(r).dot(w.segment<3>(3 * l));
          for (int i = 1; i <= s; ++i) {
            const double a = ga.bldg_model->scheme().alphas[static_cast<std::size_t>(i - 1)];
            if (kb - i >= 1)
              row.emplace_back(i_xb(kb - i, 2 * l + r), -a);
            else
              rhs += a * in.bldg_history[static_cast<std::size_t>(i - kb)](2 * l + r);
          }
          const double bu = hb0 * blk.b_u(r) * kKwToW * kKwToW;
          if (bu != 0.0) row.emplace_back(u, -bu);
          qp.add_equality(std::move(row), rhs,
                          "bldg_dyn[k=" + std::to_string(kb) + ",bldg=" +
                              std::to_string(l + 1) + (r == 0 ? ",wall]" : ",zone]"));
        }
      }
    }
  }

  // PTDF line limits per building interval.
  if (ga.lopf_rows) {
    if (!ga.ptdf_mat || ga.ptdf_mat->rows() != net.n_branches())
      throw std::invalid_argument("lopf rows need the PTDF matrix");
    const Eigen::MatrixXd pg = (*ga.ptdf_mat) * net.gen_incidence();
    const Eigen::MatrixXd pp = (*ga.ptdf_mat) * net.bldg_incidence();
    const double kw_to_pu = 1.0 / (kKwToW * net.base_mva());

    for (int kb = 1; kb <= kb_total; ++kb) {
      const double t = in.t0 + kb * horizon.h_b;
      const Eigen::VectorXd w = in.grid_forecast->at(t);
      // Constant flow from base and miscellaneous loads (withdrawals).
      Eigen::VectorXd shift = (*ga.ptdf_mat) * w.head(n);
      shift += pp * (w.tail(n_b) * kw_to_pu);

      for (int r = 0; r < net.n_branches(); ++r) {
        QuadraticProgram::Row row;
        double shift_r = shift(r);
        for (int m = 0; m < n_g; ++m) {
          if (pg(r, m) == 0.0) continue;
          if (ga.optimize_setpoint)
            row.emplace_back(i_ubar(m), pg(r, m));
          else
            shift_r -= pg(r, m) * ga.fixed_setpoint(m);
        }
        for (int l = 0; l < n_b; ++l) {
          if (pp(r, l) == 0.0) continue;
          if (bldg_var)
            row.emplace_back(i_ub(kb, l), -pp(r, l) / net.base_mva());
          else
            shift_r += pp(r, l) * kw_to_pu * (*ga.u_b_fixed_kw)(l, kb * ratio - 1);
        }
        const double fmax = net.branches()[static_cast<std::size_t>(r)].flow_limit;
        qp.add_inequality(std::move(row), -fmax + shift_r, fmax + shift_r,
                          "line_limit[k=" + std::to_string(kb) + ",branch=" +
                              std::to_string(r + 1) + "]");
      }
    }
  }

  return qp;
}

}  // namespace

QuadraticProgram assemble_grid_mpc(const GridDae& dae, const DiscreteGridModel& model,
                                   const Eigen::MatrixXd& ptdf_mat, const MpcInputs& in,
                                   const Eigen::MatrixXd& u_b_fixed_kw,
                                   const CostConfig& costs, const BoundConfig& bounds,
                                   const HorizonConfig& horizon,
                                   const GridMpcOptions& opts) {
  GridAssembly ga;
  ga.dae = &dae;
  ga.grid_model = &model;
  ga.ptdf_mat = &ptdf_mat;
  ga.u_b_fixed_kw = &u_b_fixed_kw;
  ga.optimize_setpoint = opts.optimize_setpoint;
  ga.fixed_setpoint = opts.fixed_setpoint;
  ga.lopf_rows = opts.lopf_rows;
  return assemble_grid_like(ga, in, costs, bounds, horizon);
}

QuadraticProgram assemble_btg_gmpc(const GridDae& dae, const DiscreteGridModel& grid_model,
                                   const BuildingCluster& cluster,
                                   const DiscreteBuildingModel& bldg_model,
                                   const Eigen::MatrixXd& ptdf_mat, const MpcInputs& in,
                                   const CostConfig& costs, const BoundConfig& bounds,
                                   const HorizonConfig& horizon,
                                   const JointMpcOptions& opts) {
  if (cluster.size() != dae.n_buildings())
    throw std::invalid_argument("cluster size does not match attached buildings");
  GridAssembly ga;
  ga.dae = &dae;
  ga.grid_model = &grid_model;
  ga.cluster = &cluster;
  ga.bldg_model = &bldg_model;
  ga.ptdf_mat = &ptdf_mat;
  ga.optimize_setpoint = opts.optimize_setpoint;
  ga.fixed_setpoint = opts.fixed_setpoint;
  ga.lopf_rows = opts.lopf_rows;
  return assemble_grid_like(ga, in, costs, bounds, horizon);
}

// ---------------------------------------------------------------------------
// Bang-bang thermostat

BangBangResult bang_bang(const BuildingCluster& cluster, const DiscreteBuildingModel& model,
                         const BangBangOptions& opts,
                         const std::vector<BuildingDisturbance>& disturbance,
                         const Eigen::VectorXd& x0, int n_steps, double t0,
                         const BoundConfig& bounds) {
  if (opts.deadband_c <= 0.0) throw std::invalid_argument("deadband must be positive");
  const int n_b = cluster.size();
  if (x0.size() != 2 * n_b) throw std::invalid_argument("bang_bang: bad initial state");
  if (static_cast<int>(disturbance.size()) != n_b)
    throw std::invalid_argument("bang_bang: one disturbance per building required");

  BangBangResult out;
  out.u_kw.resize(n_b, n_steps);
  out.x.resize(2 * n_b, n_steps + 1);
  out.x.col(0) = x0;

  const int s = model.scheme().order;
  std::vector<Eigen::VectorXd> history(static_cast<std::size_t>(s), x0);
  std::vector<bool> cooling(static_cast<std::size_t>(n_b));
  for (int l = 0; l < n_b; ++l)
    cooling[static_cast<std::size_t>(l)] = x0(2 * l + 1) > opts.setpoint_c + opts.deadband_c;

  auto note_violation = [&](const std::string& msg, double amount) {
    out.within_bounds = false;
    out.max_violation = std::max(out.max_violation, amount);
    if (out.violations.size() < 20) out.violations.push_back(msg);
  };

  auto check_state = [&](const Eigen::VectorXd& x, double t) {
    const auto band = bounds.zone.band_at(t);
    for (int l = 0; l < n_b; ++l) {
      const double tz = x(2 * l + 1);
      if (tz < band.first - 1e-9 || tz > band.second + 1e-9)
        note_violation("zone temp of building " + std::to_string(l + 1) + " at t=" +
                           std::to_string(t) + " is " + std::to_string(tz) + " outside [" +
                           std::to_string(band.first) + ", " + std::to_string(band.second) + "]",
                       std::max(band.first - tz, tz - band.second));
    }
  };

  if (opts.u_max_kw > bounds.hvac_max_kw + 1e-9)
    note_violation("bang-bang u_max exceeds the HVAC upper bound",
                   opts.u_max_kw - bounds.hvac_max_kw);
  check_state(x0, t0);

  Eigen::VectorXd u(n_b);
  for (int k = 1; k <= n_steps; ++k) {
    const double t = t0 + k * model.h();
    for (int l = 0; l < n_b; ++l) {
      const double tz = history.front()(2 * l + 1);
      if (tz > opts.setpoint_c + opts.deadband_c) cooling[static_cast<std::size_t>(l)] = true;
      else if (tz < opts.setpoint_c - opts.deadband_c)
        cooling[static_cast<std::size_t>(l)] = false;
      u(l) = cooling[static_cast<std::size_t>(l)] ? opts.u_max_kw : 0.0;
    }
    const Eigen::VectorXd w = stack_building_disturbance(disturbance, t);
    Eigen::VectorXd x = model.step(history, u, w);

    out.u_kw.col(k - 1) = u;
    out.x.col(k) = x;
    check_state(x, t);

    history.insert(history.begin(), x);
    history.pop_back();
  }
  return out;
}

TunedBangBang bang_bang_tuned(const BuildingCluster& cluster,
                              const DiscreteBuildingModel& model, BangBangOptions opts,
                              const std::vector<BuildingDisturbance>& disturbance,
                              const Eigen::VectorXd& x0, int n_steps, double t0,
                              const BoundConfig& bounds) {
  TunedBangBang out;
  for (int attempt = 0; attempt <= 10; ++attempt) {
    out.run = bang_bang(cluster, model, opts, disturbance, x0, n_steps, t0, bounds);
    out.deadband_c = opts.deadband_c;
    if (out.run.within_bounds) {
      out.feasible = true;
      return out;
    }
    opts.deadband_c *= 0.5;
  }
  out.feasible = false;
  return out;
}

}  // namespace bgmpc

namespace bgmpc {

CondensedGridMpc::CondensedGridMpc(const GridDae& dae, const DiscreteGridModel& model,
                                   const CostConfig& costs, const BoundConfig& bounds,
                                   const HorizonConfig& horizon)
    : dae_(&dae), model_(&model), costs_(costs), bounds_(bounds), horizon_(horizon) {
  horizon_.validate();
  if (horizon_.order != 1)
    throw std::invalid_argument("condensed grid MPC supports first-order discretization only");
  n_ = dae.n();
  n_g_ = dae.network().n_generators();
  kg_ = horizon_.grid_steps();
  const double h0 = horizon_.h_g * model.scheme().beta0;

  // Dense one-step operators from the factorized pencil.
  a1_.resize(2 * n_, 2 * n_);
  {
    Eigen::MatrixXd e(dae.e());
    for (int c = 0; c < 2 * n_; ++c) a1_.col(c) = model.solve_pencil(e.col(c));
  }
  auto solve_cols = [&](const Eigen::MatrixXd& m) {
    Eigen::MatrixXd out(2 * n_, m.cols());
    for (int c = 0; c < m.cols(); ++c) out.col(c) = model.solve_pencil(h0 * m.col(c));
    return out;
  };
  b_du_ = solve_cols(Eigen::MatrixXd(dae.b_ug()));
  b_ub_ = solve_cols(Eigen::MatrixXd(dae.a_ub()));
  b_w_ = solve_cols(Eigen::MatrixXd(dae.b_wg()));

  imp_.reserve(static_cast<std::size_t>(kg_));
  cum_.reserve(static_cast<std::size_t>(kg_));
  imp_.push_back(b_du_);
  for (int i = 1; i < kg_; ++i) imp_.push_back(a1_ * imp_.back());
  cum_.push_back(imp_[0]);
  for (int k = 1; k < kg_; ++k)
    cum_.push_back(cum_[static_cast<std::size_t>(k - 1)] + imp_[static_cast<std::size_t>(k)]);

  ptdf_mat_ = ptdf(dae.network());
  ptdf_pg_ = ptdf_mat_ * dae.network().gen_incidence();
  ptdf_pp_ = ptdf_mat_ * dae.network().bldg_incidence();

  // Constant quadratic blocks of (h_g/T_p) sum_k x(k)'Q x(k) after
  // eliminating the states: x(k) = c(k) + cum[k-1] u_bar + sum_j imp[k-j] du(j).
  const double wg = horizon_.h_g / horizon_.t_p;
  const Eigen::VectorXd& qd = costs_.q_diag;
  h_du_ = Eigen::MatrixXd::Zero(n_g_ * kg_, n_g_ * kg_);
  h_bar_du_ = Eigen::MatrixXd::Zero(n_g_, n_g_ * kg_);
  h_bar_ = Eigen::MatrixXd::Zero(n_g_, n_g_);
  for (int k = 1; k <= kg_; ++k) {
    const auto& sk = cum_[static_cast<std::size_t>(k - 1)];
    h_bar_ += wg * sk.transpose() * qd.asDiagonal() * sk;
    for (int j = 1; j <= k; ++j) {
      const Eigen::MatrixXd qg = qd.asDiagonal() * imp_[static_cast<std::size_t>(k - j)];
      h_bar_du_.block(0, (j - 1) * n_g_, n_g_, n_g_) += wg * sk.transpose() * qg;
      for (int j2 = 1; j2 <= k; ++j2)
        h_du_.block((j - 1) * n_g_, (j2 - 1) * n_g_, n_g_, n_g_) +=
            wg * imp_[static_cast<std::size_t>(k - j)].transpose() *
            (qd.asDiagonal() * imp_[static_cast<std::size_t>(k - j2)]);
    }
  }
}

CondensedGridMpc::Result CondensedGridMpc::solve(const MpcInputs& in,
                                                 const Eigen::MatrixXd& u_b_fixed_kw,
                                                 const GridMpcOptions& opts,
                                                 const Eigen::VectorXd* warm_primal,
                                                 const Eigen::VectorXd* warm_dual) const {
  const PowerNetwork& net = dae_->network();
  if (static_cast<int>(in.grid_history.size()) < 1)
    throw std::invalid_argument("condensed grid MPC needs the current state");
  if (!in.grid_forecast) throw std::invalid_argument("condensed grid MPC needs a forecast");
  if (u_b_fixed_kw.rows() != dae_->n_buildings() || u_b_fixed_kw.cols() != kg_)
    throw std::invalid_argument("condensed grid MPC needs fixed loads, n_b x K_g");
  if (!opts.optimize_setpoint && opts.fixed_setpoint.size() != n_g_)
    throw std::invalid_argument("fixed setpoint must have n_g entries");

  // Forced response c(k) from the current state, loads and disturbances
  // (and the fixed setpoint when it is not a decision variable).
  const double wg = horizon_.h_g / horizon_.t_p;
  std::vector<Eigen::VectorXd> c(static_cast<std::size_t>(kg_ + 1));
  c[0] = in.grid_history[0];
  for (int k = 1; k <= kg_; ++k) {
    const double t = in.t0 + k * horizon_.h_g;
    c[static_cast<std::size_t>(k)] = a1_ * c[static_cast<std::size_t>(k - 1)] +
                                     b_ub_ * u_b_fixed_kw.col(k - 1) +
                                     b_w_ * in.grid_forecast->at(t);
    if (!opts.optimize_setpoint)
      c[static_cast<std::size_t>(k)] += b_du_ * opts.fixed_setpoint;
  }

  const int base_du = opts.optimize_setpoint ? n_g_ : 0;
  QuadraticProgram qp(base_du + n_g_ * kg_);
  auto i_du = [&](int k, int m) { return base_du + (k - 1) * n_g_ + m; };

  double obj_const = 0.0;
  Eigen::VectorXd q_du = Eigen::VectorXd::Zero(n_g_ * kg_);
  Eigen::VectorXd q_bar = Eigen::VectorXd::Zero(n_g_);
  for (int k = 1; k <= kg_; ++k) {
    const Eigen::VectorXd qc = costs_.q_diag.cwiseProduct(c[static_cast<std::size_t>(k)]);
    obj_const += wg * c[static_cast<std::size_t>(k)].dot(qc);
    for (int j = 1; j <= k; ++j)
      q_du.segment((j - 1) * n_g_, n_g_) +=
          2.0 * wg * imp_[static_cast<std::size_t>(k - j)].transpose() * qc;
    if (opts.optimize_setpoint)
      q_bar += 2.0 * wg * cum_[static_cast<std::size_t>(k - 1)].transpose() * qc;
  }

  // z' M z expands through add_quadratic as M_ii on the diagonal and
  // 2 M_ij per unordered off-diagonal pair.
  if (opts.optimize_setpoint) {
    for (int m = 0; m < n_g_; ++m) {
      const auto& g = net.generators()[static_cast<std::size_t>(m)];
      qp.add_quadratic(m, m, g.cost_quadratic + h_bar_(m, m));
      qp.add_linear(m, g.cost_linear + q_bar(m));
      qp.add_constant(g.cost_constant);
      qp.set_name(m, {Quantity::setpoint, m + 1, 0, 1.0});
      if (opts.lopf_rows) qp.set_bounds(m, g.p_min, g.p_max);
      for (int m2 = m + 1; m2 < n_g_; ++m2)
        qp.add_quadratic(m, m2, 2.0 * h_bar_(m, m2));
    }
  } else if (opts.lopf_rows) {
    for (int m = 0; m < n_g_; ++m) {
      const auto& g = net.generators()[static_cast<std::size_t>(m)];
      const double u = opts.fixed_setpoint(m);
      qp.add_constant(g.cost_quadratic * u * u + g.cost_linear * u + g.cost_constant);
    }
  }
  qp.add_constant(obj_const);

  for (int k = 1; k <= kg_; ++k)
    for (int m = 0; m < n_g_; ++m) {
      const auto& g = net.generators()[static_cast<std::size_t>(m)];
      const int v = i_du(k, m);
      const int col = (k - 1) * n_g_ + m;
      qp.set_name(v, {Quantity::regulation, m + 1, k, 1.0});
      qp.set_bounds(v, g.delta_min, g.delta_max);
      qp.add_quadratic(v, v, wg * costs_.r_diag(m) + h_du_(col, col));
      qp.add_linear(v, q_du(col));
      for (int col2 = col + 1; col2 < n_g_ * kg_; ++col2)
        if (h_du_(col, col2) != 0.0)
          qp.add_quadratic(v, base_du + col2, 2.0 * h_du_(col, col2));
      if (opts.optimize_setpoint)
        for (int m2 = 0; m2 < n_g_; ++m2)
          if (h_bar_du_(m2, col) != 0.0)
            qp.add_quadratic(m2, v, 2.0 * h_bar_du_(m2, col));
    }

  // PTDF line limits per building interval over the setpoint only.
  if (opts.lopf_rows && opts.optimize_setpoint) {
    const Eigen::MatrixXd& pg = ptdf_pg_;
    const Eigen::MatrixXd& pp = ptdf_pp_;
    const double kw_to_pu = 1.0 / (kKwToW * net.base_mva());
    const int ratio = horizon_.grid_steps_per_building();
    for (int kb = 1; kb <= horizon_.building_steps(); ++kb) {
      const double t = in.t0 + kb * horizon_.h_b;
      const Eigen::VectorXd w = in.grid_forecast->at(t);
      Eigen::VectorXd shift = ptdf_mat_ * w.head(n_);
      shift += pp * (w.tail(dae_->n_buildings()) * kw_to_pu);
      shift += pp * (u_b_fixed_kw.col(kb * ratio - 1) * kw_to_pu);
      for (int r = 0; r < net.n_branches(); ++r) {
        QuadraticProgram::Row row;
        for (int m = 0; m < n_g_; ++m)
          if (pg(r, m) != 0.0) row.emplace_back(m, pg(r, m));
        const double fmax = net.branches()[static_cast<std::size_t>(r)].flow_limit;
        qp.add_inequality(std::move(row), -fmax + shift(r), fmax + shift(r),
                          "line_limit[k=" + std::to_string(kb) + ",branch=" +
                              std::to_string(r + 1) + "]");
      }
    }
  }

  QpTolerances tol;
  QpSolution sol = bgmpc::solve(qp, tol, warm_primal, warm_dual);

  Result out;
  out.status = sol.status;
  out.iterations = sol.iterations;
  out.worst_residual = std::max(sol.primal_residual, sol.dual_residual);
  out.message = sol.message;
  out.raw_primal = sol.primal;
  out.raw_dual = sol.dual;
  if (sol.status != QpStatus::optimal) return out;

  out.u_bar = opts.optimize_setpoint ? Eigen::VectorXd(sol.primal.head(n_g_))
                                     : opts.fixed_setpoint;
  out.delta_u.resize(n_g_, kg_);
  for (int k = 1; k <= kg_; ++k)
    out.delta_u.col(k - 1) = sol.primal.segment(base_du + (k - 1) * n_g_, n_g_);
  out.objective = sol.objective;

  // Reconstruct the states and verify the frequency band that the
  // condensed program does not carry.
  out.x_g.resize(2 * n_, kg_);
  Eigen::VectorXd x = in.grid_history[0];
  const double lo = bounds_.omega_lo(), hi = bounds_.omega_hi();
  for (int k = 1; k <= kg_; ++k) {
    x = a1_ * x + b_du_ * (out.u_bar + out.delta_u.col(k - 1)) +
        b_ub_ * u_b_fixed_kw.col(k - 1) +
        b_w_ * in.grid_forecast->at(in.t0 + k * horizon_.h_g);
    out.x_g.col(k - 1) = x;
    for (int b = 0; b < n_; ++b) {
      const double om = x(n_ + b);
      if (om < lo - 1e-9 || om > hi + 1e-9) out.bounds_ok = false;
    }
  }
  // Primal/dual warm-start handoff happens through the raw solution.
  out.message = "";
  return out;
}

}  // namespace bgmpc
