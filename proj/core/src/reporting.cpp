#include "bgmpc/reporting.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace bgmpc {

namespace {
constexpr double kPi = 3.14159265358979323846;

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot open output file " + p.string());
  out.precision(12);
  return out;
}
}  // namespace

CostBreakdown cost_breakdown(const ScenarioRun& run, const CostConfig& costs) {
  CostBreakdown b;
  const double wg = run.horizon.h_g / run.horizon.t_p;
  const double wb = run.horizon.h_b / run.horizon.t_p;

  for (int j = 1; j < run.x_g.cols(); ++j) {
    const Eigen::VectorXd x = run.x_g.col(j);
    b.freq_cost += wg * x.dot(costs.q_diag.cwiseProduct(x));
  }
  for (int j = 0; j < run.delta_u.cols(); ++j) {
    const Eigen::VectorXd du = run.delta_u.col(j);
    b.regulation_cost += wg * du.dot(costs.r_diag.cwiseProduct(du));
  }
  for (int blk = 0; blk < run.u_bar.cols(); ++blk)
    b.lopf_cost += costs.dispatch_cost(run.u_bar.col(blk));
  for (int g = 0; g < run.u_b_kw.cols(); ++g) {
    const double t = run.t0 + (g + 1) * run.horizon.h_b;
    b.hvac_cost += wb * costs.price.at(t) * run.u_b_kw.col(g).sum();
  }

  // Dollars -> thousands of dollars.
  b.freq_cost /= 1e3;
  b.regulation_cost /= 1e3;
  b.lopf_cost /= 1e3;
  b.hvac_cost /= 1e3;
  b.total_grid = b.freq_cost + b.regulation_cost + b.lopf_cost;
  b.total = b.total_grid + b.hvac_cost;
  return b;
}

double percent_reduction(double x, double y) {
  if (x <= 0.0) throw std::invalid_argument("percent_reduction needs a positive baseline");
  return (x - y) / x;
}

namespace {

void write_costs_rows(std::ofstream& out, const std::string& label, const CostBreakdown& b) {
  out << label << ",freq_deviation," << b.freq_cost << "\n";
  out << label << ",regulation," << b.regulation_cost << "\n";
  out << label << ",dispatch," << b.lopf_cost << "\n";
  out << label << ",hvac," << b.hvac_cost << "\n";
  out << label << ",total_grid," << b.total_grid << "\n";
  out << label << ",total," << b.total << "\n";
}

template <typename Getter>
void write_envelope(const std::filesystem::path& p, int n_cols, double t0, double dt,
                    int n_entities, Getter&& value) {
  auto out = open_out(p);
  out << "time_s,min,mean,max\n";
  for (int j = 0; j < n_cols; ++j) {
    double lo = 0, hi = 0, sum = 0;
    for (int e = 0; e < n_entities; ++e) {
      const double v = value(e, j);
      if (e == 0) lo = hi = v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += v;
    }
    out << t0 + j * dt << "," << lo << "," << sum / n_entities << "," << hi << "\n";
  }
}

}  // namespace

void emit(const ScenarioRun& run, const CostBreakdown& breakdown,
          const std::filesystem::path& outdir) {
  std::filesystem::create_directories(outdir);
  const int n = static_cast<int>(run.x_g.rows()) / 2;
  const int n_b = static_cast<int>(run.x_b.rows()) / 2;
  const int n_g = static_cast<int>(run.u_bar.rows());
  const std::string label = to_string(run.scenario);

  {
    auto out = open_out(outdir / "costs.csv");
    out << "scenario,category,value_kusd\n";
    write_costs_rows(out, label, breakdown);
  }

  {
    auto out = open_out(outdir / "trajectories.csv");
    out << "time_s,kind,entity,value\n";
    for (int j = 0; j < run.x_g.cols(); ++j) {
      const double t = run.t0 + j * run.horizon.h_g;
      for (int k = 0; k < n; ++k) {
        out << t << ",angle_rad," << k + 1 << "," << run.x_g(k, j) << "\n";
        out << t << ",omega_radps," << k + 1 << "," << run.x_g(n + k, j) << "\n";
      }
    }
    for (int j = 0; j < run.x_b.cols(); ++j) {
      const double t = run.t0 + j * run.horizon.h_b;
      for (int l = 0; l < n_b; ++l) {
        out << t << ",wall_C," << l + 1 << "," << run.x_b(2 * l, j) << "\n";
        out << t << ",zone_C," << l + 1 << "," << run.x_b(2 * l + 1, j) << "\n";
      }
    }
    for (int g = 0; g < run.u_b_kw.cols(); ++g) {
      const double t = run.t0 + (g + 1) * run.horizon.h_b;
      for (int l = 0; l < n_b; ++l)
        out << t << ",hvac_kw," << l + 1 << "," << run.u_b_kw(l, g) << "\n";
    }
    for (int j = 0; j < run.delta_u.cols(); ++j) {
      const double t = run.t0 + (j + 1) * run.horizon.h_g;
      for (int m = 0; m < n_g; ++m)
        out << t << ",regulation_pu," << m + 1 << "," << run.delta_u(m, j) << "\n";
    }
    for (int blk = 0; blk < run.u_bar.cols(); ++blk) {
      const double t = run.t0 + blk * run.horizon.t_p;
      for (int m = 0; m < n_g; ++m)
        out << t << ",setpoint_pu," << m + 1 << "," << run.u_bar(m, blk) << "\n";
    }
  }

  {
    nlohmann::json j;
    j["scenario"] = label;
    j["t0_s"] = run.t0;
    j["t_final_s"] = run.t_final;
    j["horizon"] = {{"T_p_s", run.horizon.t_p},
                    {"h_g_s", run.horizon.h_g},
                    {"h_b_s", run.horizon.h_b},
                    {"order", run.horizon.order}};
    j["costs_kusd"] = {{"freq_deviation", breakdown.freq_cost},
                       {"regulation", breakdown.regulation_cost},
                       {"dispatch", breakdown.lopf_cost},
                       {"hvac", breakdown.hvac_cost},
                       {"total_grid", breakdown.total_grid},
                       {"total", breakdown.total}};
    j["solves"] = {{"full", run.stats.full_solves},
                   {"grid_only", run.stats.grid_solves},
                   {"building", run.stats.building_solves},
                   {"solver_iterations", run.stats.iterations},
                   {"worst_kkt_residual", run.stats.worst_residual}};
    auto out = open_out(outdir / "summary.json");
    out << j.dump(2) << "\n";
  }

  write_envelope(outdir / "plot_frequency.csv", static_cast<int>(run.x_g.cols()), run.t0,
                 run.horizon.h_g, n,
                 [&](int e, int j) { return 60.0 + run.x_g(n + e, j) / (2.0 * kPi); });
  write_envelope(outdir / "plot_temperature.csv", static_cast<int>(run.x_b.cols()), run.t0,
                 run.horizon.h_b, n_b, [&](int e, int j) { return run.x_b(2 * e + 1, j); });
  if (run.u_b_kw.cols() > 0)
    write_envelope(outdir / "plot_hvac.csv", static_cast<int>(run.u_b_kw.cols()),
                   run.t0 + run.horizon.h_b, run.horizon.h_b, n_b,
                   [&](int e, int j) { return run.u_b_kw(e, j); });
  if (run.delta_u.cols() > 0) {
    const int per_tp = run.horizon.grid_steps();
    write_envelope(outdir / "plot_generation.csv", static_cast<int>(run.delta_u.cols()),
                   run.t0 + run.horizon.h_g, run.horizon.h_g, n_g, [&](int e, int j) {
                     return run.u_bar(e, j / per_tp) + run.delta_u(e, j);
                   });
  }
}

void emit_comparison(const std::vector<std::pair<std::string, CostBreakdown>>& rows,
                     const std::filesystem::path& outdir) {
  std::filesystem::create_directories(outdir);
  auto out = open_out(outdir / "comparison.csv");
  out << "scenario,category,value_kusd\n";
  for (const auto& [label, b] : rows) write_costs_rows(out, label, b);
}

}  // namespace bgmpc
