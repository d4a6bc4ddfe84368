#include "bgmpc/config.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

namespace bgmpc {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDay = 24.0 * 3600.0;

double tod(double t) {
  double x = std::fmod(t, kDay);
  return x < 0 ? x + kDay : x;
}

StepSeries sampled(double step_s, double end_s, const std::function<double(double)>& f) {
  std::vector<double> t, v;
  for (double s = 0.0; s <= end_s + 0.5 * step_s; s += step_s) {
    t.push_back(s);
    v.push_back(f(s));
  }
  return StepSeries(std::move(t), std::move(v));
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

StepSeries synthetic_price(double offpeak, double mid, double peak, double end_s) {
  return sampled(900.0, end_s, [=](double t) {
    const double h = tod(t) / 3600.0;
    if (h < 8.0 || h >= 22.0) return offpeak;
    if (h >= 12.0 && h < 18.0) return peak;
    return mid;
  });
}

StepSeries synthetic_ambient(const SyntheticProfiles& p, double step_s, double end_s) {
  return sampled(step_s, end_s, [&](double t) {
    return p.t_amb_mean_c + p.t_amb_amp_c * std::cos(2.0 * kPi * (tod(t) - 15.0 * 3600.0) / kDay);
  });
}

StepSeries synthetic_solar(const SyntheticProfiles& p, double step_s, double end_s) {
  return sampled(step_s, end_s, [&](double t) {
    const double h = tod(t) / 3600.0;
    if (h < 6.0 || h > 18.0) return 0.0;
    const double x = std::sin(kPi * (h - 6.0) / 12.0);
    return p.q_sol_peak_w * x * x;
  });
}

StepSeries synthetic_internal(const SyntheticProfiles& p, double step_s, double end_s) {
  return sampled(step_s, end_s, [&](double t) {
    const double h = tod(t) / 3600.0;
    return (h >= 8.0 && h < 18.0) ? p.q_int_day_w : p.q_int_night_w;
  });
}

StepSeries synthetic_misc_kw(const SyntheticProfiles& p, double step_s, double end_s) {
  return sampled(step_s, end_s, [&](double t) {
    const double h = tod(t) / 3600.0;
    return (h >= 8.0 && h < 20.0) ? p.misc_day_kw : p.misc_night_kw;
  });
}

StepSeries synthetic_base_load(const SyntheticProfiles& p, double pd_pu, double step_s,
                               double end_s) {
  return sampled(step_s, end_s, [&](double t) {
    const double h = tod(t) / 3600.0;
    double shape = 0.8;
    if (h >= 7.0 && h <= 21.0) shape = 0.8 + 0.2 * std::sin(kPi * (h - 7.0) / 14.0);
    return p.base_load_scale * pd_pu * shape;
  });
}

RunManifest RunManifest::from_json_file(const std::string& path) {
  return from_json_text(slurp(path));
}

RunManifest RunManifest::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("manifest: ") + e.what());
  }

  RunManifest m;
  if (!j.contains("case")) throw std::runtime_error("manifest: missing required key 'case'");
  m.case_path = j.at("case").get<std::string>();
  m.scenario = scenario_from_string(j.value("scenario", std::string("III")));
  m.t_final = j.value("t_final_s", m.t_final);
  m.start_hour = j.value("start_hour", m.start_hour);
  m.seed = j.value("seed", m.seed);

  if (j.contains("horizon")) {
    const auto& h = j.at("horizon");
    m.horizon.t_p = h.value("T_p_s", m.horizon.t_p);
    m.horizon.h_g = h.value("h_g_s", m.horizon.h_g);
    m.horizon.h_b = h.value("h_b_s", m.horizon.h_b);
    m.horizon.order = h.value("order", m.horizon.order);
  }

  if (j.contains("buildings")) {
    const auto& b = j.at("buildings");
    m.n_buildings = b.value("count", m.n_buildings);
    m.building_spread = b.value("spread", m.building_spread);
    m.building_seed = b.value("seed", m.building_seed);
    m.assignment_offset = b.value("assignment_offset", m.assignment_offset);
    m.initial_zone_c = b.value("initial_zone_C", m.initial_zone_c);
    m.initial_wall_c = b.value("initial_wall_C", m.initial_wall_c);
    if (b.contains("reference")) {
      const auto& r = b.at("reference");
      m.reference.r1 = r.value("R1_C_per_W", m.reference.r1);
      m.reference.r2 = r.value("R2_C_per_W", m.reference.r2);
      m.reference.r_win = r.value("R_win_C_per_W", m.reference.r_win);
      m.reference.c_wall = r.value("C_wall_J_per_C", m.reference.c_wall);
      m.reference.c_zone = r.value("C_zone_J_per_C", m.reference.c_zone);
      m.reference.mu_hvac = r.value("mu_hvac", m.reference.mu_hvac);
    }
  }

  if (j.contains("bounds")) {
    const auto& b = j.at("bounds");
    if (b.contains("freq_hz")) {
      m.bounds.freq_lo_hz = b.at("freq_hz").at(0).get<double>();
      m.bounds.freq_hi_hz = b.at("freq_hz").at(1).get<double>();
    }
    if (b.contains("hvac_kw")) {
      m.bounds.hvac_min_kw = b.at("hvac_kw").at(0).get<double>();
      m.bounds.hvac_max_kw = b.at("hvac_kw").at(1).get<double>();
    }
    if (b.contains("zone_day_C")) {
      m.bounds.zone.day_lo_c = b.at("zone_day_C").at(0).get<double>();
      m.bounds.zone.day_hi_c = b.at("zone_day_C").at(1).get<double>();
    }
    if (b.contains("zone_night_C")) {
      m.bounds.zone.night_lo_c = b.at("zone_night_C").at(0).get<double>();
      m.bounds.zone.night_hi_c = b.at("zone_night_C").at(1).get<double>();
    }
    if (b.contains("day_hours")) {
      m.bounds.zone.day_start_s = b.at("day_hours").at(0).get<double>() * 3600.0;
      m.bounds.zone.day_end_s = b.at("day_hours").at(1).get<double>() * 3600.0;
    }
  }

  if (j.contains("bang_bang")) {
    const auto& b = j.at("bang_bang");
    m.bang.setpoint_c = b.value("setpoint_C", m.bang.setpoint_c);
    m.bang.deadband_c = b.value("deadband_C", m.bang.deadband_c);
    m.bang.u_max_kw = b.value("u_max_kw", m.bang.u_max_kw);
  }

  if (j.contains("costs")) {
    const auto& c = j.at("costs");
    m.q_k = c.value("q_k", m.q_k);
    m.price_csv = c.value("price_csv", m.price_csv);
    m.price_offpeak = c.value("price_offpeak", m.price_offpeak);
    m.price_mid = c.value("price_mid", m.price_mid);
    m.price_peak = c.value("price_peak", m.price_peak);
  }

  if (j.contains("disturbances")) {
    const auto& d = j.at("disturbances");
    if (d.contains("building_csvs"))
      m.disturbance_csvs = d.at("building_csvs").get<std::vector<std::string>>();
    m.base_load_csv = d.value("base_load_csv", m.base_load_csv);
    m.misc_load_csv = d.value("misc_load_csv", m.misc_load_csv);
    if (d.contains("synthetic")) {
      const auto& s = d.at("synthetic");
      m.profiles.t_amb_mean_c = s.value("t_amb_mean_C", m.profiles.t_amb_mean_c);
      m.profiles.t_amb_amp_c = s.value("t_amb_amp_C", m.profiles.t_amb_amp_c);
      m.profiles.q_sol_peak_w = s.value("q_sol_peak_W", m.profiles.q_sol_peak_w);
      m.profiles.q_int_day_w = s.value("q_int_day_W", m.profiles.q_int_day_w);
      m.profiles.q_int_night_w = s.value("q_int_night_W", m.profiles.q_int_night_w);
      m.profiles.misc_day_kw = s.value("misc_day_kW", m.profiles.misc_day_kw);
      m.profiles.misc_night_kw = s.value("misc_night_kW", m.profiles.misc_night_kw);
      m.profiles.base_load_scale = s.value("base_load_scale", m.profiles.base_load_scale);
    }
  }

  if (j.contains("noise")) {
    m.noise.load_std = j.at("noise").value("load_std", m.noise.load_std);
    m.noise.model_std = j.at("noise").value("model_std", m.noise.model_std);
  }

  if (j.contains("solver")) {
    m.solver.eps_abs = j.at("solver").value("eps_abs", m.solver.eps_abs);
    m.solver.max_iterations = j.at("solver").value("max_iterations", m.solver.max_iterations);
  }

  return m;
}

std::unique_ptr<SimModels> build_models(const RunManifest& mf) {
  mf.horizon.validate();
  mf.bounds.validate();
  if (mf.n_buildings < 0) throw std::runtime_error("manifest: negative building count");

  PowerNetwork net = attach_buildings_round_robin(parse_case_file(mf.case_path),
                                                  mf.n_buildings, mf.assignment_offset);
  BuildingCluster cluster =
      sample_cluster(mf.reference, mf.n_buildings, mf.building_spread, mf.building_seed);

  const double t0 = mf.start_hour * 3600.0;
  // Series must cover every look-ahead of the run plus the thermostat
  // pre-roll in Scenario I.
  const double end_s = t0 + mf.t_final + 2.0 * mf.horizon.t_p + kDay;

  StepSeries price = mf.price_csv.empty()
                         ? synthetic_price(mf.price_offpeak, mf.price_mid, mf.price_peak, end_s)
                         : [&] {
                             auto cols = csv::read_columns(slurp(mf.price_csv),
                                                           {"time_s", "price_dollars_per_kWh"});
                             return StepSeries(cols[0], cols[1]);
                           }();

  std::vector<BuildingDisturbance> bldg;
  if (mf.disturbance_csvs.empty()) {
    const StepSeries amb = synthetic_ambient(mf.profiles, mf.horizon.h_b, end_s);
    const StepSeries sol = synthetic_solar(mf.profiles, mf.horizon.h_b, end_s);
    const StepSeries internal = synthetic_internal(mf.profiles, mf.horizon.h_b, end_s);
    bldg.assign(static_cast<std::size_t>(mf.n_buildings), {amb, sol, internal});
  } else if (mf.disturbance_csvs.size() == 1) {
    const BuildingDisturbance d = read_disturbance_csv(slurp(mf.disturbance_csvs[0]));
    bldg.assign(static_cast<std::size_t>(mf.n_buildings), d);
  } else if (static_cast<int>(mf.disturbance_csvs.size()) == mf.n_buildings) {
    for (const auto& p : mf.disturbance_csvs)
      bldg.push_back(read_disturbance_csv(slurp(p)));
  } else {
    throw std::runtime_error("manifest: building_csvs must have 1 or n_b entries");
  }

  GridDisturbance grid;
  grid.forecast = true;
  if (mf.base_load_csv.empty()) {
    for (const auto& bus : net.buses())
      grid.base_load_pu.push_back(synthetic_base_load(
          mf.profiles, bus.base_load_mw / net.base_mva(), mf.horizon.t_p, end_s));
  } else {
    grid.base_load_pu = read_base_load_csv(slurp(mf.base_load_csv), net.n_buses());
  }
  if (mf.misc_load_csv.empty()) {
    const StepSeries misc = synthetic_misc_kw(mf.profiles, mf.horizon.h_b, end_s);
    grid.misc_load_kw.assign(static_cast<std::size_t>(mf.n_buildings), misc);
  } else {
    grid.misc_load_kw = read_misc_load_csv(slurp(mf.misc_load_csv), mf.n_buildings);
  }

  CostConfig costs = CostConfig::defaults(net, mf.q_k, price);

  const auto band0 = mf.bounds.zone.band_at(t0);
  const double zone0 =
      mf.initial_zone_c >= 0 ? mf.initial_zone_c : 0.5 * (band0.first + band0.second);
  double wall0 = mf.initial_wall_c;
  if (wall0 < 0) {
    const double amb0 = bldg.empty() ? zone0 : bldg.front().t_amb_c.at(t0);
    wall0 = 0.5 * (zone0 + amb0);
  }
  Eigen::VectorXd x_b0(2 * mf.n_buildings);
  for (int l = 0; l < mf.n_buildings; ++l) {
    x_b0(2 * l) = wall0;
    x_b0(2 * l + 1) = zone0;
  }
  Eigen::VectorXd x_g0 = Eigen::VectorXd::Zero(2 * net.n_buses());

  return std::make_unique<SimModels>(std::move(net), std::move(cluster), mf.horizon, std::move(costs),
                                     mf.bounds, mf.bang, std::move(grid), std::move(bldg),
                                     std::move(x_g0), std::move(x_b0));
}

ScenarioConfig scenario_config(const RunManifest& mf) {
  ScenarioConfig cfg;
  cfg.scenario = mf.scenario;
  cfg.t_final = mf.t_final;
  cfg.t0 = mf.start_hour * 3600.0;
  cfg.seed = mf.seed;
  cfg.noise = mf.noise;
  cfg.qp_tol = mf.solver;
  return cfg;
}

}  // namespace bgmpc
