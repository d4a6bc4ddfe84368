#pragma once

#include <memory>
#include <string>

#include "bgmpc/harness.hpp"

namespace bgmpc {

// Synthetic day profiles used when no CSV inputs are given: a sinusoidal
// ambient temperature peaking mid-afternoon, solar gain following daylight,
// scheduled internal gains and miscellaneous loads, and a day-shaped base
// load scaled from each bus's static Pd.
struct SyntheticProfiles {
  double t_amb_mean_c = 29.0;
  double t_amb_amp_c = 6.0;       // peak at 15:00
  double q_sol_peak_w = 2.0e5;
  double q_int_day_w = 3.0e5;     // 08:00-18:00
  double q_int_night_w = 8.0e4;
  double misc_day_kw = 50.0;
  double misc_night_kw = 20.0;
  double base_load_scale = 1.0;   // multiplies the case's Pd column
};

// Full description of one run; parsed from the JSON manifest
// (docs/manifest_format.md documents every key).
struct RunManifest {
  std::string case_path;
  Scenario scenario = Scenario::III;
  double t_final = 4.0 * 3600.0;
  double start_hour = 12.0;

  HorizonConfig horizon;

  int n_buildings = 30;
  double building_spread = 0.05;
  std::uint64_t building_seed = 1;
  int assignment_offset = 0;
  BuildingParams reference{1.16e-4, 1.16e-4, 6.55e-3, 1.133e9, 7.033e9, 3.0};
  double initial_zone_c = -1.0;  // < 0: mid-band at start
  double initial_wall_c = -1.0;  // < 0: halfway between zone and ambient

  BoundConfig bounds;
  BangBangOptions bang;
  double q_k = 50000.0;

  // CSV inputs; empty entries fall back to the synthetic profiles.
  std::vector<std::string> disturbance_csvs;  // 1 entry broadcasts to all buildings
  std::string base_load_csv;
  std::string misc_load_csv;
  std::string price_csv;
  SyntheticProfiles profiles;
  // Time-of-use price levels used when no price CSV is given, $/kWh.
  double price_offpeak = 0.06, price_mid = 0.12, price_peak = 0.20;

  NoiseConfig noise;
  std::uint64_t seed = 1;
  QpTolerances solver;

  static RunManifest from_json_text(const std::string& text);
  static RunManifest from_json_file(const std::string& path);
};

// Loads the case, attaches and samples the buildings, builds forecasts and
// cost/bound configuration. The returned bundle is self-contained.
std::unique_ptr<SimModels> build_models(const RunManifest& manifest);

ScenarioConfig scenario_config(const RunManifest& manifest);

// The synthetic series themselves (sample-and-hold over [0, horizon_end]).
StepSeries synthetic_price(double offpeak, double mid, double peak, double end_s);
StepSeries synthetic_ambient(const SyntheticProfiles& p, double step_s, double end_s);
StepSeries synthetic_solar(const SyntheticProfiles& p, double step_s, double end_s);
StepSeries synthetic_internal(const SyntheticProfiles& p, double step_s, double end_s);
StepSeries synthetic_misc_kw(const SyntheticProfiles& p, double step_s, double end_s);
StepSeries synthetic_base_load(const SyntheticProfiles& p, double pd_pu, double step_s,
                               double end_s);

}  // namespace bgmpc
