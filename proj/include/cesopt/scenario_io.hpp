#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cesopt/optimizer.hpp"
#include "cesopt/scenario.hpp"

// Ingest feeder/user/price/CES data into a validated Scenario and emit
// schedules, network time series and reports.
//
// Scenario directory layout (CSV for series, JSON for structured data):
//   feeder.json  users.csv  demand.csv  pv.csv  [reactive.csv]  prices.csv
//   [ces.json]   [weights.json]
// Series files are wide: first column t, one column per user id, values in
// kWh (kvarh for reactive). The horizon H is the row count and the grid spans
// one day (dt = 24/H hours). All emission is deterministic: identical inputs
// give byte-identical files.

namespace cesopt {

namespace fs = std::filesystem;

Scenario load_scenario(const fs::path& feeder_file, const fs::path& users_file,
                       const fs::path& demand_file, const fs::path& pv_file,
                       const fs::path& reactive_file, const fs::path& prices_file,
                       const fs::path& ces_file, const fs::path& weights_file);

// Directory convention wrapper; missing optional files fall back to defaults
// (no reactive demand, no CES, ratio-2 AHP weights).
Scenario load_scenario(const fs::path& dir);

// Inverse of load_scenario for round trips and for materializing synthetic
// scenarios.
void write_scenario(const Scenario& scenario, const fs::path& dir);

struct RunArtifacts {
    fs::path schedule_csv;
    fs::path user_schedule_csv;
    fs::path voltages_csv;
    fs::path currents_csv;
    fs::path gridload_csv;
    fs::path report_json;
};

RunArtifacts emit_artifacts(const Scenario& scenario, const SolveReport& report,
                            const Schedule& schedule, const NetworkSeries& net,
                            const fs::path& out_dir);

// Duck-curve-like synthetic day profiles: PV bell centered midday inside the
// daylight window, demand with morning and evening peaks, deterministic
// per-user jitter from the seed.
struct SynthParams {
    int n_users = 55;
    int n_participants = 40;
    int n_intervals = 288;
    std::uint64_t seed = 7;
    int n_buses = 7; // users are spread round-robin over buses 1..n_buses
    double base_load_kw = 0.35;
    double morning_peak_kw = 0.45;
    double evening_peak_kw = 1.05;
    double pv_peak_kw = 2.0;
    double daylight_start_h = 7.0;
    double daylight_end_h = 17.0;
    double jitter = 0.15;
};

struct SynthProfiles {
    std::vector<std::string> ids;
    std::vector<int> bus;
    std::vector<UserKind> kind;
    MatrixXd demand_kwh; // Hxusers
    MatrixXd pv_kwh;
};

SynthProfiles synth_profiles(const SynthParams& params);

} // namespace cesopt
