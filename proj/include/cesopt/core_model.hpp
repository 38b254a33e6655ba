#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "cesopt/errors.hpp"

// Demand-side, trading and storage-device models shared by every trading
// configuration. Everything here is an immutable value type plus pure
// functions; safe to call concurrently.

namespace cesopt {

using Eigen::VectorXd;

// One-day scheduling horizon split into equal intervals.
struct TimeGrid {
    int num_intervals = 0;     // H
    double interval_hours = 0; // dt

    double horizon_hours() const { return num_intervals * interval_hours; }

    // H >= 1, dt > 0, H*dt <= 24 h.
    static TimeGrid make(int num_intervals, double interval_hours);
    // Full-day grid: dt = 24/H.
    static TimeGrid day(int num_intervals) { return make(num_intervals, 24.0 / num_intervals); }
};

enum class UserKind { participant, non_participant };

// A household connected to a feeder bus. Participants own rooftop PV and may
// trade; non-participants are plain loads.
struct UserProfile {
    std::string id;
    int bus = 0;
    UserKind kind = UserKind::non_participant;
    VectorXd demand_kwh;     // per-interval energy demand, >= 0
    VectorXd pv_kwh;         // per-interval PV generation, >= 0, zero for non-participants
    VectorXd reactive_kvarh; // optional reactive demand; empty means all-zero

    bool is_participant() const { return kind == UserKind::participant; }
    void validate(int num_intervals) const;
};

// Shared storage device parameters and initial state.
struct CesSpec {
    int bus = 0;
    double b_max_kwh = 0;
    double b_min_kwh = 0;
    double gamma_ch_kw = 0;  // max charge power
    double gamma_dis_kw = 0; // max discharge power
    double eta_c = 1.0;      // charge efficiency, in (0,1]
    double eta_d = 1.0;      // discharge efficiency, >= 1
    double b0_kwh = 0;       // initial charge
    double theta_kwh = 1.0;  // end-of-day continuity tolerance

    void validate() const;
};

// Per-user decision outcome: e[t] = l[t] + y[t] at every interval.
struct UserSchedule {
    VectorXd grid_kwh; // l: trade with the grid (+ buy, - sell)
    VectorXd ces_kwh;  // y: trade with the storage
    VectorXd net_kwh;  // e: net deficit (demand - PV)
};

// Which energy-exchange paths are open to participants.
enum class EtsVariant { ets1, ets2, ets3, baseline };

const char* to_string(EtsVariant v);
EtsVariant variant_from_string(const std::string& s);

// Net deficit series e = demand - pv. Participants only.
VectorXd net_energy(const UserProfile& profile);

// Index sets of deficit (e >= 0) and surplus (e < 0) users at interval t.
struct UserPartition {
    std::vector<int> deficit;
    std::vector<int> surplus;
};
UserPartition classify_users(const std::vector<VectorXd>& deficits, int t);

// Energy actually flowing in/out of the storage, per variant:
//   ETS1/2: e_s = e_g - (sume_n - E_P)   (users' CES trades are e_n - l_n)
//   ETS3:   e_s = e_g
//   baseline: identically zero.
VectorXd ces_flow_series(EtsVariant ets, const VectorXd& grid_trade_kwh,
                         const VectorXd& user_grid_total_kwh, const VectorXd& net_total_kwh);

// End-of-interval charge level b[t], recursively from b0 with the piecewise
// efficiency (eta_c when charging, eta_d when discharging).
VectorXd soc_trajectory(const CesSpec& ces, const VectorXd& ces_flow_kwh);

struct CesViolation {
    enum class Kind { power, capacity, continuity };
    Kind kind;
    int t;         // interval (continuity reports H-1)
    double amount; // breach magnitude: kW for power, kWh otherwise
};

// Every interval where a power rating or capacity bound is breached beyond
// tol, plus a continuity violation when |b[H-1] - b0| > theta + tol.
std::vector<CesViolation> check_ces_feasibility(const CesSpec& ces, const VectorXd& ces_flow_kwh,
                                                const TimeGrid& grid, double tol_kwh);

// Split the aggregate grid trade E_P(t) across users proportionally to their
// deficits; with mixed deficit/surplus signs every grid trade is zero.
struct Disaggregation {
    std::vector<double> grid_kwh; // l_n
    std::vector<double> ces_kwh;  // y_n = e_n - l_n
};
Disaggregation disaggregate(double user_grid_total_kwh, const std::vector<double>& deficits_kwh);

} // namespace cesopt
