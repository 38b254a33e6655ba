#include "cesopt/core_model.hpp"

#include <cmath>
#include <sstream>

namespace cesopt {

TimeGrid TimeGrid::make(int num_intervals, double interval_hours) {
    if (num_intervals < 1) {
        throw InvalidArgument("TimeGrid: need at least one interval");
    }
    if (!(interval_hours > 0.0)) {
        throw InvalidArgument("TimeGrid: interval length must be positive");
    }
    if (num_intervals * interval_hours > 24.0 + 1e-9) {
        throw InvalidArgument("TimeGrid: horizon exceeds one day");
    }
    return TimeGrid{num_intervals, interval_hours};
}

void UserProfile::validate(int num_intervals) const {
    auto fail = [this](const std::string& what) {
        throw InvalidArgument("user '" + id + "': " + what);
    };
    if (demand_kwh.size() != num_intervals) fail("demand series length mismatch");
    if (pv_kwh.size() != num_intervals) fail("pv series length mismatch");
    if (reactive_kvarh.size() != 0 && reactive_kvarh.size() != num_intervals) {
        fail("reactive series length mismatch");
    }
    if ((demand_kwh.array() < 0.0).any()) fail("negative demand");
    if ((pv_kwh.array() < 0.0).any()) fail("negative pv");
    if (!is_participant() && pv_kwh.size() > 0 && (pv_kwh.array() != 0.0).any()) {
        fail("non-participant with nonzero pv");
    }
}

void CesSpec::validate() const {
    if (!(0.0 <= b_min_kwh && b_min_kwh <= b0_kwh && b0_kwh <= b_max_kwh)) {
        throw InvalidScenario("CES: need 0 <= b_min <= b0 <= b_max");
    }
    if (!(gamma_ch_kw > 0.0) || !(gamma_dis_kw > 0.0)) {
        throw InvalidScenario("CES: power ratings must be positive");
    }
    if (!(eta_c > 0.0 && eta_c <= 1.0)) {
        throw InvalidScenario("CES: charge efficiency must be in (0,1]");
    }
    if (!(eta_d >= 1.0)) {
        throw InvalidScenario("CES: discharge efficiency must be >= 1");
    }
    if (!(theta_kwh > 0.0)) {
        throw InvalidScenario("CES: continuity tolerance must be positive");
    }
}

const char* to_string(EtsVariant v) {
    switch (v) {
        case EtsVariant::ets1: return "ets1";
        case EtsVariant::ets2: return "ets2";
        case EtsVariant::ets3: return "ets3";
        case EtsVariant::baseline: return "baseline";
    }
    return "?";
}

EtsVariant variant_from_string(const std::string& s) {
    if (s == "1" || s == "ets1") return EtsVariant::ets1;
    if (s == "2" || s == "ets2") return EtsVariant::ets2;
    if (s == "3" || s == "ets3") return EtsVariant::ets3;
    if (s == "baseline" || s == "0") return EtsVariant::baseline;
    throw InvalidArgument("unknown ETS variant '" + s + "'");
}

VectorXd net_energy(const UserProfile& profile) {
    if (!profile.is_participant()) {
        throw InvalidArgument("net_energy: user '" + profile.id + "' is not a participant");
    }
    return profile.demand_kwh - profile.pv_kwh;
}

UserPartition classify_users(const std::vector<VectorXd>& deficits, int t) {
    UserPartition part;
    for (int n = 0; n < static_cast<int>(deficits.size()); ++n) {
        if (t < 0 || t >= deficits[n].size()) {
            throw InvalidArgument("classify_users: interval index out of range");
        }
        // e_n(t) = 0 counts as deficit.
        if (deficits[n][t] >= 0.0) {
            part.deficit.push_back(n);
        } else {
            part.surplus.push_back(n);
        }
    }
    return part;
}

VectorXd ces_flow_series(EtsVariant ets, const VectorXd& grid_trade_kwh,
                         const VectorXd& user_grid_total_kwh, const VectorXd& net_total_kwh) {
    const auto len = grid_trade_kwh.size();
    if (user_grid_total_kwh.size() != len || net_total_kwh.size() != len) {
        throw InvalidArgument("ces_flow_series: series length mismatch");
    }
    if (ets == EtsVariant::baseline) {
        return VectorXd::Zero(len);
    }
    if (ets == EtsVariant::ets2 && (user_grid_total_kwh.array().abs() > 1e-9).any()) {
        throw InconsistentSchedule("ces_flow_series: ETS2 requires zero user grid trades");
    }
    if (ets == EtsVariant::ets3 &&
        ((user_grid_total_kwh - net_total_kwh).array().abs() > 1e-9).any()) {
        throw InconsistentSchedule("ces_flow_series: ETS3 requires user grid trades equal to net deficits");
    }
    if (ets == EtsVariant::ets3) {
        return grid_trade_kwh;
    }
    return grid_trade_kwh - (net_total_kwh - user_grid_total_kwh);
}

VectorXd soc_trajectory(const CesSpec& ces, const VectorXd& ces_flow_kwh) {
    VectorXd soc(ces_flow_kwh.size());
    double level = ces.b0_kwh;
    for (Eigen::Index t = 0; t < ces_flow_kwh.size(); ++t) {
        const double flow = ces_flow_kwh[t];
        level += (flow >= 0.0 ? ces.eta_c : ces.eta_d) * flow;
        soc[t] = level;
    }
    return soc;
}

std::vector<CesViolation> check_ces_feasibility(const CesSpec& ces, const VectorXd& ces_flow_kwh,
                                                const TimeGrid& grid, double tol_kwh) {
    std::vector<CesViolation> out;
    const int horizon = grid.num_intervals;
    if (ces_flow_kwh.size() != horizon) {
        throw InvalidArgument("check_ces_feasibility: series length mismatch");
    }
    const double tol_kw = tol_kwh / grid.interval_hours;
    for (int t = 0; t < horizon; ++t) {
        const double power_kw = ces_flow_kwh[t] / grid.interval_hours;
        if (power_kw > ces.gamma_ch_kw + tol_kw) {
            out.push_back({CesViolation::Kind::power, t, power_kw - ces.gamma_ch_kw});
        } else if (power_kw < -ces.gamma_dis_kw - tol_kw) {
            out.push_back({CesViolation::Kind::power, t, -ces.gamma_dis_kw - power_kw});
        }
    }
    const VectorXd soc = soc_trajectory(ces, ces_flow_kwh);
    for (int t = 0; t < horizon; ++t) {
        if (soc[t] > ces.b_max_kwh + tol_kwh) {
            out.push_back({CesViolation::Kind::capacity, t, soc[t] - ces.b_max_kwh});
        } else if (soc[t] < ces.b_min_kwh - tol_kwh) {
            out.push_back({CesViolation::Kind::capacity, t, ces.b_min_kwh - soc[t]});
        }
    }
    const double drift = std::abs(soc[horizon - 1] - ces.b0_kwh);
    if (drift > ces.theta_kwh + tol_kwh) {
        out.push_back({CesViolation::Kind::continuity, horizon - 1, drift - ces.theta_kwh});
    }
    return out;
}

Disaggregation disaggregate(double user_grid_total_kwh, const std::vector<double>& deficits_kwh) {
    double deficit_sum = 0.0, surplus_sum = 0.0;
    bool any_deficit = false, any_surplus = false;
    for (double e : deficits_kwh) {
        if (e >= 0.0) {
            deficit_sum += e;
            any_deficit = true;
        } else {
            surplus_sum += e;
            any_surplus = true;
        }
    }
    const double slack = 1e-9 * (1.0 + std::abs(deficit_sum) + std::abs(surplus_sum));
    if (user_grid_total_kwh < surplus_sum - slack || user_grid_total_kwh > deficit_sum + slack) {
        std::ostringstream msg;
        msg << "disaggregate: aggregate grid trade " << user_grid_total_kwh
            << " outside [" << surplus_sum << ", " << deficit_sum << "]";
        throw InconsistentSchedule(msg.str());
    }

    Disaggregation out;
    out.grid_kwh.resize(deficits_kwh.size(), 0.0);
    out.ces_kwh.resize(deficits_kwh.size(), 0.0);
    const bool uniform = !(any_deficit && any_surplus);
    const double total = deficit_sum + surplus_sum;
    if (uniform && total != 0.0) {
        for (std::size_t n = 0; n < deficits_kwh.size(); ++n) {
            out.grid_kwh[n] = user_grid_total_kwh * deficits_kwh[n] / total;
        }
    }
    // mixed signs (or all-zero deficits): grid trades stay zero
    for (std::size_t n = 0; n < deficits_kwh.size(); ++n) {
        out.ces_kwh[n] = deficits_kwh[n] - out.grid_kwh[n];
    }
    return out;
}

} // namespace cesopt
