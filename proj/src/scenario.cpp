#include "cesopt/scenario.hpp"

#include <cmath>

namespace cesopt {

void WeightSpec::validate() const {
    if (!(w1 >= 0.0 && w1 <= 1.0 && w2 >= 0.0 && w2 <= 1.0)) {
        throw InvalidArgument("weights must lie in [0,1]");
    }
    if (std::abs(w1 + w2 - 1.0) > 1e-9) {
        throw InvalidArgument("weights must sum to 1");
    }
}

int Scenario::num_participants() const {
    int count = 0;
    for (const auto& u : users) count += u.is_participant() ? 1 : 0;
    return count;
}

VectorXd Scenario::net_total_kwh() const {
    VectorXd total = VectorXd::Zero(grid.num_intervals);
    for (const auto& u : users) {
        if (u.is_participant()) total += u.demand_kwh - u.pv_kwh;
    }
    return total;
}

VectorXd Scenario::nonparticipant_total_kwh() const {
    VectorXd total = VectorXd::Zero(grid.num_intervals);
    for (const auto& u : users) {
        if (!u.is_participant()) total += u.demand_kwh;
    }
    return total;
}

std::vector<VectorXd> Scenario::participant_deficits() const {
    std::vector<VectorXd> out;
    for (const auto& u : users) {
        if (u.is_participant()) out.push_back(u.demand_kwh - u.pv_kwh);
    }
    return out;
}

std::vector<std::string> Scenario::participant_ids() const {
    std::vector<std::string> out;
    for (const auto& u : users) {
        if (u.is_participant()) out.push_back(u.id);
    }
    return out;
}

void Scenario::validate() const {
    feeder.validate();
    TimeGrid::make(grid.num_intervals, grid.interval_hours); // re-checks invariants
    if (prices.size() != grid.num_intervals) {
        throw InvalidScenario("price series length does not match the time grid");
    }
    for (const auto& u : users) {
        u.validate(grid.num_intervals);
        if (u.bus < 1 || u.bus > feeder.num_buses()) {
            throw InvalidScenario("user '" + u.id + "' sits on unknown bus " +
                                  std::to_string(u.bus));
        }
    }
    if (ces) {
        ces->validate();
        if (ces->bus < 1 || ces->bus > feeder.num_buses()) {
            throw InvalidScenario("CES sits on unknown bus " + std::to_string(ces->bus));
        }
    }
    weights.validate();
}

} // namespace cesopt
