#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "cesopt/core_model.hpp"
#include "cesopt/network.hpp"

namespace cesopt {

// Objective weights w1 (energy cost) and w2 (network loss); w1 + w2 = 1.
struct WeightSpec {
    double w1 = 0.5;
    double w2 = 0.5;
    void validate() const;
};

// Immutable bundle of feeder, user profiles, price signal, CES spec, time
// grid and weights. Built by scenario loading (or by hand in tests) and
// shared read-only by every solve.
struct Scenario {
    FeederSpec feeder;
    std::vector<UserProfile> users;
    VectorXd prices; // lambda_g(t), currency/kWh
    std::optional<CesSpec> ces;
    TimeGrid grid;
    WeightSpec weights;

    int num_participants() const;
    // sum_n e_n(t) over participants
    VectorXd net_total_kwh() const;
    // E_N(t): total demand of non-participating users
    VectorXd nonparticipant_total_kwh() const;
    // per-participant net deficit series, in user order
    std::vector<VectorXd> participant_deficits() const;
    std::vector<std::string> participant_ids() const;

    void validate() const;
};

} // namespace cesopt
