#include <doctest.h>

#include "cesopt/core_model.hpp"
#include "test_util.hpp"

#include <thread>

using namespace cesopt;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> values) {
    VectorXd v(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (double x : values) v[i++] = x;
    return v;
}

UserProfile participant(std::string id, VectorXd demand, VectorXd pv) {
    UserProfile u;
    u.id = std::move(id);
    u.bus = 1;
    u.kind = UserKind::participant;
    u.demand_kwh = std::move(demand);
    u.pv_kwh = std::move(pv);
    return u;
}

CesSpec small_ces() {
    CesSpec ces;
    ces.bus = 1;
    ces.b_max_kwh = 100.0;
    ces.b_min_kwh = 0.0;
    ces.gamma_ch_kw = 400.0;
    ces.gamma_dis_kw = 400.0;
    ces.eta_c = 0.98;
    ces.eta_d = 1.02;
    ces.b0_kwh = 45.0;
    ces.theta_kwh = 1.0;
    return ces;
}

} // namespace

TEST_SUITE_BEGIN("core-model");

TEST_CASE("time grid invariants") {
    const TimeGrid day = TimeGrid::day(288);
    CHECK(day.num_intervals == 288);
    CHECK(day.interval_hours == doctest::Approx(1.0 / 12.0));
    CHECK(day.horizon_hours() == doctest::Approx(24.0));
    CHECK_THROWS_AS(TimeGrid::make(0, 1.0), InvalidArgument);
    CHECK_THROWS_AS(TimeGrid::make(10, -0.5), InvalidArgument);
    CHECK_THROWS_AS(TimeGrid::make(25, 1.0), InvalidArgument);
}

TEST_CASE("net energy is demand minus pv") {
    CHECK(net_energy(participant("a", vec({2}), vec({5})))[0] == doctest::Approx(-3.0));
    CHECK(net_energy(participant("b", vec({5}), vec({2})))[0] == doctest::Approx(3.0));
    CHECK(net_energy(participant("c", vec({4}), vec({4})))[0] == doctest::Approx(0.0));

    UserProfile plain;
    plain.id = "n";
    plain.kind = UserKind::non_participant;
    plain.demand_kwh = vec({1});
    plain.pv_kwh = vec({0});
    CHECK_THROWS_AS(net_energy(plain), InvalidArgument);
}

TEST_CASE("classification splits on the sign of the deficit") {
    const std::vector<VectorXd> deficits{vec({3}), vec({-1})};
    const UserPartition part = classify_users(deficits, 0);
    CHECK(part.deficit == std::vector<int>{0});
    CHECK(part.surplus == std::vector<int>{1});

    // zero deficit counts as deficit
    const UserPartition zero = classify_users({vec({0})}, 0);
    CHECK(zero.deficit.size() == 1);
    CHECK(zero.surplus.empty());

    const UserPartition empty = classify_users({}, 0);
    CHECK(empty.deficit.empty());
    CHECK(empty.surplus.empty());

    CHECK_THROWS_AS(classify_users(deficits, 1), InvalidArgument);
}

TEST_CASE("classification partitions the participants") {
    testutil::Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = rng.integer(0, 12);
        std::vector<VectorXd> deficits;
        for (int i = 0; i < n; ++i) deficits.push_back(rng.vector(4, -5.0, 5.0));
        const int t = rng.integer(0, 3);
        const UserPartition part = classify_users(deficits, n == 0 ? 0 : t);
        CHECK(part.deficit.size() + part.surplus.size() == deficits.size());
    }
}

TEST_CASE("ces flow per variant") {
    CHECK(ces_flow_series(EtsVariant::ets3, vec({5, -3}), vec({5, -3}), vec({5, -3}))
              .isApprox(vec({5, -3})));
    CHECK(ces_flow_series(EtsVariant::ets2, vec({2}), vec({0}), vec({-4}))[0] ==
          doctest::Approx(6.0));
    CHECK(ces_flow_series(EtsVariant::ets1, vec({0}), vec({3}), vec({3}))[0] ==
          doctest::Approx(0.0));

    SUBCASE("baseline is identically zero regardless of inputs") {
        testutil::Rng rng(5);
        for (int trial = 0; trial < 20; ++trial) {
            const VectorXd e_g = rng.vector(6, -10, 10);
            const VectorXd e_p = rng.vector(6, -10, 10);
            const VectorXd sum_e = rng.vector(6, -10, 10);
            CHECK(ces_flow_series(EtsVariant::baseline, e_g, e_p, sum_e).norm() == 0.0);
        }
    }

    CHECK_THROWS_AS(ces_flow_series(EtsVariant::ets1, vec({1, 2}), vec({0}), vec({0, 0})),
                    InvalidArgument);
    CHECK_THROWS_AS(ces_flow_series(EtsVariant::ets2, vec({1}), vec({2}), vec({2})),
                    InconsistentSchedule);
    CHECK_THROWS_AS(ces_flow_series(EtsVariant::ets3, vec({1}), vec({0}), vec({2})),
                    InconsistentSchedule);
}

TEST_CASE("soc recursion applies the piecewise efficiency") {
    const CesSpec ces = small_ces();
    CHECK(soc_trajectory(ces, vec({10}))[0] == doctest::Approx(54.8));
    CHECK(soc_trajectory(ces, vec({-10}))[0] == doctest::Approx(34.8));
    const VectorXd idle = soc_trajectory(ces, vec({0, 0}));
    CHECK(idle[0] == doctest::Approx(45.0));
    CHECK(idle[1] == doctest::Approx(45.0));
}

TEST_CASE("round trips lose energy whenever the efficiencies are lossy") {
    const CesSpec ces = small_ces();
    const VectorXd soc = soc_trajectory(ces, vec({10, -10}));
    CHECK(soc[1] == doctest::Approx(45.0 + 0.98 * 10 - 1.02 * 10));
    CHECK(soc[1] < 45.0); // strict loss

    testutil::Rng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        CesSpec lossy = small_ces();
        lossy.eta_c = rng.range(0.8, 0.999);
        lossy.eta_d = rng.range(1.001, 1.2);
        const double x = rng.range(0.1, 20.0);
        const VectorXd out = soc_trajectory(lossy, vec({x, -x}));
        CHECK(out[1] < lossy.b0_kwh - 1e-12);
    }
}

TEST_CASE("ces feasibility audit") {
    const TimeGrid grid = TimeGrid::make(1, 1.0 / 12.0);
    CesSpec ces = small_ces();

    SUBCASE("power rating breach") {
        const auto violations = check_ces_feasibility(ces, vec({100}), grid, 1e-9);
        REQUIRE(violations.size() >= 1);
        CHECK(violations.front().kind == CesViolation::Kind::power);
        CHECK(violations.front().amount == doctest::Approx(1200.0 - 400.0));
    }
    SUBCASE("idle storage is feasible") {
        const TimeGrid five = TimeGrid::make(5, 1.0 / 12.0);
        CHECK(check_ces_feasibility(ces, VectorXd::Zero(5), five, 1e-9).empty());
    }
    SUBCASE("capacity breach from the recursion") {
        ces.b_min_kwh = 45.0;
        const TimeGrid one = TimeGrid::make(1, 1.0);
        const auto violations = check_ces_feasibility(ces, vec({-10}), one, 1e-9);
        bool capacity = false;
        for (const auto& v : violations) {
            capacity |= v.kind == CesViolation::Kind::capacity &&
                        v.amount == doctest::Approx(45.0 - 34.8);
        }
        CHECK(capacity);
    }
    SUBCASE("continuity breach") {
        const TimeGrid one = TimeGrid::make(1, 1.0);
        const auto violations = check_ces_feasibility(ces, vec({20}), one, 1e-9);
        bool continuity = false;
        for (const auto& v : violations) continuity |= v.kind == CesViolation::Kind::continuity;
        CHECK(continuity);
    }
}

TEST_CASE("disaggregation follows the proportional rule") {
    SUBCASE("deficit side") {
        const Disaggregation split = disaggregate(3.0, {2.0, 4.0});
        CHECK(split.grid_kwh[0] == doctest::Approx(1.0));
        CHECK(split.grid_kwh[1] == doctest::Approx(2.0));
        CHECK(split.ces_kwh[0] == doctest::Approx(1.0));
        CHECK(split.ces_kwh[1] == doctest::Approx(2.0));
    }
    SUBCASE("surplus side") {
        const Disaggregation split = disaggregate(-3.0, {-2.0, -4.0});
        CHECK(split.grid_kwh[0] == doctest::Approx(-1.0));
        CHECK(split.grid_kwh[1] == doctest::Approx(-2.0));
    }
    SUBCASE("mixed signs zero the grid trades") {
        const Disaggregation split = disaggregate(0.0, {2.0, -1.0});
        CHECK(split.grid_kwh[0] == 0.0);
        CHECK(split.grid_kwh[1] == 0.0);
        CHECK(split.ces_kwh[0] == doctest::Approx(2.0));
        CHECK(split.ces_kwh[1] == doctest::Approx(-1.0));
    }
    SUBCASE("aggregate bound enforced") {
        CHECK_THROWS_AS(disaggregate(7.0, {2.0, 4.0}), InconsistentSchedule);
        CHECK_THROWS_AS(disaggregate(-1.0, {2.0, 4.0}), InconsistentSchedule);
    }
}

TEST_CASE("disaggregation sums to the aggregate and balances per user") {
    testutil::Rng rng(37);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = rng.integer(1, 8);
        const bool surplus_side = rng.unit() < 0.5;
        std::vector<double> deficits(n);
        double total = 0.0;
        for (auto& e : deficits) {
            e = surplus_side ? rng.range(-6.0, 0.0) : rng.range(0.0, 6.0);
            if (surplus_side && e == 0.0) e = -1e-6;
            total += e;
        }
        const double aggregate = surplus_side ? rng.range(total, 0.0) : rng.range(0.0, total);
        const Disaggregation split = disaggregate(aggregate, deficits);
        double grid_sum = 0.0;
        for (int i = 0; i < n; ++i) {
            grid_sum += split.grid_kwh[i];
            CHECK(split.grid_kwh[i] + split.ces_kwh[i] == doctest::Approx(deficits[i]).epsilon(1e-12));
        }
        if (total != 0.0) CHECK(grid_sum == doctest::Approx(aggregate).epsilon(1e-9));
    }
}

TEST_CASE("profile validation catches malformed series") {
    UserProfile user = participant("u", vec({1, 2}), vec({0, 0}));
    CHECK_NOTHROW(user.validate(2));
    SUBCASE("length mismatch") { CHECK_THROWS_AS(user.validate(3), InvalidArgument); }
    SUBCASE("negative demand") {
        user.demand_kwh[0] = -1.0;
        CHECK_THROWS_AS(user.validate(2), InvalidArgument);
    }
    SUBCASE("non-participant with pv") {
        user.kind = UserKind::non_participant;
        user.pv_kwh[1] = 0.5;
        CHECK_THROWS_AS(user.validate(2), InvalidArgument);
    }
}

TEST_CASE("all-zero deficits disaggregate to zero grid trades") {
    const Disaggregation split = disaggregate(0.0, {0.0, 0.0});
    CHECK(split.grid_kwh[0] == 0.0);
    CHECK(split.ces_kwh[1] == 0.0);
}

TEST_CASE("pure functions evaluate safely from several threads") {
    const CesSpec ces = small_ces();
    const VectorXd flow = vec({5, -3, 2, 0});
    VectorXd out[4];
    std::vector<std::thread> workers;
    for (int i = 0; i < 4; ++i) {
        workers.emplace_back([&, i] { out[i] = soc_trajectory(ces, flow); });
    }
    for (auto& w : workers) w.join();
    for (int i = 1; i < 4; ++i) CHECK(out[i] == out[0]);
}

TEST_SUITE_END();
