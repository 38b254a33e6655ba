#include "cesopt/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cesopt/optimizer.hpp"
#include "cesopt/scenario_io.hpp"

namespace cesopt::cli {

namespace {

struct RunConfig {
    std::string scenario_dir;
    std::string variant = "1";
    std::string weights; // "w1,w2", overrides the scenario weights
    std::string out_dir = "out";
    int steps = 7;
    double tol = 1e-6;
};

WeightSpec resolve_weights(const RunConfig& config, const Scenario& scenario) {
    if (config.weights.empty()) return scenario.weights;
    double w1 = 0, w2 = 0;
    if (std::sscanf(config.weights.c_str(), "%lf,%lf", &w1, &w2) != 2) {
        throw InvalidArgument("--weights expects w1,w2");
    }
    WeightSpec weights{w1, w2};
    weights.validate();
    return weights;
}

struct VariantRun {
    Schedule schedule;
    SolveReport report;
    NetworkSeries net;
};

VariantRun run_variant(const Scenario& scenario, EtsVariant variant, const WeightSpec& weights,
                       double tol) {
    VariantRun run;
    if (variant == EtsVariant::baseline) {
        run.schedule = baseline_schedule(scenario);
        run.report = evaluate_schedule(scenario, run.schedule, {}, weights, tol);
        const double cost = run.report.f_cost;
        const double loss = run.report.f_loss_kwh;
        run.report.bounds = {cost, cost, loss, loss};
        run.report.scalarized = 0.0;
    } else {
        const ConvexProgram program = assemble_problem(scenario, variant);
        const ScalarizationBounds bounds = scalarization_bounds(program);
        run.schedule = solve_scalarized(program, weights, bounds);
        run.report = evaluate_schedule(scenario, run.schedule, bounds, weights, tol);
        run.report.diagnostics = run.schedule.diagnostics;
    }
    run.net = schedule_network_series(scenario, run.schedule);
    return run;
}

void print_summary(std::ostream& out, const SolveReport& report) {
    out << "variant=" << to_string(report.variant) << " f_cost=" << report.f_cost
        << " revenue=" << report.revenue << " f_loss_kwh=" << report.f_loss_kwh
        << " peak_import_kwh=" << report.peak_import_kwh
        << " peak_export_kwh=" << report.peak_export_kwh
        << " violations=" << report.violations.total() << "\n";
}

int cmd_solve(const RunConfig& config) {
    const Scenario scenario = load_scenario(config.scenario_dir);
    const WeightSpec weights = resolve_weights(config, scenario);
    const EtsVariant variant = variant_from_string(config.variant);
    const VariantRun run = run_variant(scenario, variant, weights, config.tol);
    emit_artifacts(scenario, run.report, run.schedule, run.net, config.out_dir);
    print_summary(std::cout, run.report);
    return 0;
}

int cmd_compare(const RunConfig& config) {
    const Scenario scenario = load_scenario(config.scenario_dir);
    const WeightSpec weights = resolve_weights(config, scenario);
    const EtsVariant order[] = {EtsVariant::baseline, EtsVariant::ets1, EtsVariant::ets2,
                                EtsVariant::ets3};
    std::ostringstream table;
    table << "variant,f_cost,revenue,f_loss_kwh,peak_import_kwh,peak_export_kwh,"
             "voltage_violations,current_violations,ces_violations\n";
    for (EtsVariant variant : order) {
        const VariantRun run = run_variant(scenario, variant, weights, config.tol);
        const fs::path sub = fs::path(config.out_dir) / to_string(variant);
        emit_artifacts(scenario, run.report, run.schedule, run.net, sub);
        int volt = 0, curr = 0;
        for (const auto& v : run.report.violations.network) {
            (v.kind == NetworkViolation::Kind::current ? curr : volt)++;
        }
        char line[256];
        std::snprintf(line, sizeof(line), "%s,%.12g,%.12g,%.12g,%.12g,%.12g,%d,%d,%zu\n",
                      to_string(variant), run.report.f_cost, run.report.revenue,
                      run.report.f_loss_kwh, run.report.peak_import_kwh,
                      run.report.peak_export_kwh, volt, curr, run.report.violations.ces.size());
        table << line;
        print_summary(std::cout, run.report);
    }
    fs::create_directories(config.out_dir);
    std::ofstream out(fs::path(config.out_dir) / "compare.csv", std::ios::binary);
    if (!out) throw EmitError("cannot write compare.csv under " + config.out_dir);
    out << table.str();
    return 0;
}

int cmd_pareto(const RunConfig& config) {
    if (config.steps < 2) throw InvalidArgument("--steps must be at least 2");
    const Scenario scenario = load_scenario(config.scenario_dir);
    const EtsVariant variant = variant_from_string(config.variant);
    const auto front = pareto_sweep(scenario, variant, config.steps);
    fs::create_directories(config.out_dir);
    std::ofstream out(fs::path(config.out_dir) / "pareto.csv", std::ios::binary);
    if (!out) throw EmitError("cannot write pareto.csv under " + config.out_dir);
    out << "w1,f_cost,f_loss_kwh\n";
    char line[128];
    for (const auto& point : front) {
        std::snprintf(line, sizeof(line), "%.12g,%.12g,%.12g\n", point.weights.w1, point.f_cost,
                      point.f_loss_kwh);
        out << line;
        std::cout << "w1=" << point.weights.w1 << " f_cost=" << point.f_cost
                  << " f_loss_kwh=" << point.f_loss_kwh << "\n";
    }
    return 0;
}

int cmd_validate(const RunConfig& config) {
    const Scenario scenario = load_scenario(config.scenario_dir);
    const PathMatrices pm = build_path_matrices(scenario.feeder);
    const InjectionSeries inj =
        bus_injections(scenario.feeder, scenario.users, VectorXd(), -1, scenario.grid);
    const MatrixXd linear_sq = voltages(pm, inj, scenario.feeder.v0_pu);

    fs::create_directories(config.out_dir);
    std::ofstream out(fs::path(config.out_dir) / "validation.csv", std::ios::binary);
    if (!out) throw EmitError("cannot write validation.csv under " + config.out_dir);
    out << "t,max_gap_pu,status\n";

    double max_gap = 0.0, gap_sum = 0.0;
    int diverged = 0, converged = 0;
    for (int t = 0; t < scenario.grid.num_intervals; ++t) {
        try {
            const VectorXd oracle_sq = nonlinear_distflow(scenario.feeder, inj, t);
            double gap = 0.0;
            for (int i = 0; i < oracle_sq.size(); ++i) {
                gap = std::max(gap, std::abs(std::sqrt(std::max(linear_sq(i, t), 0.0)) -
                                             std::sqrt(std::max(oracle_sq[i], 0.0))));
            }
            max_gap = std::max(max_gap, gap);
            gap_sum += gap;
            ++converged;
            char line[96];
            std::snprintf(line, sizeof(line), "%d,%.12g,ok\n", t, gap);
            out << line;
        } catch (const OracleDivergence& e) {
            ++diverged;
            out << t << ",nan,diverged\n";
            std::cerr << "t=" << t << ": " << e.what() << "\n";
        }
    }
    std::cout << "intervals=" << scenario.grid.num_intervals << " converged=" << converged
              << " diverged=" << diverged << " max_gap_pu=" << max_gap
              << " mean_gap_pu=" << (converged > 0 ? gap_sum / converged : 0.0) << "\n";
    return 0;
}

struct SynthConfig {
    std::string out_dir;
    std::string preset = "mild";
    std::uint64_t seed = 7;
    int n_users = 55;
    int n_intervals = 288;
    double surplus_ratio = 1.0; // scales PV against demand
};

int cmd_synth(const SynthConfig& config) {
    SynthParams params;
    params.seed = config.seed;
    params.n_users = config.n_users;
    params.n_participants = (config.n_users * 8 + 5) / 11; // ~40 of 55
    params.n_intervals = config.n_intervals;

    FeederSpec feeder;
    feeder.v_base_v = 400.0;
    feeder.s_base_va = 500e3;
    feeder.v0_pu = 1.0;
    feeder.v_min_pu = 0.95;
    feeder.v_max_pu = 1.05;
    feeder.buses = {0, 1, 2, 3, 4, 5, 6, 7};
    for (int b = 0; b < 7; ++b) {
        feeder.lines.push_back({b, b + 1, 0.016, 0.008, 1800.0});
    }

    CesSpec ces;
    ces.bus = 7;
    ces.b_max_kwh = 900.0;
    ces.b_min_kwh = 45.0;
    ces.gamma_ch_kw = 400.0;
    ces.gamma_dis_kw = 400.0;
    ces.eta_c = 0.98;
    ces.eta_d = 1.02;
    ces.b0_kwh = 45.0;
    ces.theta_kwh = 1.0;

    double price_offpeak = 0.27, price_shoulder = 0.28, price_peak = 0.30;
    if (config.preset == "mild") {
        params.pv_peak_kw = 3.3 * config.surplus_ratio;
    } else if (config.preset == "stress") {
        params.pv_peak_kw = 5.6 * config.surplus_ratio;
        params.evening_peak_kw = 3.1;
        params.base_load_kw = 0.4;
        // gentler tariff: the network objectives, not arbitrage, drive dispatch
        price_offpeak = 0.26;
        price_peak = 0.33;
    } else {
        throw InvalidArgument("unknown preset '" + config.preset + "'");
    }

    const SynthProfiles profiles = synth_profiles(params);

    Scenario scenario;
    scenario.feeder = feeder;
    scenario.ces = ces;
    scenario.grid = TimeGrid::day(params.n_intervals);
    for (int u = 0; u < params.n_users; ++u) {
        UserProfile user;
        user.id = profiles.ids[u];
        user.bus = profiles.bus[u];
        user.kind = profiles.kind[u];
        user.demand_kwh = profiles.demand_kwh.col(u);
        user.pv_kwh = profiles.pv_kwh.col(u);
        scenario.users.push_back(std::move(user));
    }
    scenario.prices = VectorXd(params.n_intervals);
    for (int t = 0; t < params.n_intervals; ++t) {
        const double h = (t + 0.5) * scenario.grid.interval_hours;
        double price = price_shoulder;
        if (h < 7.0) price = price_offpeak;
        if (h >= 17.0 && h < 21.0) price = price_peak;
        scenario.prices[t] = price;
    }
    Eigen::MatrixXd ratio2(2, 2);
    ratio2 << 1.0, 2.0, 0.5, 1.0;
    scenario.weights = ahp_weights(ratio2);
    scenario.validate();
    write_scenario(scenario, config.out_dir);
    std::cout << "wrote scenario preset=" << config.preset << " users=" << params.n_users
              << " intervals=" << params.n_intervals << " to " << config.out_dir << "\n";
    return 0;
}

} // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"community energy storage day-ahead scheduling toolkit"};
    app.require_subcommand(1);

    RunConfig config;
    SynthConfig synth;

    auto add_common = [&](CLI::App* cmd, bool needs_variant) {
        cmd->add_option("--scenario-dir", config.scenario_dir, "scenario directory")->required();
        if (needs_variant) {
            cmd->add_option("--ets", config.variant, "variant: 1|2|3|baseline");
        }
        cmd->add_option("--weights", config.weights, "override objective weights as w1,w2");
        cmd->add_option("--out", config.out_dir, "output directory");
        cmd->add_option("--tol", config.tol, "audit tolerance");
    };

    CLI::App* solve = app.add_subcommand("solve", "solve one variant and emit artifacts");
    add_common(solve, true);
    CLI::App* compare = app.add_subcommand("compare", "run baseline and all three variants");
    add_common(compare, false);
    CLI::App* pareto = app.add_subcommand("pareto", "sweep the cost/loss trade-off");
    add_common(pareto, true);
    pareto->add_option("--steps", config.steps, "number of sweep points (>= 2)");
    CLI::App* validate =
        app.add_subcommand("validate", "compare linearized voltages against the nonlinear model");
    add_common(validate, false);

    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic scenario");
    synth_cmd->add_option("--out", synth.out_dir, "scenario directory to create")->required();
    synth_cmd->add_option("--preset", synth.preset, "mild|stress");
    synth_cmd->add_option("--seed", synth.seed, "generator seed");
    synth_cmd->add_option("--users", synth.n_users, "number of users");
    synth_cmd->add_option("--intervals", synth.n_intervals, "intervals per day");
    synth_cmd->add_option("--surplus-ratio", synth.surplus_ratio, "PV amplitude scale");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (solve->parsed()) return cmd_solve(config);
        if (compare->parsed()) return cmd_compare(config);
        if (pareto->parsed()) return cmd_pareto(config);
        if (validate->parsed()) return cmd_validate(config);
        if (synth_cmd->parsed()) return cmd_synth(synth);
    } catch (const InfeasibleProblem& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return 2;
    } catch (const NonConvergence& e) {
        std::cerr << "solver failed to converge: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("cesopt");
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data());
}

} // namespace cesopt::cli
