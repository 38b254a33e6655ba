#include "cesopt/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace cesopt {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
} // namespace

WeightSpec ahp_weights(const Eigen::MatrixXd& pairwise) {
    if (pairwise.rows() != 2 || pairwise.cols() != 2) {
        throw InvalidArgument("ahp_weights: expected a 2x2 pairwise matrix");
    }
    for (int i = 0; i < 2; ++i) {
        if (std::abs(pairwise(i, i) - 1.0) > 1e-9) {
            throw InvalidArgument("ahp_weights: diagonal entries must be 1");
        }
        for (int j = 0; j < 2; ++j) {
            if (!(pairwise(i, j) > 0.0)) {
                throw InvalidArgument("ahp_weights: entries must be positive");
            }
            if (std::abs(pairwise(i, j) * pairwise(j, i) - 1.0) > 1e-9) {
                throw InvalidArgument("ahp_weights: matrix is not reciprocal");
            }
        }
    }
    Eigen::Vector2d v(0.5, 0.5);
    for (int it = 0; it < 10000; ++it) {
        Eigen::Vector2d next = pairwise * v;
        next /= next.sum();
        const double delta = (next - v).cwiseAbs().maxCoeff();
        v = next;
        if (delta <= 1e-10) break;
    }
    return WeightSpec{v[0], v[1]};
}

double total_cost(const VectorXd& user_grid_kwh, const VectorXd& ces_grid_kwh,
                  const VectorXd& prices) {
    if (user_grid_kwh.size() != prices.size() || ces_grid_kwh.size() != prices.size()) {
        throw InvalidArgument("total_cost: series length mismatch");
    }
    return prices.dot(user_grid_kwh + ces_grid_kwh);
}

std::string BoundSource::describe(int t) const {
    std::ostringstream out;
    switch (kind) {
        case Kind::none: out << "power rating"; break;
        case Kind::voltage_floor: out << "voltage lower limit at bus " << index; break;
        case Kind::voltage_ceiling: out << "voltage upper limit at bus " << index; break;
        case Kind::current_limit: out << "current limit on line " << index; break;
    }
    out << " (t=" << t << ")";
    return out.str();
}

int ConvexProgram::n_free_variables() const {
    if (variant == EtsVariant::baseline) return 0;
    int pinned = 0;
    for (int t = 0; t < grid.num_intervals; ++t) {
        if (ep_lo[t] == ep_hi[t]) ++pinned;
    }
    return n_variables() - pinned;
}

long ConvexProgram::n_linear_constraints() const {
    const long horizon = grid.num_intervals;
    // voltage rows + SOC recursion + flow identities + continuity
    return static_cast<long>(n_buses) * horizon + 2 * horizon + 1;
}

long ConvexProgram::n_quadratic_constraints() const {
    return static_cast<long>(n_lines) * grid.num_intervals;
}

namespace {

// tighten a window bound, remembering where it came from
struct WindowBuilder {
    double lo = -kInf, hi = kInf;
    BoundSource lo_src, hi_src;

    void raise_lo(double v, BoundSource src) {
        if (v > lo) {
            lo = v;
            lo_src = src;
        }
    }
    void drop_hi(double v, BoundSource src) {
        if (v < hi) {
            hi = v;
            hi_src = src;
        }
    }
};

// piecewise-linear SOC gain u = eta_c*p - eta_d*m reachable per interval, given
// the boxes and the net-flow window; mirrors the split relaxation exactly
struct GainRange {
    double lo, hi;
};
GainRange gain_range(double e_lo, double e_hi, double p_cap, double m_cap, double eta_c,
                     double eta_d) {
    const double lo_e = std::max(e_lo, -m_cap);
    const double hi_e = std::min(e_hi, p_cap);
    auto phi = [&](double e) { return e >= 0.0 ? eta_c * e : eta_d * e; };
    // max gain: minimal simultaneous flow, monotone in e
    const double hi_u = phi(hi_e);
    // min gain at net flow e: burn as much as the boxes allow
    auto min_u = [&](double e) {
        const double burn = std::min(m_cap, p_cap - e);
        return (eta_c - eta_d) * std::max(burn, 0.0) + eta_c * e;
    };
    double lo_u = std::min(min_u(lo_e), min_u(hi_e));
    const double kink = p_cap - m_cap;
    if (kink > lo_e && kink < hi_e) lo_u = std::min(lo_u, min_u(kink));
    return {lo_u, hi_u};
}

DispatchQp build_qp(const ConvexProgram& prog, double cost_weight, double loss_weight) {
    const int horizon = prog.grid.num_intervals;
    DispatchQp qp;
    qp.quad = VectorXd::Constant(horizon, 2.0 * loss_weight * prog.loss_quad);
    qp.lin = cost_weight * prog.prices + loss_weight * prog.loss_lin;
    qp.p_ub = VectorXd::Constant(horizon, prog.charge_cap_kwh);
    qp.m_ub = VectorXd::Constant(horizon, prog.discharge_cap_kwh);
    qp.w_lo = prog.es_lo;
    qp.w_hi = prog.es_hi;
    qp.charge_gain = prog.ces.eta_c;
    qp.discharge_gain = prog.ces.eta_d;
    qp.s_lo = VectorXd::Constant(horizon, prog.ces.b_min_kwh - prog.ces.b0_kwh);
    qp.s_hi = VectorXd::Constant(horizon, prog.ces.b_max_kwh - prog.ces.b0_kwh);
    qp.s_lo[horizon - 1] =
        std::max(prog.ces.b_min_kwh, prog.ces.b0_kwh - prog.ces.theta_kwh) - prog.ces.b0_kwh;
    qp.s_hi[horizon - 1] =
        std::min(prog.ces.b_max_kwh, prog.ces.b0_kwh + prog.ces.theta_kwh) - prog.ces.b0_kwh;
    return qp;
}

double program_cost(const ConvexProgram& prog, const DecisionVector& dec) {
    return prog.prices.dot(dec.user_grid_kwh + dec.ces_grid_kwh);
}

double program_loss(const ConvexProgram& prog, const DecisionVector& dec) {
    const VectorXd es = dec.ces_flow_kwh();
    double loss = prog.loss_offset_kwh.sum();
    for (int t = 0; t < es.size(); ++t) {
        loss += prog.loss_quad * es[t] * es[t] + prog.loss_lin[t] * es[t];
    }
    return loss;
}

DecisionVector decision_from_flow(const ConvexProgram& prog, const VectorXd& charge,
                                  const VectorXd& discharge) {
    const int horizon = prog.grid.num_intervals;
    DecisionVector dec;
    dec.charge_kwh = charge;
    dec.discharge_kwh = discharge;

    // canonical re-split: unless the solution genuinely needed simultaneous
    // charge/discharge to stay inside capacity, represent e_s one-sidedly
    const VectorXd es = charge - discharge;
    VectorXd p_hat = es.cwiseMax(0.0);
    VectorXd m_hat = (-es).cwiseMax(0.0);
    if (prog.has_ces) {
        const VectorXd soc = soc_trajectory(prog.ces, es);
        bool ok = true;
        for (int t = 0; t < horizon && ok; ++t) {
            if (soc[t] > prog.ces.b_max_kwh + 1e-7 || soc[t] < prog.ces.b_min_kwh - 1e-7) {
                ok = false;
            }
        }
        if (ok && std::abs(soc[horizon - 1] - prog.ces.b0_kwh) <= prog.ces.theta_kwh + 1e-7) {
            dec.charge_kwh = p_hat;
            dec.discharge_kwh = m_hat;
        }
    }

    dec.user_grid_kwh = 0.5 * (prog.ep_lo + prog.ep_hi);
    switch (prog.variant) {
        case EtsVariant::ets3:
            dec.ces_grid_kwh = dec.ces_flow_kwh();
            break;
        case EtsVariant::baseline:
            dec.ces_grid_kwh = VectorXd::Zero(horizon);
            break;
        default:
            dec.ces_grid_kwh = dec.ces_flow_kwh() + prog.net_total_kwh - dec.user_grid_kwh;
            break;
    }
    return dec;
}

DecisionVector baseline_decision(const ConvexProgram& prog) {
    const int horizon = prog.grid.num_intervals;
    DecisionVector dec;
    dec.user_grid_kwh = prog.net_total_kwh;
    dec.ces_grid_kwh = VectorXd::Zero(horizon);
    dec.charge_kwh = VectorXd::Zero(horizon);
    dec.discharge_kwh = VectorXd::Zero(horizon);
    return dec;
}

SingleSolve run_solve(const ConvexProgram& prog, double cost_weight, double loss_weight) {
    SingleSolve out;
    if (prog.variant == EtsVariant::baseline) {
        out.decision = baseline_decision(prog);
        return out;
    }
    const DispatchQp qp = build_qp(prog, cost_weight, loss_weight);
    const QpSolution sol = solve_dispatch_qp(qp);
    out.decision = decision_from_flow(prog, sol.charge, sol.discharge);
    out.diagnostics.iterations = sol.iterations;
    out.diagnostics.kkt_stationarity = sol.dual_residual;
    out.diagnostics.kkt_feasibility = sol.primal_residual;
    out.diagnostics.complementarity_gap = sol.complementarity;
    return out;
}

void fill_user_schedules(Schedule& schedule, const ConvexProgram& prog,
                         const std::vector<VectorXd>& deficits,
                         const std::vector<std::string>& ids) {
    const int horizon = prog.grid.num_intervals;
    const int n_users = static_cast<int>(deficits.size());
    schedule.user_ids = ids;
    schedule.users.assign(n_users, UserSchedule{});
    for (int n = 0; n < n_users; ++n) {
        schedule.users[n].grid_kwh = VectorXd::Zero(horizon);
        schedule.users[n].ces_kwh = VectorXd::Zero(horizon);
        schedule.users[n].net_kwh = deficits[n];
    }
    for (int t = 0; t < horizon; ++t) {
        std::vector<double> e_t(n_users);
        for (int n = 0; n < n_users; ++n) e_t[n] = deficits[n][t];
        switch (schedule.variant) {
            case EtsVariant::ets2:
                for (int n = 0; n < n_users; ++n) schedule.users[n].ces_kwh[t] = e_t[n];
                break;
            case EtsVariant::ets3:
            case EtsVariant::baseline:
                for (int n = 0; n < n_users; ++n) schedule.users[n].grid_kwh[t] = e_t[n];
                break;
            case EtsVariant::ets1: {
                const Disaggregation split =
                    disaggregate(schedule.decision.user_grid_kwh[t], e_t);
                for (int n = 0; n < n_users; ++n) {
                    schedule.users[n].grid_kwh[t] = split.grid_kwh[n];
                    schedule.users[n].ces_kwh[t] = split.ces_kwh[n];
                }
                break;
            }
        }
    }
}

} // namespace

ConvexProgram assemble_problem(const Scenario& scenario, EtsVariant variant) {
    scenario.validate();
    if (variant != EtsVariant::baseline && !scenario.ces) {
        throw InvalidScenario("variant " + std::string(to_string(variant)) +
                              " needs a CES device");
    }
    if ((variant == EtsVariant::ets1 || variant == EtsVariant::ets2) &&
        scenario.num_participants() == 0) {
        throw InvalidScenario("variant " + std::string(to_string(variant)) +
                              " needs at least one participating user");
    }

    const int horizon = scenario.grid.num_intervals;
    const FeederSpec& feeder = scenario.feeder;

    ConvexProgram prog;
    prog.variant = variant;
    prog.grid = scenario.grid;
    prog.n_buses = feeder.num_buses();
    prog.n_lines = static_cast<int>(feeder.lines.size());
    prog.prices = scenario.prices;
    prog.net_total_kwh = scenario.net_total_kwh();
    prog.participant_deficits = scenario.participant_deficits();
    prog.participant_ids = scenario.participant_ids();
    prog.has_ces = scenario.ces.has_value();
    if (prog.has_ces) prog.ces = *scenario.ces;

    // fixed network state (everything except the storage flow)
    const PathMatrices pm = build_path_matrices(feeder);
    const Topology topo = analyze_topology(feeder);
    const InjectionSeries inj_fixed =
        bus_injections(feeder, scenario.users, VectorXd(), -1, scenario.grid);
    const LineFlowSeries flows_fixed = line_flows(feeder, inj_fixed);
    const MatrixXd v_fixed = voltages(pm, inj_fixed, feeder.v0_pu);

    const double z_base = feeder.z_base_ohm();
    const double to_pu = 1.0 / (scenario.grid.interval_hours * feeder.s_base_kw());
    const double v0_sq = feeder.v0_pu * feeder.v0_pu;
    const double kappa = feeder.s_base_kw() * scenario.grid.interval_hours / v0_sq;

    std::vector<char> on_ces_path(feeder.lines.size(), 0);
    if (prog.has_ces) {
        for (int l : topo.path_lines[prog.ces.bus]) on_ces_path[l] = 1;
    }

    prog.loss_quad = 0.0;
    prog.loss_lin = VectorXd::Zero(horizon);
    prog.loss_offset_kwh = VectorXd::Zero(horizon);
    for (int l = 0; l < static_cast<int>(feeder.lines.size()); ++l) {
        const double r_pu = feeder.lines[l].r_ohm / z_base;
        prog.loss_offset_kwh +=
            kappa * r_pu *
            (flows_fixed.active_pu.row(l).array().square() +
             flows_fixed.reactive_pu.row(l).array().square())
                .matrix()
                .transpose();
        if (on_ces_path[l]) {
            prog.loss_quad += kappa * r_pu * to_pu * to_pu;
            prog.loss_lin += 2.0 * kappa * r_pu * to_pu * flows_fixed.active_pu.row(l).transpose();
        }
    }

    // E_P box per interval from the per-user trading bounds
    prog.ep_lo = VectorXd::Zero(horizon);
    prog.ep_hi = VectorXd::Zero(horizon);
    const std::vector<VectorXd>& deficits = prog.participant_deficits;
    for (int t = 0; t < horizon; ++t) {
        double deficit_sum = 0.0, surplus_sum = 0.0;
        bool any_deficit = false, any_surplus = false;
        for (const auto& e : deficits) {
            if (e[t] >= 0.0) {
                deficit_sum += e[t];
                any_deficit = true;
            } else {
                surplus_sum += e[t];
                any_surplus = true;
            }
        }
        switch (variant) {
            case EtsVariant::ets1:
                if (any_deficit && any_surplus) {
                    // mixed interval: pinned so the disaggregation rule stays exact
                    prog.ep_lo[t] = prog.ep_hi[t] = 0.0;
                } else {
                    prog.ep_lo[t] = surplus_sum;
                    prog.ep_hi[t] = deficit_sum;
                }
                break;
            case EtsVariant::ets2:
                prog.ep_lo[t] = prog.ep_hi[t] = 0.0;
                break;
            default:
                prog.ep_lo[t] = prog.ep_hi[t] = prog.net_total_kwh[t];
                break;
        }
    }

    if (variant == EtsVariant::baseline) {
        prog.es_lo = VectorXd::Zero(horizon);
        prog.es_hi = VectorXd::Zero(horizon);
        prog.es_lo_src.assign(horizon, {});
        prog.es_hi_src.assign(horizon, {});
        return prog;
    }

    prog.charge_cap_kwh = prog.ces.gamma_ch_kw * scenario.grid.interval_hours;
    prog.discharge_cap_kwh = prog.ces.gamma_dis_kw * scenario.grid.interval_hours;

    // reduce the voltage and current rows to exact per-interval windows on e_s
    prog.es_lo = VectorXd::Constant(horizon, -kInf);
    prog.es_hi = VectorXd::Constant(horizon, kInf);
    prog.es_lo_src.assign(horizon, {});
    prog.es_hi_src.assign(horizon, {});
    const double vmin_sq = feeder.v_min_pu * feeder.v_min_pu;
    const double vmax_sq = feeder.v_max_pu * feeder.v_max_pu;
    const int ces_row = prog.ces.bus - 1;

    for (int t = 0; t < horizon; ++t) {
        WindowBuilder window;
        for (int i = 0; i < prog.n_buses; ++i) {
            const double sens = 2.0 * pm.r_pu(i, ces_row) * to_pu; // dV^2/d(-e_s)
            const double base = v_fixed(i, t);
            if (sens > 1e-15) {
                window.raise_lo((base - vmax_sq) / sens,
                                {BoundSource::Kind::voltage_ceiling, i + 1});
                window.drop_hi((base - vmin_sq) / sens,
                               {BoundSource::Kind::voltage_floor, i + 1});
            } else if (base > vmax_sq + 1e-12 || base < vmin_sq - 1e-12) {
                std::ostringstream msg;
                msg << "voltage at bus " << i + 1 << " (t=" << t
                    << ") breaches its limits and is not influenced by the storage";
                throw InfeasibleProblem(msg.str());
            }
        }
        for (int l = 0; l < prog.n_lines; ++l) {
            if (!feeder.lines[l].i_max_a) continue;
            const double imax_pu = *feeder.lines[l].i_max_a / feeder.i_base_a();
            const double q = flows_fixed.reactive_pu(l, t);
            const double rhs = imax_pu * imax_pu * v0_sq - q * q;
            const double fixed_flow = flows_fixed.active_pu(l, t);
            if (rhs < 0.0) {
                std::ostringstream msg;
                msg << "reactive flow alone exceeds the current limit on line " << l << " (t=" << t
                    << ")";
                throw InfeasibleProblem(msg.str());
            }
            const double span = std::sqrt(rhs);
            if (on_ces_path[l]) {
                window.raise_lo((-span - fixed_flow) / to_pu,
                                {BoundSource::Kind::current_limit, l});
                window.drop_hi((span - fixed_flow) / to_pu,
                               {BoundSource::Kind::current_limit, l});
            } else if (std::abs(fixed_flow) > span + 1e-12) {
                std::ostringstream msg;
                msg << "fixed flow exceeds the current limit on line " << l << " (t=" << t
                    << ") and is not influenced by the storage";
                throw InfeasibleProblem(msg.str());
            }
        }
        const double lo_eff = std::max(window.lo, -prog.discharge_cap_kwh);
        const double hi_eff = std::min(window.hi, prog.charge_cap_kwh);
        if (lo_eff > hi_eff) {
            const std::string lo_name = window.lo >= -prog.discharge_cap_kwh
                                            ? window.lo_src.describe(t)
                                            : BoundSource{}.describe(t);
            const std::string hi_name = window.hi <= prog.charge_cap_kwh
                                            ? window.hi_src.describe(t)
                                            : BoundSource{}.describe(t);
            throw InfeasibleProblem("no feasible storage flow: " + lo_name + " against " +
                                    hi_name);
        }
        prog.es_lo[t] = window.lo;
        prog.es_hi[t] = window.hi;
        prog.es_lo_src[t] = window.lo_src;
        prog.es_hi_src[t] = window.hi_src;
    }

    // forward reachability of the capacity windows: names the first step at
    // which power ratings, network windows and capacity clash
    {
        double reach_lo = 0.0, reach_hi = 0.0; // cumulative gain relative to b0
        for (int t = 0; t < horizon; ++t) {
            const GainRange g =
                gain_range(prog.es_lo[t], prog.es_hi[t], prog.charge_cap_kwh,
                           prog.discharge_cap_kwh, prog.ces.eta_c, prog.ces.eta_d);
            reach_lo += g.lo;
            reach_hi += g.hi;
            double cap_lo = prog.ces.b_min_kwh - prog.ces.b0_kwh;
            double cap_hi = prog.ces.b_max_kwh - prog.ces.b0_kwh;
            if (t == horizon - 1) {
                cap_lo = std::max(cap_lo, -prog.ces.theta_kwh);
                cap_hi = std::min(cap_hi, prog.ces.theta_kwh);
            }
            reach_lo = std::max(reach_lo, cap_lo);
            reach_hi = std::min(reach_hi, cap_hi);
            if (reach_lo > reach_hi + 1e-12) {
                std::ostringstream msg;
                msg << "storage capacity window unreachable at t=" << t
                    << " given the power ratings, the capacity/continuity bounds and the "
                    << "network-driven flow windows (binding lower source: "
                    << prog.es_lo_src[t].describe(t) << ")";
                throw InfeasibleProblem(msg.str());
            }
        }
    }
    return prog;
}

SingleSolve solve_single(const ConvexProgram& program, Objective objective) {
    SingleSolve out = objective == Objective::cost ? run_solve(program, 1.0, 0.0)
                                                   : run_solve(program, 0.0, 1.0);
    out.objective = objective == Objective::cost ? program_cost(program, out.decision)
                                                 : program_loss(program, out.decision);
    return out;
}

ScalarizationBounds scalarization_bounds(const ConvexProgram& program) {
    const SingleSolve cost_solve = solve_single(program, Objective::cost);
    const SingleSolve loss_solve = solve_single(program, Objective::loss);
    ScalarizationBounds bounds;
    bounds.cost_utopia = cost_solve.objective;
    bounds.loss_utopia_kwh = loss_solve.objective;
    bounds.cost_nadir = std::max(cost_solve.objective, program_cost(program, loss_solve.decision));
    bounds.loss_nadir_kwh =
        std::max(loss_solve.objective, program_loss(program, cost_solve.decision));
    return bounds;
}

double scalarized_value(double f_cost, double f_loss_kwh, const ScalarizationBounds& bounds,
                        const WeightSpec& weights) {
    double value = 0.0;
    const double cost_span = bounds.cost_nadir - bounds.cost_utopia;
    if (cost_span > 1e-12) value += weights.w1 * (f_cost - bounds.cost_utopia) / cost_span;
    const double loss_span = bounds.loss_nadir_kwh - bounds.loss_utopia_kwh;
    if (loss_span > 1e-12) value += weights.w2 * (f_loss_kwh - bounds.loss_utopia_kwh) / loss_span;
    return value;
}

namespace {

Schedule schedule_from_decision(const ConvexProgram& prog, DecisionVector decision) {
    Schedule schedule;
    schedule.variant = prog.variant;
    schedule.decision = std::move(decision);
    schedule.ces_flow_kwh = schedule.decision.ces_flow_kwh();
    schedule.soc_kwh = prog.has_ces
                           ? soc_trajectory(prog.ces, schedule.ces_flow_kwh)
                           : VectorXd::Zero(prog.grid.num_intervals);
    fill_user_schedules(schedule, prog, prog.participant_deficits, prog.participant_ids);
    return schedule;
}

} // namespace

Schedule solve_scalarized(const ConvexProgram& program, const WeightSpec& weights,
                          const ScalarizationBounds& bounds) {
    weights.validate();
    SingleSolve solve;
    if (program.variant == EtsVariant::baseline) {
        solve = run_solve(program, 0.0, 0.0);
    } else {
        const double cost_span = bounds.cost_nadir - bounds.cost_utopia;
        const double loss_span = bounds.loss_nadir_kwh - bounds.loss_utopia_kwh;
        const double cost_weight = cost_span > 1e-12 ? weights.w1 / cost_span : 0.0;
        const double loss_weight = loss_span > 1e-12 ? weights.w2 / loss_span : 0.0;
        solve = run_solve(program, cost_weight, loss_weight);
    }
    Schedule schedule = schedule_from_decision(program, std::move(solve.decision));
    schedule.diagnostics = solve.diagnostics;
    return schedule;
}

Schedule baseline_schedule(const Scenario& scenario) {
    const ConvexProgram prog = assemble_problem(scenario, EtsVariant::baseline);
    Schedule schedule = schedule_from_decision(prog, baseline_decision(prog));
    if (scenario.ces) {
        schedule.soc_kwh = VectorXd::Constant(prog.grid.num_intervals, scenario.ces->b0_kwh);
    }
    return schedule;
}

std::vector<ParetoPoint> pareto_sweep(const Scenario& scenario, EtsVariant variant, int steps) {
    if (steps < 2) throw InvalidArgument("pareto_sweep: need at least two steps");
    const ConvexProgram prog = assemble_problem(scenario, variant);
    const ScalarizationBounds bounds = scalarization_bounds(prog);
    std::vector<ParetoPoint> front;
    for (int i = 0; i < steps; ++i) {
        const double w1 = static_cast<double>(i) / (steps - 1);
        const WeightSpec weights{w1, 1.0 - w1};
        const Schedule schedule = solve_scalarized(prog, weights, bounds);
        front.push_back({weights, program_cost(prog, schedule.decision),
                         program_loss(prog, schedule.decision)});
    }
    return front;
}

NetworkSeries schedule_network_series(const Scenario& scenario, const Schedule& schedule) {
    const PathMatrices pm = build_path_matrices(scenario.feeder);
    const int ces_bus = scenario.ces ? scenario.ces->bus : -1;
    const InjectionSeries inj = bus_injections(scenario.feeder, scenario.users,
                                               schedule.ces_flow_kwh, ces_bus, scenario.grid);
    return compute_network_series(scenario.feeder, pm, inj, scenario.grid);
}

double complementarity_defect(const DecisionVector& decision) {
    return (decision.charge_kwh.array() * decision.discharge_kwh.array()).maxCoeff();
}

SolveReport evaluate_schedule(const Scenario& scenario, const Schedule& schedule,
                              const ScalarizationBounds& bounds, const WeightSpec& weights,
                              double audit_tol) {
    const int horizon = scenario.grid.num_intervals;
    if (schedule.ces_flow_kwh.size() != horizon ||
        schedule.decision.user_grid_kwh.size() != horizon) {
        throw InvalidArgument("evaluate_schedule: schedule does not match the scenario grid");
    }
    SolveReport report;
    report.variant = schedule.variant;
    report.bounds = bounds;
    report.weights = weights;
    report.f_cost =
        total_cost(schedule.decision.user_grid_kwh, schedule.decision.ces_grid_kwh,
                   scenario.prices);
    report.revenue = -report.f_cost;

    const NetworkSeries net = schedule_network_series(scenario, schedule);
    report.f_loss_kwh = net.total_loss_kwh;
    report.scalarized = scalarized_value(report.f_cost, report.f_loss_kwh, bounds, weights);

    report.grid_load_kwh = schedule.decision.user_grid_kwh + scenario.nonparticipant_total_kwh() +
                           schedule.decision.ces_grid_kwh;
    report.peak_import_kwh = report.grid_load_kwh.maxCoeff();
    report.peak_export_kwh = report.grid_load_kwh.minCoeff();

    if (scenario.ces) {
        report.violations.ces =
            check_ces_feasibility(*scenario.ces, schedule.ces_flow_kwh, scenario.grid, audit_tol);
    }
    report.violations.network = check_network_limits(scenario.feeder, net, audit_tol);
    return report;
}

} // namespace cesopt
