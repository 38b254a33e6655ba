#include "cesopt/network.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cesopt {

void FeederSpec::validate() const {
    if (!(v_base_v > 0.0) || !(s_base_va > 0.0)) {
        throw InvalidScenario("feeder: bases must be positive");
    }
    if (!(0.0 < v_min_pu && v_min_pu < v0_pu && v0_pu < v_max_pu)) {
        throw InvalidScenario("feeder: need 0 < v_min < v0 < v_max");
    }
    for (const auto& line : lines) {
        if (line.r_ohm < 0.0 || line.x_ohm < 0.0) {
            throw InvalidScenario("feeder: negative line impedance");
        }
        if (line.i_max_a && !(*line.i_max_a > 0.0)) {
            throw InvalidScenario("feeder: current limit must be positive");
        }
    }
    analyze_topology(*this); // throws InvalidTopology on structural problems
}

Topology analyze_topology(const FeederSpec& feeder) {
    const int n_total = static_cast<int>(feeder.buses.size());
    if (n_total < 2) {
        throw InvalidTopology("feeder: need the slack bus and at least one load bus");
    }
    std::vector<bool> seen(n_total, false);
    for (int id : feeder.buses) {
        if (id < 0 || id >= n_total || seen[id]) {
            throw InvalidTopology("feeder: bus ids must be contiguous 0..N");
        }
        seen[id] = true;
    }
    if (static_cast<int>(feeder.lines.size()) != n_total - 1) {
        std::ostringstream msg;
        msg << "feeder: " << n_total - 1 << " buses need " << n_total - 1 << " lines, got "
            << feeder.lines.size();
        throw InvalidTopology(msg.str());
    }

    std::vector<std::vector<std::pair<int, int>>> adj(n_total); // (neighbor, line idx)
    for (int l = 0; l < static_cast<int>(feeder.lines.size()); ++l) {
        const auto& line = feeder.lines[l];
        if (line.from < 0 || line.from >= n_total || line.to < 0 || line.to >= n_total ||
            line.from == line.to) {
            throw InvalidTopology("feeder: line endpoints out of range");
        }
        adj[line.from].push_back({line.to, l});
        adj[line.to].push_back({line.from, l});
    }

    Topology topo;
    topo.parent.assign(n_total, -2);
    topo.parent_line.assign(n_total, -1);
    topo.parent[0] = -1;
    std::vector<int> stack{0};
    while (!stack.empty()) {
        const int bus = stack.back();
        stack.pop_back();
        for (auto [nb, l] : adj[bus]) {
            if (nb == topo.parent[bus]) continue;
            if (topo.parent[nb] != -2) {
                throw InvalidTopology("feeder: lines contain a cycle");
            }
            topo.parent[nb] = bus;
            topo.parent_line[nb] = l;
            topo.order.push_back(nb);
            stack.push_back(nb);
        }
    }
    if (static_cast<int>(topo.order.size()) != n_total - 1) {
        throw InvalidTopology("feeder: not every bus is reachable from the slack");
    }
    topo.path_lines.assign(n_total, {});
    for (int bus : topo.order) {
        topo.path_lines[bus] = topo.path_lines[topo.parent[bus]];
        topo.path_lines[bus].push_back(topo.parent_line[bus]);
    }
    return topo;
}

PathMatrices build_path_matrices(const FeederSpec& feeder) {
    const Topology topo = analyze_topology(feeder);
    const int n = feeder.num_buses();
    const double z_base = feeder.z_base_ohm();

    // membership mask per bus for O(N^2*depth) intersection sums
    std::vector<std::vector<char>> on_path(n + 1, std::vector<char>(feeder.lines.size(), 0));
    for (int bus = 1; bus <= n; ++bus) {
        for (int l : topo.path_lines[bus]) on_path[bus][l] = 1;
    }

    PathMatrices pm;
    pm.r_pu = MatrixXd::Zero(n, n);
    pm.x_pu = MatrixXd::Zero(n, n);
    for (int i = 1; i <= n; ++i) {
        for (int j = i; j <= n; ++j) {
            double r = 0.0, x = 0.0;
            for (int l : topo.path_lines[i]) {
                if (on_path[j][l]) {
                    r += feeder.lines[l].r_ohm / z_base;
                    x += feeder.lines[l].x_ohm / z_base;
                }
            }
            pm.r_pu(i - 1, j - 1) = pm.r_pu(j - 1, i - 1) = r;
            pm.x_pu(i - 1, j - 1) = pm.x_pu(j - 1, i - 1) = x;
        }
    }
    return pm;
}

InjectionSeries bus_injections(const FeederSpec& feeder, const std::vector<UserProfile>& users,
                               const VectorXd& ces_flow_kwh, int ces_bus, const TimeGrid& grid) {
    const int n = feeder.num_buses();
    const int horizon = grid.num_intervals;
    const double to_pu = 1.0 / (grid.interval_hours * feeder.s_base_kw());

    InjectionSeries inj;
    inj.active_pu = MatrixXd::Zero(n, horizon);
    inj.reactive_pu = MatrixXd::Zero(n, horizon);

    for (const auto& user : users) {
        if (user.bus < 1 || user.bus > n) {
            throw InvalidArgument("bus_injections: user '" + user.id + "' references unknown bus " +
                                  std::to_string(user.bus));
        }
        const int row = user.bus - 1;
        if (user.is_participant()) {
            inj.active_pu.row(row) += (user.demand_kwh - user.pv_kwh).transpose() * to_pu;
        } else {
            inj.active_pu.row(row) += user.demand_kwh.transpose() * to_pu;
        }
        if (user.reactive_kvarh.size() > 0) {
            inj.reactive_pu.row(row) += user.reactive_kvarh.transpose() * to_pu;
        }
    }
    if (ces_bus >= 0 && ces_flow_kwh.size() > 0) {
        if (ces_bus < 1 || ces_bus > n) {
            throw InvalidArgument("bus_injections: CES references unknown bus " +
                                  std::to_string(ces_bus));
        }
        if (ces_flow_kwh.size() != horizon) {
            throw InvalidArgument("bus_injections: CES flow series length mismatch");
        }
        inj.active_pu.row(ces_bus - 1) += ces_flow_kwh.transpose() * to_pu;
    }
    return inj;
}

LineFlowSeries line_flows(const FeederSpec& feeder, const InjectionSeries& inj) {
    const Topology topo = analyze_topology(feeder);
    const int horizon = static_cast<int>(inj.active_pu.cols());
    const int n_lines = static_cast<int>(feeder.lines.size());

    LineFlowSeries flows;
    flows.active_pu = MatrixXd::Zero(n_lines, horizon);
    flows.reactive_pu = MatrixXd::Zero(n_lines, horizon);

    // each line starts with the injection of the bus it feeds...
    for (int bus : topo.order) {
        const int line = topo.parent_line[bus];
        flows.active_pu.row(line) += inj.active_pu.row(bus - 1);
        flows.reactive_pu.row(line) += inj.reactive_pu.row(bus - 1);
    }
    // ...then subtree sums accumulate up the tree, children before parents
    for (auto it = topo.order.rbegin(); it != topo.order.rend(); ++it) {
        const int bus = *it;
        const int line = topo.parent_line[bus];
        const int parent = topo.parent[bus];
        if (parent != 0) {
            const int up = topo.parent_line[parent];
            flows.active_pu.row(up) += flows.active_pu.row(line);
            flows.reactive_pu.row(up) += flows.reactive_pu.row(line);
        }
    }
    return flows;
}

MatrixXd voltages(const PathMatrices& pm, const InjectionSeries& inj, double v0_pu) {
    return (v0_pu * v0_pu) +
           (-2.0 * (pm.r_pu * inj.active_pu + pm.x_pu * inj.reactive_pu)).array();
}

MatrixXd currents_sq(const LineFlowSeries& flows, double v0_pu) {
    if (!(v0_pu > 0.0)) {
        throw InvalidArgument("currents_sq: slack voltage must be positive");
    }
    return (flows.active_pu.array().square() + flows.reactive_pu.array().square()) /
           (v0_pu * v0_pu);
}

LossSeries network_loss(const FeederSpec& feeder, const MatrixXd& currents_sq_pu,
                        const TimeGrid& grid) {
    const double z_base = feeder.z_base_ohm();
    LossSeries loss;
    loss.per_step_kwh = VectorXd::Zero(currents_sq_pu.cols());
    for (int l = 0; l < static_cast<int>(feeder.lines.size()); ++l) {
        const double r_pu = feeder.lines[l].r_ohm / z_base;
        loss.per_step_kwh +=
            (r_pu * feeder.s_base_kw() * grid.interval_hours) * currents_sq_pu.row(l).transpose();
    }
    loss.total_kwh = loss.per_step_kwh.sum();
    return loss;
}

NetworkSeries compute_network_series(const FeederSpec& feeder, const PathMatrices& pm,
                                     const InjectionSeries& inj, const TimeGrid& grid) {
    NetworkSeries out;
    out.v_sq_pu = voltages(pm, inj, feeder.v0_pu);
    out.flows = line_flows(feeder, inj);
    out.i_sq_pu = currents_sq(out.flows, feeder.v0_pu);
    const LossSeries loss = network_loss(feeder, out.i_sq_pu, grid);
    out.loss_per_step_kwh = loss.per_step_kwh;
    out.total_loss_kwh = loss.total_kwh;
    return out;
}

std::vector<NetworkViolation> check_network_limits(const FeederSpec& feeder,
                                                   const NetworkSeries& series, double tol) {
    std::vector<NetworkViolation> out;
    const double lo = feeder.v_min_pu * feeder.v_min_pu;
    const double hi = feeder.v_max_pu * feeder.v_max_pu;
    for (int i = 0; i < series.v_sq_pu.rows(); ++i) {
        for (int t = 0; t < series.v_sq_pu.cols(); ++t) {
            const double v = series.v_sq_pu(i, t);
            if (v < lo - tol) {
                out.push_back({NetworkViolation::Kind::under_voltage, i + 1, t, v, lo});
            } else if (v > hi + tol) {
                out.push_back({NetworkViolation::Kind::over_voltage, i + 1, t, v, hi});
            }
        }
    }
    for (int l = 0; l < static_cast<int>(feeder.lines.size()); ++l) {
        if (!feeder.lines[l].i_max_a) continue;
        const double limit_pu = *feeder.lines[l].i_max_a / feeder.i_base_a();
        const double limit_sq = limit_pu * limit_pu;
        for (int t = 0; t < series.i_sq_pu.cols(); ++t) {
            if (series.i_sq_pu(l, t) > limit_sq + tol) {
                out.push_back(
                    {NetworkViolation::Kind::current, l, t, series.i_sq_pu(l, t), limit_sq});
            }
        }
    }
    return out;
}

VectorXd nonlinear_distflow(const FeederSpec& feeder, const InjectionSeries& inj, int t) {
    if (t < 0 || t >= inj.active_pu.cols()) {
        throw InvalidArgument("nonlinear_distflow: interval index out of range");
    }
    const Topology topo = analyze_topology(feeder);
    const int n = feeder.num_buses();
    const int n_lines = static_cast<int>(feeder.lines.size());
    const double z_base = feeder.z_base_ohm();
    const double v0_sq = feeder.v0_pu * feeder.v0_pu;

    VectorXd v_sq = VectorXd::Constant(n + 1, v0_sq); // index by bus id, slack fixed
    VectorXd p_send = VectorXd::Zero(n_lines), q_send = VectorXd::Zero(n_lines);
    VectorXd curr_sq = VectorXd::Zero(n_lines);

    const int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        // backward: sending-end flows, line losses taken from the previous sweep
        VectorXd p_new = VectorXd::Zero(n_lines), q_new = VectorXd::Zero(n_lines);
        for (int bus : topo.order) {
            const int line = topo.parent_line[bus];
            const double r_pu = feeder.lines[line].r_ohm / z_base;
            const double x_pu = feeder.lines[line].x_ohm / z_base;
            p_new[line] += inj.active_pu(bus - 1, t) + r_pu * curr_sq[line];
            q_new[line] += inj.reactive_pu(bus - 1, t) + x_pu * curr_sq[line];
        }
        for (auto it = topo.order.rbegin(); it != topo.order.rend(); ++it) {
            const int bus = *it;
            const int parent = topo.parent[bus];
            if (parent != 0) {
                const int up = topo.parent_line[parent];
                p_new[up] += p_new[topo.parent_line[bus]];
                q_new[up] += q_new[topo.parent_line[bus]];
            }
        }
        p_send = p_new;
        q_send = q_new;

        // forward: update voltages and sending-end squared currents
        double max_delta = 0.0;
        for (int bus : topo.order) {
            const int line = topo.parent_line[bus];
            const int parent = topo.parent[bus];
            const double r_pu = feeder.lines[line].r_ohm / z_base;
            const double x_pu = feeder.lines[line].x_ohm / z_base;
            const double vi_sq = v_sq[parent];
            if (!(vi_sq > 1e-6)) {
                throw OracleDivergence("nonlinear_distflow: voltage collapsed at bus " +
                                       std::to_string(bus));
            }
            const double l_sq =
                (p_send[line] * p_send[line] + q_send[line] * q_send[line]) / vi_sq;
            curr_sq[line] = l_sq;
            const double vj_sq = vi_sq - 2.0 * (r_pu * p_send[line] + x_pu * q_send[line]) +
                                 (r_pu * r_pu + x_pu * x_pu) * l_sq;
            max_delta = std::max(max_delta, std::abs(vj_sq - v_sq[bus]));
            v_sq[bus] = vj_sq;
        }
        if (!std::isfinite(max_delta)) {
            throw OracleDivergence("nonlinear_distflow: iteration blew up at t=" +
                                   std::to_string(t));
        }
        if (max_delta <= 1e-8) {
            return v_sq.tail(n);
        }
    }
    throw OracleDivergence("nonlinear_distflow: no convergence after 100 sweeps at t=" +
                           std::to_string(t));
}

} // namespace cesopt
