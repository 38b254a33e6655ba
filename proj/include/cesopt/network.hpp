#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "cesopt/core_model.hpp"
#include "cesopt/errors.hpp"

// Radial-feeder model: path-impedance matrices, linearized DistFlow voltages,
// line flows, currents, losses and limit checks, plus a nonlinear fixed-point
// oracle used only to validate the linear model.
//
// Internals are per-unit (z_base = v_base^2/s_base, i_base = s_base/v_base);
// everything crossing the module boundary is labeled.

namespace cesopt {

using Eigen::MatrixXd;

struct LineSpec {
    int from = 0;
    int to = 0;
    double r_ohm = 0;
    double x_ohm = 0;
    std::optional<double> i_max_a; // absent = unlimited
};

// Radial graph of buses and lines. Bus 0 is the slack (transformer secondary,
// fixed voltage v0); bus ids must be contiguous 0..N with exactly N lines
// forming a tree rooted at 0.
struct FeederSpec {
    std::vector<int> buses;
    std::vector<LineSpec> lines;
    double v_base_v = 0;
    double s_base_va = 0;
    double v0_pu = 1.0;
    double v_min_pu = 0;
    double v_max_pu = 0;

    int num_buses() const { return static_cast<int>(buses.size()) - 1; } // excluding slack
    double z_base_ohm() const { return v_base_v * v_base_v / s_base_va; }
    double s_base_kw() const { return s_base_va / 1e3; }
    double i_base_a() const { return s_base_va / v_base_v; }

    void validate() const; // throws InvalidTopology / InvalidScenario
};

// Rooted-tree structure derived from a FeederSpec.
struct Topology {
    std::vector<int> parent;      // per bus; parent[0] = -1
    std::vector<int> parent_line; // line index feeding each bus; [0] = -1
    std::vector<int> order;       // buses 1..N, root-outward
    std::vector<std::vector<int>> path_lines; // per bus: lines on the slack path
};
Topology analyze_topology(const FeederSpec& feeder);

// R[i][j] = sum r over lines shared by the slack paths of buses i and j (p.u.),
// likewise X. Symmetric positive definite for positive line resistances.
struct PathMatrices {
    MatrixXd r_pu;
    MatrixXd x_pu;
};
PathMatrices build_path_matrices(const FeederSpec& feeder);

// Bus consumption series in p.u. (positive = consumption); rows are buses
// 1..N, columns are intervals.
struct InjectionSeries {
    MatrixXd active_pu;
    MatrixXd reactive_pu;
};

// Aggregate user net-loads (participants: e_n; non-participants: d_m) per bus,
// plus the CES flow at its bus, converted from kWh/interval to p.u.
// An empty ces_flow (or ces_bus < 0) means no storage device.
InjectionSeries bus_injections(const FeederSpec& feeder, const std::vector<UserProfile>& users,
                               const VectorXd& ces_flow_kwh, int ces_bus, const TimeGrid& grid);

// Sending-end line flows of the linearized model: flow on line (i,j) sums the
// injections of every bus in the subtree below j. Rows are lines, columns t.
struct LineFlowSeries {
    MatrixXd active_pu;
    MatrixXd reactive_pu;
};
LineFlowSeries line_flows(const FeederSpec& feeder, const InjectionSeries& inj);

// Squared voltages of the linearized DistFlow model,
//   v^2 = v0^2*1 - 2(R*P + X*Q), per interval.
MatrixXd voltages(const PathMatrices& pm, const InjectionSeries& inj, double v0_pu);

// Squared line currents (P^2 + Q^2)/v0^2, per line and interval.
MatrixXd currents_sq(const LineFlowSeries& flows, double v0_pu);

struct LossSeries {
    VectorXd per_step_kwh;
    double total_kwh = 0;
};
LossSeries network_loss(const FeederSpec& feeder, const MatrixXd& currents_sq_pu,
                        const TimeGrid& grid);

// Everything the emitters and audits need about one schedule's network state.
struct NetworkSeries {
    MatrixXd v_sq_pu;      // NxH
    LineFlowSeries flows;  // LxH
    MatrixXd i_sq_pu;      // LxH
    VectorXd loss_per_step_kwh;
    double total_loss_kwh = 0;
};
NetworkSeries compute_network_series(const FeederSpec& feeder, const PathMatrices& pm,
                                     const InjectionSeries& inj, const TimeGrid& grid);

struct NetworkViolation {
    enum class Kind { under_voltage, over_voltage, current };
    Kind kind;
    int index; // bus (voltage) or line (current)
    int t;
    double value_pu_sq;
    double limit_pu_sq;
};

// Every (bus,t) breaching the squared-voltage bounds and every (line,t)
// breaching its squared-current limit beyond tol (tol compares squared p.u.).
std::vector<NetworkViolation> check_network_limits(const FeederSpec& feeder,
                                                   const NetworkSeries& series, double tol);

// Exact squared voltages from the full branch-flow recursion with loss terms,
// solved by fixed-point iteration (sending-end convention, tolerance 1e-8,
// cap 100 sweeps). Validation oracle only; documented convergence region is
// per-bus loading below ~0.5 p.u.
VectorXd nonlinear_distflow(const FeederSpec& feeder, const InjectionSeries& inj, int t);

} // namespace cesopt
