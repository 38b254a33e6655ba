#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "cesopt/core_model.hpp"
#include "cesopt/dispatch_qp.hpp"
#include "cesopt/network.hpp"
#include "cesopt/scenario.hpp"

// Multi-objective convex program per trading configuration: individual
// objective solves, utopia/nadir bounds, weighted scalarization, AHP weights,
// disaggregation and schedule evaluation.

namespace cesopt {

// Principal-eigenvector weights from a 2x2 positive reciprocal pairwise
// comparison matrix (power iteration to 1e-10).
WeightSpec ahp_weights(const Eigen::MatrixXd& pairwise);

// f_cost = sum_t lambda(t)*(E_P(t) + e_g(t)).
double total_cost(const VectorXd& user_grid_kwh, const VectorXd& ces_grid_kwh,
                  const VectorXd& prices);

// Full decision: aggregate user grid trade, CES-provider grid trade, and the
// nonnegative charge/discharge split of the storage flow.
struct DecisionVector {
    VectorXd user_grid_kwh; // E_P
    VectorXd ces_grid_kwh;  // e_g
    VectorXd charge_kwh;    // e_s+ >= 0
    VectorXd discharge_kwh; // e_s- >= 0

    VectorXd ces_flow_kwh() const { return charge_kwh - discharge_kwh; }
};

struct ScalarizationBounds {
    double cost_utopia = 0, cost_nadir = 0;
    double loss_utopia_kwh = 0, loss_nadir_kwh = 0;
};

struct SolveDiagnostics {
    int iterations = 0;
    double kkt_stationarity = 0;
    double kkt_feasibility = 0;
    double complementarity_gap = 0;
};

struct Schedule {
    DecisionVector decision;
    VectorXd ces_flow_kwh; // e_s = e_s+ - e_s-
    VectorXd soc_kwh;
    std::vector<UserSchedule> users; // participants, scenario order
    std::vector<std::string> user_ids;
    EtsVariant variant = EtsVariant::baseline;
    SolveDiagnostics diagnostics; // from the solve that produced the schedule
};

// Where a reduced storage-flow bound came from, for infeasibility reports.
struct BoundSource {
    enum class Kind { none, voltage_floor, voltage_ceiling, current_limit };
    Kind kind = Kind::none;
    int index = 0; // bus or line
    std::string describe(int t) const;
};

// Self-contained description of one variant's convex program. Variables are
// the 4H entries of DecisionVector; e_g is tied to e_s through the flow
// identity and E_P through its per-interval box; the N*H linear voltage rows
// and |E|*H convex quadratic current rows are stored in exactly-reduced form
// as per-interval windows on the storage flow, with provenance per bound.
struct ConvexProgram {
    EtsVariant variant = EtsVariant::baseline;
    TimeGrid grid;
    int n_buses = 0, n_lines = 0;

    VectorXd prices;
    VectorXd net_total_kwh; // sum_n e_n(t)
    std::vector<VectorXd> participant_deficits;
    std::vector<std::string> participant_ids;

    // f_loss(t) = loss_quad*e_s^2 + loss_lin(t)*e_s + loss_offset(t), in kWh
    double loss_quad = 0;
    VectorXd loss_lin, loss_offset_kwh;

    bool has_ces = false;
    CesSpec ces;
    double charge_cap_kwh = 0, discharge_cap_kwh = 0; // gamma*dt

    VectorXd es_lo, es_hi; // network windows on e_s (+/-inf when unconstrained)
    std::vector<BoundSource> es_lo_src, es_hi_src;

    VectorXd ep_lo, ep_hi; // E_P box; lo == hi means pinned

    int n_variables() const { return 4 * grid.num_intervals; }
    int n_free_variables() const;
    long n_linear_constraints() const;    // voltage rows + SOC/identity/box rows
    long n_quadratic_constraints() const; // current rows
};

ConvexProgram assemble_problem(const Scenario& scenario, EtsVariant variant);

enum class Objective { cost, loss };

struct SingleSolve {
    DecisionVector decision;
    double objective = 0; // f_cost (currency) or f_loss (kWh)
    SolveDiagnostics diagnostics;
};

SingleSolve solve_single(const ConvexProgram& program, Objective objective);

ScalarizationBounds scalarization_bounds(const ConvexProgram& program);

// Normalized weighted objective value; degenerate spans (<= 1e-12) contribute 0.
double scalarized_value(double f_cost, double f_loss_kwh, const ScalarizationBounds& bounds,
                        const WeightSpec& weights);

Schedule solve_scalarized(const ConvexProgram& program, const WeightSpec& weights,
                          const ScalarizationBounds& bounds);

// No-CES reference: participants trade only with the grid.
Schedule baseline_schedule(const Scenario& scenario);

struct ParetoPoint {
    WeightSpec weights;
    double f_cost = 0;
    double f_loss_kwh = 0;
};
std::vector<ParetoPoint> pareto_sweep(const Scenario& scenario, EtsVariant variant, int steps);

struct AuditReport {
    std::vector<CesViolation> ces;
    std::vector<NetworkViolation> network;
    std::size_t total() const { return ces.size() + network.size(); }
};

struct SolveReport {
    EtsVariant variant = EtsVariant::baseline;
    double f_cost = 0;
    double f_loss_kwh = 0;
    double revenue = 0; // -f_cost
    double scalarized = 0;
    ScalarizationBounds bounds;
    WeightSpec weights;
    VectorXd grid_load_kwh; // E(t) = E_P + E_N + e_g
    double peak_import_kwh = 0; // max_t E(t)
    double peak_export_kwh = 0; // min_t E(t)
    AuditReport violations;
    SolveDiagnostics diagnostics;
};

// Recomputes both objectives from scratch through the network chain
// (independent of solver internals), builds the grid-load series and peaks,
// and runs the CES and network feasibility audits at audit_tol.
SolveReport evaluate_schedule(const Scenario& scenario, const Schedule& schedule,
                              const ScalarizationBounds& bounds = {},
                              const WeightSpec& weights = {}, double audit_tol = 1e-6);

// Network state of one schedule (for artifact emission).
NetworkSeries schedule_network_series(const Scenario& scenario, const Schedule& schedule);

// max_t e_s+(t)*e_s-(t): simultaneous charge/discharge audit.
double complementarity_defect(const DecisionVector& decision);

} // namespace cesopt
