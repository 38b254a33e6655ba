#pragma once

#include <Eigen/Core>

#include "cesopt/errors.hpp"

// Convex QP for one day of storage dispatch, in the reduced variable space
// (charge p_t, discharge m_t >= 0 per interval):
//
//   minimize   sum_t 0.5*quad_t*(p_t - m_t)^2 + lin_t*(p_t - m_t)
//   subject to 0 <= p_t <= p_ub_t,  0 <= m_t <= m_ub_t
//              w_lo_t <= p_t - m_t <= w_hi_t                    (+/-inf disables)
//              s_lo_t <= sum_{tau<=t} (charge_gain*p_tau - discharge_gain*m_tau) <= s_hi_t
//
// Solved by an infeasible-start Mehrotra predictor-corrector interior-point
// method. The cumulative rows are handled through their prefix-sum structure,
// so each Newton step costs one dense Cholesky of a 2Hx2H matrix assembled in
// O(H^2). Deterministic: fixed iteration order, no randomness, no threads.
//
// Two tiny perturbations are part of the solved problem and recorded in the
// options: a throughput tie-break eps*sum(p_t + m_t) that resolves the
// charge/discharge split degeneracy toward minimal simultaneous flow, and a
// quadratic ridge keeping the Newton systems positive definite. Both are
// scaled to the normalized objective and sit far below every external
// tolerance.

namespace cesopt {

using Eigen::VectorXd;

struct DispatchQp {
    VectorXd quad;         // >= 0, per interval
    VectorXd lin;
    VectorXd p_ub, m_ub;   // charge/discharge caps per interval (kWh)
    VectorXd w_lo, w_hi;   // net-flow windows; +/-inf one-sided
    double charge_gain = 1.0;
    double discharge_gain = 1.0;
    VectorXd s_lo, s_hi;   // cumulative (state-of-charge) windows

    int horizon() const { return static_cast<int>(quad.size()); }
    void validate() const;
};

struct QpOptions {
    int max_iterations = 200;
    double feas_tol = 1e-8;        // absolute primal residual, kWh
    double dual_tol = 1e-8;        // stationarity residual on the normalized objective
    double gap_tol = 1e-11;        // mean complementarity on the normalized objective
    double tie_break = 1e-8;       // throughput tie-break weight (normalized objective)
    double ridge = 1e-10;          // quadratic regularization (normalized objective)
    // fallback acceptance when the Newton systems hit their conditioning
    // floor; feasibility/gap two orders tighter than the external 1e-6
    // contract, stationarity at the contract itself (degenerate vertices can
    // pin the dual residual near 1e-7 in double precision)
    double relaxed_feas_tol = 1e-7;
    double relaxed_dual_tol = 1e-6;
    double relaxed_gap_tol = 1e-9;
};

struct QpSolution {
    VectorXd charge, discharge;    // p, m
    double objective = 0;          // original objective at the solution (no perturbations)
    int iterations = 0;
    double primal_residual = 0;    // inf-norm over all rows, kWh
    double dual_residual = 0;      // inf-norm, normalized objective scale
    double complementarity = 0;    // final mean s*z, normalized objective scale
};

// Throws NonConvergence when tolerances cannot be met within the iteration
// cap; feasibility of the model itself is the caller's concern (the assembler
// pre-checks reachability and names clashing constraints).
QpSolution solve_dispatch_qp(const DispatchQp& qp, const QpOptions& opts = {});

} // namespace cesopt
