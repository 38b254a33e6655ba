#include "cesopt/dispatch_qp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace cesopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum RowKind : int { row_box_p = 0, row_box_m = 1, row_window = 2, row_soc = 3 };

struct Row {
    RowKind kind;
    int t;
    double lo, hi;
    bool has_lo, has_hi;
};

struct Workspace {
    std::vector<Row> rows;
    int horizon = 0;
    double charge_gain = 1, discharge_gain = 1;

    // row values a_r'x for the current x (soc rows need the running sums)
    void row_values(const VectorXd& x, VectorXd& out) const {
        const int n = horizon;
        double cum = 0.0;
        VectorXd soc_val(n);
        for (int t = 0; t < n; ++t) {
            cum += charge_gain * x[t] - discharge_gain * x[n + t];
            soc_val[t] = cum;
        }
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const Row& row = rows[r];
            switch (row.kind) {
                case row_box_p: out[r] = x[row.t]; break;
                case row_box_m: out[r] = x[n + row.t]; break;
                case row_window: out[r] = x[row.t] - x[n + row.t]; break;
                case row_soc: out[r] = soc_val[row.t]; break;
            }
        }
    }

    // out += A' coef
    void add_transpose_product(const VectorXd& coef, VectorXd& out) const {
        const int n = horizon;
        VectorXd soc_coef = VectorXd::Zero(n);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const Row& row = rows[r];
            const double c = coef[r];
            if (c == 0.0) continue;
            switch (row.kind) {
                case row_box_p: out[row.t] += c; break;
                case row_box_m: out[n + row.t] += c; break;
                case row_window:
                    out[row.t] += c;
                    out[n + row.t] -= c;
                    break;
                case row_soc: soc_coef[row.t] += c; break;
            }
        }
        double suffix = 0.0;
        for (int t = n - 1; t >= 0; --t) {
            suffix += soc_coef[t];
            out[t] += charge_gain * suffix;
            out[n + t] -= discharge_gain * suffix;
        }
    }
};

// one exact equality-constrained KKT solve on a pinned working set
struct SnapResult {
    bool ok = false;
    VectorXd x;
    double primal = 0, dual = 0, mu = 0;
};

// crossover from an interior-point guess: pin the near-active sides, solve
// the reduced KKT system exactly, and repair the set one exchange at a time
// until the point verifies. Degenerate vertices that stall the barrier path
// are usually one snap away.
SnapResult active_set_crossover(const Workspace& ws, const VectorXd& quad_n,
                                const VectorXd& lin_n, double ridge, const VectorXd& x_guess,
                                int n_sides) {
    const int n = ws.horizon;
    const int dim = 2 * n;
    const int n_rows = static_cast<int>(ws.rows.size());

    VectorXd val(n_rows);
    ws.row_values(x_guess, val);
    std::vector<std::pair<int, double>> working; // (row, +1 upper / -1 lower)
    for (int r = 0; r < n_rows; ++r) {
        const Row& row = ws.rows[r];
        if (row.has_hi && row.hi - val[r] <= 1e-5) working.push_back({r, 1.0});
        if (row.has_lo && val[r] - row.lo <= 1e-5) working.push_back({r, -1.0});
    }

    SnapResult out;
    const int max_rounds = dim + static_cast<int>(working.size()) > 1500 ? 8 : 200;
    for (int round = 0; round < max_rounds; ++round) {
        const int m = static_cast<int>(working.size());
        Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(dim + m, dim + m);
        for (int t = 0; t < n; ++t) {
            kkt(t, t) = quad_n[t] + ridge;
            kkt(n + t, n + t) = quad_n[t] + ridge;
            kkt(t, n + t) = -quad_n[t];
            kkt(n + t, t) = -quad_n[t];
        }
        Eigen::VectorXd rhs(dim + m);
        rhs.head(dim) = -lin_n;
        VectorXd unit = VectorXd::Zero(n_rows);
        for (int k = 0; k < m; ++k) {
            VectorXd col = VectorXd::Zero(dim);
            unit[working[k].first] = working[k].second;
            ws.add_transpose_product(unit, col);
            unit[working[k].first] = 0.0;
            kkt.block(0, dim + k, dim, 1) = col;
            kkt.block(dim + k, 0, 1, dim) = col.transpose();
            kkt(dim + k, dim + k) = -1e-12;
            const Row& row = ws.rows[working[k].first];
            rhs[dim + k] = working[k].second * (working[k].second > 0 ? row.hi : row.lo);
        }
        const Eigen::VectorXd sol = kkt.partialPivLu().solve(rhs);
        const VectorXd x_c = sol.head(dim);
        const VectorXd duals = sol.tail(m);

        ws.row_values(x_c, val);
        double worst_violation = 0.0;
        int worst_row = -1;
        double worst_side = 0.0;
        for (int r = 0; r < n_rows; ++r) {
            const Row& row = ws.rows[r];
            if (row.has_hi && val[r] - row.hi > worst_violation) {
                worst_violation = val[r] - row.hi;
                worst_row = r;
                worst_side = 1.0;
            }
            if (row.has_lo && row.lo - val[r] > worst_violation) {
                worst_violation = row.lo - val[r];
                worst_row = r;
                worst_side = -1.0;
            }
        }
        int most_negative = -1;
        for (int k = 0; k < m; ++k) {
            if (duals[k] < -1e-9 && (most_negative < 0 || duals[k] < duals[most_negative])) {
                most_negative = k;
            }
        }
        if (worst_violation <= 1e-9 && most_negative < 0) {
            out.ok = true;
            out.x = x_c;
            out.primal = worst_violation;
            // stationarity residual of the snapped point
            VectorXd res = lin_n;
            for (int t = 0; t < n; ++t) {
                const double e = x_c[t] - x_c[n + t];
                res[t] += quad_n[t] * e + ridge * x_c[t];
                res[n + t] += -quad_n[t] * e + ridge * x_c[n + t];
            }
            for (int k = 0; k < m; ++k) {
                VectorXd col = VectorXd::Zero(dim);
                unit[working[k].first] = working[k].second;
                ws.add_transpose_product(unit, col);
                unit[working[k].first] = 0.0;
                res += std::max(duals[k], 0.0) * col;
            }
            out.dual = res.cwiseAbs().maxCoeff();
            double gap = 0.0;
            for (int k = 0; k < m; ++k) {
                const Row& row = ws.rows[working[k].first];
                const double s = working[k].second > 0 ? row.hi - val[working[k].first]
                                                       : val[working[k].first] - row.lo;
                gap += std::max(duals[k], 0.0) * std::max(s, 0.0);
            }
            out.mu = gap / std::max(1, n_sides);
            return out;
        }
        if (most_negative >= 0) {
            working.erase(working.begin() + most_negative);
        } else {
            working.push_back({worst_row, worst_side});
        }
    }
    return out;
}

} // namespace

void DispatchQp::validate() const {
    const int n = horizon();
    if (n < 1) throw InvalidArgument("dispatch qp: empty horizon");
    auto need = [n](const VectorXd& v, const char* name) {
        if (v.size() != n) {
            throw InvalidArgument(std::string("dispatch qp: bad length for ") + name);
        }
    };
    need(lin, "lin");
    need(p_ub, "p_ub");
    need(m_ub, "m_ub");
    need(w_lo, "w_lo");
    need(w_hi, "w_hi");
    need(s_lo, "s_lo");
    need(s_hi, "s_hi");
    if ((quad.array() < 0.0).any()) throw InvalidArgument("dispatch qp: negative curvature");
    if ((p_ub.array() < 0.0).any() || (m_ub.array() < 0.0).any()) {
        throw InvalidArgument("dispatch qp: negative caps");
    }
    if (!(charge_gain > 0.0) || !(discharge_gain > 0.0)) {
        throw InvalidArgument("dispatch qp: gains must be positive");
    }
    for (int t = 0; t < n; ++t) {
        if (w_lo[t] > w_hi[t]) throw InvalidArgument("dispatch qp: empty net-flow window");
        if (s_lo[t] > s_hi[t]) throw InvalidArgument("dispatch qp: empty cumulative window");
    }
}

QpSolution solve_dispatch_qp(const DispatchQp& qp, const QpOptions& opts) {
    qp.validate();
    const int n = qp.horizon();
    const int dim = 2 * n;

    // normalize the objective so the perturbations and dual tolerances are
    // scale-free
    const double cap_scale = std::max(qp.p_ub.maxCoeff(), qp.m_ub.maxCoeff());
    double obj_scale = std::max(qp.lin.cwiseAbs().maxCoeff(),
                                qp.quad.maxCoeff() * std::max(cap_scale, 1.0));
    if (!(obj_scale > 0.0)) obj_scale = 1.0;

    const VectorXd quad_n = qp.quad / obj_scale;
    VectorXd grad_n(dim);
    for (int t = 0; t < n; ++t) {
        grad_n[t] = qp.lin[t] / obj_scale + opts.tie_break;
        grad_n[n + t] = -qp.lin[t] / obj_scale + opts.tie_break;
    }

    Workspace ws;
    ws.horizon = n;
    ws.charge_gain = qp.charge_gain;
    ws.discharge_gain = qp.discharge_gain;
    for (int t = 0; t < n; ++t) ws.rows.push_back({row_box_p, t, 0.0, qp.p_ub[t], true, true});
    for (int t = 0; t < n; ++t) ws.rows.push_back({row_box_m, t, 0.0, qp.m_ub[t], true, true});
    for (int t = 0; t < n; ++t) {
        double lo = qp.w_lo[t], hi = qp.w_hi[t];
        const bool has_lo = std::isfinite(lo), has_hi = std::isfinite(hi);
        if (!has_lo && !has_hi) continue;
        if (has_lo && has_hi && hi - lo < 1e-9) { // widen pinched windows a hair
            const double mid = 0.5 * (lo + hi);
            lo = mid - 5e-10;
            hi = mid + 5e-10;
        }
        ws.rows.push_back({row_window, t, lo, hi, has_lo, has_hi});
    }
    for (int t = 0; t < n; ++t) {
        double lo = qp.s_lo[t], hi = qp.s_hi[t];
        if (hi - lo < 1e-9) {
            const double mid = 0.5 * (lo + hi);
            lo = mid - 5e-10;
            hi = mid + 5e-10;
        }
        ws.rows.push_back({row_soc, t, lo, hi, true, true});
    }
    const int n_rows = static_cast<int>(ws.rows.size());
    int n_sides = 0;
    for (const Row& r : ws.rows) n_sides += (r.has_lo ? 1 : 0) + (r.has_hi ? 1 : 0);

    VectorXd x = VectorXd::Zero(dim);
    VectorXd val(n_rows);
    ws.row_values(x, val);

    VectorXd s_up(n_rows), z_up(n_rows), s_lo(n_rows), z_lo(n_rows);
    for (int r = 0; r < n_rows; ++r) {
        const Row& row = ws.rows[r];
        s_up[r] = row.has_hi ? std::max(row.hi - val[r], 1.0) : 1.0;
        z_up[r] = row.has_hi ? 1.0 : 0.0;
        s_lo[r] = row.has_lo ? std::max(val[r] - row.lo, 1.0) : 1.0;
        z_lo[r] = row.has_lo ? 1.0 : 0.0;
    }

    Eigen::MatrixXd normal(dim, dim);
    Eigen::LLT<Eigen::MatrixXd> llt;
    VectorXd r_up(n_rows), r_lo(n_rows), r_dual(dim);
    VectorXd coef(n_rows), rhs(dim), dx(dim), dx2(dim), adx(n_rows);
    VectorXd ds_up(n_rows), dz_up(n_rows), ds_lo(n_rows), dz_lo(n_rows);
    VectorXd rc_up(n_rows), rc_lo(n_rows);

    QpSolution sol;
    struct Best {
        double score = kInf;
        VectorXd x;
        double primal = kInf, dual = kInf, mu = kInf, objective = 0;
        int iter = 0;
    } best;
    double stall_reference = kInf;
    int stalled = 0;

    for (int iter = 0; iter <= opts.max_iterations; ++iter) {
        ws.row_values(x, val);

        // residuals
        for (int r = 0; r < n_rows; ++r) {
            const Row& row = ws.rows[r];
            r_up[r] = row.has_hi ? val[r] + s_up[r] - row.hi : 0.0;
            r_lo[r] = row.has_lo ? val[r] - s_lo[r] - row.lo : 0.0;
        }
        r_dual = grad_n;
        for (int t = 0; t < n; ++t) {
            const double e = x[t] - x[n + t];
            r_dual[t] += quad_n[t] * e + opts.ridge * x[t];
            r_dual[n + t] += -quad_n[t] * e + opts.ridge * x[n + t];
        }
        coef = z_up - z_lo;
        ws.add_transpose_product(coef, r_dual);

        double gap = 0.0;
        for (int r = 0; r < n_rows; ++r) {
            if (ws.rows[r].has_hi) gap += s_up[r] * z_up[r];
            if (ws.rows[r].has_lo) gap += s_lo[r] * z_lo[r];
        }
        const double mu = gap / std::max(1, n_sides);

        const double primal_res = std::max(r_up.cwiseAbs().maxCoeff(), r_lo.cwiseAbs().maxCoeff());
        const double dual_res = r_dual.cwiseAbs().maxCoeff();

        double obj_now = 0.0;
        for (int t = 0; t < n; ++t) {
            const double e = x[t] - x[n + t];
            obj_now += 0.5 * qp.quad[t] * e * e + qp.lin[t] * e;
        }

        // true constraint violation of an arbitrary point (slack-free)
        auto violation_of = [&](const VectorXd& point) {
            VectorXd v(n_rows);
            ws.row_values(point, v);
            double worst = 0.0;
            for (int r = 0; r < n_rows; ++r) {
                const Row& row = ws.rows[r];
                if (row.has_hi) worst = std::max(worst, v[r] - row.hi);
                if (row.has_lo) worst = std::max(worst, row.lo - v[r]);
            }
            return worst;
        };

        auto fill_solution = [&](const Best* from) {
            if (from) {
                sol.charge = from->x.head(n);
                sol.discharge = from->x.tail(n);
                sol.objective = from->objective;
                sol.iterations = from->iter;
                sol.primal_residual = from->primal;
                sol.dual_residual = from->dual;
                sol.complementarity = from->mu;
            } else {
                sol.charge = x.head(n);
                sol.discharge = x.tail(n);
                sol.objective = obj_now;
                sol.iterations = iter;
                sol.primal_residual = primal_res;
                sol.dual_residual = dual_res;
                sol.complementarity = mu;
            }
            // the simultaneous-flow direction is tie-break-flat at optima; when
            // the one-sided representation of the same net flow stays feasible,
            // return it (it is the minimal-throughput optimum the tie-break
            // points at)
            VectorXd canon(dim);
            const VectorXd net = sol.charge - sol.discharge;
            canon.head(n) = net.cwiseMax(0.0);
            canon.tail(n) = (-net).cwiseMax(0.0);
            VectorXd current(dim);
            current.head(n) = sol.charge;
            current.tail(n) = sol.discharge;
            if ((canon - current).cwiseAbs().maxCoeff() > 0.0 &&
                violation_of(canon) <= std::max(violation_of(current), opts.feas_tol)) {
                sol.charge = canon.head(n);
                sol.discharge = canon.tail(n);
                sol.primal_residual = std::max(violation_of(canon), 0.0);
            }
        };

        if (primal_res <= opts.feas_tol && dual_res <= opts.dual_tol &&
            mu <= opts.gap_tol * (1.0 + std::abs(obj_now) / obj_scale)) {
            fill_solution(nullptr);
            return sol;
        }

        const double score = std::max({primal_res / opts.relaxed_feas_tol,
                                       dual_res / opts.relaxed_dual_tol,
                                       mu / opts.relaxed_gap_tol});
        if (score < best.score) {
            best = {score, x, primal_res, dual_res, mu, obj_now, iter};
        }

        // direct dual recovery at the active set of an iterate: degenerate
        // vertices can leave path-following multipliers inching toward values
        // a small least-squares solve reaches outright
        auto polish_duals = [&](Best& cand) {
            VectorXd v(n_rows);
            ws.row_values(cand.x, v);
            // generous activity margin: degenerate rows park their slacks
            // well above machine precision while mu sits at its floor
            constexpr double act_tol = 1e-4;
            std::vector<std::pair<int, double>> active; // (row, +1 upper / -1 lower)
            std::vector<double> slack;
            for (int r = 0; r < n_rows; ++r) {
                const Row& row = ws.rows[r];
                if (row.has_hi && row.hi - v[r] <= act_tol) {
                    active.push_back({r, 1.0});
                    slack.push_back(std::max(row.hi - v[r], 0.0));
                }
                if (row.has_lo && v[r] - row.lo <= act_tol) {
                    active.push_back({r, -1.0});
                    slack.push_back(std::max(v[r] - row.lo, 0.0));
                }
            }
            VectorXd grad_at(dim);
            for (int t = 0; t < n; ++t) {
                const double e = cand.x[t] - cand.x[n + t];
                grad_at[t] = grad_n[t] + quad_n[t] * e + opts.ridge * cand.x[t];
                grad_at[n + t] = grad_n[n + t] - quad_n[t] * e + opts.ridge * cand.x[n + t];
            }
            if (active.empty()) {
                const double res = grad_at.cwiseAbs().maxCoeff();
                if (res < cand.dual) {
                    cand.dual = res;
                    cand.mu = 0.0;
                }
            } else {
                Eigen::MatrixXd cols(dim, active.size());
                VectorXd unit = VectorXd::Zero(n_rows);
                for (std::size_t k = 0; k < active.size(); ++k) {
                    VectorXd col = VectorXd::Zero(dim);
                    unit[active[k].first] = active[k].second;
                    ws.add_transpose_product(unit, col);
                    unit[active[k].first] = 0.0;
                    cols.col(k) = col;
                }
                // least squares with sign repair: refit on the nonnegative
                // support a few times
                VectorXd multipliers = VectorXd::Zero(active.size());
                std::vector<char> keep(active.size(), 1);
                for (int round = 0; round < 4; ++round) {
                    std::vector<int> support;
                    for (std::size_t k = 0; k < active.size(); ++k) {
                        if (keep[k]) support.push_back(static_cast<int>(k));
                    }
                    if (support.empty()) break;
                    Eigen::MatrixXd sub(dim, support.size());
                    for (std::size_t k = 0; k < support.size(); ++k) {
                        sub.col(k) = cols.col(support[k]);
                    }
                    const VectorXd fit = sub.colPivHouseholderQr().solve(-grad_at);
                    bool clipped = false;
                    multipliers.setZero();
                    for (std::size_t k = 0; k < support.size(); ++k) {
                        if (fit[k] < 0.0) {
                            keep[support[k]] = 0;
                            clipped = true;
                        } else {
                            multipliers[support[k]] = fit[k];
                        }
                    }
                    if (!clipped) break;
                }
                const double res = (grad_at + cols * multipliers).cwiseAbs().maxCoeff();
                if (res < cand.dual) {
                    cand.dual = res;
                    double pair_gap = 0.0;
                    for (std::size_t k = 0; k < active.size(); ++k) {
                        pair_gap += slack[k] * multipliers[k];
                    }
                    cand.mu = pair_gap / std::max(1, n_sides);
                }
            }
            cand.score = std::max({cand.primal / opts.relaxed_feas_tol,
                                   cand.dual / opts.relaxed_dual_tol,
                                   cand.mu / opts.relaxed_gap_tol});
        };

        // past the conditioning floor the Newton systems stop helping; an
        // iterate well inside the external contract is accepted instead,
        // after trying to recover exact duals and an exact vertex
        auto relaxed_exit = [&](const char* why) -> bool {
            polish_duals(best);
            if (best.score > 1.0) {
                const SnapResult snap =
                    active_set_crossover(ws, quad_n, grad_n, opts.ridge, best.x, n_sides);
                if (snap.ok) {
                    best.x = snap.x;
                    best.primal = snap.primal;
                    best.dual = snap.dual;
                    best.mu = snap.mu;
                    best.objective = 0.0;
                    for (int t = 0; t < n; ++t) {
                        const double e = best.x[t] - best.x[n + t];
                        best.objective += 0.5 * qp.quad[t] * e * e + qp.lin[t] * e;
                    }
                    best.score = std::max({best.primal / opts.relaxed_feas_tol,
                                           best.dual / opts.relaxed_dual_tol,
                                           best.mu / opts.relaxed_gap_tol});
                }
            }
            if (best.score <= 1.0) {
                fill_solution(&best);
                return true;
            }
            throw NonConvergence(std::string("dispatch qp: ") + why);
        };

        if (iter == opts.max_iterations) {
            if (relaxed_exit("iteration cap reached")) return sol;
        }
        if (score < 0.99 * stall_reference) {
            stall_reference = score;
            stalled = 0;
        } else if (++stalled > 40) {
            if (relaxed_exit("progress stalled")) return sol;
        }

        // normal matrix H + A' W A with W from the barrier (ratios capped so
        // extreme active-set spreads stay factorizable)
        normal.setZero();
        for (int t = 0; t < n; ++t) {
            normal(t, t) = quad_n[t] + opts.ridge;
            normal(n + t, n + t) = quad_n[t] + opts.ridge;
            normal(t, n + t) = -quad_n[t];
            normal(n + t, t) = -quad_n[t];
        }
        constexpr double w_cap = 1e14;
        VectorXd soc_w = VectorXd::Zero(n);
        for (int r = 0; r < n_rows; ++r) {
            const Row& row = ws.rows[r];
            double w = 0.0;
            if (row.has_hi) w += std::min(z_up[r] / s_up[r], w_cap);
            if (row.has_lo) w += std::min(z_lo[r] / s_lo[r], w_cap);
            switch (row.kind) {
                case row_box_p: normal(row.t, row.t) += w; break;
                case row_box_m: normal(n + row.t, n + row.t) += w; break;
                case row_window:
                    normal(row.t, row.t) += w;
                    normal(n + row.t, n + row.t) += w;
                    normal(row.t, n + row.t) -= w;
                    normal(n + row.t, row.t) -= w;
                    break;
                case row_soc: soc_w[row.t] += w; break;
            }
        }
        {
            // cumulative rows: (A'WA)[a][b] = gains * sum_{t >= max(a,b)} w_t
            VectorXd suffix(n);
            double acc = 0.0;
            for (int t = n - 1; t >= 0; --t) {
                acc += soc_w[t];
                suffix[t] = acc;
            }
            const double cc = qp.charge_gain * qp.charge_gain;
            const double dd = qp.discharge_gain * qp.discharge_gain;
            const double cd = qp.charge_gain * qp.discharge_gain;
            for (int a = 0; a < n; ++a) {
                for (int b = 0; b < n; ++b) {
                    const double s = suffix[std::max(a, b)];
                    normal(a, b) += cc * s;
                    normal(a, n + b) -= cd * s;
                    normal(n + a, b) -= cd * s;
                    normal(n + a, n + b) += dd * s;
                }
            }
        }
        double bump = 1e-12 * normal.diagonal().maxCoeff();
        llt.compute(normal);
        for (int attempt = 0; attempt < 6 && llt.info() != Eigen::Success; ++attempt) {
            normal.diagonal().array() += bump;
            bump *= 100.0;
            llt.compute(normal);
        }
        if (llt.info() != Eigen::Success) {
            if (relaxed_exit("Newton system not positive definite")) return sol;
        }

        auto solve_step = [&](const VectorXd& rcu, const VectorXd& rcl, VectorXd& dxo) {
            rhs = -r_dual;
            for (int r = 0; r < n_rows; ++r) {
                const Row& row = ws.rows[r];
                double c = 0.0;
                if (row.has_hi) c -= (z_up[r] * r_up[r] - rcu[r]) / s_up[r];
                if (row.has_lo) c -= (z_lo[r] * r_lo[r] + rcl[r]) / s_lo[r];
                coef[r] = c;
            }
            ws.add_transpose_product(coef, rhs);
            dxo = llt.solve(rhs);
            ws.row_values(dxo, adx); // A*dx (rows are linear, so values == products)
            for (int r = 0; r < n_rows; ++r) {
                const Row& row = ws.rows[r];
                if (row.has_hi) {
                    ds_up[r] = -r_up[r] - adx[r];
                    dz_up[r] = -(rcu[r] + z_up[r] * ds_up[r]) / s_up[r];
                } else {
                    ds_up[r] = dz_up[r] = 0.0;
                }
                if (row.has_lo) {
                    ds_lo[r] = adx[r] + r_lo[r];
                    dz_lo[r] = -(rcl[r] + z_lo[r] * ds_lo[r]) / s_lo[r];
                } else {
                    ds_lo[r] = dz_lo[r] = 0.0;
                }
            }
        };

        auto max_step = [&](const VectorXd& v, const VectorXd& dv) {
            double a = 1.0;
            for (int r = 0; r < n_rows; ++r) {
                if (dv[r] < 0.0) a = std::min(a, -v[r] / dv[r]);
            }
            return a;
        };

        // affine (predictor) direction
        for (int r = 0; r < n_rows; ++r) {
            rc_up[r] = s_up[r] * z_up[r];
            rc_lo[r] = s_lo[r] * z_lo[r];
        }
        solve_step(rc_up, rc_lo, dx);
        double ap = std::min(max_step(s_up, ds_up), max_step(s_lo, ds_lo));
        double ad = std::min(max_step(z_up, dz_up), max_step(z_lo, dz_lo));
        double gap_aff = 0.0;
        for (int r = 0; r < n_rows; ++r) {
            if (ws.rows[r].has_hi) gap_aff += (s_up[r] + ap * ds_up[r]) * (z_up[r] + ad * dz_up[r]);
            if (ws.rows[r].has_lo) gap_aff += (s_lo[r] + ap * ds_lo[r]) * (z_lo[r] + ad * dz_lo[r]);
        }
        const double mu_aff = gap_aff / std::max(1, n_sides);
        double sigma = std::pow(std::max(mu_aff, 0.0) / mu, 3);
        sigma = std::clamp(sigma, 1e-8, 1.0);
        // keep the center target above the precision the tolerances need;
        // letting mu collapse to ~1e-17 wrecks the barrier weights and the
        // following Newton directions
        const double mu_target = std::max(sigma * mu, 0.05 * opts.gap_tol);

        // corrector
        for (int r = 0; r < n_rows; ++r) {
            rc_up[r] = s_up[r] * z_up[r] + ds_up[r] * dz_up[r] - mu_target;
            rc_lo[r] = s_lo[r] * z_lo[r] + ds_lo[r] * dz_lo[r] - mu_target;
        }
        solve_step(rc_up, rc_lo, dx2);
        ap = std::min(max_step(s_up, ds_up), max_step(s_lo, ds_lo));
        ad = std::min(max_step(z_up, dz_up), max_step(z_lo, dz_lo));
        const double eta = (mu > 1e-6) ? 0.995 : 0.9999;
        ap = std::min(1.0, eta * ap);
        ad = std::min(1.0, eta * ad);

        x += ap * dx2;
        for (int r = 0; r < n_rows; ++r) {
            const Row& row = ws.rows[r];
            if (row.has_hi) {
                s_up[r] = std::max(s_up[r] + ap * ds_up[r], 1e-300);
                z_up[r] = std::max(z_up[r] + ad * dz_up[r], 1e-300);
            }
            if (row.has_lo) {
                s_lo[r] = std::max(s_lo[r] + ap * ds_lo[r], 1e-300);
                z_lo[r] = std::max(z_lo[r] + ad * dz_lo[r], 1e-300);
            }
        }
    }
    throw NonConvergence("dispatch qp: iteration cap reached");
}

} // namespace cesopt
