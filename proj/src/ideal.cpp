#include "hotskit/ideal.hpp"

#include <algorithm>
#include <cmath>

#include "line_sums.hpp"

namespace hotskit {

Index default_max_iter(Index n) { return 10 * n + 1000; }

Index default_trace_stride(Index n) { return n <= 10000 ? 1 : 10; }

namespace {

constexpr Real kFastPathBound = 30.0;  // |p| below this: plain y-domain kernels

std::vector<Real> exp_of(std::span<const Real> p, Real sign) {
    std::vector<Real> y(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) y[i] = std::exp(sign * p[i]);
    return y;
}

SparseMatrix with_added_diagonal(const SparseMatrix& m, Real eps) {
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(m.nnz() + m.size()));
    for (Index i = 0; i < m.size(); ++i) {
        auto cols = m.row_cols(i);
        auto vals = m.row_vals(i);
        for (std::size_t k = 0; k < cols.size(); ++k) {
            trips.push_back({i, cols[k], vals[k]});
        }
        trips.push_back({i, i, eps});
    }
    return SparseMatrix::from_triplets(m.size(), trips, m.shift());
}

}  // namespace

Real log_theta0(const SparseMatrix& m, std::span<const Real> p) {
    const Index n = m.size();
    if (static_cast<Index>(p.size()) != n) {
        throw std::invalid_argument("theta0: dimension mismatch");
    }
    if (n == 0) return -kInf;
    std::vector<Real> neg(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) neg[i] = -p[i];
    std::vector<Real> w(p.size());
    m.log_apply(neg, w);
    for (std::size_t j = 0; j < w.size(); ++j) w[j] += p[j];
    return logsumexp(w);
}

Real theta0(const SparseMatrix& m, std::span<const Real> p) {
    if (sup_norm(p) < kFastPathBound) {
        std::vector<Real> yi = exp_of(p, -1.0);
        std::vector<Real> w = m.apply(yi);
        Real acc = 0.0;
        for (std::size_t j = 0; j < w.size(); ++j) acc += w[j] * std::exp(p[j]);
        return acc;
    }
    return std::exp(log_theta0(m, p));
}

std::vector<Real> ideal_map(const SparseMatrix& m, std::span<const Real> p,
                            int threads) {
    const Index n = m.size();
    if (static_cast<Index>(p.size()) != n) {
        throw std::invalid_argument("ideal_map: dimension mismatch");
    }
    if (n == 0) throw StructuralError("ideal_map: empty matrix");
    std::vector<Real> u(p.size()), w(p.size());
    bool ok = false;
    if (sup_norm(p) < kFastPathBound) {
        std::vector<Real> y = exp_of(p, +1.0);
        std::vector<Real> yi = exp_of(p, -1.0);
        m.apply_transpose(y, u, threads);
        m.apply(yi, w, threads);
        ok = true;
        for (std::size_t i = 0; i < u.size(); ++i) {
            if (!(u[i] > 0.0) || !(w[i] > 0.0)) {
                ok = false;  // empty line, or underflow: retry stabilized
                break;
            }
        }
        if (ok) {
            for (std::size_t i = 0; i < u.size(); ++i) {
                u[i] = 0.5 * (std::log(u[i]) - std::log(w[i]));
            }
            return u;
        }
    }
    std::vector<Real> neg(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) neg[i] = -p[i];
    m.log_apply_transpose(p, u);
    m.log_apply(neg, w);
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (u[i] == -kInf) {
            throw StructuralError("ideal_map: column " + std::to_string(i) +
                                  " of the logical matrix is zero");
        }
        if (w[i] == -kInf) {
            throw StructuralError("ideal_map: row " + std::to_string(i) +
                                  " of the logical matrix is zero");
        }
        u[i] = 0.5 * (u[i] - w[i]);
    }
    return u;
}

ScoreState ideal_step(const SparseMatrix& m, const ScoreState& s, int threads) {
    ScoreState out(ideal_map(m, s.p, threads), s.normalization);
    normalize(out);
    return out;
}

std::pair<ScoreState, SolveReport> ideal_solve(const SparseMatrix& m,
                                               const ScoreState& p0,
                                               const IdealOptions& opts) {
    SparseMatrix work = opts.add_diagonal > 0.0 ? with_added_diagonal(m, opts.add_diagonal) : m;
    SolveReport report;
    if (opts.check_irreducible && !is_strongly_connected(work)) {
        throw std::invalid_argument(
            "ideal_solve: matrix is not irreducible; use the effective model");
    }
    if (!is_primitive_symmetrized(work)) {
        report.warnings.push_back(
            "A + A^T is not primitive: the Jacobi iteration may oscillate (DSS does not)");
    }
    const Index max_iter = opts.max_iter >= 0 ? opts.max_iter : default_max_iter(m.size());
    const Index stride =
        opts.trace_stride > 0 ? opts.trace_stride : default_trace_stride(m.size());
    report.trace_stride = stride;

    std::vector<Real> p = p0.p;
    normalize(p, opts.normalization);
    std::vector<Real> prev;  // state one iteration back (two back from `next`)
    std::vector<Real> residuals;
    Index osc_run = 0;
    report.status = SolveStatus::MaxIter;
    for (Index k = 0; k < max_iter; ++k) {
        std::vector<Real> next = ideal_map(work, p, opts.threads);
        normalize(next, opts.normalization);
        Real res = sup_dist(next, p);
        residuals.push_back(res);
        if (k % stride == 0) {
            report.theta_trace.push_back(theta0(work, next));
            report.residual_trace.push_back(res);
        }
        if (!prev.empty() && sup_dist(next, prev) < opts.tol && res >= 10.0 * opts.tol) {
            if (++osc_run >= 10) {
                p = std::move(next);
                report.iterations = k + 1;
                report.residual = res;
                report.status = SolveStatus::Oscillating;
                break;
            }
        } else {
            osc_run = 0;
        }
        prev = std::move(p);
        p = std::move(next);
        report.iterations = k + 1;
        report.residual = res;
        if (res < opts.tol) {
            report.status = SolveStatus::Converged;
            break;
        }
    }
    report.rate_estimate = estimate_rate(residuals);
    return {ScoreState(std::move(p), opts.normalization), report};
}

// ---------------------------------------------------------------------------
// Coordinate descent DSS
// ---------------------------------------------------------------------------

using detail::log_line_sum;
using detail::log_shift_sum;

void dss_step(const SparseMatrix& m, const SparseMatrix& mt, std::span<Real> p,
              Index i) {
    if (i < 0 || i >= m.size() || static_cast<Index>(p.size()) != m.size()) {
        throw std::invalid_argument("dss_step: bad coordinate or dimension");
    }
    Real log_col = logadd(log_line_sum(mt.row_cols(i), mt.row_vals(i), p, +1.0, i),
                          log_shift_sum(m.shift(), p, +1.0, i));
    Real log_row = logadd(log_line_sum(m.row_cols(i), m.row_vals(i), p, -1.0, i),
                          log_shift_sum(m.shift(), p, -1.0, i));
    if (log_col == -kInf && log_row == -kInf && m.entry(i, i) > 0.0) {
        return;  // only the diagonal touches p_i: the objective is flat here
    }
    if (log_col == -kInf) {
        throw StructuralError("dss_step: column " + std::to_string(i) +
                              " of the logical matrix is zero off the diagonal");
    }
    if (log_row == -kInf) {
        throw StructuralError("dss_step: row " + std::to_string(i) +
                              " of the logical matrix is zero off the diagonal");
    }
    p[static_cast<std::size_t>(i)] = 0.5 * (log_col - log_row);
}

std::pair<ScoreState, SolveReport> dss_solve(const SparseMatrix& m,
                                             const ScoreState& p0,
                                             const IdealOptions& opts) {
    const Index n = m.size();
    SparseMatrix work = opts.add_diagonal > 0.0 ? with_added_diagonal(m, opts.add_diagonal) : m;
    SolveReport report;
    if (opts.check_irreducible && !is_strongly_connected(work)) {
        throw std::invalid_argument(
            "dss_solve: matrix is not irreducible; use the effective model");
    }
    SparseMatrix mt = explicit_transpose(work);
    const Index max_iter = opts.max_iter >= 0 ? opts.max_iter : default_max_iter(n);
    const Index stride =
        opts.trace_stride > 0 ? opts.trace_stride : default_trace_stride(n);
    report.trace_stride = stride;

    std::vector<Real> p = p0.p;
    if (static_cast<Index>(p.size()) != n) {
        throw std::invalid_argument("dss_solve: dimension mismatch");
    }
    normalize(p, opts.normalization);
    std::vector<Real> before(p.size());
    std::vector<Real> residuals;
    report.status = SolveStatus::MaxIter;
    const Real shift = work.shift();
    for (Index sweep = 0; sweep < max_iter; ++sweep) {
        std::copy(p.begin(), p.end(), before.begin());
        // Gauged exponentials for the sweep; re-gauged if a coordinate jumps.
        Real cp = 0.0, cm = 0.0;
        std::vector<Real> ep(p.size()), em(p.size());
        Real sp = 0.0, sm = 0.0;
        auto regauge = [&]() {
            cp = cm = -kInf;
            for (Real v : p) {
                cp = std::max(cp, v);
                cm = std::max(cm, -v);
            }
            sp = sm = 0.0;
            for (std::size_t j = 0; j < p.size(); ++j) {
                ep[j] = std::exp(p[j] - cp);
                em[j] = std::exp(-p[j] - cm);
                sp += ep[j];
                sm += em[j];
            }
        };
        regauge();
        for (Index i = 0; i < n; ++i) {
            auto is = static_cast<std::size_t>(i);
            Real col_acc = 0.0;
            {
                auto cols = mt.row_cols(i);
                auto vals = mt.row_vals(i);
                for (std::size_t k = 0; k < cols.size(); ++k) {
                    if (cols[k] == i) continue;
                    col_acc += vals[k] * ep[static_cast<std::size_t>(cols[k])];
                }
            }
            Real row_acc = 0.0;
            {
                auto cols = work.row_cols(i);
                auto vals = work.row_vals(i);
                for (std::size_t k = 0; k < cols.size(); ++k) {
                    if (cols[k] == i) continue;
                    row_acc += vals[k] * em[static_cast<std::size_t>(cols[k])];
                }
            }
            if (shift > 0.0) {
                col_acc += shift * (sp - ep[is]);
                row_acc += shift * (sm - em[is]);
            }
            Real pnew;
            if (col_acc > 0.0 && row_acc > 0.0) {
                pnew = 0.5 * ((cp + std::log(col_acc)) - (cm + std::log(row_acc)));
            } else {
                // Gauge underflowed this line; evaluate it exactly.
                Real lc = logadd(log_line_sum(mt.row_cols(i), mt.row_vals(i), p, +1.0, i),
                                 log_shift_sum(shift, p, +1.0, i));
                Real lr = logadd(log_line_sum(work.row_cols(i), work.row_vals(i), p, -1.0, i),
                                 log_shift_sum(shift, p, -1.0, i));
                if (lc == -kInf && lr == -kInf && work.entry(i, i) > 0.0) {
                    continue;  // diagonal-only coordinate, flat objective
                }
                if (lc == -kInf || lr == -kInf) {
                    throw StructuralError(
                        "dss_solve: zero row or column at coordinate " + std::to_string(i));
                }
                pnew = 0.5 * (lc - lr);
            }
            p[is] = pnew;
            if (pnew - cp > 500.0 || -pnew - cm > 500.0) {
                regauge();
            } else {
                sp -= ep[is];
                sm -= em[is];
                ep[is] = std::exp(pnew - cp);
                em[is] = std::exp(-pnew - cm);
                sp += ep[is];
                sm += em[is];
            }
        }
        normalize(p, opts.normalization);
        Real res = sup_dist(p, before);
        residuals.push_back(res);
        if (sweep % stride == 0) {
            report.theta_trace.push_back(theta0(work, p));
            report.residual_trace.push_back(res);
        }
        report.iterations = sweep + 1;
        report.residual = res;
        if (res < opts.tol) {
            report.status = SolveStatus::Converged;
            break;
        }
    }
    report.rate_estimate = estimate_rate(residuals);
    return {ScoreState(std::move(p), opts.normalization), report};
}

// ---------------------------------------------------------------------------
// Deformed family
// ---------------------------------------------------------------------------

std::vector<Real> deformed_map(const SparseMatrix& m, std::span<const Real> x,
                               Real alpha) {
    if (static_cast<Index>(x.size()) != m.size()) {
        throw std::invalid_argument("deformed_map: dimension mismatch");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw std::invalid_argument("deformed_map: alpha must lie in [0,1]");
    }
    std::vector<Real> q(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0)) {
            throw std::invalid_argument("deformed_map: input must be positive");
        }
        q[i] = std::log(x[i]);
    }
    const Real beta = 1.0 - alpha;
    std::vector<Real> lg(x.size(), 0.0);
    if (alpha > 0.0) {
        std::vector<Real> u(x.size());
        m.log_apply_transpose(q, u);
        for (std::size_t i = 0; i < u.size(); ++i) {
            if (u[i] == -kInf) {
                throw StructuralError("deformed_map: zero column " + std::to_string(i));
            }
            lg[i] += alpha * u[i];
        }
    }
    if (beta > 0.0) {
        std::vector<Real> neg(q.size());
        for (std::size_t i = 0; i < q.size(); ++i) neg[i] = -q[i];
        std::vector<Real> w(x.size());
        m.log_apply(neg, w);
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (w[i] == -kInf) {
                throw StructuralError("deformed_map: zero row " + std::to_string(i));
            }
            lg[i] -= beta * w[i];
        }
    }
    for (std::size_t i = 0; i < lg.size(); ++i) lg[i] = std::exp(lg[i]);
    return lg;
}

std::vector<Real> deformed_step(const SparseMatrix& m, std::span<const Real> x,
                                Real alpha) {
    std::vector<Real> g = deformed_map(m, x, alpha);
    Real mx = 0.0;
    for (Real v : g) mx = std::max(mx, v);
    for (Real& v : g) v /= mx;
    return g;
}

std::pair<std::vector<Real>, SolveReport> deformed_solve(const SparseMatrix& m,
                                                         std::span<const Real> x0,
                                                         Real alpha,
                                                         const IdealOptions& opts) {
    const Index max_iter = opts.max_iter >= 0 ? opts.max_iter : default_max_iter(m.size());
    SolveReport report;
    report.trace_stride = 1;
    std::vector<Real> x = deformed_step(m, x0, alpha);  // start on the unit sphere
    std::vector<Real> lx(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) lx[i] = std::log(x[i]);
    std::vector<Real> prev;  // log iterate one step back
    std::vector<Real> residuals;
    Index osc_run = 0;
    report.status = SolveStatus::MaxIter;
    for (Index k = 0; k < max_iter; ++k) {
        std::vector<Real> nx = deformed_step(m, x, alpha);
        std::vector<Real> lnx(nx.size());
        for (std::size_t i = 0; i < nx.size(); ++i) lnx[i] = std::log(nx[i]);
        Real res = sup_dist(lnx, lx);
        residuals.push_back(res);
        report.residual_trace.push_back(res);
        if (!prev.empty() && sup_dist(lnx, prev) < opts.tol && res >= 10.0 * opts.tol) {
            if (++osc_run >= 10) {
                x = std::move(nx);
                report.iterations = k + 1;
                report.residual = res;
                report.status = SolveStatus::Oscillating;
                break;
            }
        } else {
            osc_run = 0;
        }
        prev = std::move(lx);
        x = std::move(nx);
        lx = std::move(lnx);
        report.iterations = k + 1;
        report.residual = res;
        if (res < opts.tol) {
            report.status = SolveStatus::Converged;
            break;
        }
    }
    report.rate_estimate = estimate_rate(residuals);
    return {std::move(x), report};
}

// ---------------------------------------------------------------------------
// Flow recovery and Hilbert-metric diagnostics
// ---------------------------------------------------------------------------

BalancedFlow recover_flow(const SparseMatrix& m, std::span<const Real> p,
                          std::optional<Real> mu, Real balance_tol) {
    const Index n = m.size();
    if (static_cast<Index>(p.size()) != n) {
        throw std::invalid_argument("recover_flow: dimension mismatch");
    }
    BalancedFlow flow;
    flow.mu = mu ? *mu : -log_theta0(m, p);
    auto offsets = m.row_offsets();
    auto cols = m.col_indices();
    auto vals = m.values();
    std::vector<Real> rho(static_cast<std::size_t>(m.nnz()));
    std::vector<Real> out(static_cast<std::size_t>(n), 0.0);
    std::vector<Real> in(static_cast<std::size_t>(n), 0.0);
    Real stored_mass = 0.0;
    for (Index i = 0; i < n; ++i) {
        for (Index k = offsets[i]; k < offsets[i + 1]; ++k) {
            auto ks = static_cast<std::size_t>(k);
            Real r = vals[k] *
                     std::exp(flow.mu + p[static_cast<std::size_t>(i)] -
                              p[static_cast<std::size_t>(cols[k])]);
            rho[ks] = r;
            stored_mass += r;
            out[static_cast<std::size_t>(i)] += r;
            in[static_cast<std::size_t>(cols[k])] += r;
        }
    }
    if (m.shift() > 0.0) {
        Real lsp = logsumexp(p);
        std::vector<Real> neg(p.begin(), p.end());
        for (Real& v : neg) v = -v;
        Real lsm = logsumexp(neg);
        flow.shift_mass = std::exp(flow.mu + std::log(m.shift()) + lsp + lsm);
        for (Index i = 0; i < n; ++i) {
            auto is = static_cast<std::size_t>(i);
            out[is] += std::exp(flow.mu + std::log(m.shift()) + p[is] + lsm);
            in[is] += std::exp(flow.mu + std::log(m.shift()) - p[is] + lsp);
        }
    }
    flow.total_mass = stored_mass + flow.shift_mass;
    Real imbalance = 0.0;
    for (Index i = 0; i < n; ++i) {
        auto is = static_cast<std::size_t>(i);
        imbalance = std::max(imbalance, std::abs(out[is] - in[is]));
    }
    flow.balance_residual = imbalance;
    flow.balanced = imbalance <= balance_tol;
    flow.rho = SparseMatrix(n, std::vector<Index>(offsets.begin(), offsets.end()),
                            std::vector<Index>(cols.begin(), cols.end()), std::move(rho),
                            0.0);
    return flow;
}

Real hilbert_distance(std::span<const Real> x, std::span<const Real> y) {
    if (x.size() != y.size() || x.empty()) {
        throw std::invalid_argument("hilbert_distance: bad dimensions");
    }
    Real rmax = -kInf, rmin = kInf;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) {
            throw std::domain_error("hilbert_distance: vectors must be positive");
        }
        Real r = std::log(x[i]) - std::log(y[i]);
        rmax = std::max(rmax, r);
        rmin = std::min(rmin, r);
    }
    return rmax - rmin;
}

Real birkhoff_factor(const SparseMatrix& m) {
    const Index n = m.size();
    if (n == 0) throw std::domain_error("birkhoff_factor: empty matrix");
    // Dense log matrix; positivity required entrywise.
    std::vector<Real> lg(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            Real v = m.entry(i, j);
            if (!(v > 0.0)) {
                throw std::domain_error("birkhoff_factor: matrix must be entrywise positive");
            }
            lg[static_cast<std::size_t>(i * n + j)] = std::log(v);
        }
    }
    // Delta(M) = max over row pairs of the Hilbert distance between the rows.
    Real delta = 0.0;
    for (Index i = 0; i < n; ++i) {
        for (Index j = i + 1; j < n; ++j) {
            Real dmax = -kInf, dmin = kInf;
            const Real* ri = lg.data() + i * n;
            const Real* rj = lg.data() + j * n;
            for (Index k = 0; k < n; ++k) {
                Real d = ri[k] - rj[k];
                dmax = std::max(dmax, d);
                dmin = std::min(dmin, d);
            }
            delta = std::max(delta, dmax - dmin);
        }
    }
    return std::tanh(delta / 4.0);
}

}  // namespace hotskit
