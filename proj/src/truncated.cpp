#include "hotskit/truncated.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <sstream>

#include "effective_internal.hpp"
#include "line_sums.hpp"

namespace hotskit {

Real mid(Real x, Real a, Real b) {
    if (b > a) throw std::invalid_argument("mid: lower cap exceeds upper cap");
    return std::max(std::min(x, a), b);
}

// ---------------------------------------------------------------------------
// BoundsSet
// ---------------------------------------------------------------------------

BoundsSet BoundsSet::none(const SparseMatrix& m) {
    BoundsSet b;
    b.lower_.assign(static_cast<std::size_t>(m.nnz()), 0.0);
    b.upper_.assign(static_cast<std::size_t>(m.nnz()), kInf);
    return b;
}

void BoundsSet::set(const SparseMatrix& m, Index i, Index j, Real lower, Real upper) {
    if (pattern_size() != m.nnz()) {
        throw std::invalid_argument("BoundsSet: not aligned with this matrix");
    }
    if (!(lower >= 0.0) || std::isnan(upper)) {
        throw std::invalid_argument("BoundsSet: lower bound must be nonnegative");
    }
    if (lower > upper) {
        throw std::invalid_argument("BoundsSet: requires L <= U");
    }
    auto pos = m.find(i, j);
    if (!pos || !(m.values()[static_cast<std::size_t>(*pos)] + m.shift() > 0.0)) {
        throw StructuralError("BoundsSet: bound on arc (" + std::to_string(i) + "," +
                              std::to_string(j) + ") with no logical mass");
    }
    lower_[static_cast<std::size_t>(*pos)] = lower;
    upper_[static_cast<std::size_t>(*pos)] = upper;
}

BoundsSet BoundsSet::from_stream(const SparseMatrix& m, std::istream& in) {
    BoundsSet b = none(m);
    std::string line;
    Index lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        std::istringstream ls(line);
        long long src, dst;
        std::string lo_tok, up_tok;
        if (!(ls >> src >> dst >> lo_tok >> up_tok)) {
            throw ParseError("bounds line " + std::to_string(lineno) +
                             ": expected \"src dst lower upper\"");
        }
        auto parse_tok = [&](const std::string& tok, bool inf_ok) {
            if (inf_ok && (tok == "inf" || tok == "Inf" || tok == "INF")) return kInf;
            try {
                std::size_t pos = 0;
                Real v = std::stod(tok, &pos);
                if (pos != tok.size()) throw std::invalid_argument(tok);
                return v;
            } catch (const std::logic_error&) {
                throw ParseError("bounds line " + std::to_string(lineno) +
                                 ": bad number \"" + tok + "\"");
            }
        };
        Real lo = parse_tok(lo_tok, false);
        Real up = parse_tok(up_tok, true);
        try {
            b.set(m, static_cast<Index>(src), static_cast<Index>(dst), lo, up);
        } catch (const std::invalid_argument& e) {
            throw ParseError("bounds line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return b;
}

bool BoundsSet::trivial() const {
    for (std::size_t k = 0; k < lower_.size(); ++k) {
        if (lower_[k] != 0.0 || upper_[k] != kInf) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Multipliers, truncated matrix, reduced dual
// ---------------------------------------------------------------------------

namespace {

void check_aligned(const SparseMatrix& m, const BoundsSet& bounds,
                   std::span<const Real> p, Index expect_extra = 0) {
    if (bounds.pattern_size() != m.nnz()) {
        throw std::invalid_argument("bounds are not aligned with this matrix");
    }
    if (static_cast<Index>(p.size()) != m.size() + expect_extra) {
        throw std::invalid_argument("potential vector has the wrong length");
    }
}

// mid in log space: clamp(log x) into [log_lo, log_hi].
Real clamp_log(Real lx, Real log_lo, Real log_hi) {
    return std::max(std::min(lx, log_hi), log_lo);
}

struct TransposedPattern {
    SparseMatrix mt;
    std::vector<Index> orig;  // original value-array position per transposed entry
};

TransposedPattern transpose_with_map(const SparseMatrix& m) {
    const Index n = m.size();
    auto offsets = m.row_offsets();
    auto cols = m.col_indices();
    auto vals = m.values();
    std::vector<Index> t_offsets(static_cast<std::size_t>(n) + 1, 0);
    for (Index k = 0; k < m.nnz(); ++k) ++t_offsets[static_cast<std::size_t>(cols[k]) + 1];
    std::partial_sum(t_offsets.begin(), t_offsets.end(), t_offsets.begin());
    std::vector<Index> t_cols(static_cast<std::size_t>(m.nnz()));
    std::vector<Real> t_vals(static_cast<std::size_t>(m.nnz()));
    std::vector<Index> orig(static_cast<std::size_t>(m.nnz()));
    std::vector<Index> cursor(t_offsets.begin(), t_offsets.end() - 1);
    for (Index i = 0; i < n; ++i) {
        for (Index k = offsets[i]; k < offsets[i + 1]; ++k) {
            Index pos = cursor[static_cast<std::size_t>(cols[k])]++;
            t_cols[static_cast<std::size_t>(pos)] = i;
            t_vals[static_cast<std::size_t>(pos)] = vals[k];
            orig[static_cast<std::size_t>(pos)] = k;
        }
    }
    return {SparseMatrix(n, std::move(t_offsets), std::move(t_cols), std::move(t_vals),
                         m.shift()),
            std::move(orig)};
}

}  // namespace

std::pair<std::vector<Real>, std::vector<Real>> trunc_multipliers(
    const SparseMatrix& m, std::span<const Real> p, const BoundsSet& bounds) {
    check_aligned(m, bounds, p);
    const Index n = m.size();
    std::vector<Real> eta(static_cast<std::size_t>(m.nnz()), 0.0);
    std::vector<Real> zeta(static_cast<std::size_t>(m.nnz()), 0.0);
    auto offsets = m.row_offsets();
    auto cols = m.col_indices();
    auto vals = m.values();
    for (Index i = 0; i < n; ++i) {
        for (Index k = offsets[i]; k < offsets[i + 1]; ++k) {
            auto ks = static_cast<std::size_t>(k);
            Real lo = bounds.lower()[ks];
            Real up = bounds.upper()[ks];
            Real c = vals[k] + m.shift();
            if (!(c > 0.0)) {
                if (lo > 0.0 || up < kInf) {
                    throw StructuralError("trunc_multipliers: bound on a zero entry");
                }
                continue;
            }
            Real lraw = std::log(c) + p[static_cast<std::size_t>(i)] -
                        p[static_cast<std::size_t>(cols[k])];
            if (lo > 0.0) eta[ks] = std::max(std::log(lo) - lraw, 0.0);
            if (up < kInf) {
                zeta[ks] = up > 0.0 ? std::max(lraw - std::log(up), 0.0)
                                    : (lraw > -kInf ? kInf : 0.0);
            }
        }
    }
    return {std::move(eta), std::move(zeta)};
}

SparseMatrix truncated_scaled(const SparseMatrix& m, const BoundsSet& bounds,
                              std::span<const Real> p) {
    check_aligned(m, bounds, p);
    const Index n = m.size();
    auto offsets = m.row_offsets();
    auto cols = m.col_indices();
    auto vals = m.values();
    std::vector<Real> x(static_cast<std::size_t>(m.nnz()));
    for (Index i = 0; i < n; ++i) {
        for (Index k = offsets[i]; k < offsets[i + 1]; ++k) {
            auto ks = static_cast<std::size_t>(k);
            Real c = vals[k] + m.shift();
            if (!(c > 0.0)) {
                x[ks] = 0.0;
                continue;
            }
            Real lraw = std::log(c) + p[static_cast<std::size_t>(i)] -
                        p[static_cast<std::size_t>(cols[k])];
            Real lo = bounds.lower()[ks];
            Real up = bounds.upper()[ks];
            x[ks] = std::exp(clamp_log(lraw, lo > 0.0 ? std::log(lo) : -kInf,
                                       up < kInf ? std::log(up) : kInf));
        }
    }
    return SparseMatrix(n, std::vector<Index>(offsets.begin(), offsets.end()),
                        std::vector<Index>(cols.begin(), cols.end()), std::move(x), 0.0);
}

Real theta_trunc(const SparseMatrix& m, const BoundsSet& bounds,
                 std::span<const Real> p) {
    check_aligned(m, bounds, p);
    const Index n = m.size();
    auto offsets = m.row_offsets();
    auto cols = m.col_indices();
    auto vals = m.values();
    Real acc = 0.0;
    Real stored_unclamped = 0.0;  // sum e^{p_i-p_j} over the stored pattern
    for (Index i = 0; i < n; ++i) {
        for (Index k = offsets[i]; k < offsets[i + 1]; ++k) {
            auto ks = static_cast<std::size_t>(k);
            Real c = vals[k] + m.shift();
            Real t = p[static_cast<std::size_t>(i)] - p[static_cast<std::size_t>(cols[k])];
            if (m.shift() > 0.0) stored_unclamped += std::exp(t);
            if (!(c > 0.0)) continue;
            Real lraw = std::log(c) + t;
            Real lo = bounds.lower()[ks];
            Real up = bounds.upper()[ks];
            if (lo > 0.0 && lraw < std::log(lo)) {
                acc += lo * (1.0 + lraw - std::log(lo));
            } else if (up < kInf && (up == 0.0 || lraw > std::log(up))) {
                acc += up == 0.0 ? 0.0 : up * (1.0 + lraw - std::log(up));
            } else {
                acc += std::exp(lraw);
            }
        }
    }
    if (m.shift() > 0.0) {
        // Uniform arcs outside the stored pattern are never bounded.
        std::vector<Real> neg(p.begin(), p.end());
        for (Real& v : neg) v = -v;
        Real all_pairs = std::exp(logsumexp(p) + logsumexp(neg));
        acc += m.shift() * (all_pairs - stored_unclamped);
    }
    return acc;
}

Real trunc_balance_residual(const SparseMatrix& m, const BoundsSet& bounds,
                            std::span<const Real> p) {
    check_aligned(m, bounds, p);
    const Index n = m.size();
    SparseMatrix x = truncated_scaled(m, bounds, p);
    std::vector<Real> ones(static_cast<std::size_t>(n), 1.0);
    std::vector<Real> row = x.apply(ones);
    std::vector<Real> col = x.apply_transpose(ones);
    if (m.shift() > 0.0) {
        // add the uniform spill: out_i gains shift e^{p_i} sum_j e^{-p_j} minus the
        // stored-pattern part, and symmetrically for the columns
        std::vector<Real> ep(p.size()), em(p.size());
        Real sp = 0.0, sm = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            ep[i] = std::exp(p[i]);
            em[i] = std::exp(-p[i]);
            sp += ep[i];
            sm += em[i];
        }
        auto offsets = m.row_offsets();
        auto cols = m.col_indices();
        std::vector<Real> row_pat(p.size(), 0.0), col_pat(p.size(), 0.0);
        for (Index i = 0; i < n; ++i) {
            for (Index k = offsets[i]; k < offsets[i + 1]; ++k) {
                auto is = static_cast<std::size_t>(i);
                auto js = static_cast<std::size_t>(cols[k]);
                row_pat[is] += ep[is] * em[js];
                col_pat[js] += ep[is] * em[js];
            }
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            row[i] += m.shift() * (ep[i] * sm - row_pat[i]);
            col[i] += m.shift() * (em[i] * sp - col_pat[i]);
        }
    }
    Real res = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) {
        res = std::max(res, std::abs(row[i] - col[i]));
    }
    return res;
}

// ---------------------------------------------------------------------------
// Truncated-scaling coordinate descent
// ---------------------------------------------------------------------------

namespace {

// Exact log-space evaluation of one clamped line sum:
//   log( sum_{stored i != l} exp(clamp(log c_i + sign p_i, caps))
//        + shift spill + extra ).
// caps are log(L) + cap_base and log(U) + cap_base per entry.
Real log_trunc_line_exact(const SparseMatrix& m, std::span<const Index> cols,
                          std::span<const Real> vals, std::span<const Index> bound_pos,
                          const BoundsSet& bounds, std::span<const Real> p, Real sign,
                          Index l, Real cap_base, Real extra) {
    std::vector<Real> terms;
    terms.reserve(cols.size() + 2);
    for (std::size_t k = 0; k < cols.size(); ++k) {
        if (cols[k] == l) continue;
        Real c = vals[k] + m.shift();
        if (!(c > 0.0)) continue;
        auto bp = static_cast<std::size_t>(bound_pos[k]);
        Real lo = bounds.lower()[bp];
        Real up = bounds.upper()[bp];
        Real lx = std::log(c) + sign * p[static_cast<std::size_t>(cols[k])];
        terms.push_back(clamp_log(lx, lo > 0.0 ? std::log(lo) + cap_base : -kInf,
                                  up < kInf ? (up > 0.0 ? std::log(up) + cap_base : -kInf)
                                            : kInf));
    }
    if (m.shift() > 0.0) {
        // spill over indices absent from the stored line
        std::size_t next = 0;
        Real mx = -kInf;
        for (Index j = 0; j < static_cast<Index>(p.size()); ++j) {
            while (next < cols.size() && cols[next] < j) ++next;
            if ((next < cols.size() && cols[next] == j) || j == l) continue;
            mx = std::max(mx, sign * p[static_cast<std::size_t>(j)]);
        }
        if (mx > -kInf) {
            next = 0;
            Real acc = 0.0;
            for (Index j = 0; j < static_cast<Index>(p.size()); ++j) {
                while (next < cols.size() && cols[next] < j) ++next;
                if ((next < cols.size() && cols[next] == j) || j == l) continue;
                acc += std::exp(sign * p[static_cast<std::size_t>(j)] - mx);
            }
            terms.push_back(mx + std::log(m.shift() * acc));
        }
    }
    if (extra > -kInf) terms.push_back(extra);
    return logsumexp(terms);
}

struct Gauge {
    Real cp = 0.0, cm = 0.0;
    std::vector<Real> ep, em;
    Real sp = 0.0, sm = 0.0;

    void reset(std::span<const Real> pages) {
        cp = cm = -kInf;
        for (Real v : pages) {
            cp = std::max(cp, v);
            cm = std::max(cm, -v);
        }
        ep.resize(pages.size());
        em.resize(pages.size());
        sp = sm = 0.0;
        for (std::size_t j = 0; j < pages.size(); ++j) {
            ep[j] = std::exp(pages[j] - cp);
            em[j] = std::exp(-pages[j] - cm);
            sp += ep[j];
            sm += em[j];
        }
    }
    // Returns false if the coordinate left the gauged range and a reset is due.
    bool update(std::span<const Real> pages, Index l) {
        auto ls = static_cast<std::size_t>(l);
        Real pnew = pages[ls];
        if (pnew - cp > 500.0 || -pnew - cm > 500.0) {
            reset(pages);
            return false;
        }
        sp -= ep[ls];
        sm -= em[ls];
        ep[ls] = std::exp(pnew - cp);
        em[ls] = std::exp(-pnew - cm);
        sp += ep[ls];
        sm += em[ls];
        return true;
    }
};

// Gauged clamped line sum; NaN/0/inf results signal the caller to fall back.
// cap_g is the gauged cap scale (E_l, possibly times e^{-mu}).
Real gauged_trunc_line(std::span<const Index> cols,
                       std::span<const Real> vals, std::span<const Index> bound_pos,
                       const BoundsSet& bounds, const std::vector<Real>& e_arr,
                       Real e_sum, Real e_l, Index l, Real cap_g, Real shift,
                       Real extra_g) {
    Real acc = 0.0;
    Real stored_e = 0.0;
    for (std::size_t k = 0; k < cols.size(); ++k) {
        if (cols[k] == l) continue;
        auto js = static_cast<std::size_t>(cols[k]);
        Real c = vals[k] + shift;
        if (shift > 0.0) stored_e += e_arr[js];
        if (!(c > 0.0)) continue;
        auto bp = static_cast<std::size_t>(bound_pos[k]);
        Real lo = bounds.lower()[bp];
        Real up = bounds.upper()[bp];
        if (cap_g == 0.0 && (lo > 0.0 || up < kInf)) {
            return kNaN;  // gauge underflowed a cap; caller takes the exact path
        }
        Real x = c * e_arr[js];
        Real hi_cap = up < kInf ? up * cap_g : kInf;
        Real lo_cap = lo > 0.0 ? lo * cap_g : 0.0;
        acc += std::max(std::min(x, hi_cap), lo_cap);
    }
    if (shift > 0.0) acc += shift * (e_sum - e_l - stored_e);
    return acc + extra_g;
}

}  // namespace

void trunc_dss_step(const SparseMatrix& m, const SparseMatrix& mt,
                    const BoundsSet& bounds, std::span<Real> p, Index l) {
    check_aligned(m, bounds, p);
    if (l < 0 || l >= m.size()) throw std::invalid_argument("trunc_dss_step: bad coordinate");
    // One-shot bound position lookups for the incoming arcs.
    auto tcols = mt.row_cols(l);
    std::vector<Index> col_pos(tcols.size());
    for (std::size_t k = 0; k < tcols.size(); ++k) {
        col_pos[k] = *m.find(tcols[k], l);
    }
    std::vector<Index> row_pos(m.row_cols(l).size());
    std::iota(row_pos.begin(), row_pos.end(), m.row_offsets()[l]);
    const Real pl = p[static_cast<std::size_t>(l)];
    Real log_num = log_trunc_line_exact(m, tcols, mt.row_vals(l), col_pos, bounds, p,
                                        +1.0, l, pl, -kInf);
    Real log_den = log_trunc_line_exact(m, m.row_cols(l), m.row_vals(l), row_pos, bounds,
                                        p, -1.0, l, -pl, -kInf);
    if (log_num == -kInf && log_den == -kInf && m.entry(l, l) > 0.0) {
        return;  // only the diagonal touches p_l: the objective is flat here
    }
    if (log_num == -kInf) {
        throw StructuralError("trunc_dss_step: column " + std::to_string(l) +
                              " has no logical mass off the diagonal");
    }
    if (log_den == -kInf) {
        throw StructuralError("trunc_dss_step: row " + std::to_string(l) +
                              " has no logical mass off the diagonal");
    }
    p[static_cast<std::size_t>(l)] = 0.5 * (log_num - log_den);
}

std::pair<ScoreState, SolveReport> trunc_dss_solve(const SparseMatrix& m,
                                                   const BoundsSet& bounds,
                                                   const ScoreState& p0,
                                                   const IdealOptions& opts) {
    const Index n = m.size();
    check_aligned(m, bounds, p0.p);
    TransposedPattern tp = transpose_with_map(m);
    std::vector<Index> row_pos(static_cast<std::size_t>(m.nnz()));
    std::iota(row_pos.begin(), row_pos.end(), Index{0});
    const Index max_iter = opts.max_iter >= 0 ? opts.max_iter : default_max_iter(n);
    const Index stride =
        opts.trace_stride > 0 ? opts.trace_stride : default_trace_stride(n);
    const Real shift = m.shift();

    SolveReport report;
    report.trace_stride = stride;
    report.status = SolveStatus::MaxIter;
    std::vector<Real> p = p0.p;
    normalize(p, opts.normalization);
    std::vector<Real> before(p.size());
    std::vector<Real> residuals;
    Gauge g;
    for (Index sweep = 0; sweep < max_iter; ++sweep) {
        std::copy(p.begin(), p.end(), before.begin());
        g.reset(p);
        for (Index l = 0; l < n; ++l) {
            auto ls = static_cast<std::size_t>(l);
            auto col_pos = std::span<const Index>(tp.orig).subspan(
                static_cast<std::size_t>(tp.mt.row_offsets()[l]),
                tp.mt.row_cols(l).size());
            auto rpos = std::span<const Index>(row_pos).subspan(
                static_cast<std::size_t>(m.row_offsets()[l]), m.row_cols(l).size());
            Real num = gauged_trunc_line(tp.mt.row_cols(l), tp.mt.row_vals(l), col_pos,
                                         bounds, g.ep, g.sp, g.ep[ls], l, g.ep[ls], shift,
                                         0.0);
            Real den = gauged_trunc_line(m.row_cols(l), m.row_vals(l), rpos, bounds,
                                         g.em, g.sm, g.em[ls], l, g.em[ls], shift, 0.0);
            Real pnew;
            if (num > 0.0 && std::isfinite(num) && den > 0.0 && std::isfinite(den)) {
                pnew = 0.5 * ((g.cp + std::log(num)) - (g.cm + std::log(den)));
            } else {
                Real pl = p[ls];
                Real lnum = log_trunc_line_exact(m, tp.mt.row_cols(l), tp.mt.row_vals(l),
                                                 col_pos, bounds, p, +1.0, l, pl, -kInf);
                Real lden = log_trunc_line_exact(m, m.row_cols(l), m.row_vals(l), rpos,
                                                 bounds, p, -1.0, l, -pl, -kInf);
                if (lnum == -kInf && lden == -kInf && m.entry(l, l) > 0.0) {
                    continue;  // diagonal-only coordinate, flat objective
                }
                if (lnum == -kInf || lden == -kInf) {
                    throw StructuralError("trunc_dss_solve: empty line at coordinate " +
                                          std::to_string(l));
                }
                pnew = 0.5 * (lnum - lden);
            }
            p[ls] = pnew;
            g.update(p, l);
        }
        normalize(p, opts.normalization);
        Real res = sup_dist(p, before);
        residuals.push_back(res);
        if (sweep % stride == 0) {
            report.theta_trace.push_back(theta_trunc(m, bounds, p));
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
// Bounded effective HOTS
// ---------------------------------------------------------------------------

Real theta_bounded(const SparseMatrix& m, const BoundsSet& bounds,
                   std::span<const Real> p_aug, const EffectiveParams& params) {
    const Index n = m.size();
    check_aligned(m, bounds, p_aug, 1);
    check_alpha(params.alpha);
    auto pages = p_aug.subspan(0, static_cast<std::size_t>(n));
    const Real p_art = p_aug[static_cast<std::size_t>(n)];
    auto offsets = m.row_offsets();
    auto cols = m.col_indices();
    auto vals = m.values();
    Real acc = 0.0;
    Real stored_pairs = 0.0;  // sum e^{t + mu} over the stored pattern
    for (Index i = 0; i < n; ++i) {
        for (Index k = offsets[i]; k < offsets[i + 1]; ++k) {
            auto ks = static_cast<std::size_t>(k);
            Real c = vals[k] + m.shift();
            Real t = pages[static_cast<std::size_t>(i)] -
                     pages[static_cast<std::size_t>(cols[k])];
            if (m.shift() > 0.0) stored_pairs += std::exp(t + params.mu);
            if (!(c > 0.0)) continue;
            Real lraw = std::log(c) + t + params.mu;  // log of the unclamped flow
            Real lo = bounds.lower()[ks];
            Real up = bounds.upper()[ks];
            if (lo > 0.0 && lraw < std::log(lo)) {
                acc += lo * (1.0 + lraw - std::log(lo));
            } else if (up < kInf && (up == 0.0 || lraw > std::log(up))) {
                acc += up == 0.0 ? 0.0 : up * (1.0 + lraw - std::log(up));
            } else {
                acc += std::exp(lraw);
            }
        }
    }
    std::vector<Real> neg(pages.begin(), pages.end());
    for (Real& v : neg) v = -v;
    Real lsp = logsumexp(pages);
    Real lsm = logsumexp(neg);
    if (m.shift() > 0.0) {
        // uniform arcs off the stored pattern are never bounded
        acc += m.shift() * (std::exp(params.mu + lsp + lsm) - stored_pairs);
    }
    acc += std::exp(params.mu + params.a + p_art + lsm);
    acc += std::exp(params.mu - params.b - p_art + lsp);
    return acc - (1.0 - params.alpha) * params.a - params.mu +
           (1.0 - params.alpha) * params.b;
}

EffectiveResult bounded_hots_solve(const SparseMatrix& m, const BoundsSet& bounds,
                                   const ScoreState& p0, const EffectiveOptions& opts) {
    check_alpha(opts.alpha);
    const Index n = m.size();
    check_aligned(m, bounds, p0.p, 1);
    const Index max_iter = opts.max_iter >= 0 ? opts.max_iter : default_max_iter(n);
    const Index stride =
        opts.trace_stride > 0 ? opts.trace_stride : default_trace_stride(n);
    const Real alpha = opts.alpha;
    const Real shift = m.shift();
    TransposedPattern tp = transpose_with_map(m);
    std::vector<Index> row_pos(static_cast<std::size_t>(m.nnz()));
    std::iota(row_pos.begin(), row_pos.end(), Index{0});

    EffectiveResult result;
    result.report.trace_stride = stride;
    result.report.status = SolveStatus::MaxIter;

    std::vector<Real> p = p0.p;
    normalize(p, Normalization::MeanZero);
    auto pages = [&]() {
        return std::span<const Real>(p).subspan(0, static_cast<std::size_t>(n));
    };

    // Multipliers start from the unclamped closed forms.
    detail::EffStepData d0 = detail::effective_step_data(m, pages(), alpha, 1, -1);
    Real mu = std::log(2.0 * alpha - 1.0) - d0.log_sa_b;
    Real log_ea = d0.log_ea;  // log e^{a + p_art}
    Real log_eb = d0.log_eb;  // log e^{-b - p_art}
    Real theta_start = kNaN;
    Index monitor_run = 0;

    std::vector<Real> before(p.size());
    std::vector<Real> residuals;
    Gauge g;
    for (Index sweep = 0; sweep < max_iter; ++sweep) {
        std::copy(p.begin(), p.end(), before.begin());
        Real mu_before = mu;
        g.reset(pages());
        // Page coordinates: clamped exact minimizers. The caps carry e^{-mu}
        // because the bounds constrain the unit-mass flow.
        for (Index l = 0; l < n; ++l) {
            auto ls = static_cast<std::size_t>(l);
            auto col_pos = std::span<const Index>(tp.orig).subspan(
                static_cast<std::size_t>(tp.mt.row_offsets()[l]),
                tp.mt.row_cols(l).size());
            auto rpos = std::span<const Index>(row_pos).subspan(
                static_cast<std::size_t>(m.row_offsets()[l]), m.row_cols(l).size());
            Real cap_num = g.ep[ls] * std::exp(-mu);
            Real cap_den = g.em[ls] * std::exp(-mu);
            Real extra_num = std::exp(log_ea - g.cp);
            Real extra_den = std::exp(log_eb - g.cm);
            Real num = kNaN, den = kNaN;
            if (std::isfinite(cap_num) && std::isfinite(cap_den)) {
                num = gauged_trunc_line(tp.mt.row_cols(l), tp.mt.row_vals(l), col_pos,
                                        bounds, g.ep, g.sp, g.ep[ls], l, cap_num, shift,
                                        extra_num);
                den = gauged_trunc_line(m.row_cols(l), m.row_vals(l), rpos, bounds,
                                        g.em, g.sm, g.em[ls], l, cap_den, shift,
                                        extra_den);
            }
            Real pnew;
            if (num > 0.0 && std::isfinite(num) && den > 0.0 && std::isfinite(den)) {
                pnew = 0.5 * ((g.cp + std::log(num)) - (g.cm + std::log(den)));
            } else {
                Real pl = p[ls];
                Real lnum =
                    log_trunc_line_exact(m, tp.mt.row_cols(l), tp.mt.row_vals(l), col_pos,
                                         bounds, pages(), +1.0, l, pl - mu, log_ea);
                Real lden =
                    log_trunc_line_exact(m, m.row_cols(l), m.row_vals(l), rpos, bounds,
                                         pages(), -1.0, l, -pl - mu, log_eb);
                if (lnum == -kInf || lden == -kInf) {
                    throw StructuralError("bounded_hots_solve: empty line at coordinate " +
                                          std::to_string(l));
                }
                pnew = 0.5 * (lnum - lden);
            }
            p[ls] = pnew;
            g.update(pages(), l);
        }
        Real lsp = g.cp + std::log(g.sp);
        Real lsm = g.cm + std::log(g.sm);
        // Artificial coordinate, then the closed-form multiplier block with
        // clamped sums.
        {
            Real a_cur = log_ea - p[static_cast<std::size_t>(n)];
            Real b_cur = -log_eb - p[static_cast<std::size_t>(n)];
            p[static_cast<std::size_t>(n)] = 0.5 * ((-b_cur + lsp) - (a_cur + lsm));
            log_ea = a_cur + p[static_cast<std::size_t>(n)];
            log_eb = -b_cur - p[static_cast<std::size_t>(n)];
        }
        {
            // S_c = sum of clamped entries mid(A e^{p_j - p_j'}, U e^-mu, L e^-mu),
            // all pairs; uniform off-pattern arcs go in unclamped.
            Real sa_g = 0.0;
            Real stored_pairs_g = 0.0;
            auto offsets = m.row_offsets();
            auto mcols = m.col_indices();
            auto mvals = m.values();
            Real cap_scale = std::exp(-mu - g.cp - g.cm);
            bool fallback = !(std::isfinite(cap_scale));
            for (Index i = 0; i < n && !fallback; ++i) {
                auto is = static_cast<std::size_t>(i);
                for (Index k = offsets[i]; k < offsets[i + 1]; ++k) {
                    auto ks = static_cast<std::size_t>(k);
                    auto js = static_cast<std::size_t>(mcols[k]);
                    Real c = mvals[k] + shift;
                    Real pair = g.ep[is] * g.em[js];
                    if (shift > 0.0) stored_pairs_g += pair;
                    if (!(c > 0.0)) continue;
                    Real lo = bounds.lower()[ks];
                    Real up = bounds.upper()[ks];
                    Real hi_cap = up < kInf ? up * cap_scale : kInf;
                    Real lo_cap = lo > 0.0 ? lo * cap_scale : 0.0;
                    sa_g += std::max(std::min(c * pair, hi_cap), lo_cap);
                }
            }
            Real log_sc;
            if (!fallback && sa_g > 0.0 && std::isfinite(sa_g)) {
                if (shift > 0.0) sa_g += shift * (g.sp * g.sm - stored_pairs_g);
                log_sc = g.cp + g.cm + std::log(sa_g);
            } else {
                // exact, entry by entry in log space
                std::vector<Real> terms;
                terms.reserve(static_cast<std::size_t>(m.nnz()) + 1);
                for (Index i = 0; i < n; ++i) {
                    for (Index k = offsets[i]; k < offsets[i + 1]; ++k) {
                        auto ks = static_cast<std::size_t>(k);
                        Real c = mvals[k] + shift;
                        if (!(c > 0.0)) continue;
                        Real lx = std::log(c) + p[static_cast<std::size_t>(i)] -
                                  p[static_cast<std::size_t>(mcols[k])];
                        Real lo = bounds.lower()[ks];
                        Real up = bounds.upper()[ks];
                        terms.push_back(
                            clamp_log(lx, lo > 0.0 ? std::log(lo) - mu : -kInf,
                                      up < kInf ? (up > 0.0 ? std::log(up) - mu : -kInf)
                                                : kInf));
                    }
                }
                log_sc = logsumexp(terms);
                if (shift > 0.0) {
                    // off-pattern spill, unclamped (approximate by the full sum;
                    // the stored pattern is re-added clamped above)
                    std::vector<Real> neg(pages().begin(), pages().end());
                    for (Real& v : neg) v = -v;
                    Real all_pairs = logsumexp(pages()) + logsumexp(neg);
                    Real stored_lx = -kInf;
                    for (Index i = 0; i < n; ++i) {
                        for (Index k = offsets[i]; k < offsets[i + 1]; ++k) {
                            stored_lx = logadd(
                                stored_lx, p[static_cast<std::size_t>(i)] -
                                               p[static_cast<std::size_t>(mcols[k])]);
                        }
                    }
                    Real spill = std::exp(all_pairs) - std::exp(stored_lx);
                    log_sc = logadd(log_sc, std::log(shift * std::max(spill, 0.0)));
                }
            }
            if (log_sc == -kInf) {
                throw std::domain_error("bounded_hots_solve: A = 0 (no arc mass)");
            }
            mu = std::log(2.0 * alpha - 1.0) - log_sc;
            log_ea = std::log(1.0 - alpha) - mu - lsm;
            log_eb = std::log(1.0 - alpha) - mu - lsp;
        }
        normalize(p, Normalization::MeanZero);
        Real res = std::max(sup_dist(p, before), std::abs(mu - mu_before));
        residuals.push_back(res);
        EffectiveParams cur{alpha, mu, log_ea - p[static_cast<std::size_t>(n)],
                            -log_eb - p[static_cast<std::size_t>(n)]};
        Real theta = theta_bounded(m, bounds, p, cur);
        if (sweep == 0) theta_start = theta;
        if (sweep % stride == 0) {
            result.report.theta_trace.push_back(theta);
            result.report.residual_trace.push_back(res);
        }
        bool unbounded = theta < theta_start - opts.divergence_budget ||
                         sup_norm(p) > opts.potential_ceiling;
        monitor_run = unbounded ? monitor_run + 1 : 0;
        result.report.iterations = sweep + 1;
        result.report.residual = res;
        if (monitor_run >= opts.monitor_patience) {
            result.report.status = SolveStatus::Diverged;
            break;
        }
        if (res < opts.tol) {
            result.report.status = SolveStatus::Converged;
            break;
        }
    }
    result.report.rate_estimate = estimate_rate(residuals);
    {
        // Same artificial-potential gauge as the Jacobi effective map, so that
        // trivial bounds reproduce effective_cd_solve exactly; the multipliers
        // are refreshed at the final state (mu only involves differences and
        // needs no fix-up).
        auto pg = std::span<const Real>(p).subspan(0, static_cast<std::size_t>(n));
        std::vector<Real> neg(pg.begin(), pg.end());
        for (Real& v : neg) v = -v;
        p[static_cast<std::size_t>(n)] = 0.5 * (logsumexp(pg) - logsumexp(neg));
        normalize(p, Normalization::MeanZero);
        auto pg2 = std::span<const Real>(p).subspan(0, static_cast<std::size_t>(n));
        std::vector<Real> neg2(pg2.begin(), pg2.end());
        for (Real& v : neg2) v = -v;
        log_ea = std::log(1.0 - alpha) - mu - logsumexp(neg2);
        log_eb = std::log(1.0 - alpha) - mu - logsumexp(pg2);
    }
    result.params = EffectiveParams{alpha, mu, log_ea - p[static_cast<std::size_t>(n)],
                                    -log_eb - p[static_cast<std::size_t>(n)]};
    result.state = ScoreState(std::move(p), Normalization::MeanZero);
    return result;
}

EffectiveFlow recover_bounded_flow(const SparseMatrix& m, const BoundsSet& bounds,
                                   std::span<const Real> p_aug,
                                   const EffectiveParams& params) {
    const Index n = m.size();
    check_aligned(m, bounds, p_aug, 1);
    auto pages = p_aug.subspan(0, static_cast<std::size_t>(n));
    const Real p_art = p_aug[static_cast<std::size_t>(n)];
    auto offsets = m.row_offsets();
    auto cols = m.col_indices();
    auto vals = m.values();
    EffectiveFlow flow;
    std::vector<Real> rho(static_cast<std::size_t>(m.nnz()));
    std::vector<Real> out(static_cast<std::size_t>(n), 0.0);
    std::vector<Real> in(static_cast<std::size_t>(n), 0.0);
    Real stored_mass = 0.0;
    for (Index i = 0; i < n; ++i) {
        for (Index k = offsets[i]; k < offsets[i + 1]; ++k) {
            auto ks = static_cast<std::size_t>(k);
            Real c = vals[k] + m.shift();
            Real r = 0.0;
            if (c > 0.0) {
                Real lraw = std::log(c) + pages[static_cast<std::size_t>(i)] -
                            pages[static_cast<std::size_t>(cols[k])] + params.mu;
                Real lo = bounds.lower()[ks];
                Real up = bounds.upper()[ks];
                r = std::exp(clamp_log(lraw, lo > 0.0 ? std::log(lo) : -kInf,
                                       up < kInf ? (up > 0.0 ? std::log(up) : -kInf)
                                                 : kInf));
            }
            rho[ks] = r;
            stored_mass += r;
            out[static_cast<std::size_t>(i)] += r;
            in[static_cast<std::size_t>(cols[k])] += r;
        }
    }
    std::vector<Real> neg(pages.begin(), pages.end());
    for (Real& v : neg) v = -v;
    Real lsp = logsumexp(pages);
    Real lsm = logsumexp(neg);
    if (m.shift() > 0.0) {
        Real stored_pairs = 0.0;
        for (Index i = 0; i < n; ++i) {
            for (Index k = offsets[i]; k < offsets[i + 1]; ++k) {
                Real t = std::exp(pages[static_cast<std::size_t>(i)] -
                                  pages[static_cast<std::size_t>(cols[k])] + params.mu);
                stored_pairs += t;
            }
        }
        flow.shift_mass = m.shift() * (std::exp(params.mu + lsp + lsm) - stored_pairs);
        for (Index i = 0; i < n; ++i) {
            auto is = static_cast<std::size_t>(i);
            // uniform spill, charged off the stored pattern
            Real out_all = std::exp(params.mu + pages[is] + lsm);
            Real in_all = std::exp(params.mu - pages[is] + lsp);
            Real out_pat = 0.0;
            for (Index k = offsets[i]; k < offsets[i + 1]; ++k) {
                out_pat += std::exp(params.mu + pages[is] -
                                    pages[static_cast<std::size_t>(cols[k])]);
            }
            out[is] += m.shift() * (out_all - out_pat);
            in[is] += m.shift() * in_all;  // column spill fixed below
        }
        // subtract the stored-pattern part of the column spill
        for (Index i = 0; i < n; ++i) {
            for (Index k = offsets[i]; k < offsets[i + 1]; ++k) {
                in[static_cast<std::size_t>(cols[k])] -=
                    m.shift() * std::exp(params.mu + pages[static_cast<std::size_t>(i)] -
                                         pages[static_cast<std::size_t>(cols[k])]);
            }
        }
    }
    flow.to_artificial.resize(static_cast<std::size_t>(n));
    flow.from_artificial.resize(static_cast<std::size_t>(n));
    Real art_in = 0.0, art_out = 0.0;
    for (Index i = 0; i < n; ++i) {
        auto is = static_cast<std::size_t>(i);
        flow.to_artificial[is] = std::exp(params.mu - params.b - p_art + pages[is]);
        flow.from_artificial[is] = std::exp(params.mu + params.a + p_art - pages[is]);
        out[is] += flow.to_artificial[is];
        in[is] += flow.from_artificial[is];
        art_in += flow.to_artificial[is];
        art_out += flow.from_artificial[is];
    }
    flow.total_mass = stored_mass + flow.shift_mass + art_in + art_out;
    Real imbalance = std::abs(art_in - art_out);
    for (Index i = 0; i < n; ++i) {
        auto is = static_cast<std::size_t>(i);
        imbalance = std::max(imbalance, std::abs(out[is] - in[is]));
    }
    flow.balance_residual = imbalance;
    flow.rho = SparseMatrix(n, std::vector<Index>(offsets.begin(), offsets.end()),
                            std::vector<Index>(cols.begin(), cols.end()), std::move(rho),
                            0.0);
    return flow;
}

}  // namespace hotskit
