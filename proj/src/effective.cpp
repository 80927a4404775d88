#include "hotskit/effective.hpp"

#include <algorithm>
#include <cmath>

#include "effective_internal.hpp"
#include "line_sums.hpp"

namespace hotskit {

void check_alpha(Real alpha) {
    if (!(alpha > 0.5 + 1e-6 && alpha < 1.0 - 1e-6)) {
        throw std::invalid_argument(
            "alpha must lie strictly inside (1/2, 1); the multiplier formulas take "
            "log(2 alpha - 1) and log(1 - alpha)");
    }
}

namespace detail {

Real c_alpha(Real alpha) {
    return 1.0 - 2.0 * (1.0 - alpha) * std::log(1.0 - alpha) -
           (2.0 * alpha - 1.0) * std::log(2.0 * alpha - 1.0);
}

Real log_sa_exact(const SparseMatrix& m, std::span<const Real> p, Index rb) {
    const Index n = m.size();
    const Index limit = rb < 0 ? n : std::min(rb, n);
    Real mx = -kInf;
    for (Index i = 0; i < limit; ++i) {
        auto cols = m.row_cols(i);
        auto vals = m.row_vals(i);
        for (std::size_t k = 0; k < cols.size(); ++k) {
            if (cols[k] >= limit || !(vals[k] > 0.0)) continue;
            mx = std::max(mx, p[static_cast<std::size_t>(i)] -
                                  p[static_cast<std::size_t>(cols[k])] +
                                  std::log(vals[k]));
        }
    }
    Real stored = -kInf;
    if (mx > -kInf) {
        Real acc = 0.0;
        for (Index i = 0; i < limit; ++i) {
            auto cols = m.row_cols(i);
            auto vals = m.row_vals(i);
            for (std::size_t k = 0; k < cols.size(); ++k) {
                if (cols[k] >= limit || !(vals[k] > 0.0)) continue;
                acc += std::exp(p[static_cast<std::size_t>(i)] -
                                p[static_cast<std::size_t>(cols[k])] +
                                std::log(vals[k]) - mx);
            }
        }
        stored = mx + std::log(acc);
    }
    if (m.shift() > 0.0 && limit > 0) {
        Real lsp = logsumexp(p.subspan(0, static_cast<std::size_t>(limit)));
        std::vector<Real> neg(p.begin(), p.begin() + limit);
        for (Real& v : neg) v = -v;
        stored = logadd(stored, std::log(m.shift()) + lsp + logsumexp(neg));
    }
    return stored;
}

EffStepData effective_step_data(const SparseMatrix& m, std::span<const Real> pages,
                                Real alpha, int threads, Index lambda_block) {
    const Index n = m.size();
    if (static_cast<Index>(pages.size()) != n || n == 0) {
        throw std::invalid_argument("effective model: bad page-vector size");
    }
    const Index block = lambda_block < 0 ? n : std::min(lambda_block, n);
    if (block == 0) throw std::invalid_argument("effective model: empty lambda block");
    const Real log_gamma = std::log(1.0 - alpha) - std::log(2.0 * alpha - 1.0);

    EffStepData d;
    Real cp = -kInf, cm = -kInf;
    for (Real v : pages) {
        cp = std::max(cp, v);
        cm = std::max(cm, -v);
    }
    std::vector<Real> eplus(pages.size()), eminus(pages.size());
    Real sp = 0.0, sm = 0.0, sp_b = 0.0, sm_b = 0.0;
    for (std::size_t i = 0; i < pages.size(); ++i) {
        eplus[i] = std::exp(pages[i] - cp);
        eminus[i] = std::exp(-pages[i] - cm);
        sp += eplus[i];
        sm += eminus[i];
        if (static_cast<Index>(i) < block) {
            sp_b += eplus[i];
            sm_b += eminus[i];
        }
    }
    d.lsp = cp + std::log(sp);
    d.lsm = cm + std::log(sm);
    d.lsp_b = cp + std::log(sp_b);
    d.lsm_b = cm + std::log(sm_b);

    std::vector<Real> u_g = m.apply_transpose(eplus, threads);  // gauge e^{cp}
    std::vector<Real> w_g = m.apply(eminus, threads);           // gauge e^{cm}

    Real sa_g = 0.0;
    if (block == n) {
        for (std::size_t j = 0; j < pages.size(); ++j) sa_g += w_g[j] * eplus[j];
    } else {
        for (Index i = 0; i < block; ++i) {
            auto cols = m.row_cols(i);
            auto vals = m.row_vals(i);
            Real row = 0.0;
            for (std::size_t k = 0; k < cols.size() && cols[k] < block; ++k) {
                row += vals[k] * eminus[static_cast<std::size_t>(cols[k])];
            }
            sa_g += row * eplus[static_cast<std::size_t>(i)];
        }
        if (m.shift() > 0.0) sa_g += m.shift() * sp_b * sm_b;
    }
    d.log_sa_b = sa_g > 0.0 ? cp + cm + std::log(sa_g)
                            : log_sa_exact(m, pages, block == n ? -1 : block);
    if (d.log_sa_b == -kInf) {
        throw std::domain_error("effective model: A = 0 (no arc mass)");
    }
    d.log_ea = log_gamma + d.log_sa_b - d.lsm_b;
    d.log_eb = log_gamma + d.log_sa_b - d.lsp_b;

    d.map.resize(pages.size() + 1);
    d.log_u.resize(pages.size());
    for (std::size_t i = 0; i < pages.size(); ++i) {
        Real lu = logadd(u_g[i] > 0.0 ? cp + std::log(u_g[i]) : -kInf, d.log_ea);
        Real lw = logadd(w_g[i] > 0.0 ? cm + std::log(w_g[i]) : -kInf, d.log_eb);
        d.log_u[i] = lu;
        d.map[i] = 0.5 * (lu - lw);
    }
    d.map[pages.size()] = 0.5 * (d.lsp - d.lsm);
    return d;
}

std::vector<Real> effective_reduced_map(const SparseMatrix& m,
                                        std::span<const Real> pages, Real alpha,
                                        Index lambda_block) {
    EffStepData d = effective_step_data(m, pages, alpha, 1, lambda_block);
    d.map.pop_back();
    return std::move(d.map);
}

std::vector<Real> log_dprime_inv(const SparseMatrix& m, std::span<const Real> pages,
                                 Real alpha, Index lambda_block) {
    EffStepData d = effective_step_data(m, pages, alpha, 1, lambda_block);
    std::vector<Real> out(pages.size());
    for (std::size_t k = 0; k < pages.size(); ++k) out[k] = d.log_u[k] - pages[k];
    return out;
}

}  // namespace detail

Real theta_eff(const SparseMatrix& m, std::span<const Real> p_aug,
               const EffectiveParams& params) {
    const Index n = m.size();
    if (static_cast<Index>(p_aug.size()) != n + 1) {
        throw std::invalid_argument("theta_eff: expected n+1 potentials");
    }
    check_alpha(params.alpha);
    auto pages = p_aug.subspan(0, static_cast<std::size_t>(n));
    const Real p_art = p_aug[static_cast<std::size_t>(n)];
    Real log_sa = detail::log_sa_exact(m, pages, -1);
    Real lsp = logsumexp(pages);
    std::vector<Real> neg(pages.begin(), pages.end());
    for (Real& v : neg) v = -v;
    Real lsm = logsumexp(neg);
    Real log_total =
        params.mu +
        logadd(log_sa, logadd(-params.b - p_art + lsp, params.a + p_art + lsm));
    Real expo = std::exp(log_total);
    if (std::isinf(expo)) return kInf;
    const Real one_m_alpha = 1.0 - params.alpha;
    return expo - one_m_alpha * params.a - params.mu + one_m_alpha * params.b;
}

EffectiveParams lambda_of(const SparseMatrix& m, std::span<const Real> p_aug,
                          Real alpha, Index lambda_block) {
    const Index n = m.size();
    if (static_cast<Index>(p_aug.size()) != n + 1) {
        throw std::invalid_argument("lambda_of: expected n+1 potentials");
    }
    check_alpha(alpha);
    auto pages = p_aug.subspan(0, static_cast<std::size_t>(n));
    detail::EffStepData d = detail::effective_step_data(m, pages, alpha, 1, lambda_block);
    const Real p_art = p_aug[static_cast<std::size_t>(n)];
    EffectiveParams out;
    out.alpha = alpha;
    out.mu = std::log(2.0 * alpha - 1.0) - d.log_sa_b;
    out.a = d.log_ea - p_art;
    out.b = -(d.log_eb) - p_art;
    return out;
}

std::vector<Real> effective_map(const SparseMatrix& m, std::span<const Real> p_aug,
                                Real alpha, int threads, Index lambda_block) {
    const Index n = m.size();
    if (static_cast<Index>(p_aug.size()) != n + 1) {
        throw std::invalid_argument("effective_map: expected n+1 potentials");
    }
    check_alpha(alpha);
    auto pages = p_aug.subspan(0, static_cast<std::size_t>(n));
    return detail::effective_step_data(m, pages, alpha, threads, lambda_block).map;
}

ScoreState effective_step(const SparseMatrix& m, const ScoreState& s, Real alpha,
                          int threads, Index lambda_block) {
    ScoreState out(effective_map(m, s.p, alpha, threads, lambda_block),
                   s.normalization);
    normalize(out);
    return out;
}

Real theta_tilde(const SparseMatrix& m, std::span<const Real> p_pages, Real alpha) {
    check_alpha(alpha);
    if (static_cast<Index>(p_pages.size()) != m.size()) {
        throw std::invalid_argument("theta_tilde: dimension mismatch");
    }
    Real log_sa = detail::log_sa_exact(m, p_pages, -1);
    if (log_sa == -kInf) throw std::domain_error("theta_tilde: A = 0");
    Real lsp = logsumexp(p_pages);
    std::vector<Real> neg(p_pages.begin(), p_pages.end());
    for (Real& v : neg) v = -v;
    Real lsm = logsumexp(neg);
    return detail::c_alpha(alpha) + (1.0 - alpha) * (lsp + lsm) +
           (2.0 * alpha - 1.0) * log_sa;
}

EffectiveResult effective_solve(const SparseMatrix& m, const ScoreState& p0,
                                const EffectiveOptions& opts) {
    check_alpha(opts.alpha);
    const Index n = m.size();
    if (p0.size() != n + 1) {
        throw std::invalid_argument("effective_solve: expected n+1 potentials");
    }
    const Index max_iter = opts.max_iter >= 0 ? opts.max_iter : default_max_iter(n);
    const Index stride =
        opts.trace_stride > 0 ? opts.trace_stride : default_trace_stride(n);
    const Real c_alpha = detail::c_alpha(opts.alpha);

    EffectiveResult result;
    result.report.trace_stride = stride;
    result.report.status = SolveStatus::MaxIter;

    std::vector<Real> p = p0.p;
    normalize(p, Normalization::MeanZero);
    std::vector<Real> residuals;
    Real theta_tilde_start = kNaN;
    Index monitor_run = 0;
    for (Index k = 0; k < max_iter; ++k) {
        auto pages = std::span<const Real>(p).subspan(0, static_cast<std::size_t>(n));
        detail::EffStepData data =
            detail::effective_step_data(m, pages, opts.alpha, opts.threads, opts.lambda_block);
        Real tt = c_alpha + (1.0 - opts.alpha) * (data.lsp_b + data.lsm_b) +
                  (2.0 * opts.alpha - 1.0) * data.log_sa_b;
        if (k == 0) theta_tilde_start = tt;
        bool unbounded = tt < theta_tilde_start - opts.divergence_budget ||
                         sup_norm(p) > opts.potential_ceiling;
        monitor_run = unbounded ? monitor_run + 1 : 0;
        if (monitor_run >= opts.monitor_patience) {
            result.report.iterations = k;
            result.report.status = SolveStatus::Diverged;
            break;
        }
        std::vector<Real> next = std::move(data.map);
        normalize(next, Normalization::MeanZero);
        Real res = sup_dist(next, p);
        residuals.push_back(res);
        if (k % stride == 0) {
            result.report.theta_trace.push_back(tt);
            result.report.residual_trace.push_back(res);
        }
        p = std::move(next);
        result.report.iterations = k + 1;
        result.report.residual = res;
        if (res < opts.tol) {
            result.report.status = SolveStatus::Converged;
            break;
        }
    }
    result.report.rate_estimate = estimate_rate(residuals);
    result.params = lambda_of(m, p, opts.alpha, opts.lambda_block);
    result.state = ScoreState(std::move(p), Normalization::MeanZero);
    return result;
}

// ---------------------------------------------------------------------------
// Cyclic exact coordinate descent on theta(p_1..p_{n+1}, mu, a, b)
// ---------------------------------------------------------------------------

EffectiveResult effective_cd_solve(const SparseMatrix& m, const ScoreState& p0,
                                   const EffectiveOptions& opts) {
    check_alpha(opts.alpha);
    const Index n = m.size();
    if (p0.size() != n + 1) {
        throw std::invalid_argument("effective_cd_solve: expected n+1 potentials");
    }
    if (opts.lambda_block >= 0) {
        throw std::invalid_argument(
            "effective_cd_solve: the lambda block variant is Jacobi-only");
    }
    const Index max_iter = opts.max_iter >= 0 ? opts.max_iter : default_max_iter(n);
    const Index stride =
        opts.trace_stride > 0 ? opts.trace_stride : default_trace_stride(n);
    const Real alpha = opts.alpha;
    const Real log_gamma = std::log(1.0 - alpha) - std::log(2.0 * alpha - 1.0);
    const Real c_alpha = detail::c_alpha(alpha);
    const Real shift = m.shift();
    SparseMatrix mt = explicit_transpose(m);

    EffectiveResult result;
    result.report.trace_stride = stride;
    result.report.status = SolveStatus::MaxIter;

    std::vector<Real> p = p0.p;  // n pages + artificial
    normalize(p, Normalization::MeanZero);
    auto pages = [&]() { return std::span<const Real>(p).subspan(0, static_cast<std::size_t>(n)); };

    // Multipliers start at their closed-form optimum.
    detail::EffStepData d0 =
        detail::effective_step_data(m, pages(), alpha, opts.threads, -1);
    Real log_ea = d0.log_ea;  // log e^{a + p_art}; kept in absorbed form
    Real log_eb = d0.log_eb;
    Real theta_tilde_start = c_alpha + (1.0 - alpha) * (d0.lsp + d0.lsm) +
                             (2.0 * alpha - 1.0) * d0.log_sa_b;
    Real log_sa = d0.log_sa_b;

    std::vector<Real> before(p.size());
    std::vector<Real> residuals;
    Index monitor_run = 0;
    for (Index sweep = 0; sweep < max_iter; ++sweep) {
        std::copy(p.begin(), p.end(), before.begin());
        Real cp = 0.0, cm = 0.0;
        std::vector<Real> ep(static_cast<std::size_t>(n)), em(static_cast<std::size_t>(n));
        Real sp = 0.0, sm = 0.0;
        auto regauge = [&]() {
            cp = cm = -kInf;
            for (Index j = 0; j < n; ++j) {
                cp = std::max(cp, p[static_cast<std::size_t>(j)]);
                cm = std::max(cm, -p[static_cast<std::size_t>(j)]);
            }
            sp = sm = 0.0;
            for (Index j = 0; j < n; ++j) {
                auto js = static_cast<std::size_t>(j);
                ep[js] = std::exp(p[js] - cp);
                em[js] = std::exp(-p[js] - cm);
                sp += ep[js];
                sm += em[js];
            }
        };
        regauge();
        // Page coordinates: exact minimizers with the multipliers fixed;
        // diagonal terms are constant in p_l and excluded.
        for (Index l = 0; l < n; ++l) {
            auto ls = static_cast<std::size_t>(l);
            Real col_acc = 0.0;
            {
                auto cols = mt.row_cols(l);
                auto vals = mt.row_vals(l);
                for (std::size_t k = 0; k < cols.size(); ++k) {
                    if (cols[k] == l) continue;
                    col_acc += vals[k] * ep[static_cast<std::size_t>(cols[k])];
                }
            }
            Real row_acc = 0.0;
            {
                auto cols = m.row_cols(l);
                auto vals = m.row_vals(l);
                for (std::size_t k = 0; k < cols.size(); ++k) {
                    if (cols[k] == l) continue;
                    row_acc += vals[k] * em[static_cast<std::size_t>(cols[k])];
                }
            }
            if (shift > 0.0) {
                col_acc += shift * (sp - ep[ls]);
                row_acc += shift * (sm - em[ls]);
            }
            col_acc += std::exp(log_ea - cp);
            row_acc += std::exp(log_eb - cm);
            Real pnew;
            if (col_acc > 0.0 && std::isfinite(col_acc) && row_acc > 0.0 &&
                std::isfinite(row_acc)) {
                pnew = 0.5 * ((cp + std::log(col_acc)) - (cm + std::log(row_acc)));
            } else {
                Real lc = logadd(
                    logadd(detail::log_line_sum(mt.row_cols(l), mt.row_vals(l), pages(), +1.0, l),
                           detail::log_shift_sum(shift, pages(), +1.0, l)),
                    log_ea);
                Real lr = logadd(
                    logadd(detail::log_line_sum(m.row_cols(l), m.row_vals(l), pages(), -1.0, l),
                           detail::log_shift_sum(shift, pages(), -1.0, l)),
                    log_eb);
                pnew = 0.5 * (lc - lr);
            }
            p[ls] = pnew;
            if (pnew - cp > 500.0 || -pnew - cm > 500.0) {
                regauge();
            } else {
                sp += std::exp(pnew - cp) - ep[ls];
                sm += std::exp(-pnew - cm) - em[ls];
                ep[ls] = std::exp(pnew - cp);
                em[ls] = std::exp(-pnew - cm);
            }
        }
        Real lsp = cp + std::log(sp);
        Real lsm = cm + std::log(sm);
        // Artificial coordinate: e^{2 p_art} = e^{-b} sum e^{p} / (e^{a} sum e^{-p}).
        {
            Real a_cur = log_ea - p[static_cast<std::size_t>(n)];
            Real b_cur = -log_eb - p[static_cast<std::size_t>(n)];
            p[static_cast<std::size_t>(n)] = 0.5 * ((-b_cur + lsp) - (a_cur + lsm));
            // keep the absorbed multipliers consistent with the moved coordinate
            log_ea = a_cur + p[static_cast<std::size_t>(n)];
            log_eb = -b_cur - p[static_cast<std::size_t>(n)];
        }
        // Multiplier block: closed-form joint minimizer at the current state.
        {
            Real sa_g = 0.0;
            for (Index i = 0; i < n; ++i) {
                auto cols = m.row_cols(i);
                auto vals = m.row_vals(i);
                Real row = 0.0;
                for (std::size_t k = 0; k < cols.size(); ++k) {
                    row += vals[k] * em[static_cast<std::size_t>(cols[k])];
                }
                sa_g += row * ep[static_cast<std::size_t>(i)];
            }
            if (shift > 0.0) sa_g += shift * sp * sm;
            log_sa = sa_g > 0.0 ? cp + cm + std::log(sa_g)
                                : detail::log_sa_exact(m, pages(), -1);
            if (log_sa == -kInf) {
                throw std::domain_error("effective model: A = 0 (no arc mass)");
            }
            log_ea = log_gamma + log_sa - lsm;
            log_eb = log_gamma + log_sa - lsp;
        }
        normalize(p, Normalization::MeanZero);
        // The absorbed multipliers are translation-invariant, nothing to fix up.
        Real res = sup_dist(p, before);
        residuals.push_back(res);
        Real tt = c_alpha + (1.0 - alpha) * (lsp + lsm) + (2.0 * alpha - 1.0) * log_sa;
        if (sweep % stride == 0) {
            result.report.theta_trace.push_back(tt);
            result.report.residual_trace.push_back(res);
        }
        bool unbounded = tt < theta_tilde_start - opts.divergence_budget ||
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
        // The dual is invariant under shifting the artificial potential into
        // (a, b); fix the same gauge the Jacobi map uses so that solutions of
        // both solvers coincide after normalization.
        auto pg = std::span<const Real>(p).subspan(0, static_cast<std::size_t>(n));
        std::vector<Real> neg(pg.begin(), pg.end());
        for (Real& v : neg) v = -v;
        p[static_cast<std::size_t>(n)] = 0.5 * (logsumexp(pg) - logsumexp(neg));
        normalize(p, Normalization::MeanZero);
    }
    result.params = lambda_of(m, p, alpha);
    result.state = ScoreState(std::move(p), Normalization::MeanZero);
    return result;
}

EffectiveFlow recover_effective_flow(const SparseMatrix& m,
                                     std::span<const Real> p_aug,
                                     const EffectiveParams& params) {
    const Index n = m.size();
    if (static_cast<Index>(p_aug.size()) != n + 1) {
        throw std::invalid_argument("recover_effective_flow: expected n+1 potentials");
    }
    auto pages = p_aug.subspan(0, static_cast<std::size_t>(n));
    const Real p_art = p_aug[static_cast<std::size_t>(n)];
    EffectiveFlow flow;
    auto offsets = m.row_offsets();
    auto cols = m.col_indices();
    auto vals = m.values();
    std::vector<Real> rho(static_cast<std::size_t>(m.nnz()));
    std::vector<Real> out(static_cast<std::size_t>(n), 0.0);
    std::vector<Real> in(static_cast<std::size_t>(n), 0.0);
    Real stored_mass = 0.0;
    for (Index i = 0; i < n; ++i) {
        for (Index k = offsets[i]; k < offsets[i + 1]; ++k) {
            Real r = vals[k] * std::exp(params.mu + pages[static_cast<std::size_t>(i)] -
                                        pages[static_cast<std::size_t>(cols[k])]);
            rho[static_cast<std::size_t>(k)] = r;
            stored_mass += r;
            out[static_cast<std::size_t>(i)] += r;
            in[static_cast<std::size_t>(cols[k])] += r;
        }
    }
    Real lsp = logsumexp(pages);
    std::vector<Real> neg(pages.begin(), pages.end());
    for (Real& v : neg) v = -v;
    Real lsm = logsumexp(neg);
    if (m.shift() > 0.0) {
        flow.shift_mass = std::exp(params.mu + std::log(m.shift()) + lsp + lsm);
        for (Index i = 0; i < n; ++i) {
            auto is = static_cast<std::size_t>(i);
            out[is] += std::exp(params.mu + std::log(m.shift()) + pages[is] + lsm);
            in[is] += std::exp(params.mu + std::log(m.shift()) - pages[is] + lsp);
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
                            std::vector<Index>(cols.begin(), cols.end()),
                            std::move(rho), 0.0);
    return flow;
}

}  // namespace hotskit
