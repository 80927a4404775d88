#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>

#include "effective_internal.hpp"
#include "hotskit/effective.hpp"
#include "hotskit/ideal.hpp"

namespace hotskit {

namespace {

constexpr Index kDenseLimit = 2000;

// Largest |lambda| after removing the single eigenvalue closest to 1.
Real second_modulus(const Eigen::VectorXcd& eivals) {
    Index unit = 0;
    Real best = kInf;
    for (Index i = 0; i < eivals.size(); ++i) {
        Real d = std::abs(eivals[i] - std::complex<double>(1.0, 0.0));
        if (d < best) {
            best = d;
            unit = i;
        }
    }
    Real out = 0.0;
    for (Index i = 0; i < eivals.size(); ++i) {
        if (i != unit) out = std::max(out, std::abs(eivals[i]));
    }
    return out;
}

Real second_modulus_real(std::vector<Real> eivals) {
    Index unit = 0;
    Real best = kInf;
    for (std::size_t i = 0; i < eivals.size(); ++i) {
        Real d = std::abs(eivals[i] - 1.0);
        if (d < best) {
            best = d;
            unit = static_cast<Index>(i);
        }
    }
    Real out = 0.0;
    for (std::size_t i = 0; i < eivals.size(); ++i) {
        if (static_cast<Index>(i) != unit) out = std::max(out, std::abs(eivals[i]));
    }
    return out;
}

std::vector<Real> seeded_unit_vector(Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Real> x(static_cast<std::size_t>(n));
    Real norm = 0.0;
    for (Real& v : x) {
        // uniform in [-1, 1); distribution-class-free for reproducibility
        v = 2.0 * (static_cast<Real>(rng() >> 11) * 0x1.0p-53) - 1.0;
        norm += v * v;
    }
    norm = std::sqrt(norm);
    for (Real& v : x) v /= norm;
    return x;
}

// Two-step geometric growth estimator for a deflated power iteration.
class GrowthTracker {
public:
    explicit GrowthTracker(Real tol) : tol_(tol) {}

    // Feed the norm of the deflated iterate; returns true once stable.
    bool push(Real ratio) {
        Real est = prev_ratio_ > 0.0 ? std::sqrt(prev_ratio_ * ratio) : ratio;
        prev_ratio_ = ratio;
        bool close = std::isfinite(est) && std::isfinite(last_est_) &&
                     std::abs(est - last_est_) <= tol_ * std::max(est, Real(1e-12));
        run_ = close ? run_ + 1 : 0;
        last_est_ = est;
        return run_ >= 6;
    }
    Real estimate() const { return last_est_; }

private:
    Real tol_;
    Real prev_ratio_ = -1.0;
    Real last_est_ = kNaN;
    Index run_ = 0;
};

}  // namespace

RateEstimate rate_ideal(const SparseMatrix& m, std::span<const Real> p_star,
                        RateMethod method, const RateOptions& opts) {
    const Index n = m.size();
    if (static_cast<Index>(p_star.size()) != n || n == 0) {
        throw std::invalid_argument("rate_ideal: dimension mismatch");
    }
    // The Jacobi iteration matrix at the balancing, built from the row sums of
    // the scaled matrix and of its transpose.
    std::vector<Real> ev(p_star.size()), evi(p_star.size());
    for (std::size_t i = 0; i < p_star.size(); ++i) {
        ev[i] = std::exp(p_star[i]);
        evi[i] = std::exp(-p_star[i]);
    }
    std::vector<Real> u = m.apply_transpose(ev);  // (A^T e^v)_i
    std::vector<Real> w = m.apply(evi);           // (A e^-v)_i
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (!(u[i] > 0.0) || !(w[i] > 0.0)) {
            throw StructuralError("rate_ideal: zero row or column in the logical matrix");
        }
    }

    if (method == RateMethod::Dense) {
        if (n > kDenseLimit) {
            throw std::invalid_argument("rate_ideal: dense method limited to n <= 2000");
        }
        Eigen::MatrixXd pmat(n, n);
        const Real shift = m.shift();
        for (Index i = 0; i < n; ++i) {
            auto is = static_cast<std::size_t>(i);
            for (Index k = 0; k < n; ++k) {
                auto ks = static_cast<std::size_t>(k);
                Real a_ki = m.stored(k, i) + shift;
                Real a_ik = m.stored(i, k) + shift;
                pmat(i, k) = 0.5 * (a_ki * ev[ks] / u[is] + a_ik * evi[ks] / w[is]);
            }
        }
        Eigen::EigenSolver<Eigen::MatrixXd> es(pmat, /*computeEigenvectors=*/false);
        RateEstimate est;
        est.value = second_modulus(es.eigenvalues());
        est.converged = true;
        return est;
    }

    // Deflated power method, transpose-free. P x and P^T y both reduce to one
    // apply plus one apply_transpose against diagonal rescalings.
    auto apply_p = [&](const std::vector<Real>& x) {
        std::vector<Real> t(x.size());
        for (std::size_t k = 0; k < x.size(); ++k) t[k] = ev[k] * x[k];
        std::vector<Real> first = m.apply_transpose(t);
        for (std::size_t k = 0; k < x.size(); ++k) t[k] = evi[k] * x[k];
        std::vector<Real> second = m.apply(t);
        for (std::size_t i = 0; i < x.size(); ++i) {
            first[i] = 0.5 * (first[i] / u[i] + second[i] / w[i]);
        }
        return first;
    };
    auto apply_pt = [&](const std::vector<Real>& y) {
        std::vector<Real> t(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) t[i] = y[i] / u[i];
        std::vector<Real> first = m.apply(t);
        for (std::size_t i = 0; i < y.size(); ++i) {
            first[i] *= ev[i];
            t[i] = y[i] / w[i];
        }
        std::vector<Real> second = m.apply_transpose(t);
        for (std::size_t i = 0; i < y.size(); ++i) {
            first[i] = 0.5 * (first[i] + evi[i] * second[i]);
        }
        return first;
    };

    RateEstimate est;
    // Left Perron vector of P by power iteration (P is row-stochastic).
    std::vector<Real> pi(static_cast<std::size_t>(n), 1.0 / static_cast<Real>(n));
    for (Index k = 0; k < opts.max_iter; ++k) {
        std::vector<Real> next = apply_pt(pi);
        Real s = 0.0;
        for (Real v : next) s += v;
        for (Real& v : next) v /= s;
        Real diff = sup_dist(next, pi);
        pi = std::move(next);
        est.iterations = k + 1;
        if (diff < 1e-14) break;
    }
    auto deflate = [&](std::vector<Real>& x) {
        Real proj = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) proj += pi[i] * x[i];
        for (Real& v : x) v -= proj;
    };
    std::vector<Real> x = seeded_unit_vector(n, opts.seed);
    deflate(x);
    GrowthTracker tracker(opts.tol);
    for (Index k = 0; k < opts.max_iter; ++k) {
        std::vector<Real> z = apply_p(x);
        deflate(z);
        Real norm = 0.0;
        for (Real v : z) norm += v * v;
        norm = std::sqrt(norm);
        ++est.iterations;
        if (norm < 1e-280) {  // rank-deficient deflated operator
            est.value = 0.0;
            est.converged = true;
            return est;
        }
        for (Real& v : z) v /= norm;
        x = std::move(z);
        if (tracker.push(norm)) {
            est.value = tracker.estimate();
            est.converged = true;
            return est;
        }
    }
    est.value = tracker.estimate();
    est.converged = false;
    return est;
}

// ---------------------------------------------------------------------------
// Effective-model rate
// ---------------------------------------------------------------------------

namespace {

void check_effective_fixed_point(const SparseMatrix& m, std::span<const Real> p_aug,
                                 Real alpha, Index lambda_block) {
    std::vector<Real> f = effective_map(m, p_aug, alpha, 1, lambda_block);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] -= p_aug[i];
    Real mu = mean(f);
    Real res = 0.0;
    for (Real v : f) res = std::max(res, std::abs(v - mu));
    if (!(res <= 1e-5)) {
        throw std::invalid_argument(
            "rate_effective: potentials are not a converged state (residual " +
            std::to_string(res) + ")");
    }
}

}  // namespace

RateEstimate rate_effective(const SparseMatrix& m, std::span<const Real> p_aug,
                            Real alpha, RateEffMethod method, const RateOptions& opts) {
    const Index n = m.size();
    if (static_cast<Index>(p_aug.size()) != n + 1) {
        throw std::invalid_argument("rate_effective: expected n+1 potentials");
    }
    check_alpha(alpha);
    check_effective_fixed_point(m, p_aug, alpha, opts.lambda_block);
    std::vector<Real> pages(p_aug.begin(), p_aug.begin() + n);
    const Real h = 1e-6 * (1.0 + sup_norm(pages));
    auto reduced = [&](const std::vector<Real>& q) {
        return detail::effective_reduced_map(m, q, alpha, opts.lambda_block);
    };
    std::vector<Real> ldinv = detail::log_dprime_inv(m, pages, alpha, opts.lambda_block);

    if (method == RateEffMethod::FdDense) {
        if (n > kDenseLimit) {
            throw std::invalid_argument(
                "rate_effective: fd-dense limited to n <= 2000; use fd-power");
        }
        Eigen::MatrixXd grad(n, n);
        std::vector<Real> q = pages;
        for (Index l = 0; l < n; ++l) {
            auto lsz = static_cast<std::size_t>(l);
            q[lsz] = pages[lsz] + h;
            std::vector<Real> fp = reduced(q);
            q[lsz] = pages[lsz] - h;
            std::vector<Real> fm = reduced(q);
            q[lsz] = pages[lsz];
            for (Index k = 0; k < n; ++k) {
                grad(k, l) = (fp[static_cast<std::size_t>(k)] -
                              fm[static_cast<std::size_t>(k)]) /
                             (2.0 * h);
            }
        }
        // grad = D' (S + R) with S + R symmetric and D' > 0 diagonal, so the
        // similarity D'^-1/2 grad D'^1/2 is symmetric up to finite-difference
        // noise; symmetrize and use the self-adjoint solver.
        Eigen::MatrixXd sym(n, n);
        for (Index k = 0; k < n; ++k) {
            for (Index l = 0; l < n; ++l) {
                Real scale = std::exp(0.5 * (ldinv[static_cast<std::size_t>(k)] -
                                             ldinv[static_cast<std::size_t>(l)]));
                sym(k, l) = grad(k, l) * scale;
            }
        }
        sym = 0.5 * (sym + sym.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym,
                                                          Eigen::EigenvaluesOnly);
        std::vector<Real> vals(es.eigenvalues().data(),
                               es.eigenvalues().data() + es.eigenvalues().size());
        RateEstimate est;
        est.value = second_modulus_real(std::move(vals));
        est.converged = true;
        return est;
    }

    // Matrix-free: directional central differences of the reduced map, with
    // the exact left Perron vector 1/d' of the Jacobian used for deflation.
    std::vector<Real> pi(static_cast<std::size_t>(n));
    {
        Real mx = -kInf;
        for (Real v : ldinv) mx = std::max(mx, v);
        Real total = 0.0;
        for (std::size_t i = 0; i < pi.size(); ++i) {
            pi[i] = std::exp(ldinv[i] - mx);
            total += pi[i];
        }
        for (Real& v : pi) v /= total;
    }
    auto apply_grad = [&](const std::vector<Real>& v) {
        Real vn = sup_norm(v);
        Real step = h / std::max(vn, Real(1e-12));
        std::vector<Real> q(pages.size());
        for (std::size_t i = 0; i < q.size(); ++i) q[i] = pages[i] + step * v[i];
        std::vector<Real> fp = reduced(q);
        for (std::size_t i = 0; i < q.size(); ++i) q[i] = pages[i] - step * v[i];
        std::vector<Real> fm = reduced(q);
        for (std::size_t i = 0; i < fp.size(); ++i) {
            fp[i] = (fp[i] - fm[i]) / (2.0 * step);
        }
        return fp;
    };
    auto deflate = [&](std::vector<Real>& x) {
        Real proj = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) proj += pi[i] * x[i];
        for (Real& v : x) v -= proj;
    };
    RateEstimate est;
    std::vector<Real> x = seeded_unit_vector(n, opts.seed);
    deflate(x);
    GrowthTracker tracker(std::max(opts.tol, Real(1e-7)));
    for (Index k = 0; k < opts.max_iter; ++k) {
        std::vector<Real> z = apply_grad(x);
        deflate(z);
        Real norm = 0.0;
        for (Real v : z) norm += v * v;
        norm = std::sqrt(norm);
        ++est.iterations;
        if (norm < 1e-280) {
            est.value = 0.0;
            est.converged = true;
            return est;
        }
        for (Real& v : z) v /= norm;
        x = std::move(z);
        if (tracker.push(norm)) {
            est.value = tracker.estimate();
            est.converged = true;
            return est;
        }
    }
    est.value = tracker.estimate();
    est.converged = false;
    return est;
}

}  // namespace hotskit
