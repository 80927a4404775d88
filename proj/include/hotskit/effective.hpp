#pragma once

#include <span>
#include <utility>
#include <vector>

#include "hotskit/common.hpp"
#include "hotskit/ideal.hpp"
#include "hotskit/sparse.hpp"

namespace hotskit {

/// Throughput parameter and the multiplier triple of the effective model.
/// alpha must lie strictly inside (1/2, 1): the closed forms take logarithms
/// of both 2 alpha - 1 and 1 - alpha.
struct EffectiveParams {
    Real alpha = 0.9;
    Real mu = 0.0;
    Real a = 0.0;
    Real b = 0.0;
    Real gamma() const { return (1.0 - alpha) / (2.0 * alpha - 1.0); }
};

void check_alpha(Real alpha);

struct EffectiveOptions {
    Real alpha = 0.9;
    Real tol = 1e-9;
    Index max_iter = -1;  // < 0: 10 n + 1000
    // Divergence monitor: fire after monitor_patience consecutive iterations in
    // which theta_tilde has dropped more than divergence_budget below its
    // starting value or the centered potentials exceed potential_ceiling.
    Real divergence_budget = 100.0;
    Real potential_ceiling = 50.0;
    Index monitor_patience = 20;
    int threads = 1;
    Index trace_stride = 0;
    // Restrict the multiplier sums to the first k coordinates (the printed
    // variant of the normalized model); < 0 means the whole matrix.
    Index lambda_block = -1;
};

/// Dual of the effective network flow problem,
/// theta(p, mu, a, b) = sum_ij A_ij e^{p_i-p_j+mu}
///                      + sum_i e^{-b-p_{n+1}+p_i+mu} + sum_j e^{a+p_{n+1}-p_j+mu}
///                      - (1-alpha) a - mu + (1-alpha) b.
/// p spans the n pages plus the artificial node. +inf on genuine overflow.
Real theta_eff(const SparseMatrix& m, std::span<const Real> p_aug,
               const EffectiveParams& params);

/// Closed-form unique minimizer of theta over (mu, a, b) at fixed potentials.
/// Requires A != 0.
EffectiveParams lambda_of(const SparseMatrix& m, std::span<const Real> p_aug,
                          Real alpha, Index lambda_block = -1);

/// Raw effective map F(p) = f^{lambda(p)}(p) on all n+1 coordinates; the
/// artificial coordinate is 1/2 log sum e^{p_i} - 1/2 log sum e^{-p_j}.
std::vector<Real> effective_map(const SparseMatrix& m, std::span<const Real> p_aug,
                                Real alpha, int threads = 1, Index lambda_block = -1);

/// One step with mean-zero normalization.
ScoreState effective_step(const SparseMatrix& m, const ScoreState& s, Real alpha,
                          int threads = 1, Index lambda_block = -1);

/// Reduced dual theta_tilde(p) = min over (p_{n+1}, mu, a, b) of theta;
/// drives the divergence monitor and the uniqueness analysis. Pages only.
Real theta_tilde(const SparseMatrix& m, std::span<const Real> p_pages, Real alpha);

struct EffectiveResult {
    ScoreState state;  // n+1 potentials, mean-zero
    EffectiveParams params;
    SolveReport report;
};

/// Jacobi iteration of the effective map. Non-convergence is a status: the
/// monitor reports Diverged when the dual is empirically unbounded
/// (no feasible flow with the pattern of the augmented matrix).
EffectiveResult effective_solve(const SparseMatrix& m, const ScoreState& p0,
                                const EffectiveOptions& opts = {});

/// Cyclic exact coordinate descent over (p_1..p_{n+1}, mu, a, b).
EffectiveResult effective_cd_solve(const SparseMatrix& m, const ScoreState& p0,
                                   const EffectiveOptions& opts = {});

/// Websurfer flow of the effective model at converged potentials:
/// rho_ij = e^{mu + p_i - p_j} A_ij on the stored pattern plus the artificial
/// node's row and column.
struct EffectiveFlow {
    SparseMatrix rho;                 // page-to-page part
    std::vector<Real> to_artificial;  // rho_{i, n+1}
    std::vector<Real> from_artificial;  // rho_{n+1, j}
    Real shift_mass = 0.0;
    Real total_mass = 0.0;
    Real balance_residual = 0.0;
};
EffectiveFlow recover_effective_flow(const SparseMatrix& m,
                                     std::span<const Real> p_aug,
                                     const EffectiveParams& params);

enum class RateEffMethod { FdDense, FdPower };

/// |lambda_2| of the finite-difference Jacobian of the reduced effective map
/// at a converged state. FdDense materializes the n x n Jacobian (n <= 2000);
/// FdPower runs a deflated power method on directional differences.
RateEstimate rate_effective(const SparseMatrix& m, std::span<const Real> p_aug,
                            Real alpha, RateEffMethod method = RateEffMethod::FdDense,
                            const RateOptions& opts = {});

}  // namespace hotskit
