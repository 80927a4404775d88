#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "hotskit/common.hpp"
#include "hotskit/sparse.hpp"

namespace hotskit {

struct IdealOptions {
    Real tol = 1e-9;
    Index max_iter = -1;  // < 0: 10 n + 1000
    Normalization normalization = Normalization::MeanZero;
    bool check_irreducible = true;
    Real add_diagonal = 0.0;  // balance A + eps I instead; same optimal scaling
    int threads = 1;
    Index trace_stride = 0;  // 0: every iteration up to n = 1e4, every 10th beyond
};

Index default_max_iter(Index n);
Index default_trace_stride(Index n);

/// theta0(p) = sum_{ij} (A_ij + shift) e^{p_i - p_j}, the mu-eliminated dual.
/// Evaluated as sum_j (A e^{-p})_j e^{p_j}; +inf only on genuine overflow.
Real theta0(const SparseMatrix& m, std::span<const Real> p);
Real log_theta0(const SparseMatrix& m, std::span<const Real> p);

/// The raw balancing map f(p) = 1/2 (log(A^T e^p) - log(A e^{-p})),
/// no normalization applied.
/// Throws StructuralError if some row or column has no logical mass.
std::vector<Real> ideal_map(const SparseMatrix& m, std::span<const Real> p,
                            int threads = 1);

/// One fixed-point step with the state's normalization re-applied.
ScoreState ideal_step(const SparseMatrix& m, const ScoreState& s, int threads = 1);

/// Jacobi fixed-point iteration p <- f(p) with per-step normalization.
/// Detects exact period-2 orbits (imprimitive patterns) as Oscillating.
std::pair<ScoreState, SolveReport> ideal_solve(const SparseMatrix& m,
                                               const ScoreState& p0,
                                               const IdealOptions& opts = {});

/// Exact coordinate minimization of theta0 in coordinate i (diagonal terms
/// cancel and are excluded). mt must be explicit_transpose(m).
void dss_step(const SparseMatrix& m, const SparseMatrix& mt, std::span<Real> p,
              Index i);

/// Cyclic coordinate descent (Gauss-Seidel); converges without any
/// primitivity assumption.
std::pair<ScoreState, SolveReport> dss_solve(const SparseMatrix& m,
                                             const ScoreState& p0,
                                             const IdealOptions& opts = {});

/// g_i(x) = (sum_j A_ji x_j)^alpha / (sum_k A_ik / x_k)^(1-alpha), raw.
/// alpha = 1/2 is multiplicative balancing, alpha = 1 the power method on A^T,
/// alpha = 0 the anti-Perron iteration.
std::vector<Real> deformed_map(const SparseMatrix& m, std::span<const Real> x,
                               Real alpha);
/// deformed_map followed by sup-norm normalization.
std::vector<Real> deformed_step(const SparseMatrix& m, std::span<const Real> x,
                                Real alpha);
std::pair<std::vector<Real>, SolveReport> deformed_solve(const SparseMatrix& m,
                                                         std::span<const Real> x0,
                                                         Real alpha,
                                                         const IdealOptions& opts = {});

/// Optimal websurfer flow rho_ij = e^mu e^{p_i} A_ij e^{-p_j} on the stored
/// pattern. The rank-one shift's mass is reported in shift_mass, not stored.
struct BalancedFlow {
    SparseMatrix rho;
    Real mu = 0.0;
    Real shift_mass = 0.0;      // analytic mass carried by the uniform shift
    Real total_mass = 0.0;      // stored + shift mass; 1 at an exact fixed point
    Real balance_residual = 0.0;  // max_i |outflow_i - inflow_i|
    bool balanced = false;
};
BalancedFlow recover_flow(const SparseMatrix& m, std::span<const Real> p,
                          std::optional<Real> mu = std::nullopt,
                          Real balance_tol = 1e-8);

/// Hilbert's projective metric d(x,y) = log max_{i,j} x_i y_j / (y_i x_j).
Real hilbert_distance(std::span<const Real> x, std::span<const Real> y);

/// Birkhoff contraction coefficient tanh(Delta(M)/4) for an entrywise
/// positive matrix; in [0,1).
Real birkhoff_factor(const SparseMatrix& m);

enum class RateMethod { Dense, Power };

struct RateEstimate {
    Real value = kNaN;
    bool converged = false;
    Index iterations = 0;
};

struct RateOptions {
    Index max_iter = 50000;
    Real tol = 1e-9;
    std::uint64_t seed = 20240901;
    Index lambda_block = -1;  // effective model only; see EffectiveOptions
};

/// |lambda_2(P)| of the Jacobi iteration matrix at a balancing p*,
/// P = 1/2 (diag(A^T e^v)^-1 A^T diag(e^v) + diag(A e^-v)^-1 A diag(e^-v)).
/// Dense: full eigendecomposition (n <= 2000). Power: deflated power method,
/// transpose-free.
RateEstimate rate_ideal(const SparseMatrix& m, std::span<const Real> p_star,
                        RateMethod method = RateMethod::Dense,
                        const RateOptions& opts = {});

}  // namespace hotskit
