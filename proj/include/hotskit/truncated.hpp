#pragma once

#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "hotskit/common.hpp"
#include "hotskit/effective.hpp"
#include "hotskit/ideal.hpp"
#include "hotskit/sparse.hpp"

namespace hotskit {

/// mid(x, a, b) = max(min(x, a), b); requires b <= a.
Real mid(Real x, Real a, Real b);

/// Sparse lower/upper flow bounds aligned with a matrix's stored pattern.
/// Absent lower bound means 0, absent upper bound +inf. Bounds on arcs with
/// no logical mass are rejected at load time.
class BoundsSet {
public:
    BoundsSet() = default;

    /// Trivial bounds (0, +inf) on every stored arc.
    static BoundsSet none(const SparseMatrix& m);

    /// Lines "src dst lower upper"; "inf" accepted for upper. '#' comments.
    static BoundsSet from_stream(const SparseMatrix& m, std::istream& in);

    void set(const SparseMatrix& m, Index i, Index j, Real lower, Real upper);

    std::span<const Real> lower() const { return lower_; }
    std::span<const Real> upper() const { return upper_; }
    bool trivial() const;
    Index pattern_size() const { return static_cast<Index>(lower_.size()); }

private:
    std::vector<Real> lower_;
    std::vector<Real> upper_;
};

/// Multipliers of the bound constraints at fixed potentials
/// (exp(eta) = max(L/raw, 1), exp(-zeta) = min(U/raw, 1), raw = A_ij e^{p_i-p_j}).
/// Aligned with the stored pattern; never stored by the solvers themselves.
std::pair<std::vector<Real>, std::vector<Real>> trunc_multipliers(
    const SparseMatrix& m, std::span<const Real> p, const BoundsSet& bounds);

/// Truncated scaled matrix T(e^{p_i} A_ij e^{-p_j}) on the stored pattern.
SparseMatrix truncated_scaled(const SparseMatrix& m, const BoundsSet& bounds,
                              std::span<const Real> p);

/// Reduced dual of the truncated scaling problem (bound multipliers
/// analytically eliminated). Nonincreasing along coordinate descent.
Real theta_trunc(const SparseMatrix& m, const BoundsSet& bounds,
                 std::span<const Real> p);

/// max_i |row_i - col_i| of the truncated scaled logical matrix; ~0 at a
/// solution of the truncated scaling problem.
Real trunc_balance_residual(const SparseMatrix& m, const BoundsSet& bounds,
                            std::span<const Real> p);

/// Exact coordinate step of truncated-scaling descent: the multipliers
/// touching line l are refreshed, then p_l is minimized with them held.
/// mt must be explicit_transpose(m).
void trunc_dss_step(const SparseMatrix& m, const SparseMatrix& mt,
                    const BoundsSet& bounds, std::span<Real> p, Index l);

std::pair<ScoreState, SolveReport> trunc_dss_solve(const SparseMatrix& m,
                                                   const BoundsSet& bounds,
                                                   const ScoreState& p0,
                                                   const IdealOptions& opts = {});

/// Dual of the bounded effective model with the bound multipliers eliminated;
/// the bounds constrain the unit-mass flow, so the caps carry e^{-mu}.
Real theta_bounded(const SparseMatrix& m, const BoundsSet& bounds,
                   std::span<const Real> p_aug, const EffectiveParams& params);

/// Cyclic coordinate descent for the effective HOTS problem with flow bounds:
/// clamped page updates plus the closed-form multiplier block.
EffectiveResult bounded_hots_solve(const SparseMatrix& m, const BoundsSet& bounds,
                                   const ScoreState& p0,
                                   const EffectiveOptions& opts = {});

/// Flow of the bounded effective model: rho_ij = mid(A_ij e^{p_i-p_j+mu}, U, L)
/// on the stored pattern plus the artificial node's row and column.
EffectiveFlow recover_bounded_flow(const SparseMatrix& m, const BoundsSet& bounds,
                                   std::span<const Real> p_aug,
                                   const EffectiveParams& params);

}  // namespace hotskit
