#pragma once

// Internals shared between the effective solver and the rate diagnostics.

#include <span>
#include <vector>

#include "hotskit/sparse.hpp"

namespace hotskit::detail {

// Everything one application of the effective map produces, gauge-stabilized.
// Sums tagged _b honor the lambda block restriction; lsp/lsm are always full.
struct EffStepData {
    std::vector<Real> map;  // n+1 raw outputs (pages then artificial node)
    std::vector<Real> log_u;  // n: log((A^T e^p)_i + e^{p_art + a})
    Real log_sa_b = -kInf;
    Real lsp_b = -kInf, lsm_b = -kInf;
    Real lsp = -kInf, lsm = -kInf;
    Real log_ea = -kInf;  // log e^{p_art + a}
    Real log_eb = -kInf;  // log e^{-p_art - b}
};

EffStepData effective_step_data(const SparseMatrix& m, std::span<const Real> pages,
                                Real alpha, int threads, Index lambda_block);

// Pages part of the effective map only (the reduced map; it does not depend
// on the artificial coordinate).
std::vector<Real> effective_reduced_map(const SparseMatrix& m,
                                        std::span<const Real> pages, Real alpha,
                                        Index lambda_block = -1);

// log(1/d'_k) = log( sum_i A_ik e^{p_i - p_k} + e^{a - p_k} ): the positive
// diagonal that symmetrizes the Jacobian of the reduced map.
std::vector<Real> log_dprime_inv(const SparseMatrix& m, std::span<const Real> pages,
                                 Real alpha, Index lambda_block = -1);

// Exact log sum_{i,j < rb} (A_ij + shift) e^{p_i - p_j}; rb < 0 means full.
Real log_sa_exact(const SparseMatrix& m, std::span<const Real> p, Index rb);

Real c_alpha(Real alpha);  // the constant of the reduced dual

}  // namespace hotskit::detail
