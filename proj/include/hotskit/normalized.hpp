#pragma once

#include <span>
#include <vector>

#include "hotskit/common.hpp"
#include "hotskit/effective.hpp"
#include "hotskit/sparse.hpp"

namespace hotskit {

/// Row-normalized model of the relative-entropy variant. `inner` is the
/// (n+1)-node system: the row-stochastic page block, the dangling indicator
/// column, and an all-ones row for the link-fictitious node. The effective
/// machinery adds its own artificial node on top (node n+2 overall).
struct NormalizedModel {
    SparseMatrix inner;  // size pages + 1
    Real alpha = 0.9;
    std::vector<std::uint8_t> dangling;
    Index pages = 0;
};

/// Rows with positive out-weight are normalized to sum 1; rows without any
/// out-weight point to the fictitious node with weight 1. Requires shift == 0.
NormalizedModel build_normalized(const SparseMatrix& a, const GraphMeta& meta,
                                 Real alpha = 0.9);

struct NormalizedResult {
    ScoreState pages_state;     // potentials of the n pages only
    std::vector<Real> p_inner;  // all n+2 potentials (pages, fictitious, artificial)
    EffectiveParams params;
    SolveReport report;
};

/// Effective solve with the inner matrix in place of the adjacency matrix;
/// rankings use only the first n coordinates. p0 spans all n+2 nodes.
NormalizedResult normalized_solve(const NormalizedModel& model, const ScoreState& p0,
                                  const EffectiveOptions& opts = {});

}  // namespace hotskit
