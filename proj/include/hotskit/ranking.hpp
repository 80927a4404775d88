#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hotskit/common.hpp"
#include "hotskit/sparse.hpp"

namespace hotskit {

/// Scores plus the descending-order permutation; ties break by ascending id.
struct Ranking {
    std::vector<Real> scores;
    std::vector<Index> order;
    std::string algorithm;
    std::map<std::string, std::string> params;
};

Ranking make_ranking(std::vector<Real> scores, std::string algorithm,
                     std::map<std::string, std::string> params = {});

/// Power iteration with uniform dangling redistribution; scores sum to 1.
/// The rank-one shift of the matrix is ignored (baseline on the raw graph).
Ranking pagerank(const SparseMatrix& m, Real damping = 0.85, Real tol = 1e-12,
                 Index max_iter = -1);

/// Kendall tau-b between two score vectors over the same nodes; ties handled,
/// O(n log n).
Real kendall_tau(const Ranking& r1, const Ranking& r2);

enum class SynthModel { CyclePlusChords, Preferential };

/// Deterministic synthetic graphs. cycle-plus-chords is strongly connected by
/// construction; preferential yields dangling pages and reducible structure.
/// `extra` is the chord count (default 2n) or the mean out-degree (default 8).
std::vector<std::pair<Index, Index>> synth_graph(Index n, SynthModel model,
                                                 std::uint64_t seed,
                                                 Index extra = -1);

SparseMatrix matrix_from_edges(Index n, std::span<const std::pair<Index, Index>> edges);

}  // namespace hotskit
