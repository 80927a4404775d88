#include "hotskit/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace hotskit {

Ranking make_ranking(std::vector<Real> scores, std::string algorithm,
                     std::map<std::string, std::string> params) {
    Ranking r;
    r.order.resize(scores.size());
    std::iota(r.order.begin(), r.order.end(), Index{0});
    std::sort(r.order.begin(), r.order.end(), [&](Index a, Index b) {
        Real sa = scores[static_cast<std::size_t>(a)];
        Real sb = scores[static_cast<std::size_t>(b)];
        if (sa != sb) return sa > sb;
        return a < b;
    });
    r.scores = std::move(scores);
    r.algorithm = std::move(algorithm);
    r.params = std::move(params);
    return r;
}

Ranking pagerank(const SparseMatrix& m, Real damping, Real tol, Index max_iter) {
    if (!(damping > 0.0 && damping < 1.0)) {
        throw std::invalid_argument("pagerank: damping must lie in (0,1)");
    }
    const Index n = m.size();
    if (n == 0) throw std::invalid_argument("pagerank: empty graph");
    if (max_iter < 0) max_iter = 100000;
    // Row-normalized copy; value-empty rows count as dangling.
    std::vector<Real> inv_out(static_cast<std::size_t>(n), 0.0);
    std::vector<std::uint8_t> dangling(static_cast<std::size_t>(n), 0);
    for (Index i = 0; i < n; ++i) {
        Real s = 0.0;
        for (Real v : m.row_vals(i)) s += v;
        if (s > 0.0) {
            inv_out[static_cast<std::size_t>(i)] = 1.0 / s;
        } else {
            dangling[static_cast<std::size_t>(i)] = 1;
        }
    }
    auto offsets = m.row_offsets();
    auto cols = m.col_indices();
    auto vals = m.values();
    std::vector<Real> x(static_cast<std::size_t>(n), 1.0 / static_cast<Real>(n));
    std::vector<Real> next(static_cast<std::size_t>(n));
    for (Index k = 0; k < max_iter; ++k) {
        Real dangling_mass = 0.0;
        for (Index i = 0; i < n; ++i) {
            if (dangling[static_cast<std::size_t>(i)]) {
                dangling_mass += x[static_cast<std::size_t>(i)];
            }
        }
        Real base = (damping * dangling_mass + (1.0 - damping)) / static_cast<Real>(n);
        std::fill(next.begin(), next.end(), base);
        for (Index i = 0; i < n; ++i) {
            auto is = static_cast<std::size_t>(i);
            if (dangling[is]) continue;
            Real w = damping * x[is] * inv_out[is];
            for (Index kk = offsets[i]; kk < offsets[i + 1]; ++kk) {
                next[static_cast<std::size_t>(cols[kk])] += w * vals[kk];
            }
        }
        Real res = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) res += std::abs(next[i] - x[i]);
        x.swap(next);
        if (res < tol) break;
    }
    Real total = 0.0;
    for (Real v : x) total += v;
    for (Real& v : x) v /= total;
    return make_ranking(std::move(x), "pagerank",
                        {{"damping", std::to_string(damping)}});
}

// ---------------------------------------------------------------------------
// Kendall tau-b, O(n log n) (sort + merge-count of discordant pairs)
// ---------------------------------------------------------------------------

namespace {

// Counts strict inversions of y while merge-sorting it.
std::uint64_t count_inversions(std::vector<Real>& y, std::vector<Real>& scratch,
                               std::size_t lo, std::size_t hi) {
    if (hi - lo < 2) return 0;
    std::size_t mid = lo + (hi - lo) / 2;
    std::uint64_t count =
        count_inversions(y, scratch, lo, mid) + count_inversions(y, scratch, mid, hi);
    std::size_t i = lo, j = mid, out = lo;
    while (i < mid && j < hi) {
        if (y[j] < y[i]) {
            count += mid - i;  // y[i..mid) are all strictly greater
            scratch[out++] = y[j++];
        } else {
            scratch[out++] = y[i++];
        }
    }
    while (i < mid) scratch[out++] = y[i++];
    while (j < hi) scratch[out++] = y[j++];
    std::copy(scratch.begin() + lo, scratch.begin() + hi, y.begin() + lo);
    return count;
}

std::uint64_t tie_pairs(std::uint64_t run) { return run * (run - 1) / 2; }

}  // namespace

Real kendall_tau(const Ranking& r1, const Ranking& r2) {
    const std::size_t n = r1.scores.size();
    if (n != r2.scores.size()) {
        throw std::invalid_argument("kendall_tau: rankings over different node sets");
    }
    if (n < 2) return 1.0;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (r1.scores[a] != r1.scores[b]) return r1.scores[a] < r1.scores[b];
        return r2.scores[a] < r2.scores[b];
    });
    const std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;
    std::uint64_t n1 = 0, n2 = 0, n3 = 0;
    // ties in x, and ties in (x, y) jointly
    std::size_t run_x = 1, run_xy = 1;
    for (std::size_t k = 1; k <= n; ++k) {
        bool same_x = k < n && r1.scores[idx[k]] == r1.scores[idx[k - 1]];
        bool same_xy = same_x && r2.scores[idx[k]] == r2.scores[idx[k - 1]];
        if (same_x) {
            ++run_x;
        } else {
            n1 += tie_pairs(run_x);
            run_x = 1;
        }
        if (same_xy) {
            ++run_xy;
        } else {
            n3 += tie_pairs(run_xy);
            run_xy = 1;
        }
    }
    // ties in y
    {
        std::vector<Real> ys(r2.scores);
        std::sort(ys.begin(), ys.end());
        std::size_t run = 1;
        for (std::size_t k = 1; k <= n; ++k) {
            if (k < n && ys[k] == ys[k - 1]) {
                ++run;
            } else {
                n2 += tie_pairs(run);
                run = 1;
            }
        }
    }
    std::vector<Real> y(n), scratch(n);
    for (std::size_t k = 0; k < n; ++k) y[k] = r2.scores[idx[k]];
    std::uint64_t discordant = count_inversions(y, scratch, 0, n);
    std::uint64_t concordant_plus_d = n0 - n1 - n2 + n3;
    Real cd = static_cast<Real>(concordant_plus_d) - 2.0 * static_cast<Real>(discordant);
    Real denom = std::sqrt(static_cast<Real>(n0 - n1)) *
                 std::sqrt(static_cast<Real>(n0 - n2));
    if (denom == 0.0) return 0.0;  // one ranking entirely tied
    return cd / denom;
}

// ---------------------------------------------------------------------------
// Synthetic graphs
// ---------------------------------------------------------------------------

std::vector<std::pair<Index, Index>> synth_graph(Index n, SynthModel model,
                                                 std::uint64_t seed, Index extra) {
    if (n < 2) throw std::invalid_argument("synth_graph: need n >= 2");
    std::mt19937_64 rng(seed);
    auto next_below = [&rng](std::uint64_t k) -> Index {
        return static_cast<Index>(rng() % k);  // bias is irrelevant here
    };
    std::vector<std::pair<Index, Index>> edges;
    if (model == SynthModel::CyclePlusChords) {
        Index chords = extra >= 0 ? extra : 2 * n;
        edges.reserve(static_cast<std::size_t>(n + chords));
        for (Index i = 0; i < n; ++i) edges.emplace_back(i, (i + 1) % n);
        for (Index c = 0; c < chords; ++c) {
            Index u = next_below(static_cast<std::uint64_t>(n));
            Index v = next_below(static_cast<std::uint64_t>(n));
            if (u == v) v = (v + 1) % n;
            edges.emplace_back(u, v);
        }
        return edges;
    }
    // Preferential attachment with occasional forward arcs (cycles) and a
    // dangling fraction; reducible by construction.
    Index mean_out = extra >= 0 ? extra : 8;
    std::vector<Index> pool;  // repeated-target pool: preferential by in-degree
    pool.reserve(static_cast<std::size_t>(n * (mean_out + 1)));
    pool.push_back(0);
    for (Index t = 1; t < n; ++t) {
        bool dangling = rng() % 8 == 0;  // about 1/8 of the pages
        if (!dangling) {
            Index d = 1 + next_below(static_cast<std::uint64_t>(2 * mean_out - 1));
            for (Index e = 0; e < d; ++e) {
                Index v;
                if (rng() % 100 < 15) {
                    v = next_below(static_cast<std::uint64_t>(n));  // may point forward
                } else {
                    v = pool[static_cast<std::size_t>(
                        next_below(static_cast<std::uint64_t>(pool.size())))];
                }
                if (v == t) v = (v + 1) % n;
                edges.emplace_back(t, v);
                pool.push_back(v);
            }
        }
        pool.push_back(t);
    }
    return edges;
}

SparseMatrix matrix_from_edges(Index n,
                               std::span<const std::pair<Index, Index>> edges) {
    std::vector<Triplet> trips;
    trips.reserve(edges.size());
    for (auto [u, v] : edges) trips.push_back({u, v, 1.0});
    return SparseMatrix::from_triplets(n, trips);
}

}  // namespace hotskit
