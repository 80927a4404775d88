#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hotskit/common.hpp"

namespace hotskit {

struct Triplet {
    Index row = 0;
    Index col = 0;
    Real value = 1.0;
};

/// Nonnegative CSR matrix with an optional uniform rank-one shift:
/// the logical entry (i,j) is stored(i,j) + shift. The shift is never
/// materialized; kernels add shift * sum(x) analytically.
///
/// Canonical form: row_offsets nondecreasing, column indices strictly
/// increasing within each row, duplicates merged.
class SparseMatrix {
public:
    SparseMatrix() = default;
    SparseMatrix(Index n, std::vector<Index> row_offsets, std::vector<Index> col_indices,
                 std::vector<Real> values, Real shift = 0.0);

    /// Build canonical CSR from an unordered triplet list; duplicates are summed.
    static SparseMatrix from_triplets(Index n, std::span<const Triplet> entries,
                                      Real shift = 0.0);

    Index size() const { return n_; }
    Index nnz() const { return static_cast<Index>(col_indices_.size()); }
    Real shift() const { return shift_; }
    void set_shift(Real s);

    std::span<const Index> row_offsets() const { return row_offsets_; }
    std::span<const Index> col_indices() const { return col_indices_; }
    std::span<const Real> values() const { return values_; }

    std::span<const Index> row_cols(Index i) const {
        return {col_indices_.data() + row_offsets_[i],
                static_cast<std::size_t>(row_offsets_[i + 1] - row_offsets_[i])};
    }
    std::span<const Real> row_vals(Index i) const {
        return {values_.data() + row_offsets_[i],
                static_cast<std::size_t>(row_offsets_[i + 1] - row_offsets_[i])};
    }

    /// Logical entry, shift included. O(log degree).
    Real entry(Index i, Index j) const;
    /// Stored value at (i,j), 0 if absent. O(log degree).
    Real stored(Index i, Index j) const;
    /// Position of stored entry (i,j) in the value array, if present.
    std::optional<Index> find(Index i, Index j) const;

    // Transpose-free kernels; all include the rank-one shift term.

    /// y = A x + shift * sum(x) * 1
    void apply(std::span<const Real> x, std::span<Real> y, int threads = 1) const;
    std::vector<Real> apply(std::span<const Real> x, int threads = 1) const;

    /// y = A^T x + shift * sum(x) * 1, computed by scatter over the CSR rows.
    /// Per-thread accumulators are merged in thread order, so the result is
    /// reproducible for a fixed thread count.
    void apply_transpose(std::span<const Real> x, std::span<Real> y,
                         int threads = 1) const;
    std::vector<Real> apply_transpose(std::span<const Real> x, int threads = 1) const;

    /// z_i = log( sum_j (A_ij + shift) e^{q_j} ), stabilized by per-row (or,
    /// with a shift, global) max subtraction. Rows without logical mass give
    /// -inf.
    void log_apply(std::span<const Real> q, std::span<Real> z) const;

    /// z_j = log( sum_i (A_ij + shift) e^{q_i} ), transpose-free scatter.
    void log_apply_transpose(std::span<const Real> q, std::span<Real> z) const;

    bool operator==(const SparseMatrix& other) const = default;

private:
    Index n_ = 0;
    std::vector<Index> row_offsets_{0};
    std::vector<Index> col_indices_;
    std::vector<Real> values_;
    Real shift_ = 0.0;
};

struct GraphMeta {
    Index n = 0;
    Index m = 0;                        // stored-edge count
    std::vector<std::uint8_t> dangling; // row i has no stored outgoing edge
    std::vector<std::string> labels;    // optional external ids, empty if unused
};

GraphMeta make_meta(const SparseMatrix& m);

// ---------------------------------------------------------------------------
// Ingestion / output
// ---------------------------------------------------------------------------

struct EdgeListOptions {
    bool weighted = true;  // accept an optional third column; if false, reject it
};

/// Whitespace-separated "src dst [weight]" lines, '#' comments, dense 0-based ids.
/// Duplicate arcs are summed; n = 1 + max id.
std::pair<SparseMatrix, GraphMeta> from_edge_list(std::istream& in,
                                                  EdgeListOptions opts = {});

/// Inverse of from_edge_list on canonical matrices (shift is not written).
void write_edge_list(const SparseMatrix& m, std::ostream& out);

/// Matrix Market coordinate format, "general" symmetry only, real/integer/pattern.
SparseMatrix from_matrix_market(std::istream& in);

/// Canonical CSR of A^T; shift preserved.
SparseMatrix explicit_transpose(const SparseMatrix& m);

// ---------------------------------------------------------------------------
// Structure checks
// ---------------------------------------------------------------------------

/// Strong connectivity of the logical pattern (shift > 0 connects everything).
bool is_strongly_connected(const SparseMatrix& m);

/// Primitivity of A + A^T: connected and not bipartite (self-loops count as
/// odd cycles).
bool is_primitive_symmetrized(const SparseMatrix& m);

}  // namespace hotskit
