#include "hotskit/sparse.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

namespace hotskit {

namespace {

void check_nonnegative(std::span<const Real> values, Real shift) {
    if (shift < 0.0 || std::isnan(shift)) {
        throw std::invalid_argument("SparseMatrix: shift must be nonnegative");
    }
    for (Real v : values) {
        if (v < 0.0 || std::isnan(v)) {
            throw std::invalid_argument("SparseMatrix: negative or NaN entry");
        }
    }
}

// Run f(block) on `threads` row blocks. Block boundaries depend only on the
// thread count, keeping any reduction order fixed.
template <typename F>
void for_each_block(Index n, int threads, F&& f) {
    if (threads <= 1 || n < 2) {
        f(0, Index{0}, n);
        return;
    }
    Index nblocks = std::min<Index>(threads, n);
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nblocks));
    for (Index b = 0; b < nblocks; ++b) {
        Index lo = n * b / nblocks;
        Index hi = n * (b + 1) / nblocks;
        pool.emplace_back([&f, b, lo, hi] { f(static_cast<int>(b), lo, hi); });
    }
    for (auto& t : pool) t.join();
}

}  // namespace

SparseMatrix::SparseMatrix(Index n, std::vector<Index> row_offsets,
                           std::vector<Index> col_indices, std::vector<Real> values,
                           Real shift)
    : n_(n),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values)),
      shift_(shift) {
    if (n_ < 0 || row_offsets_.size() != static_cast<std::size_t>(n_) + 1 ||
        col_indices_.size() != values_.size() ||
        row_offsets_.front() != 0 ||
        row_offsets_.back() != static_cast<Index>(col_indices_.size())) {
        throw std::invalid_argument("SparseMatrix: inconsistent CSR arrays");
    }
    check_nonnegative(values_, shift_);
    for (Index i = 0; i < n_; ++i) {
        if (row_offsets_[i] > row_offsets_[i + 1]) {
            throw std::invalid_argument("SparseMatrix: row offsets not nondecreasing");
        }
        for (Index k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) {
            if (col_indices_[k] < 0 || col_indices_[k] >= n_) {
                throw std::invalid_argument("SparseMatrix: column index out of range");
            }
            if (k > row_offsets_[i] && col_indices_[k] <= col_indices_[k - 1]) {
                throw std::invalid_argument(
                    "SparseMatrix: columns not strictly increasing (non-canonical)");
            }
        }
    }
}

SparseMatrix SparseMatrix::from_triplets(Index n, std::span<const Triplet> entries,
                                         Real shift) {
    if (n < 0) throw std::invalid_argument("SparseMatrix: negative size");
    std::vector<Index> count(static_cast<std::size_t>(n) + 1, 0);
    for (const Triplet& t : entries) {
        if (t.row < 0 || t.row >= n || t.col < 0 || t.col >= n) {
            throw std::invalid_argument("SparseMatrix: triplet index out of range");
        }
        ++count[static_cast<std::size_t>(t.row) + 1];
    }
    std::vector<Index> offsets(count);
    std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
    std::vector<Index> cols(entries.size());
    std::vector<Real> vals(entries.size());
    {
        std::vector<Index> cursor(offsets.begin(), offsets.end() - 1);
        for (const Triplet& t : entries) {
            Index k = cursor[t.row]++;
            cols[static_cast<std::size_t>(k)] = t.col;
            vals[static_cast<std::size_t>(k)] = t.value;
        }
    }
    // Sort each row and merge duplicates in place.
    std::vector<Index> new_offsets(static_cast<std::size_t>(n) + 1, 0);
    std::size_t write = 0;
    std::vector<std::pair<Index, Real>> row;
    for (Index i = 0; i < n; ++i) {
        row.clear();
        for (Index k = offsets[i]; k < offsets[i + 1]; ++k) {
            row.emplace_back(cols[static_cast<std::size_t>(k)],
                             vals[static_cast<std::size_t>(k)]);
        }
        std::sort(row.begin(), row.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        for (std::size_t r = 0; r < row.size(); ++r) {
            if (r > 0 && row[r].first == row[r - 1].first) {
                vals[write - 1] += row[r].second;
            } else {
                cols[write] = row[r].first;
                vals[write] = row[r].second;
                ++write;
            }
        }
        new_offsets[static_cast<std::size_t>(i) + 1] = static_cast<Index>(write);
    }
    cols.resize(write);
    vals.resize(write);
    return SparseMatrix(n, std::move(new_offsets), std::move(cols), std::move(vals),
                        shift);
}

void SparseMatrix::set_shift(Real s) {
    if (s < 0.0 || std::isnan(s)) {
        throw std::invalid_argument("SparseMatrix: shift must be nonnegative");
    }
    shift_ = s;
}

std::optional<Index> SparseMatrix::find(Index i, Index j) const {
    if (i < 0 || i >= n_ || j < 0 || j >= n_) return std::nullopt;
    auto cols = row_cols(i);
    auto it = std::lower_bound(cols.begin(), cols.end(), j);
    if (it == cols.end() || *it != j) return std::nullopt;
    return row_offsets_[i] + (it - cols.begin());
}

Real SparseMatrix::stored(Index i, Index j) const {
    auto k = find(i, j);
    return k ? values_[static_cast<std::size_t>(*k)] : 0.0;
}

Real SparseMatrix::entry(Index i, Index j) const { return stored(i, j) + shift_; }

GraphMeta make_meta(const SparseMatrix& m) {
    GraphMeta meta;
    meta.n = m.size();
    meta.m = m.nnz();
    meta.dangling.resize(static_cast<std::size_t>(m.size()));
    for (Index i = 0; i < m.size(); ++i) {
        meta.dangling[static_cast<std::size_t>(i)] = m.row_cols(i).empty() ? 1 : 0;
    }
    return meta;
}

// ---------------------------------------------------------------------------
// Text formats
// ---------------------------------------------------------------------------

std::pair<SparseMatrix, GraphMeta> from_edge_list(std::istream& in,
                                                  EdgeListOptions opts) {
    std::vector<Triplet> trips;
    Index max_id = -1;
    std::string line;
    Index lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        std::istringstream ls(line);
        long long src, dst;
        auto fail = [&](const std::string& what) {
            throw ParseError("edge list line " + std::to_string(lineno) + ": " + what);
        };
        if (!(ls >> src >> dst)) fail("expected \"src dst [weight]\"");
        if (src < 0 || dst < 0) fail("negative node id");
        Real w = 1.0;
        std::string rest;
        if (ls >> rest) {
            if (!opts.weighted) fail("unexpected third column");
            try {
                std::size_t pos = 0;
                w = std::stod(rest, &pos);
                if (pos != rest.size()) fail("bad weight \"" + rest + "\"");
            } catch (const std::logic_error&) {
                fail("bad weight \"" + rest + "\"");
            }
            if (std::isnan(w)) fail("NaN weight");
            if (w < 0.0) fail("negative weight");
            std::string extra;
            if (ls >> extra) fail("trailing tokens");
        }
        trips.push_back({static_cast<Index>(src), static_cast<Index>(dst), w});
        max_id = std::max(max_id, static_cast<Index>(std::max(src, dst)));
    }
    SparseMatrix m = SparseMatrix::from_triplets(max_id + 1, trips);
    GraphMeta meta = make_meta(m);
    return {std::move(m), std::move(meta)};
}

void write_edge_list(const SparseMatrix& m, std::ostream& out) {
    char buf[64];
    for (Index i = 0; i < m.size(); ++i) {
        auto cols = m.row_cols(i);
        auto vals = m.row_vals(i);
        for (std::size_t k = 0; k < cols.size(); ++k) {
            if (vals[k] == 1.0) {
                out << i << ' ' << cols[k] << '\n';
            } else {
                std::snprintf(buf, sizeof(buf), "%.17g", vals[k]);
                out << i << ' ' << cols[k] << ' ' << buf << '\n';
            }
        }
    }
}

SparseMatrix from_matrix_market(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("matrix market: empty stream");
    std::istringstream hs(line);
    std::string banner, object, format, field, symmetry;
    hs >> banner >> object >> format >> field >> symmetry;
    for (auto* s : {&object, &format, &field, &symmetry}) {
        std::transform(s->begin(), s->end(), s->begin(),
                       [](unsigned char c) { return std::tolower(c); });
    }
    if (banner != "%%MatrixMarket" || object != "matrix") {
        throw ParseError("matrix market: bad header banner");
    }
    if (format != "coordinate") {
        throw ParseError("matrix market: unsupported format \"" + format +
                         "\" (only coordinate)");
    }
    if (field != "real" && field != "integer" && field != "pattern") {
        throw ParseError("matrix market: unsupported field \"" + field + "\"");
    }
    if (symmetry != "general") {
        throw ParseError("matrix market: unsupported symmetry \"" + symmetry +
                         "\" (only general)");
    }
    Index lineno = 1;
    auto next_data_line = [&](std::string& out_line) {
        while (std::getline(in, out_line)) {
            ++lineno;
            std::size_t pos = out_line.find_first_not_of(" \t\r");
            if (pos == std::string::npos || out_line[pos] == '%') continue;
            return true;
        }
        return false;
    };
    if (!next_data_line(line)) throw ParseError("matrix market: missing size line");
    long long rows, cols, nnz;
    {
        std::istringstream ls(line);
        if (!(ls >> rows >> cols >> nnz) || rows < 0 || cols < 0 || nnz < 0) {
            throw ParseError("matrix market: bad size line");
        }
        if (rows != cols) throw ParseError("matrix market: matrix must be square");
    }
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(nnz));
    for (long long k = 0; k < nnz; ++k) {
        if (!next_data_line(line)) throw ParseError("matrix market: truncated data");
        std::istringstream ls(line);
        long long i, j;
        Real v = 1.0;
        if (!(ls >> i >> j)) {
            throw ParseError("matrix market line " + std::to_string(lineno) +
                             ": bad entry");
        }
        if (field != "pattern" && !(ls >> v)) {
            throw ParseError("matrix market line " + std::to_string(lineno) +
                             ": missing value");
        }
        if (i < 1 || i > rows || j < 1 || j > cols) {
            throw ParseError("matrix market line " + std::to_string(lineno) +
                             ": index out of range");
        }
        if (v < 0.0 || std::isnan(v)) {
            throw ParseError("matrix market line " + std::to_string(lineno) +
                             ": negative or NaN value");
        }
        trips.push_back({static_cast<Index>(i - 1), static_cast<Index>(j - 1), v});
    }
    return SparseMatrix::from_triplets(static_cast<Index>(rows), trips);
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

namespace {

void check_dim(Index n, std::span<const Real> x, std::span<Real> y) {
    if (static_cast<Index>(x.size()) != n || static_cast<Index>(y.size()) != n) {
        throw std::invalid_argument("kernel: dimension mismatch");
    }
}

Real sum_of(std::span<const Real> x) {
    Real s = 0.0;
    for (Real v : x) s += v;
    return s;
}

}  // namespace

void SparseMatrix::apply(std::span<const Real> x, std::span<Real> y,
                         int threads) const {
    const SparseMatrix& m = *this;
    check_dim(m.size(), x, y);
    Real shift_term = m.shift() > 0.0 ? m.shift() * sum_of(x) : 0.0;
    auto offsets = m.row_offsets();
    auto cols = m.col_indices();
    auto vals = m.values();
    for_each_block(m.size(), threads, [&](int, Index lo, Index hi) {
        for (Index i = lo; i < hi; ++i) {
            Real acc = 0.0;
            for (Index k = offsets[i]; k < offsets[i + 1]; ++k) {
                acc += vals[k] * x[static_cast<std::size_t>(cols[k])];
            }
            y[static_cast<std::size_t>(i)] = acc + shift_term;
        }
    });
}

std::vector<Real> SparseMatrix::apply(std::span<const Real> x, int threads) const {
    std::vector<Real> y(static_cast<std::size_t>(size()));
    apply(x, y, threads);
    return y;
}

void SparseMatrix::apply_transpose(std::span<const Real> x, std::span<Real> y,
                                   int threads) const {
    const SparseMatrix& m = *this;
    const Index n = m.size();
    check_dim(n, x, y);
    Real shift_term = m.shift() > 0.0 ? m.shift() * sum_of(x) : 0.0;
    auto offsets = m.row_offsets();
    auto cols = m.col_indices();
    auto vals = m.values();
    if (threads <= 1 || n < 2) {
        std::fill(y.begin(), y.end(), shift_term);
        for (Index i = 0; i < n; ++i) {
            Real xi = x[static_cast<std::size_t>(i)];
            for (Index k = offsets[i]; k < offsets[i + 1]; ++k) {
                y[static_cast<std::size_t>(cols[k])] += vals[k] * xi;
            }
        }
        return;
    }
    int nb = static_cast<int>(std::min<Index>(threads, n));
    std::vector<std::vector<Real>> partial(static_cast<std::size_t>(nb));
    for_each_block(n, nb, [&](int b, Index lo, Index hi) {
        auto& buf = partial[static_cast<std::size_t>(b)];
        buf.assign(static_cast<std::size_t>(n), 0.0);
        for (Index i = lo; i < hi; ++i) {
            Real xi = x[static_cast<std::size_t>(i)];
            for (Index k = offsets[i]; k < offsets[i + 1]; ++k) {
                buf[static_cast<std::size_t>(cols[k])] += vals[k] * xi;
            }
        }
    });
    // Deterministic merge: thread 0, 1, 2, ... in order.
    for (Index j = 0; j < n; ++j) {
        Real acc = shift_term;
        for (int b = 0; b < nb; ++b) {
            acc += partial[static_cast<std::size_t>(b)][static_cast<std::size_t>(j)];
        }
        y[static_cast<std::size_t>(j)] = acc;
    }
}

std::vector<Real> SparseMatrix::apply_transpose(std::span<const Real> x,
                                                int threads) const {
    std::vector<Real> y(static_cast<std::size_t>(size()));
    apply_transpose(x, y, threads);
    return y;
}

void SparseMatrix::log_apply(std::span<const Real> q, std::span<Real> z) const {
    const SparseMatrix& m = *this;
    const Index n = m.size();
    check_dim(n, q, z);
    auto offsets = m.row_offsets();
    auto cols = m.col_indices();
    auto vals = m.values();
    if (m.shift() > 0.0) {
        Real c = -kInf;
        for (Real v : q) c = std::max(c, v);
        Real total = 0.0;
        for (Real v : q) total += std::exp(v - c);
        Real shift_term = m.shift() * total;
        for (Index i = 0; i < n; ++i) {
            Real acc = shift_term;
            for (Index k = offsets[i]; k < offsets[i + 1]; ++k) {
                acc += vals[k] * std::exp(q[static_cast<std::size_t>(cols[k])] - c);
            }
            z[static_cast<std::size_t>(i)] = c + std::log(acc);
        }
        return;
    }
    for (Index i = 0; i < n; ++i) {
        Real mrow = -kInf;
        for (Index k = offsets[i]; k < offsets[i + 1]; ++k) {
            if (vals[k] > 0.0) {
                mrow = std::max(mrow, q[static_cast<std::size_t>(cols[k])]);
            }
        }
        if (mrow == -kInf) {
            z[static_cast<std::size_t>(i)] = -kInf;
            continue;
        }
        Real acc = 0.0;
        for (Index k = offsets[i]; k < offsets[i + 1]; ++k) {
            if (vals[k] > 0.0) {
                acc += vals[k] * std::exp(q[static_cast<std::size_t>(cols[k])] - mrow);
            }
        }
        z[static_cast<std::size_t>(i)] = mrow + std::log(acc);
    }
}

void SparseMatrix::log_apply_transpose(std::span<const Real> q,
                                        std::span<Real> z) const {
    const SparseMatrix& m = *this;
    const Index n = m.size();
    check_dim(n, q, z);
    auto offsets = m.row_offsets();
    auto cols = m.col_indices();
    auto vals = m.values();
    std::vector<Real> colmax(static_cast<std::size_t>(n), -kInf);
    if (m.shift() > 0.0) {
        Real c = -kInf;
        for (Real v : q) c = std::max(c, v);
        std::fill(colmax.begin(), colmax.end(), c);
    } else {
        for (Index i = 0; i < n; ++i) {
            Real qi = q[static_cast<std::size_t>(i)];
            for (Index k = offsets[i]; k < offsets[i + 1]; ++k) {
                if (vals[k] > 0.0) {
                    auto j = static_cast<std::size_t>(cols[k]);
                    colmax[j] = std::max(colmax[j], qi);
                }
            }
        }
    }
    std::vector<Real> acc(static_cast<std::size_t>(n), 0.0);
    if (m.shift() > 0.0) {
        Real c = colmax[0];
        Real total = 0.0;
        for (Real v : q) total += std::exp(v - c);
        std::fill(acc.begin(), acc.end(), m.shift() * total);
    }
    for (Index i = 0; i < n; ++i) {
        Real qi = q[static_cast<std::size_t>(i)];
        for (Index k = offsets[i]; k < offsets[i + 1]; ++k) {
            if (vals[k] > 0.0) {
                auto j = static_cast<std::size_t>(cols[k]);
                acc[j] += vals[k] * std::exp(qi - colmax[j]);
            }
        }
    }
    for (Index j = 0; j < n; ++j) {
        auto js = static_cast<std::size_t>(j);
        z[js] = acc[js] > 0.0 ? colmax[js] + std::log(acc[js]) : -kInf;
    }
}

SparseMatrix explicit_transpose(const SparseMatrix& m) {
    const Index n = m.size();
    auto offsets = m.row_offsets();
    auto cols = m.col_indices();
    auto vals = m.values();
    std::vector<Index> t_offsets(static_cast<std::size_t>(n) + 1, 0);
    for (Index k = 0; k < m.nnz(); ++k) {
        ++t_offsets[static_cast<std::size_t>(cols[k]) + 1];
    }
    std::partial_sum(t_offsets.begin(), t_offsets.end(), t_offsets.begin());
    std::vector<Index> t_cols(static_cast<std::size_t>(m.nnz()));
    std::vector<Real> t_vals(static_cast<std::size_t>(m.nnz()));
    std::vector<Index> cursor(t_offsets.begin(), t_offsets.end() - 1);
    for (Index i = 0; i < n; ++i) {
        for (Index k = offsets[i]; k < offsets[i + 1]; ++k) {
            Index pos = cursor[static_cast<std::size_t>(cols[k])]++;
            t_cols[static_cast<std::size_t>(pos)] = i;
            t_vals[static_cast<std::size_t>(pos)] = vals[k];
        }
    }
    // Row i of A is scanned in increasing i, so each transposed row comes out
    // already sorted by column.
    return SparseMatrix(n, std::move(t_offsets), std::move(t_cols), std::move(t_vals),
                        m.shift());
}

// ---------------------------------------------------------------------------
// Structure checks
// ---------------------------------------------------------------------------

namespace {

// Tarjan-free double-DFS (Kosaraju) would need the transpose; use the
// iterative Tarjan SCC count instead.
bool strongly_connected_pattern(const SparseMatrix& m) {
    const Index n = m.size();
    if (n == 0) return false;
    if (n == 1) return true;
    std::vector<Index> index(static_cast<std::size_t>(n), -1);
    std::vector<Index> lowlink(static_cast<std::size_t>(n), 0);
    std::vector<std::uint8_t> on_stack(static_cast<std::size_t>(n), 0);
    std::vector<Index> stack;
    Index next_index = 0;
    Index scc_count = 0;

    struct Frame {
        Index v;
        std::size_t child;
    };
    std::vector<Frame> dfs;
    for (Index root = 0; root < n; ++root) {
        if (index[static_cast<std::size_t>(root)] != -1) continue;
        dfs.push_back({root, 0});
        while (!dfs.empty()) {
            auto& [v, child] = dfs.back();
            auto vs = static_cast<std::size_t>(v);
            if (child == 0) {
                index[vs] = lowlink[vs] = next_index++;
                stack.push_back(v);
                on_stack[vs] = 1;
            }
            auto cols = m.row_cols(v);
            bool descended = false;
            while (child < cols.size()) {
                Index w = cols[child++];
                auto ws = static_cast<std::size_t>(w);
                if (index[ws] == -1) {
                    dfs.push_back({w, 0});
                    descended = true;
                    break;
                }
                if (on_stack[ws]) lowlink[vs] = std::min(lowlink[vs], index[ws]);
            }
            if (descended) continue;
            if (lowlink[vs] == index[vs]) {
                ++scc_count;
                if (scc_count > 1) return false;
                Index w;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on_stack[static_cast<std::size_t>(w)] = 0;
                } while (w != v);
            }
            Index done = v;
            dfs.pop_back();
            if (!dfs.empty()) {
                auto ps = static_cast<std::size_t>(dfs.back().v);
                lowlink[ps] = std::min(lowlink[ps], lowlink[static_cast<std::size_t>(done)]);
            }
        }
    }
    return scc_count == 1 && next_index == n;
}

}  // namespace

bool is_strongly_connected(const SparseMatrix& m) {
    if (m.size() == 0) return false;
    if (m.shift() > 0.0) return true;
    return strongly_connected_pattern(m);
}

bool is_primitive_symmetrized(const SparseMatrix& m) {
    const Index n = m.size();
    if (n == 0) return false;
    if (m.shift() > 0.0) return true;  // complete graph with self-loops
    SparseMatrix mt = explicit_transpose(m);
    // BFS 2-coloring over the undirected pattern of A + A^T.
    std::vector<int> color(static_cast<std::size_t>(n), -1);
    std::vector<Index> queue;
    queue.reserve(static_cast<std::size_t>(n));
    color[0] = 0;
    queue.push_back(0);
    std::size_t head = 0;
    bool bipartite = true;
    auto visit = [&](Index u, Index v) {
        auto us = static_cast<std::size_t>(u);
        auto vs = static_cast<std::size_t>(v);
        if (color[vs] == -1) {
            color[vs] = 1 - color[us];
            queue.push_back(v);
        } else if (color[vs] == color[us]) {
            bipartite = false;  // odd cycle (self-loops land here too)
        }
    };
    while (head < queue.size()) {
        Index u = queue[head++];
        for (std::size_t k = 0; k < m.row_cols(u).size(); ++k) {
            if (m.row_vals(u)[k] > 0.0) visit(u, m.row_cols(u)[k]);
        }
        for (std::size_t k = 0; k < mt.row_cols(u).size(); ++k) {
            if (mt.row_vals(u)[k] > 0.0) visit(u, mt.row_cols(u)[k]);
        }
    }
    bool connected = queue.size() == static_cast<std::size_t>(n);
    return connected && !bipartite;
}

}  // namespace hotskit
