#pragma once

// Internal helpers for exact per-line log-sum evaluation, shared by the
// coordinate-descent solvers. Not installed.

#include <cmath>
#include <span>

#include "hotskit/common.hpp"

namespace hotskit::detail {

// log( sum_{k: cols[k] != skip, vals[k] > 0} vals[k] e^{sign p[cols[k]]} ),
// stabilized by the line's own maximum; -inf when logically empty.
inline Real log_line_sum(std::span<const Index> cols, std::span<const Real> vals,
                         std::span<const Real> p, Real sign, Index skip) {
    Real mx = -kInf;
    for (std::size_t k = 0; k < cols.size(); ++k) {
        if (cols[k] == skip || !(vals[k] > 0.0)) continue;
        mx = std::max(mx, sign * p[static_cast<std::size_t>(cols[k])]);
    }
    if (mx == -kInf) return -kInf;
    Real acc = 0.0;
    for (std::size_t k = 0; k < cols.size(); ++k) {
        if (cols[k] == skip || !(vals[k] > 0.0)) continue;
        acc += vals[k] * std::exp(sign * p[static_cast<std::size_t>(cols[k])] - mx);
    }
    return mx + std::log(acc);
}

// log( shift * sum_{j != skip} e^{sign p_j} ); -inf when shift == 0.
inline Real log_shift_sum(Real shift, std::span<const Real> p, Real sign, Index skip) {
    if (!(shift > 0.0)) return -kInf;
    Real mx = -kInf;
    for (std::size_t j = 0; j < p.size(); ++j) {
        if (static_cast<Index>(j) == skip) continue;
        mx = std::max(mx, sign * p[j]);
    }
    if (mx == -kInf) return -kInf;
    Real acc = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
        if (static_cast<Index>(j) == skip) continue;
        acc += std::exp(sign * p[j] - mx);
    }
    return mx + std::log(shift * acc);
}

}  // namespace hotskit::detail
