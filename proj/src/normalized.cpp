#include "hotskit/normalized.hpp"

#include <cmath>

namespace hotskit {

NormalizedModel build_normalized(const SparseMatrix& a, const GraphMeta& meta,
                                 Real alpha) {
    check_alpha(alpha);
    if (a.shift() != 0.0) {
        throw std::invalid_argument(
            "build_normalized: the normalized model replaces the uniform shift; "
            "pass a shift-free matrix");
    }
    const Index n = a.size();
    if (meta.n != n) throw std::invalid_argument("build_normalized: meta mismatch");
    NormalizedModel model;
    model.alpha = alpha;
    model.pages = n;
    model.dangling.assign(static_cast<std::size_t>(n), 0);

    std::vector<Index> offsets;
    std::vector<Index> cols;
    std::vector<Real> vals;
    offsets.reserve(static_cast<std::size_t>(n) + 2);
    cols.reserve(static_cast<std::size_t>(a.nnz() + 2 * n));
    vals.reserve(static_cast<std::size_t>(a.nnz() + 2 * n));
    offsets.push_back(0);
    for (Index i = 0; i < n; ++i) {
        auto rcols = a.row_cols(i);
        auto rvals = a.row_vals(i);
        Real row_sum = 0.0;
        for (Real v : rvals) row_sum += v;
        if (row_sum > 0.0) {
            for (std::size_t k = 0; k < rcols.size(); ++k) {
                if (rvals[k] > 0.0) {
                    cols.push_back(rcols[k]);
                    vals.push_back(rvals[k] / row_sum);
                }
            }
        } else {
            model.dangling[static_cast<std::size_t>(i)] = 1;
            cols.push_back(n);  // fictitious node
            vals.push_back(1.0);
        }
        offsets.push_back(static_cast<Index>(cols.size()));
    }
    // The fictitious node points to every page.
    for (Index j = 0; j < n; ++j) {
        cols.push_back(j);
        vals.push_back(1.0);
    }
    offsets.push_back(static_cast<Index>(cols.size()));
    model.inner = SparseMatrix(n + 1, std::move(offsets), std::move(cols),
                               std::move(vals), 0.0);
    return model;
}

NormalizedResult normalized_solve(const NormalizedModel& model, const ScoreState& p0,
                                  const EffectiveOptions& opts) {
    const Index n = model.pages;
    if (p0.size() != n + 2) {
        throw std::invalid_argument("normalized_solve: expected n+2 potentials");
    }
    EffectiveOptions eopts = opts;
    eopts.alpha = model.alpha;
    EffectiveResult res = effective_solve(model.inner, p0, eopts);
    NormalizedResult out;
    out.p_inner = res.state.p;
    out.params = res.params;
    out.report = std::move(res.report);
    std::vector<Real> pages(res.state.p.begin(), res.state.p.begin() + n);
    out.pages_state = ScoreState(std::move(pages), Normalization::None);
    return out;
}

}  // namespace hotskit
