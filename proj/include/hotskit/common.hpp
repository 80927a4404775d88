#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hotskit {

using Index = std::int64_t;
using Real = double;

inline constexpr Real kInf = std::numeric_limits<Real>::infinity();
inline constexpr Real kNaN = std::numeric_limits<Real>::quiet_NaN();

/// Input that violates the structural requirements of a solver
/// (zero row/column of the logical matrix, empty graph, ...).
struct StructuralError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed text input (edge lists, Matrix Market, bounds files).
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class SolveStatus { Converged, MaxIter, Oscillating, Diverged };

inline const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Converged:   return "Converged";
        case SolveStatus::MaxIter:     return "MaxIter";
        case SolveStatus::Oscillating: return "Oscillating";
        case SolveStatus::Diverged:    return "Diverged";
    }
    return "?";
}

/// Per-solve diagnostics shared by every iterative solver in the toolkit.
struct SolveReport {
    Index iterations = 0;
    Real residual = kNaN;              // sup-norm of the last step
    std::vector<Real> theta_trace;     // dual objective, sampled every trace_stride iterations
    std::vector<Real> residual_trace;  // step sup-norms at the same cadence
    Index trace_stride = 1;
    Real rate_estimate = kNaN;         // empirical ratio of successive residuals
    SolveStatus status = SolveStatus::MaxIter;
    std::vector<std::string> warnings;
};

enum class Normalization { MeanZero, AnchorLast, None };

/// Log-domain potential vector p; the HOTS scores are exp(p).
struct ScoreState {
    std::vector<Real> p;
    Normalization normalization = Normalization::MeanZero;

    ScoreState() = default;
    explicit ScoreState(std::vector<Real> potentials,
                        Normalization norm = Normalization::MeanZero)
        : p(std::move(potentials)), normalization(norm) {}
    static ScoreState zeros(Index n, Normalization norm = Normalization::MeanZero) {
        return ScoreState(std::vector<Real>(static_cast<std::size_t>(n), 0.0), norm);
    }

    Index size() const { return static_cast<Index>(p.size()); }
    std::vector<Real> scores() const {
        std::vector<Real> y(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) y[i] = std::exp(p[i]);
        return y;
    }
};

/// Re-impose the state's normalization tag in place.
void normalize(std::vector<Real>& p, Normalization norm);
inline void normalize(ScoreState& s) { normalize(s.p, s.normalization); }

Real mean(std::span<const Real> x);
Real sup_norm(std::span<const Real> x);
Real sup_dist(std::span<const Real> x, std::span<const Real> y);

/// log(sum_i exp(x_i)); -inf on empty input.
Real logsumexp(std::span<const Real> x);
/// log(e^a + e^b), safe against overflow and -inf arguments.
Real logadd(Real a, Real b);

/// Geometric-slope fit of the tail of a residual history; NaN if too short.
Real estimate_rate(std::span<const Real> residuals);

}  // namespace hotskit
