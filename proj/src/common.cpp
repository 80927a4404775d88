#include "hotskit/common.hpp"

#include <algorithm>
#include <cmath>

namespace hotskit {

void normalize(std::vector<Real>& p, Normalization norm) {
    if (p.empty()) return;
    switch (norm) {
        case Normalization::MeanZero: {
            Real mu = mean(p);
            for (Real& v : p) v -= mu;
            break;
        }
        case Normalization::AnchorLast: {
            Real last = p.back();
            for (Real& v : p) v -= last;
            break;
        }
        case Normalization::None:
            break;
    }
}

Real mean(std::span<const Real> x) {
    if (x.empty()) return 0.0;
    Real s = 0.0;
    for (Real v : x) s += v;
    return s / static_cast<Real>(x.size());
}

Real sup_norm(std::span<const Real> x) {
    Real s = 0.0;
    for (Real v : x) s = std::max(s, std::abs(v));
    return s;
}

Real sup_dist(std::span<const Real> x, std::span<const Real> y) {
    Real s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s = std::max(s, std::abs(x[i] - y[i]));
    return s;
}

Real logsumexp(std::span<const Real> x) {
    Real m = -kInf;
    for (Real v : x) m = std::max(m, v);
    if (m == -kInf) return -kInf;
    if (std::isinf(m)) return m;
    Real s = 0.0;
    for (Real v : x) s += std::exp(v - m);
    return m + std::log(s);
}

Real logadd(Real a, Real b) {
    if (a == -kInf) return b;
    if (b == -kInf) return a;
    Real m = std::max(a, b);
    return m + std::log1p(std::exp(std::min(a, b) - m));
}

Real estimate_rate(std::span<const Real> residuals) {
    // Drop trailing zeros (exact convergence) and require a few samples.
    std::size_t end = residuals.size();
    while (end > 0 && !(residuals[end - 1] > 0.0)) --end;
    if (end < 3) return kNaN;
    std::size_t window = std::min<std::size_t>(50, end / 2);
    if (window < 1) window = 1;
    std::size_t start = end - 1 - window;
    Real r0 = residuals[start];
    Real r1 = residuals[end - 1];
    if (!(r0 > 0.0) || !(r1 > 0.0)) return kNaN;
    return std::pow(r1 / r0, 1.0 / static_cast<Real>(window));
}

}  // namespace hotskit
