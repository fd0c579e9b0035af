#pragma once

// Composition of local convexity inequalities along dyadic midpoint
// selection.  Templated on the scalar so it can run in exact rationals.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

namespace rcdlab {

template <class T>
struct DyadicEntropyModel {
    std::vector<T> times;       // sorted
    std::vector<T> entropies;
    T W{};                      // W2(mu0, mu1); along a geodesic W2(mu_s, mu_r) = (r - s) W
    T K{};
};

// rhs of Ent(mu_t) <= ((r-t)/(r-s)) Ent_s + ((t-s)/(r-s)) Ent_r - K/2 (t-s)(r-t)/(r-s)^2 W2(mu_s,mu_r)^2
template <class T>
T cd_bound(const T& s, const T& t, const T& r, const T& es, const T& er, const T& W, const T& K) {
    const T len = r - s;
    const T a = (r - t) / len;
    const T b = (t - s) / len;
    const T dist = len * W;
    return a * es + b * er - K / T(2) * a * b * dist * dist;
}

/// Selects midpoints level by level.  slack(level, t) <= 0 is added to the
/// local bound, so zero slack means every local inequality is an equality.
template <class T>
DyadicEntropyModel<T> compose_dyadic(const T& e0, const T& e1, const T& W, const T& K,
                                     std::size_t depth,
                                     const std::function<T(std::size_t, const T&)>& slack = {}) {
    std::map<T, T> fixed{{T(0), e0}, {T(1), e1}};
    for (std::size_t level = 1; level <= depth; ++level) {
        std::vector<std::pair<T, T>> add;
        for (auto it = fixed.begin(); std::next(it) != fixed.end(); ++it) {
            const auto nx = std::next(it);
            const T t = (it->first + nx->first) / T(2);
            T e = cd_bound(it->first, t, nx->first, it->second, nx->second, W, K);
            if (slack) {
                const T sl = slack(level, t);
                if (sl > T(0)) throw std::invalid_argument("local slack must be <= 0");
                e += sl;
            }
            add.emplace_back(t, e);
        }
        for (auto& [t, e] : add) fixed.emplace(std::move(t), std::move(e));
    }
    DyadicEntropyModel<T> m;
    m.W = W;
    m.K = K;
    for (const auto& [t, e] : fixed) {
        m.times.push_back(t);
        m.entropies.push_back(e);
    }
    return m;
}

/// Ent(mu_t) minus the convexity bound over (s, t, r) = (times[i], times[j], times[k]).
template <class T>
T cd_triple_residual(const DyadicEntropyModel<T>& m, std::size_t i, std::size_t j, std::size_t k) {
    return m.entropies[j] -
           cd_bound(m.times[i], m.times[j], m.times[k], m.entropies[i], m.entropies[k], m.W, m.K);
}

template <class T>
struct CompositionResidual {
    T worst_global{};    // over (0, t, 1)
    T worst_triple{};    // over every ordered triple of selected times
    std::size_t triples = 0;
};

template <class T>
CompositionResidual<T> composition_residual(const DyadicEntropyModel<T>& m) {
    CompositionResidual<T> r;
    const std::size_t n = m.times.size();
    bool first_g = true;
    bool first_t = true;
    for (std::size_t j = 1; j + 1 < n; ++j) {
        const T g = cd_triple_residual(m, 0, j, n - 1);
        if (first_g || g > r.worst_global) r.worst_global = g;
        first_g = false;
        for (std::size_t i = 0; i < j; ++i)
            for (std::size_t k = j + 1; k < n; ++k) {
                const T v = cd_triple_residual(m, i, j, k);
                if (first_t || v > r.worst_triple) r.worst_triple = v;
                first_t = false;
                ++r.triples;
            }
    }
    return r;
}

}  // namespace rcdlab
