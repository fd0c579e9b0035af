#include "rcdlab/ot.hpp"

#include "rcdlab/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rcdlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_same_space(const ProbMeasure& mu, const ProbMeasure& nu) {
    if (&mu.space() != &nu.space() && mu.space().metric() != nu.space().metric())
        throw InvalidArgument("measures live on different spaces");
}

struct SupportLP {
    std::vector<std::size_t> rows;
    std::vector<std::size_t> cols;
    TransportSolution sol;
};

SupportLP solve_on_supports(const ProbMeasure& mu, const ProbMeasure& nu) {
    require_same_space(mu, nu);
    SupportLP lp;
    lp.rows = mu.support();
    lp.cols = nu.support();
    const auto m = static_cast<Eigen::Index>(lp.rows.size());
    const auto n = static_cast<Eigen::Index>(lp.cols.size());
    Eigen::MatrixXd cost(m, n);
    Eigen::VectorXd a(m), b(n);
    for (Eigen::Index i = 0; i < m; ++i) {
        a(i) = mu[lp.rows[i]];
        for (Eigen::Index j = 0; j < n; ++j) {
            const double d = mu.space().distance(lp.rows[i], lp.cols[j]);
            cost(i, j) = d * d;
        }
    }
    for (Eigen::Index j = 0; j < n; ++j) b(j) = nu[lp.cols[j]];
    lp.sol = solve_transport(cost, a, b);
    return lp;
}

}  // namespace

W2Result w2(const ProbMeasure& mu, const ProbMeasure& nu) {
    const SupportLP lp = solve_on_supports(mu, nu);
    const auto n = static_cast<Eigen::Index>(mu.size());
    W2Result r;
    r.plan.coupling = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < lp.rows.size(); ++i)
        for (std::size_t j = 0; j < lp.cols.size(); ++j)
            r.plan.coupling(lp.rows[i], lp.cols[j]) = lp.sol.flow(i, j);
    r.plan.cost = std::max(lp.sol.cost, 0.0);
    r.value = std::sqrt(r.plan.cost);
    return r;
}

double w2_squared(const ProbMeasure& mu, const ProbMeasure& nu) {
    return std::max(solve_on_supports(mu, nu).sol.cost, 0.0);
}

double marginal_residual(const TransportPlan& plan, const ProbMeasure& mu, const ProbMeasure& nu) {
    const Eigen::VectorXd rows = plan.coupling.rowwise().sum();
    const Eigen::VectorXd cols = plan.coupling.colwise().sum().transpose();
    return std::max((rows - mu.weights()).cwiseAbs().maxCoeff(),
                    (cols - nu.weights()).cwiseAbs().maxCoeff());
}

Eigen::VectorXd c_transform(const Eigen::MatrixXd& metric, const Eigen::VectorXd& psi,
                            std::span<const std::size_t> support) {
    if (support.empty()) throw InvalidArgument("c-transform over an empty support");
    const Eigen::Index n = metric.rows();
    Eigen::VectorXd phi(n);
    for (Eigen::Index x = 0; x < n; ++x) {
        double best = kInf;
        for (std::size_t y : support) {
            if (!std::isfinite(psi(y))) throw InvalidArgument("psi must be finite on the support");
            const double d = metric(x, y);
            const double v = 0.5 * d * d - psi(y);
            if (v < best) best = v;
        }
        phi(x) = best;
    }
    return phi;
}

Eigen::VectorXd c_transform(const FiniteMMSpace& space, const Eigen::VectorXd& psi,
                            std::span<const std::size_t> support) {
    return c_transform(space.metric(), psi, support);
}

double dual_value(const KantorovichPair& pair, const ProbMeasure& mu, const ProbMeasure& nu) {
    double acc = 0.0;
    for (std::size_t x : mu.support()) acc += pair.phi(x) * mu[x];
    for (std::size_t y : nu.support()) acc += pair.psi(y) * nu[y];
    return acc;
}

KantorovichPair kantorovich_potentials(const ProbMeasure& mu, const ProbMeasure& nu,
                                       std::optional<std::size_t> gauge) {
    const SupportLP lp = solve_on_supports(mu, nu);
    const auto n = static_cast<Eigen::Index>(mu.size());
    KantorovichPair pair;
    pair.psi = Eigen::VectorXd::Constant(n, -kInf);
    for (std::size_t j = 0; j < lp.cols.size(); ++j) pair.psi(lp.cols[j]) = 0.5 * lp.sol.v(j);
    pair.phi = c_transform(mu.space(), pair.psi, lp.cols);
    if (gauge) {
        if (*gauge >= mu.size()) throw InvalidArgument("gauge point out of range");
        const double shift = pair.phi(*gauge);
        pair.phi.array() -= shift;
        for (std::size_t y : lp.cols) pair.psi(y) += shift;
        pair.gauge = gauge;
    }
    pair.primal = 0.5 * std::max(lp.sol.cost, 0.0);
    pair.dual_value = dual_value(pair, mu, nu);
    pair.gap = pair.primal - pair.dual_value;
    pair.nonunique = lp.sol.degenerate;
    return pair;
}

double dual_feasibility_violation(const FiniteMMSpace& space, const KantorovichPair& pair) {
    double worst = 0.0;
    for (std::size_t y = 0; y < space.size(); ++y) {
        if (!std::isfinite(pair.psi(y))) continue;
        for (std::size_t x = 0; x < space.size(); ++x) {
            const double d = space.distance(x, y);
            worst = std::max(worst, pair.phi(x) + pair.psi(y) - 0.5 * d * d);
        }
    }
    return worst;
}

SlopeDiagnostics slopes(const FiniteMMSpace& space, const Eigen::VectorXd& f) {
    const auto n = static_cast<Eigen::Index>(space.size());
    SlopeDiagnostics s;
    s.ascending = Eigen::VectorXd::Zero(n);
    s.descending = Eigen::VectorXd::Zero(n);
    auto visit = [&](std::size_t x, std::size_t y) {
        const double d = space.distance(x, y);
        if (!(d > 0.0)) return;
        const double q = (f(y) - f(x)) / d;
        s.ascending(x) = std::max(s.ascending(x), q);
        s.descending(x) = std::max(s.descending(x), -q);
    };
    for (std::size_t x = 0; x < space.size(); ++x) {
        if (space.has_graph()) {
            for (std::size_t y : space.neighbours()[x]) visit(x, y);
        } else {
            for (std::size_t y = 0; y < space.size(); ++y)
                if (y != x) visit(x, y);
        }
    }
    return s;
}

SlacknessReport check_slackness(const FiniteMMSpace& space, const KantorovichPair& pair,
                                const TransportPlan& plan) {
    SlacknessReport r;
    const SlopeDiagnostics sl = slopes(space, pair.phi);
    for (Eigen::Index x = 0; x < plan.coupling.rows(); ++x)
        for (Eigen::Index y = 0; y < plan.coupling.cols(); ++y) {
            if (!(plan.coupling(x, y) > 0.0)) continue;
            const double d = space.distance(x, y);
            const double res = std::isfinite(pair.psi(y))
                                   ? std::abs(0.5 * d * d - pair.phi(x) - pair.psi(y))
                                   : kInf;
            if (res > r.complementary_residual) {
                r.complementary_residual = res;
                r.worst_pair = {static_cast<std::size_t>(x), static_cast<std::size_t>(y)};
            }
            r.slope_violation = std::max(r.slope_violation, sl.ascending(x) - d);
        }
    return r;
}

StabilityReport potential_stability_probe(SpacePtr space,
                                          const std::vector<Eigen::VectorXd>& densities,
                                          const Eigen::VectorXd& limit, const ProbMeasure& sigma,
                                          std::size_t gauge) {
    StabilityReport r;
    const ProbMeasure target = ProbMeasure::from_density(space, limit);
    const KantorovichPair ref = kantorovich_potentials(target, sigma, gauge);
    const double base = 2.0 * ref.primal;
    for (const Eigen::VectorXd& f : densities) {
        const ProbMeasure mu = ProbMeasure::from_density(space, f);
        const KantorovichPair p = kantorovich_potentials(mu, sigma, gauge);
        r.value_gaps.push_back(std::abs(2.0 * p.primal - base));
        r.potential_gaps.push_back((p.phi - ref.phi).cwiseAbs().maxCoeff());
    }
    r.values_converge = r.value_gaps.empty() ||
                        r.value_gaps.back() <= std::max(1e-12, 0.5 * r.value_gaps.front()) ||
                        r.value_gaps.back() <= 1e-12;
    return r;
}

}  // namespace rcdlab
