#include "rcdlab/geodesy.hpp"

#include "rcdlab/convex.hpp"
#include "rcdlab/error.hpp"

#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

namespace rcdlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSolveMargin = 1e-9;
// auto slack above the minimal one, relative to the interval distance
constexpr double kAutoMargin = 1e-6;

// gamma0 (S0 x X), nu (X), gamma1 (X x S1), then trailing scalars.
class JointLayout {
public:
    JointLayout(const ProbMeasure& mu0, const ProbMeasure& mu1)
        : s0(mu0.support()), s1(mu1.support()), n(mu0.size()) {}

    Eigen::Index g0(std::size_t i, std::size_t y) const { return static_cast<Eigen::Index>(i * n + y); }
    Eigen::Index nu(std::size_t y) const { return static_cast<Eigen::Index>(s0.size() * n + y); }
    Eigen::Index g1(std::size_t y, std::size_t k) const {
        return static_cast<Eigen::Index>(s0.size() * n + n + y * s1.size() + k);
    }
    Eigen::Index core() const { return static_cast<Eigen::Index>(s0.size() * n + n + n * s1.size()); }

    std::vector<std::size_t> s0;
    std::vector<std::size_t> s1;
    std::size_t n;
};

struct JointRows {
    Eigen::Index r0 = 0;   // |S0| rows: gamma0 row sums
    Eigen::Index c0 = 0;   // n rows: gamma0 column sums - nu
    Eigen::Index r1 = 0;   // n rows: gamma1 row sums - nu
    Eigen::Index c1 = 0;   // |S1| - 1 rows: gamma1 column sums, the heaviest one is implied
    std::size_t implied = 0;
    Eigen::Index extra = 0;

    // row of gamma1 column sum k, or -1 for the implied one
    Eigen::Index c1_row(std::size_t k) const {
        if (k == implied) return -1;
        return c1 + static_cast<Eigen::Index>(k < implied ? k : k - 1);
    }
};

// Linking and marginal constraints shared by every joint-coupling program.
JointRows joint_constraints(const JointLayout& L, const ProbMeasure& mu0, const ProbMeasure& mu1,
                            std::vector<Eigen::Triplet<double>>& t, std::vector<double>& b) {
    JointRows rows;
    Eigen::Index row = 0;
    rows.r0 = row;
    for (std::size_t i = 0; i < L.s0.size(); ++i, ++row) {
        for (std::size_t y = 0; y < L.n; ++y) t.emplace_back(row, L.g0(i, y), 1.0);
        b.push_back(mu0[L.s0[i]]);
    }
    rows.c0 = row;
    for (std::size_t y = 0; y < L.n; ++y, ++row) {
        for (std::size_t i = 0; i < L.s0.size(); ++i) t.emplace_back(row, L.g0(i, y), 1.0);
        t.emplace_back(row, L.nu(y), -1.0);
        b.push_back(0.0);
    }
    rows.r1 = row;
    for (std::size_t y = 0; y < L.n; ++y, ++row) {
        for (std::size_t k = 0; k < L.s1.size(); ++k) t.emplace_back(row, L.g1(y, k), 1.0);
        t.emplace_back(row, L.nu(y), -1.0);
        b.push_back(0.0);
    }
    rows.c1 = row;
    // pinning the multiplier of a dust site would push every other one far out
    for (std::size_t k = 1; k < L.s1.size(); ++k)
        if (mu1[L.s1[k]] > mu1[L.s1[rows.implied]]) rows.implied = k;
    for (std::size_t k = 0; k < L.s1.size(); ++k) {
        if (k == rows.implied) continue;
        for (std::size_t y = 0; y < L.n; ++y) t.emplace_back(row, L.g1(y, k), 1.0);
        b.push_back(mu1[L.s1[k]]);
        ++row;
    }
    rows.extra = row;
    return rows;
}

Eigen::VectorXd joint_start(const JointLayout& L, const ProbMeasure& mu0, const ProbMeasure& mu1,
                            Eigen::Index total) {
    Eigen::VectorXd x = Eigen::VectorXd::Constant(total, 1.0);
    const double u = 1.0 / static_cast<double>(L.n);
    for (std::size_t i = 0; i < L.s0.size(); ++i)
        for (std::size_t y = 0; y < L.n; ++y) x(L.g0(i, y)) = mu0[L.s0[i]] * u;
    for (std::size_t y = 0; y < L.n; ++y) {
        x(L.nu(y)) = u;
        for (std::size_t k = 0; k < L.s1.size(); ++k) x(L.g1(y, k)) = u * mu1[L.s1[k]];
    }
    return x;
}

double sq(double v) { return v * v; }

// Middle marginal of an IPM iterate; interior-point dust far below the
// solver precision is dropped so it does not seed later supports.
ProbMeasure middle_marginal(const SpacePtr& space, const JointLayout& L, const Eigen::VectorXd& x) {
    Eigen::VectorXd w(static_cast<Eigen::Index>(L.n));
    for (std::size_t y = 0; y < L.n; ++y) w(static_cast<Eigen::Index>(y)) = std::max(0.0, x(L.nu(y)));
    const double floor = 1e-14 * w.maxCoeff();
    for (Eigen::Index y = 0; y < w.size(); ++y)
        if (w(y) < floor) w(y) = 0.0;
    return ProbMeasure::normalized(space, w);
}

struct LpPoint {
    double value = 0.0;
    Eigen::VectorXd x;
};

double cost_g0(const JointLayout& L, const FiniteMMSpace& s, std::size_t i, std::size_t y) {
    return sq(s.distance(L.s0[i], y));
}
double cost_g1(const JointLayout& L, const FiniteMMSpace& s, std::size_t y, std::size_t k) {
    return sq(s.distance(y, L.s1[k]));
}

IpmOptions lp_options() {
    IpmOptions o;
    o.mu_tol = 1e-14;
    o.primal_tol = 1e-13;
    o.dual_tol = 1e-12;
    o.max_iterations = 200;
    return o;
}

// min r  s.t.  <C, gamma0> <= r,  <C, gamma1> <= r
LpPoint midpoint_minimax(const ProbMeasure& mu0, const ProbMeasure& mu1) {
    const JointLayout L(mu0, mu1);
    std::vector<Eigen::Triplet<double>> t;
    std::vector<double> b;
    const JointRows rows = joint_constraints(L, mu0, mu1, t, b);
    const Eigen::Index s0v = L.core();
    const Eigen::Index s1v = s0v + 1;
    const Eigen::Index rv = s0v + 2;
    const Eigen::Index total = s0v + 3;
    const FiniteMMSpace& sp = mu0.space();
    for (std::size_t i = 0; i < L.s0.size(); ++i)
        for (std::size_t y = 0; y < L.n; ++y) t.emplace_back(rows.extra, L.g0(i, y), cost_g0(L, sp, i, y));
    t.emplace_back(rows.extra, s0v, 1.0);
    t.emplace_back(rows.extra, rv, -1.0);
    b.push_back(0.0);
    for (std::size_t y = 0; y < L.n; ++y)
        for (std::size_t k = 0; k < L.s1.size(); ++k)
            t.emplace_back(rows.extra + 1, L.g1(y, k), cost_g1(L, sp, y, k));
    t.emplace_back(rows.extra + 1, s1v, 1.0);
    t.emplace_back(rows.extra + 1, rv, -1.0);
    b.push_back(0.0);

    SeparableProgram p;
    p.A.resize(rows.extra + 2, total);
    p.A.setFromTriplets(t.begin(), t.end());
    p.b = Eigen::Map<Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
    p.cost = Eigen::VectorXd::Zero(total);
    p.cost(rv) = 1.0;
    p.x0 = joint_start(L, mu0, mu1, total);
    const IpmResult r = solve_separable(p, lp_options());
    return {r.x(rv), r.x};
}

// min <C, gamma0>  s.t.  <C, gamma1> <= a2
LpPoint start_cost_given_end_budget(const ProbMeasure& mu0, const ProbMeasure& mu1, double a2) {
    const JointLayout L(mu0, mu1);
    std::vector<Eigen::Triplet<double>> t;
    std::vector<double> b;
    const JointRows rows = joint_constraints(L, mu0, mu1, t, b);
    const Eigen::Index s1v = L.core();
    const Eigen::Index total = s1v + 1;
    const FiniteMMSpace& sp = mu0.space();
    for (std::size_t y = 0; y < L.n; ++y)
        for (std::size_t k = 0; k < L.s1.size(); ++k)
            t.emplace_back(rows.extra, L.g1(y, k), cost_g1(L, sp, y, k));
    t.emplace_back(rows.extra, s1v, 1.0);
    b.push_back(a2);
    SeparableProgram p;
    p.A.resize(rows.extra + 1, total);
    p.A.setFromTriplets(t.begin(), t.end());
    p.b = Eigen::Map<Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
    p.cost = Eigen::VectorXd::Zero(total);
    for (std::size_t i = 0; i < L.s0.size(); ++i)
        for (std::size_t y = 0; y < L.n; ++y) p.cost(L.g0(i, y)) = cost_g0(L, sp, i, y);
    p.x0 = joint_start(L, mu0, mu1, total);
    const IpmResult r = solve_separable(p, lp_options());
    return {r.objective, r.x};
}

}  // namespace

double intermediate_violation(const ProbMeasure& mu0, const ProbMeasure& mu1,
                              const ProbMeasure& nu, const IntermediateSpec& spec) {
    return std::max(w2(mu0, nu).value - spec.budget_from_start(),
                    w2(nu, mu1).value - spec.budget_to_end());
}

double minimal_epsilon(const ProbMeasure& mu0, const ProbMeasure& mu1, double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("intermediate time must lie in [0,1]");
    const double W = w2(mu0, mu1).value;
    if (t == 0.0 || t == 1.0 || W == 0.0) return 0.0;
    const JointLayout L(mu0, mu1);
    // the LP only proposes nu; the slack is measured with exact distances
    auto slack_of = [&](const Eigen::VectorXd& x) {
        const ProbMeasure nu = middle_marginal(mu0.space_ptr(), L, x);
        return std::max({0.0, w2(mu0, nu).value - t * W, w2(nu, mu1).value - (1.0 - t) * W});
    };
    if (t == 0.5) return slack_of(midpoint_minimax(mu0, mu1).x);
    auto attempt = [&](double eps) {
        const double a = (1.0 - t) * W + eps;
        const double need = sq(t * W + eps);
        LpPoint p = start_cost_given_end_budget(mu0, mu1, a * a);
        const bool ok = p.value <= need * (1.0 + 1e-10) + 1e-14;
        return std::make_pair(ok, std::move(p.x));
    };
    auto [ok0, x0] = attempt(0.0);
    if (ok0) return slack_of(x0);
    double lo = 0.0;
    double hi = std::min(t, 1.0 - t) * W;
    Eigen::VectorXd best = attempt(hi).second;
    for (int it = 0; it < 60 && hi - lo > 1e-12 * (1.0 + W); ++it) {
        const double mid = 0.5 * (lo + hi);
        auto [ok, x] = attempt(mid);
        if (ok) {
            hi = mid;
            best = std::move(x);
        } else {
            lo = mid;
        }
    }
    return slack_of(best);
}

namespace {

// eps_min < 0 means: compute it here
IntermediateResult solve_intermediate(const ProbMeasure& mu0, const ProbMeasure& mu1, double t,
                                      double epsilon, double tol, double eps_min) {
    if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("intermediate time must lie in [0,1]");
    if (epsilon < 0.0) throw InvalidArgument("epsilon must be >= 0");
    if (!(tol > 0.0)) throw InvalidArgument("tolerance must be > 0");
    const SpacePtr space = mu0.space_ptr();
    const double W = w2(mu0, mu1).value;
    IntermediateSpec spec{t, epsilon, W};

    auto endpoint = [&](const ProbMeasure& nu) {
        EntropyCertificate c;
        c.entropy = entropy(nu);
        c.dual_bound = c.entropy;
        c.w2_from_start = w2(mu0, nu).value;
        c.w2_to_end = w2(nu, mu1).value;
        c.violation = std::max(c.w2_from_start - spec.budget_from_start(),
                               c.w2_to_end - spec.budget_to_end());
        c.method = "endpoint";
        return IntermediateResult{nu, c, spec};
    };
    if (t == 0.0 && epsilon == 0.0) return endpoint(mu0);
    if (t == 1.0 && epsilon == 0.0) return endpoint(mu1);
    if (W == 0.0 && epsilon == 0.0) return endpoint(mu0);

    if (eps_min < 0.0) eps_min = minimal_epsilon(mu0, mu1, t);
    constexpr double kSlack = 1e-10;
    if (epsilon + kSlack * (1.0 + W) < eps_min)
        throw InfeasibleIntermediate("intermediate set is empty for epsilon = " +
                                         std::to_string(epsilon),
                                     eps_min);
    // numerically empty interiors are widened to the computed minimum
    spec.epsilon = std::max(epsilon, eps_min);

    const JointLayout L(mu0, mu1);
    std::vector<Eigen::Triplet<double>> trip;
    std::vector<double> b;
    const JointRows rows = joint_constraints(L, mu0, mu1, trip, b);
    const Eigen::Index s0v = L.core();
    const Eigen::Index s1v = s0v + 1;
    const Eigen::Index total = s0v + 2;
    const FiniteMMSpace& sp = *space;
    // a small widening keeps the barrier interior nonempty; the dual bound of the
    // wider program still bounds the exact optimum from below
    const double widen = kSolveMargin * std::max(1.0, W);
    const double B0 = sq(spec.budget_from_start() + widen);
    const double B1 = sq(spec.budget_to_end() + widen);
    for (std::size_t i = 0; i < L.s0.size(); ++i)
        for (std::size_t y = 0; y < L.n; ++y)
            trip.emplace_back(rows.extra, L.g0(i, y), cost_g0(L, sp, i, y));
    trip.emplace_back(rows.extra, s0v, 1.0);
    b.push_back(B0);
    for (std::size_t y = 0; y < L.n; ++y)
        for (std::size_t k = 0; k < L.s1.size(); ++k)
            trip.emplace_back(rows.extra + 1, L.g1(y, k), cost_g1(L, sp, y, k));
    trip.emplace_back(rows.extra + 1, s1v, 1.0);
    b.push_back(B1);

    SeparableProgram p;
    p.A.resize(rows.extra + 2, total);
    p.A.setFromTriplets(trip.begin(), trip.end());
    p.b = Eigen::Map<Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
    p.cost = Eigen::VectorXd::Zero(total);
    p.kappa = 1.0;
    p.entropy_ref = sp.measure();
    for (std::size_t y = 0; y < L.n; ++y) p.entropy_vars.push_back(L.nu(y));
    p.x0 = joint_start(L, mu0, mu1, total);
    p.x0(s0v) = std::max(B0, 1e-3);
    p.x0(s1v) = std::max(B1, 1e-3);

    // Lagrangian dual function, exact for any multipliers: the couplings are
    // minimised in closed form, so every iterate yields a valid lower bound
    struct Bound {
        double value = -kInf;
        double lambda0 = 0.0;
        double lambda1 = 0.0;
    };
    double cmax = 0.0;
    for (std::size_t i = 0; i < L.s0.size(); ++i)
        for (std::size_t v = 0; v < L.n; ++v) cmax = std::max(cmax, cost_g0(L, sp, i, v));
    for (std::size_t v = 0; v < L.n; ++v)
        for (std::size_t k = 0; k < L.s1.size(); ++k) cmax = std::max(cmax, cost_g1(L, sp, v, k));
    // rounding of the sums is charged to the bound, so huge multipliers cannot
    // buy a spurious value through cancellation
    const double round_unit =
        8.0 * static_cast<double>(L.n + L.s0.size() + L.s1.size()) * std::numeric_limits<double>::epsilon();
    auto evaluate = [&](double lambda0, double lambda1, std::vector<double> u0, std::vector<double> u1) {
        Bound d{-kInf, lambda0, lambda1};
        // the value is invariant under u0 + s, u1 - s; centre before summing
        double shift = 0.0;
        for (std::size_t i = 0; i < L.s0.size(); ++i) shift += u0[i] * mu0[L.s0[i]];
        for (double& v : u0) v -= shift;
        for (double& v : u1) v += shift;
        double bound = -lambda0 * B0 - lambda1 * B1;
        double scale = lambda0 * B0 + lambda1 * B1;
        for (std::size_t i = 0; i < L.s0.size(); ++i) {
            bound += u0[i] * mu0[L.s0[i]];
            scale += std::abs(u0[i]) * mu0[L.s0[i]];
        }
        for (std::size_t k = 0; k < L.s1.size(); ++k) {
            bound += u1[k] * mu1[L.s1[k]];
            scale += std::abs(u1[k]) * mu1[L.s1[k]];
        }
        std::vector<double> a(L.n);
        double amin = kInf;
        double amag = 0.0;
        for (std::size_t v = 0; v < L.n; ++v) {
            double m0 = kInf;
            for (std::size_t i = 0; i < L.s0.size(); ++i)
                m0 = std::min(m0, lambda0 * cost_g0(L, sp, i, v) - u0[i]);
            double m1 = kInf;
            for (std::size_t k = 0; k < L.s1.size(); ++k)
                m1 = std::min(m1, lambda1 * cost_g1(L, sp, v, k) - u1[k]);
            a[v] = m0 + m1;
            amin = std::min(amin, a[v]);
            amag = std::max(amag, std::abs(m0) + std::abs(m1) + lambda0 * cmax + lambda1 * cmax);
        }
        double z = 0.0;
        for (std::size_t v = 0; v < L.n; ++v) z += sp.measure()(static_cast<Eigen::Index>(v)) * std::exp(-(a[v] - amin));
        d.value = bound + amin - std::log(z) - round_unit * (scale + amag + 1.0);
        if (!std::isfinite(d.value)) d.value = -kInf;
        return d;
    };
    // candidates: the raw multipliers, and the c-transforms of the linking ones
    auto dual_bound = [&](const Eigen::VectorXd& y) {
        const double lambda0 = std::max(0.0, -y(rows.extra));
        const double lambda1 = std::max(0.0, -y(rows.extra + 1));
        std::vector<double> u0(L.s0.size()), u1(L.s1.size(), 0.0);
        for (std::size_t i = 0; i < L.s0.size(); ++i) u0[i] = y(rows.r0 + static_cast<Eigen::Index>(i));
        for (std::size_t k = 0; k < L.s1.size(); ++k)
            if (const Eigen::Index r = rows.c1_row(k); r >= 0) u1[k] = y(r);
        const Bound raw = evaluate(lambda0, lambda1, u0, u1);
        for (std::size_t i = 0; i < L.s0.size(); ++i) {
            double m = kInf;
            for (std::size_t v = 0; v < L.n; ++v)
                m = std::min(m, lambda0 * cost_g0(L, sp, i, v) - y(rows.c0 + static_cast<Eigen::Index>(v)));
            u0[i] = m;
        }
        for (std::size_t k = 0; k < L.s1.size(); ++k) {
            double m = kInf;
            for (std::size_t v = 0; v < L.n; ++v)
                m = std::min(m, lambda1 * cost_g1(L, sp, v, k) - y(rows.r1 + static_cast<Eigen::Index>(v)));
            u1[k] = m;
        }
        const Bound ct = evaluate(lambda0, lambda1, u0, u1);
        return ct.value > raw.value ? ct : raw;
    };

    Bound best_bound;
    std::optional<Eigen::VectorXd> best_x;
    double best_entropy = kInf;
    constexpr double kPrimalAccept = 1e-11;
    auto observe = [&](const IpmResult& it) {
        const Bound d = dual_bound(it.y);
        if (d.value > best_bound.value) best_bound = d;
        if (it.primal_residual <= kPrimalAccept) {
            const double e = entropy(middle_marginal(space, L, it.x));
            if (e < best_entropy) {
                best_entropy = e;
                best_x = it.x;
            }
        }
        return best_entropy - best_bound.value <= 0.01 * tol;
    };

    IpmOptions opt;
    opt.mu_tol = std::min(1e-12, tol * 1e-3 / static_cast<double>(total));
    const IpmResult r = solve_separable(p, opt, observe);

    ProbMeasure nu = middle_marginal(space, L, best_x ? *best_x : r.x);
    EntropyCertificate c;
    c.lambda0 = best_bound.lambda0;
    c.lambda1 = best_bound.lambda1;
    const double bound = best_bound.value;
    c.entropy = entropy(nu);
    c.dual_bound = bound;
    c.gap = c.entropy - c.dual_bound;
    c.iterations = r.iterations;
    c.method = r.method;
    c.w2_from_start = w2(mu0, nu).value;
    c.w2_to_end = w2(nu, mu1).value;
    c.violation = std::max(c.w2_from_start - spec.budget_from_start(),
                           c.w2_to_end - spec.budget_to_end());
    if (!(c.gap <= tol))
        throw SolverError("intermediate entropy minimisation did not certify the tolerance", c.gap);
    return IntermediateResult{std::move(nu), c, spec};
}

}  // namespace

IntermediateResult intermediate_entropy_min(const ProbMeasure& mu0, const ProbMeasure& mu1,
                                            double t, double epsilon, double tol) {
    return solve_intermediate(mu0, mu1, t, epsilon, tol, -1.0);
}

GeodesicTrace build_good_geodesic(const ProbMeasure& mu0, const ProbMeasure& mu1,
                                  std::size_t depth, const GeodesicOptions& options) {
    if (mu0.space_ptr() != mu1.space_ptr()) throw InvalidArgument("endpoints live on different spaces");
    if (depth > 12) throw InvalidArgument("geodesic depth above 12 is not supported");
    if (options.epsilon && *options.epsilon < 0.0) throw InvalidArgument("epsilon must be >= 0");

    GeodesicTrace tr;
    tr.W = w2(mu0, mu1).value;

    struct Fixed {
        ProbMeasure mu;
        std::optional<EntropyCertificate> cert;
        double left = 0.0;
        double right = 0.0;
    };
    std::map<double, Fixed> fixed;
    fixed.emplace(0.0, Fixed{mu0, std::nullopt, 0.0, 0.0});
    fixed.emplace(1.0, Fixed{mu1, std::nullopt, 1.0, 1.0});

    auto lambda_w = [](const ProbMeasure& a, const ProbMeasure& b) { return w2(a, b).value; };
    auto solve_between = [&](double t, double s, double r) {
        const Fixed& a = fixed.at(s);
        const Fixed& b = fixed.at(r);
        const double lambda = (t - s) / (r - s);
        try {
            const double eps_min = minimal_epsilon(a.mu, b.mu, lambda);
            const double eps = options.epsilon ? *options.epsilon : eps_min + kAutoMargin * lambda_w(a.mu, b.mu);
            return solve_intermediate(a.mu, b.mu, lambda, eps, options.tol, eps_min);
        } catch (const InfeasibleIntermediate& e) {
            std::ostringstream os;
            os << e.what() << " on the interval (s, r) = (" << s << ", " << r << ")";
            throw InfeasibleIntermediate(os.str(), e.minimal_epsilon());
        } catch (const SolverError& e) {
            std::ostringstream os;
            os << e.what() << " on the interval (s, r) = (" << s << ", " << r << "), gap " << e.achieved_gap();
            throw SolverError(os.str(), e.achieved_gap());
        }
    };
    auto record = [&](double t, double s, double r, IntermediateResult res) {
        tr.epsilon_used = std::max(tr.epsilon_used, res.spec.epsilon);
        fixed.emplace(t, Fixed{std::move(res.nu), res.certificate, s, r});
    };

    // the decay/support branch fixes mu_t0 first, then bisects [0,t0] and [t0,1]
    std::size_t levels = depth;
    if (mu0.decay() && mu1.support_tag()) {
        const double kminus = std::max(0.0, -options.K);
        const double c2 = mu0.decay()->c2;
        const double t0 = kminus > 0.0 ? std::min(c2 / (2.0 * kminus), 0.5) : 0.5;
        const double D = mu1.support_tag()->radius;
        tr.t0 = t0;
        tr.density_bound = std::max(mu1.sup_density(), mu0.decay()->c1) * std::exp((2.0 * kminus + c2) * D * D);
        record(t0, 0.0, 1.0, solve_between(t0, 0.0, 1.0));
        levels = depth > 0 ? depth - 1 : 0;
    }

    for (std::size_t level = 0; level < levels; ++level) {
        std::vector<double> ts;
        std::vector<std::pair<double, double>> nb;
        for (auto it = fixed.begin(); std::next(it) != fixed.end(); ++it) {
            const double s = it->first;
            const double r = std::next(it)->first;
            ts.push_back(0.5 * (s + r));
            nb.emplace_back(s, r);
        }
        std::vector<std::optional<IntermediateResult>> out(ts.size());
        detail::parallel_for(ts.size(), options.threads,
                             [&](std::size_t j) { out[j] = solve_between(ts[j], nb[j].first, nb[j].second); });
        for (std::size_t j = 0; j < ts.size(); ++j)
            record(ts[j], nb[j].first, nb[j].second, std::move(*out[j]));
    }

    std::map<double, std::size_t> index;
    for (const auto& [t, f] : fixed) index.emplace(t, index.size());
    for (const auto& [t, f] : fixed) {
        tr.times.push_back(t);
        tr.measures.push_back(f.mu);
        tr.entropies.push_back(entropy(f.mu));
        tr.w2_from_start.push_back(w2(mu0, f.mu).value);
        tr.sup_density.push_back(f.mu.sup_density());
        tr.certificates.push_back(f.cert);
        tr.parents.emplace_back(index.at(f.left), index.at(f.right));
    }
    return tr;
}

namespace {

CdTriple cd_triple(const GeodesicTrace& tr, std::size_t a, std::size_t i, std::size_t b, double K) {
    const double s = tr.times[a];
    const double t = tr.times[i];
    const double r = tr.times[b];
    const double len = r - s;
    const double w2sq = w2_squared(tr.measures[a], tr.measures[b]);
    const double rhs = (r - t) / len * tr.entropies[a] + (t - s) / len * tr.entropies[b] -
                       0.5 * K * (t - s) * (r - t) / (len * len) * w2sq;
    return {s, t, r, tr.entropies[i] - rhs};
}

}  // namespace

CdReport cd_convexity_check(const GeodesicTrace& trace, double K) {
    CdReport rep;
    rep.worst = -kInf;
    const std::size_t last = trace.times.size() - 1;
    for (std::size_t i = 1; i < last; ++i) {
        const auto [a, b] = trace.parents[i];
        rep.local.push_back(cd_triple(trace, a, i, b, K));
        rep.global.push_back(cd_triple(trace, 0, i, last, K));
        rep.worst = std::max({rep.worst, rep.local.back().residual, rep.global.back().residual});
    }
    if (rep.local.empty()) rep.worst = 0.0;
    return rep;
}

ProbMeasure DiscreteCurvePlan::marginal(std::size_t time_index, const SpacePtr& space) const {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(space->size()));
    for (std::size_t c = 0; c < curves.size(); ++c) w(curves[c][time_index]) += weights[c];
    return ProbMeasure::normalized(space, w);
}

DiscreteCurvePlan curve_plan(const GeodesicTrace& trace) {
    if (trace.measures.empty()) throw InvalidArgument("empty trace");
    const ProbMeasure& first = trace.measures.front();
    const FiniteMMSpace& sp = first.space();
    DiscreteCurvePlan plan;
    plan.times = trace.times;
    for (std::size_t x : first.support()) {
        plan.curves.push_back({x});
        plan.weights.push_back(first[x]);
    }
    constexpr double kDust = 1e-15;
    for (std::size_t k = 0; k + 1 < trace.measures.size(); ++k) {
        const Eigen::MatrixXd g = w2(trace.measures[k], trace.measures[k + 1]).plan.coupling;
        std::vector<std::vector<std::size_t>> at(sp.size());
        for (std::size_t c = 0; c < plan.curves.size(); ++c) at[plan.curves[c].back()].push_back(c);
        std::vector<std::vector<std::size_t>> curves;
        std::vector<double> weights;
        for (std::size_t x = 0; x < sp.size(); ++x) {
            if (at[x].empty()) continue;
            std::vector<std::pair<std::size_t, double>> targets;
            for (std::size_t y = 0; y < sp.size(); ++y)
                if (g(x, y) > 0.0) targets.emplace_back(y, g(x, y));
            if (targets.empty()) targets.emplace_back(x, 0.0);
            std::size_t ti = 0;
            // greedy split of the curves ending at x along the plan row
            for (std::size_t c : at[x]) {
                double left = plan.weights[c];
                while (left > kDust && ti < targets.size()) {
                    const double take = std::min(left, targets[ti].second);
                    if (take > 0.0) {
                        curves.push_back(plan.curves[c]);
                        curves.back().push_back(targets[ti].first);
                        weights.push_back(take);
                    }
                    left -= take;
                    targets[ti].second -= take;
                    if (targets[ti].second <= kDust) ++ti;
                }
                if (left > kDust) {
                    // rounding remainder rides with the last target
                    curves.push_back(plan.curves[c]);
                    curves.back().push_back(targets.back().first);
                    weights.push_back(left);
                }
            }
        }
        plan.curves = std::move(curves);
        plan.weights = std::move(weights);
    }
    double total = 0.0;
    for (double w : plan.weights) total += w;
    for (double& w : plan.weights) w /= total;

    for (std::size_t k = 0; k < plan.times.size(); ++k) {
        Eigen::VectorXd mass = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sp.size()));
        for (std::size_t c = 0; c < plan.curves.size(); ++c) mass(plan.curves[c][k]) += plan.weights[c];
        plan.compressibility = std::max(plan.compressibility, mass.cwiseQuotient(sp.measure()).maxCoeff());
    }
    for (std::size_t c = 0; c < plan.curves.size(); ++c)
        for (std::size_t k = 0; k + 1 < plan.times.size(); ++k)
            plan.action += plan.weights[c] * sq(sp.distance(plan.curves[c][k], plan.curves[c][k + 1])) /
                           (plan.times[k + 1] - plan.times[k]);
    return plan;
}

BandSplitReport length_band_split(const TransportPlan& plan, const GeodesicTrace& trace,
                                  const std::vector<LengthBand>& bands, std::size_t time_index) {
    if (trace.measures.empty()) throw InvalidArgument("empty trace");
    if (time_index >= trace.times.size()) throw InvalidArgument("time index out of range");
    const SpacePtr space = trace.measures.front().space_ptr();
    const FiniteMMSpace& sp = *space;
    const auto n = static_cast<Eigen::Index>(sp.size());
    if (plan.coupling.rows() != n || plan.coupling.cols() != n)
        throw StructuralError("plan and trace live on different spaces");

    double longest = 0.0;
    for (Eigen::Index x = 0; x < n; ++x)
        for (Eigen::Index y = 0; y < n; ++y)
            if (plan.coupling(x, y) > 0.0) longest = std::max(longest, sp.distance(x, y));
    bool partition = !bands.empty() && bands.front().lo <= 0.0 && bands.back().hi > longest;
    for (std::size_t b = 0; partition && b < bands.size(); ++b) {
        if (!(bands[b].hi > bands[b].lo)) partition = false;
        if (b + 1 < bands.size() && bands[b].hi != bands[b + 1].lo) partition = false;
    }
    if (!partition) throw InvalidArgument("bands must partition [0, max length]");
    auto band_of = [&](double len) {
        for (std::size_t b = 0; b < bands.size(); ++b)
            if (len >= bands[b].lo && len < bands[b].hi) return b;
        return bands.size() - 1;
    };

    const DiscreteCurvePlan curves = curve_plan(trace);
    Eigen::MatrixXd ends = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t c = 0; c < curves.curves.size(); ++c)
        ends(curves.curves[c].front(), curves.curves[c].back()) += curves.weights[c];
    const double lambda = trace.times[time_index];

    BandSplitReport rep;
    rep.time_index = time_index;
    std::vector<Eigen::VectorXd> marg(bands.size(), Eigen::VectorXd::Zero(n));
    for (const LengthBand& b : bands) {
        BandPiece piece;
        piece.band = b;
        piece.sub_plan.coupling = Eigen::MatrixXd::Zero(n, n);
        rep.pieces.push_back(piece);
    }
    for (Eigen::Index x = 0; x < n; ++x)
        for (Eigen::Index y = 0; y < n; ++y) {
            const double p = plan.coupling(x, y);
            if (p <= 0.0) continue;
            const double len = sp.distance(x, y);
            const std::size_t b = band_of(len);
            rep.pieces[b].sub_plan.coupling(x, y) = p;
            rep.pieces[b].sub_plan.cost += p * len * len;
            rep.pieces[b].mass += p;
            if (ends(x, y) > 0.0) {
                for (std::size_t c = 0; c < curves.curves.size(); ++c) {
                    const auto& cv = curves.curves[c];
                    if (cv.front() == static_cast<std::size_t>(x) && cv.back() == static_cast<std::size_t>(y))
                        marg[b](cv[time_index]) += p * curves.weights[c] / ends(x, y);
                }
            } else {
                // no trace curve joins x to y: nearest lambda-intermediate point
                Eigen::Index best = 0;
                double bestv = kInf;
                for (Eigen::Index z = 0; z < n; ++z) {
                    const double v = sq(sp.distance(x, z) - lambda * len) + sq(sp.distance(z, y) - (1.0 - lambda) * len);
                    if (v < bestv) {
                        bestv = v;
                        best = z;
                    }
                }
                marg[b](best) += p;
            }
        }
    for (std::size_t a = 0; a < bands.size(); ++a)
        for (std::size_t b = a + 1; b < bands.size(); ++b)
            rep.max_overlap = std::max(rep.max_overlap, marg[a].cwiseMin(marg[b]).sum());
    return rep;
}

CombineResult combine_restricted(const DiscreteCurvePlan& plan, const std::vector<double>& f,
                                 const ProbMeasure& nu_inner, std::size_t time_index,
                                 const ProbMeasure& mu0, const ProbMeasure& mu1) {
    if (f.size() != plan.curves.size()) throw StructuralError("one weight per curve is required");
    if (time_index >= plan.times.size()) throw InvalidArgument("time index out of range");
    double c = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) {
        if (!(f[k] >= 0.0 && f[k] <= 1.0)) throw InvalidArgument("restriction weights must lie in [0,1]");
        c += f[k] * plan.weights[k];
    }
    if (!(c > 0.0 && c <= 1.0 + 1e-12)) throw InvalidArgument("restricted mass c must lie in (0,1]");
    Eigen::VectorXd w = c * nu_inner.weights();
    for (std::size_t k = 0; k < f.size(); ++k) w(plan.curves[k][time_index]) += (1.0 - f[k]) * plan.weights[k];
    CombineResult res{ProbMeasure::normalized(nu_inner.space_ptr(), w), c, 0.0};
    const double W = w2(mu0, mu1).value;
    const double lambda = plan.times[time_index];
    res.epsilon_prime = std::max({0.0, w2(mu0, res.measure).value - lambda * W,
                                  w2(res.measure, mu1).value - (1.0 - lambda) * W});
    return res;
}

BrenierProbe metric_brenier_probe(const GeodesicTrace& trace, const KantorovichPair& pair) {
    const DiscreteCurvePlan plan = curve_plan(trace);
    const FiniteMMSpace& sp = trace.measures.front().space();
    BrenierProbe probe;
    for (std::size_t k = 1; k < trace.times.size(); ++k) {
        if (trace.times[k] > 0.5) break;
        double acc = 0.0;
        for (std::size_t c = 0; c < plan.curves.size(); ++c) {
            const auto& cv = plan.curves[c];
            const double step = sp.distance(cv.front(), cv[k]);
            // curves that have not left their start carry no quotient
            if (step <= 0.0) continue;
            const double q = (pair.phi(cv.front()) - pair.phi(cv[k])) / step;
            acc += plan.weights[c] * sq(q - sp.distance(cv.front(), cv.back()));
        }
        probe.times.push_back(trace.times[k]);
        probe.gaps.push_back(std::sqrt(acc));
    }
    return probe;
}

}  // namespace rcdlab
