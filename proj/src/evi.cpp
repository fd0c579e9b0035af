#include "rcdlab/evi.hpp"

#include "rcdlab/convex.hpp"
#include "rcdlab/error.hpp"
#include "rcdlab/ot.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace rcdlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::optional<std::size_t> find_time(const std::vector<double>& times, double t) {
    const double tol = 1e-12 * std::max(1.0, std::abs(t));
    for (std::size_t i = 0; i < times.size(); ++i)
        if (std::abs(times[i] - t) <= tol) return i;
    return std::nullopt;
}

double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxx > 0.0 ? sxy / sxx : 0.0;
}

Eigen::VectorXd log_density(const ProbMeasure& mu) {
    const Eigen::VectorXd f = mu.weights().cwiseQuotient(mu.space().measure());
    if ((f.array() <= 0.0).any()) throw InvalidArgument("log density needs a positive measure");
    return f.array().log();
}

struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
    std::size_t find(std::size_t a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    }
    void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

}  // namespace

std::string to_string(CheckStatus s) {
    switch (s) {
        case CheckStatus::pass: return "pass";
        case CheckStatus::fail: return "fail";
        case CheckStatus::inconclusive: return "inconclusive";
        case CheckStatus::report: return "report";
    }
    return "report";
}

InequalityReport make_report(std::string name, std::vector<double> grid, std::vector<double> residuals) {
    InequalityReport r;
    r.name = std::move(name);
    r.grid = std::move(grid);
    r.residuals = std::move(residuals);
    r.worst = r.residuals.empty() ? 0.0 : *std::max_element(r.residuals.begin(), r.residuals.end());
    return r;
}

InequalityReport& assert_tolerance(InequalityReport& r, double tol) {
    r.tolerance = tol;
    if (r.status != CheckStatus::inconclusive) r.status = r.worst <= tol ? CheckStatus::pass : CheckStatus::fail;
    return r;
}

InequalityReport family_report(std::string name, const std::vector<double>& params,
                               const std::vector<InequalityReport>& members) {
    if (params.size() != members.size()) throw StructuralError("family report: one parameter per member");
    std::vector<double> worst;
    for (const auto& m : members) worst.push_back(m.worst);
    InequalityReport r = make_report(std::move(name), params, worst);
    if (members.size() >= 3) r.trend = least_squares_slope(params, worst);
    for (const auto& m : members)
        if (m.status == CheckStatus::inconclusive) r.status = CheckStatus::inconclusive;
    return r;
}

std::vector<double> centred_times(const std::vector<double>& grid, double dt) {
    if (!(dt > 0.0)) throw InvalidArgument("centred differences need dt > 0");
    std::vector<double> t;
    for (double g : grid) {
        if (g - dt < 0.0) throw InvalidArgument("grid time closer than dt to 0");
        t.push_back(g - dt);
        t.push_back(g);
        t.push_back(g + dt);
    }
    std::sort(t.begin(), t.end());
    std::vector<double> out;
    for (double v : t)
        if (out.empty() || std::abs(v - out.back()) > 1e-12 * std::max(1.0, v)) out.push_back(v);
    return out;
}

InequalityReport evi_check(const FlowTrace& flow, const ProbMeasure& sigma, double K, double dt) {
    if (flow.times.size() < 3) throw InvalidArgument("evi check needs at least 3 time samples");
    const double ent_sigma = entropy(sigma);
    std::vector<double> grid, res;
    std::vector<double> half_w2(flow.times.size(), std::nan(""));
    auto hw = [&](std::size_t i) {
        if (std::isnan(half_w2[i])) half_w2[i] = 0.5 * w2_squared(flow.measures[i], sigma);
        return half_w2[i];
    };
    for (std::size_t i = 0; i < flow.times.size(); ++i) {
        const double t = flow.times[i];
        const auto lo = find_time(flow.times, t - dt);
        const auto hi = find_time(flow.times, t + dt);
        if (!lo || !hi || t - dt < 0.0) continue;
        const double d = (hw(*hi) - hw(*lo)) / (2.0 * dt);
        grid.push_back(t);
        res.push_back(d + K * hw(i) + flow.entropy[i] - ent_sigma);
    }
    if (grid.empty()) throw InvalidArgument("evi check: no time has both neighbours at distance dt");
    InequalityReport r = make_report("evi", grid, res);
    r.notes.push_back("centred dt " + std::to_string(dt));
    return r;
}

InequalityReport ede_check(const FlowTrace& flow) {
    const std::size_t n = flow.times.size();
    if (n < 2 || flow.entropy.size() != n || flow.fisher.size() != n || flow.w2_speed.size() + 1 != n)
        throw InvalidArgument("ede check needs entropy, fisher and speed series");
    std::vector<double> grid, res;
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const double h = flow.times[k + 1] - flow.times[k];
        const double v = flow.w2_speed[k];
        acc += h * (0.5 * v * v + 0.25 * (flow.fisher[k] + flow.fisher[k + 1]));
        grid.push_back(flow.times[k + 1]);
        res.push_back(std::abs(flow.entropy[0] - flow.entropy[k + 1] - acc));
    }
    return make_report("ede", grid, res);
}

Dw2Report dw2_derivative_check(const DirichletForm& form, const FlowTrace& flow, const ProbMeasure& sigma,
                               double dt, WeightTransfer rule) {
    if (flow.times.size() < 3) throw InvalidArgument("dW2 check needs at least 3 time samples");
    Dw2Report rep;
    std::vector<double> grid, ident, env;
    const Eigen::VectorXd& m = form.measure();
    for (std::size_t i = 0; i < flow.times.size(); ++i) {
        const double t = flow.times[i];
        const auto lo = find_time(flow.times, t - dt);
        const auto hi = find_time(flow.times, t + dt);
        if (!lo || !hi || t - dt < 0.0) continue;
        const ProbMeasure& mu = flow.measures[i];
        const double d =
            0.5 * (w2_squared(flow.measures[*hi], sigma) - w2_squared(flow.measures[*lo], sigma)) / (2.0 * dt);
        const KantorovichPair pair = kantorovich_potentials(mu, sigma, std::size_t{0});
        const Eigen::VectorXd lf = log_density(mu);
        const double e = -weighted_form(form, mu, rule).energy(pair.phi, lf);
        grid.push_back(t);
        ident.push_back(std::abs(d - e));
        rep.derivative.push_back(d);
        rep.energy.push_back(e);
        rep.nonunique.push_back(pair.nonunique);

        // |int phi (f_+ - f_-) / 2dt dm|^2 <= 8 / (2dt) int C(sqrt f_r) int Gamma(phi) dmu_r dr
        const Eigen::VectorXd& wp = flow.measures[*hi].weights();
        const Eigen::VectorXd& wm = flow.measures[*lo].weights();
        const double q = pair.phi.dot(wp - wm) / (2.0 * dt);
        const Eigen::VectorXd gphi = form.gamma(pair.phi);
        auto integrand = [&](const ProbMeasure& r) {
            const Eigen::VectorXd sf = r.weights().cwiseQuotient(m).cwiseSqrt();
            return form.cheeger(sf) * gphi.dot(r.weights());
        };
        // Simpson on [t - dt, t + dt]
        const double integral =
            (2.0 * dt / 6.0) * (integrand(flow.measures[*lo]) + 4.0 * integrand(mu) + integrand(flow.measures[*hi]));
        env.push_back(q * q - 8.0 / (2.0 * dt) * integral);
    }
    if (grid.empty()) throw InvalidArgument("dW2 check: no time has both neighbours at distance dt");
    rep.identity = make_report("dw2_derivative", grid, ident);
    rep.envelope = make_report("dw2_envelope", grid, env);
    rep.identity.notes.push_back(rule == WeightTransfer::min ? "transfer min" : "transfer log_mean");
    if (std::any_of(rep.nonunique.begin(), rep.nonunique.end(), [](bool b) { return b; }))
        rep.identity.notes.push_back("nonunique potential at some times");
    return rep;
}

InequalityReport entropy_inequality_check(const DirichletForm& form, const ProbMeasure& eta,
                                          const ProbMeasure& sigma, double K, WeightTransfer rule,
                                          EntropyInequalityDetail* detail, std::size_t face_cap) {
    const FiniteMMSpace& sp = eta.space();
    const std::size_t n = sp.size();
    const Eigen::VectorXd lf = log_density(eta);
    const W2Result ot = w2(eta, sigma);
    const KantorovichPair pair = kantorovich_potentials(eta, sigma, std::size_t{0});
    const DirichletForm wf = weighted_form(form, eta, rule);
    const double lhs = entropy(sigma) - entropy(eta) - 0.5 * K * ot.value * ot.value;
    const double e0 = wf.energy(pair.phi, lf);

    EntropyInequalityDetail det;
    det.lhs = lhs;
    det.rhs_first = -e0;
    det.rhs = -e0;
    InequalityReport r = make_report("entropy_inequality", {0.0}, {-e0 - lhs});

    if (-e0 - lhs > 0.0) {
        // rigid blocks: rows x and columns n + y joined along supp gamma
        const std::vector<std::size_t> cols = sigma.support();
        UnionFind uf(2 * n);
        for (std::size_t x = 0; x < n; ++x)
            for (std::size_t y : cols)
                if (ot.plan.coupling(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) > 0.0)
                    uf.unite(x, n + y);
        std::vector<std::size_t> label(2 * n, SIZE_MAX);
        std::size_t k = 0;
        std::vector<std::size_t> root_id(2 * n, SIZE_MAX);
        auto comp = [&](std::size_t v) {
            const std::size_t r0 = uf.find(v);
            if (root_id[r0] == SIZE_MAX) root_id[r0] = k++;
            return root_id[r0];
        };
        for (std::size_t x = 0; x < n; ++x) label[x] = comp(x);
        for (std::size_t y : cols) label[n + y] = comp(n + y);
        det.components = k;
        if (k > face_cap) {
            r.status = CheckStatus::inconclusive;
            r.notes.push_back("dual face search cap reached");
        } else if (k > 1) {
            // shifts s_i on block i: phi + s, psi - s; s_i - s_j <= b_ij from the slack pairs
            Eigen::MatrixXd b = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k), kInf);
            for (std::size_t x = 0; x < n; ++x)
                for (std::size_t y : cols) {
                    const std::size_t i = label[x], j = label[n + y];
                    if (i == j) continue;
                    const double d = sp.distance(x, y);
                    const double slack = std::max(0.0, 0.5 * d * d - pair.phi(static_cast<Eigen::Index>(x)) -
                                                           pair.psi(static_cast<Eigen::Index>(y)));
                    b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                        std::min(b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), slack);
                }
            Eigen::VectorXd A = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
            for (std::size_t i = 0; i < k; ++i) {
                Eigen::VectorXd ind = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
                for (std::size_t x = 0; x < n; ++x)
                    if (label[x] == i) ind(static_cast<Eigen::Index>(x)) = 1.0;
                A(static_cast<Eigen::Index>(i)) = wf.energy(ind, lf);
            }
            // s_0 = 0; t_i = s_i + B_i >= 0 with B_i = b_0i
            const auto K1 = static_cast<Eigen::Index>(k - 1);
            std::vector<std::array<Eigen::Index, 2>> rows;
            std::vector<double> rhs;
            auto B = [&](Eigen::Index i) { return i == 0 ? 0.0 : b(0, i); };
            for (Eigen::Index i = 1; i < static_cast<Eigen::Index>(k); ++i)
                for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(k); ++j) {
                    if (i == j || !std::isfinite(b(i, j))) continue;
                    rows.push_back({i, j});
                    rhs.push_back(b(i, j) + B(i) - B(j));
                }
            bool bounded = true;
            for (Eigen::Index i = 1; i < static_cast<Eigen::Index>(k); ++i)
                if (!std::isfinite(b(0, i)) || !std::isfinite(b(i, 0))) bounded = false;
            if (!bounded) {
                r.status = CheckStatus::inconclusive;
                r.notes.push_back("dual face unbounded");
            } else {
                const auto R = static_cast<Eigen::Index>(rows.size());
                SeparableProgram p;
                p.cost = Eigen::VectorXd::Zero(K1 + R);
                for (Eigen::Index i = 1; i < static_cast<Eigen::Index>(k); ++i) p.cost(i - 1) = -A(i);
                std::vector<Eigen::Triplet<double>> trip;
                p.b.resize(R);
                for (Eigen::Index r0 = 0; r0 < R; ++r0) {
                    const auto [i, j] = rows[static_cast<std::size_t>(r0)];
                    trip.emplace_back(r0, i - 1, 1.0);
                    if (j > 0) trip.emplace_back(r0, j - 1, -1.0);
                    trip.emplace_back(r0, K1 + r0, 1.0);
                    p.b(r0) = rhs[static_cast<std::size_t>(r0)];
                }
                p.A.resize(R, K1 + R);
                p.A.setFromTriplets(trip.begin(), trip.end());
                IpmOptions opt;
                opt.primal_tol = 1e-11;
                opt.dual_tol = 1e-10;
                opt.mu_tol = 1e-13;
                const IpmResult res = solve_separable(p, opt);
                if (!res.converged) {
                    r.status = CheckStatus::inconclusive;
                    r.notes.push_back("dual face program did not converge");
                } else {
                    double gain = 0.0;
                    for (Eigen::Index i = 1; i < static_cast<Eigen::Index>(k); ++i)
                        gain += A(i) * (std::max(0.0, res.x(i - 1)) - B(i));
                    const double best = -(e0 + std::max(0.0, gain));
                    det.rhs = best;
                    r = make_report("entropy_inequality", {0.0}, {best - lhs});
                    r.notes.push_back("dual face searched over " + std::to_string(k) + " blocks");
                }
            }
        }
    }
    if (detail) *detail = det;
    return r;
}

VerifyReport rcd_verify(const DirichletForm& form, const VerifySuite& suite) {
    const SpacePtr& space = form.space_ptr();
    const auto n = static_cast<Eigen::Index>(form.size());
    std::mt19937_64 rng(suite.seed);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(0.2, 1.8);

    std::vector<double> quad;
    for (std::size_t k = 0; k < suite.samples; ++k) {
        Eigen::VectorXd f(n), h(n);
        for (Eigen::Index i = 0; i < n; ++i) f(i) = g(rng);
        for (Eigen::Index i = 0; i < n; ++i) h(i) = g(rng);
        const double lhs = form.cheeger(f + h) + form.cheeger(f - h);
        const double rhs = 2.0 * form.cheeger(f) + 2.0 * form.cheeger(h);
        quad.push_back(std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
    }
    std::vector<double> grid(quad.size());
    std::iota(grid.begin(), grid.end(), 0.0);
    InequalityReport quadratic = make_report("cheeger_parallelogram", grid, quad);
    assert_tolerance(quadratic, suite.tol_quadratic);

    std::vector<ProbMeasure> inits, targets;
    for (std::size_t k = 0; k < suite.samples; ++k) {
        Eigen::VectorXd a(n), b(n);
        for (Eigen::Index i = 0; i < n; ++i) a(i) = u(rng);
        for (Eigen::Index i = 0; i < n; ++i) b(i) = u(rng);
        inits.push_back(ProbMeasure::normalized(space, a.cwiseProduct(space->measure())));
        targets.push_back(ProbMeasure::normalized(space, b.cwiseProduct(space->measure())));
    }

    const HeatSemigroup sg(form);
    std::vector<double> add;
    for (std::size_t k = 0; k + 1 < suite.samples; ++k) {
        const double lam = 0.5 * u(rng);
        const Eigen::VectorXd f1 = inits[k].weights().cwiseQuotient(form.measure());
        const Eigen::VectorXd f2 = inits[k + 1].weights().cwiseQuotient(form.measure());
        for (double t : suite.t_grid) {
            const Eigen::VectorXd mix = sg.apply(lam * f1 + (1 - lam) * f2, t);
            const Eigen::VectorXd sep = lam * sg.apply(f1, t) + (1 - lam) * sg.apply(f2, t);
            add.push_back((mix - sep).cwiseProduct(form.measure()).cwiseAbs().sum());
        }
    }
    std::vector<double> agrid(add.size());
    std::iota(agrid.begin(), agrid.end(), 0.0);
    InequalityReport additivity = make_report("heat_additivity", agrid, add);
    assert_tolerance(additivity, suite.tol_additivity);

    std::vector<InequalityReport> evis(suite.samples);
    const std::vector<double> times = centred_times(suite.t_grid, suite.dt);
    detail::parallel_for(suite.samples, suite.threads, [&](std::size_t k) {
        const FlowTrace tr = semigroup_flow(form, inits[k], times);
        evis[k] = evi_check(tr, targets[k], suite.K, suite.dt);
    });
    std::vector<double> eg, er;
    for (std::size_t k = 0; k < evis.size(); ++k) {
        eg.push_back(static_cast<double>(k));
        er.push_back(evis[k].worst);
    }
    InequalityReport evi = make_report("evi", eg, er);
    if (suite.assert_evi)
        assert_tolerance(evi, suite.tol_evi);
    else
        evi.tolerance = suite.tol_evi;

    VerifyReport rep;
    rep.checks = {quadratic, evi, additivity};
    std::sort(rep.checks.begin(), rep.checks.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
    for (const auto& c : rep.checks)
        if (c.status == CheckStatus::fail) rep.verdict = false;
    return rep;
}

}  // namespace rcdlab
