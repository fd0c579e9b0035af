#include "rcdlab/heat.hpp"

#include "rcdlab/convex.hpp"
#include "rcdlab/error.hpp"
#include "rcdlab/ot.hpp"
#include "parallel.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>

namespace rcdlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool use_dense(std::size_t n, const SemigroupSpec& spec) {
    if (spec.method == SemigroupMethod::expm) return true;
    if (spec.method == SemigroupMethod::implicit_euler) return false;
    return n <= kDenseLimit;
}

ProbMeasure measure_from_density(const SpacePtr& space, const Eigen::VectorXd& f, double& clipped) {
    Eigen::VectorXd w = f.cwiseProduct(space->measure());
    for (double& v : w)
        if (v < 0.0) {
            clipped = std::max(clipped, -v);
            v = 0.0;
        }
    return ProbMeasure::normalized(space, w);
}

Eigen::VectorXd density_of(const ProbMeasure& mu) { return mu.weights().cwiseQuotient(mu.space().measure()); }

}  // namespace

HeatSemigroup::HeatSemigroup(const DirichletForm& form) : m_(form.measure()) {
    if ((m_.array() <= 0.0).any()) throw InvalidArgument("heat semigroup needs a positive measure");
    sqrt_m_ = m_.cwiseSqrt();
    const Eigen::VectorXd inv = sqrt_m_.cwiseInverse();
    Eigen::MatrixXd S = inv.asDiagonal() * Eigen::MatrixXd(form.generator()) * inv.asDiagonal();
    S = 0.5 * (S + S.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(-S);
    if (es.info() != Eigen::Success) throw SolverError("heat semigroup: eigensolver failed", kInf);
    lambda_ = es.eigenvalues().cwiseMax(0.0);
    V_ = es.eigenvectors();
}

Eigen::VectorXd HeatSemigroup::apply(const Eigen::VectorXd& f, double t) const {
    if (t < 0.0) throw InvalidArgument("heat flow needs t >= 0");
    if (f.size() != m_.size()) throw StructuralError("heat flow: function size differs from the form");
    if (t == 0.0) return f;
    const Eigen::VectorXd c = V_.transpose() * sqrt_m_.cwiseProduct(f);
    const Eigen::VectorXd e = (-t * lambda_).array().exp();
    return (V_ * e.cwiseProduct(c)).cwiseQuotient(sqrt_m_);
}

Eigen::MatrixXd HeatSemigroup::kernel(double t) const {
    const Eigen::VectorXd inv = sqrt_m_.cwiseInverse();
    const Eigen::VectorXd e = (-t * lambda_).array().exp();
    const Eigen::MatrixXd B = inv.asDiagonal() * V_;
    return B * e.asDiagonal() * B.transpose();
}

Eigen::VectorXd semigroup_apply(const DirichletForm& form, const Eigen::VectorXd& f, double t,
                                const SemigroupSpec& spec) {
    if (t < 0.0) throw InvalidArgument("heat flow needs t >= 0");
    if (f.size() != static_cast<Eigen::Index>(form.size()))
        throw StructuralError("heat flow: function size differs from the form");
    if (t == 0.0) return f;
    if (use_dense(form.size(), spec)) return HeatSemigroup(form).apply(f, t);
    if (!(spec.dt > 0.0)) throw InvalidArgument("implicit Euler needs dt > 0");
    const auto steps = static_cast<long>(std::ceil(t / spec.dt - 1e-9));
    const double dt = t / static_cast<double>(steps);
    const Eigen::VectorXd& m = form.measure();
    // (M - dt W) u_{k+1} = M u_k
    Eigen::SparseMatrix<double> A = -dt * form.generator();
    for (Eigen::Index i = 0; i < m.size(); ++i) A.coeffRef(i, i) += m(i);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
    if (ldlt.info() != Eigen::Success) throw SolverError("implicit Euler: factorisation failed", kInf);
    Eigen::VectorXd u = f;
    for (long k = 0; k < steps; ++k) {
        const Eigen::VectorXd rhs = m.cwiseProduct(u);
        u = ldlt.solve(rhs);
    }
    return u;
}

std::string method_tag(const DirichletForm& form, const SemigroupSpec& spec) {
    if (use_dense(form.size(), spec)) return "expm/spectral";
    char buf[64];
    std::snprintf(buf, sizeof buf, "implicit_euler(dt=%.17g)", spec.dt);
    return buf;
}

HeatKernel heat_kernel(const DirichletForm& form, double t) {
    if (!(t > 0.0)) throw InvalidArgument("heat kernel needs t > 0");
    if (form.size() > kDenseLimit) throw InvalidArgument("heat kernel is dense; n is above the limit");
    HeatKernel k;
    k.t = t;
    k.method = "expm/spectral";
    k.density = HeatSemigroup(form).kernel(t);
    for (double& v : k.density.reshaped())
        if (v < 0.0) {
            k.clipped = std::max(k.clipped, -v);
            v = 0.0;
        }
    return k;
}

KernelLawReport kernel_laws(const DirichletForm& form, double t, double s) {
    const HeatKernel a = heat_kernel(form, t);
    const HeatKernel b = heat_kernel(form, s);
    const HeatKernel ab = heat_kernel(form, t + s);
    const Eigen::VectorXd& m = form.measure();
    KernelLawReport r;
    r.symmetry = (a.density - a.density.transpose()).cwiseAbs().maxCoeff();
    r.chapman_kolmogorov = (ab.density - a.density * m.asDiagonal() * b.density).cwiseAbs().maxCoeff();
    r.row_mass = (a.density * m - Eigen::VectorXd::Ones(m.size())).cwiseAbs().maxCoeff();
    r.clipped = std::max({a.clipped, b.clipped, ab.clipped});
    return r;
}

std::string to_string(FlowFlavor f) { return f == FlowFlavor::jko ? "jko" : "semigroup"; }

FlowTrace semigroup_flow(const DirichletForm& form, const ProbMeasure& mu0, const std::vector<double>& times,
                         const SemigroupSpec& spec) {
    if (mu0.size() != form.size()) throw StructuralError("heat flow: measure and form differ in size");
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (times[k] < 0.0) throw InvalidArgument("heat flow needs t >= 0");
        if (k && !(times[k] > times[k - 1])) throw InvalidArgument("flow times must increase");
    }
    FlowTrace tr;
    tr.flavor = FlowFlavor::semigroup;
    tr.method = method_tag(form, spec);
    const Eigen::VectorXd f0 = mu0.weights().cwiseQuotient(form.measure());
    std::optional<HeatSemigroup> sg;
    if (use_dense(form.size(), spec)) sg.emplace(form);
    for (double t : times) {
        const Eigen::VectorXd f = sg ? sg->apply(f0, t) : semigroup_apply(form, f0, t, spec);
        double clipped = 0.0;
        Eigen::VectorXd w = f.cwiseProduct(form.measure());
        for (double& v : w)
            if (v < 0.0) {
                clipped = std::max(clipped, -v);
                v = 0.0;
            }
        tr.clipped = std::max(tr.clipped, clipped);
        tr.times.push_back(t);
        tr.measures.push_back(ProbMeasure::normalized(mu0.space_ptr(), w));
        tr.entropy.push_back(entropy(tr.measures.back()));
        tr.fisher.push_back(fisher_information(tr.measures.back(), form));
    }
    for (std::size_t k = 0; k + 1 < tr.measures.size(); ++k)
        tr.w2_speed.push_back(w2(tr.measures[k], tr.measures[k + 1]).value / (tr.times[k + 1] - tr.times[k]));
    return tr;
}

JkoStep jko_step(const ProbMeasure& mu, double tau, double inner_tol) {
    if (!(tau > 0.0)) throw InvalidArgument("jko needs tau > 0");
    const FiniteMMSpace& sp = mu.space();
    const Eigen::VectorXd& m = sp.measure();
    const auto n = static_cast<Eigen::Index>(sp.size());
    const std::vector<std::size_t> rows = mu.support();
    const auto R = static_cast<Eigen::Index>(rows.size());

    // variables: gamma (r, y) at r * n + y, then nu
    SeparableProgram p;
    const Eigen::Index N = R * n + n;
    p.cost = Eigen::VectorXd::Zero(N);
    for (Eigen::Index r = 0; r < R; ++r)
        for (Eigen::Index y = 0; y < n; ++y) {
            const double d = sp.distance(rows[static_cast<std::size_t>(r)], static_cast<std::size_t>(y));
            p.cost(r * n + y) = d * d / (2.0 * tau);
        }
    p.kappa = 1.0;
    p.entropy_ref = m;
    for (Eigen::Index y = 0; y < n; ++y) p.entropy_vars.push_back(R * n + y);
    std::vector<Eigen::Triplet<double>> trip;
    p.b = Eigen::VectorXd::Zero(R + n);
    for (Eigen::Index r = 0; r < R; ++r) {
        p.b(r) = mu[rows[static_cast<std::size_t>(r)]];
        for (Eigen::Index y = 0; y < n; ++y) {
            trip.emplace_back(r, r * n + y, 1.0);
            trip.emplace_back(R + y, r * n + y, 1.0);
        }
    }
    for (Eigen::Index y = 0; y < n; ++y) trip.emplace_back(R + y, R * n + y, -1.0);
    p.A.resize(R + n, N);
    p.A.setFromTriplets(trip.begin(), trip.end());
    p.x0 = Eigen::VectorXd::Constant(N, 1.0 / static_cast<double>(n));
    for (Eigen::Index r = 0; r < R; ++r) p.x0.segment(r * n, n).setConstant(p.b(r) / static_cast<double>(n));
    p.x0.tail(n) = p.x0.head(R * n).reshaped(n, R).rowwise().sum();

    // Lagrangian dual at column multipliers v:
    //   sum_x mu_x min_y (c_xy - v_y) - sum_y m_y exp(-1 - v_y)
    auto dual = [&](const Eigen::VectorXd& v) {
        double acc = 0.0;
        for (Eigen::Index r = 0; r < R; ++r) {
            double u = kInf;
            for (Eigen::Index y = 0; y < n; ++y) u = std::min(u, p.cost(r * n + y) - v(y));
            acc += p.b(r) * u;
        }
        for (Eigen::Index y = 0; y < n; ++y) acc -= m(y) * std::exp(-1.0 - v(y));
        return acc;
    };
    auto primal = [&](const Eigen::VectorXd& x, Eigen::VectorXd& nu, double& cost) {
        Eigen::VectorXd g = x.head(R * n).cwiseMax(0.0);
        // exact row sums, then nu as the column sums
        for (Eigen::Index r = 0; r < R; ++r) {
            const double s = g.segment(r * n, n).sum();
            if (s > 0.0) g.segment(r * n, n) *= p.b(r) / s;
        }
        nu = g.reshaped(n, R).rowwise().sum();
        cost = 0.0;
        double obj = p.cost.head(R * n).dot(g);
        for (Eigen::Index r = 0; r < R; ++r)
            for (Eigen::Index y = 0; y < n; ++y) {
                const double d = sp.distance(rows[static_cast<std::size_t>(r)], static_cast<std::size_t>(y));
                cost += g(r * n + y) * d * d;
            }
        for (Eigen::Index y = 0; y < n; ++y)
            if (nu(y) > 0.0) obj += nu(y) * std::log(nu(y) / m(y));
        return obj;
    };

    double best_bound = -kInf;
    double best_obj = kInf;
    Eigen::VectorXd best_nu;
    double best_cost = 0.0;
    int iters = 0;
    auto observe = [&](const IpmResult& it) {
        iters = it.iterations;
        if (it.primal_residual > 1e-11) return false;
        Eigen::VectorXd nu;
        double cost = 0.0;
        const double obj = primal(it.x, nu, cost);
        if (obj < best_obj) {
            best_obj = obj;
            best_nu = nu;
            best_cost = cost;
        }
        Eigen::VectorXd v = it.y.tail(n);
        best_bound = std::max(best_bound, dual(v));
        Eigen::VectorXd vp(n);
        bool ok = true;
        for (Eigen::Index y = 0; y < n; ++y) {
            if (!(nu(y) > 0.0)) ok = false;
            else vp(y) = -1.0 - std::log(nu(y) / m(y));
        }
        if (ok) best_bound = std::max(best_bound, dual(vp));
        return best_obj - best_bound <= 0.01 * inner_tol;
    };
    IpmOptions opt;
    const IpmResult res = solve_separable(p, opt, observe);
    if (best_nu.size() == 0) {
        double cost = 0.0;
        best_obj = primal(res.x, best_nu, cost);
        best_cost = cost;
    }
    const double gap = best_obj - best_bound;
    if (!(gap <= inner_tol)) throw SolverError("jko step: duality gap above tolerance", gap);
    JkoStep s{ProbMeasure::normalized(mu.space_ptr(), best_nu), best_obj, best_bound, gap, best_cost,
              std::max(iters, res.iterations)};
    return s;
}

FlowTrace jko_flow(const DirichletForm& form, const ProbMeasure& mu0, double tau, std::size_t nsteps,
                   double inner_tol) {
    if (mu0.size() != form.size()) throw StructuralError("jko: measure and form differ in size");
    FlowTrace tr;
    tr.flavor = FlowFlavor::jko;
    tr.method = "jko/primal-dual-ipm";
    tr.times.push_back(0.0);
    tr.measures.push_back(mu0);
    tr.entropy.push_back(entropy(mu0));
    tr.fisher.push_back(fisher_information(mu0, form));
    for (std::size_t k = 0; k < nsteps; ++k) {
        const JkoStep s = jko_step(tr.measures.back(), tau, inner_tol);
        tr.times.push_back(static_cast<double>(k + 1) * tau);
        tr.measures.push_back(s.nu);
        tr.entropy.push_back(entropy(s.nu));
        tr.fisher.push_back(fisher_information(s.nu, form));
        tr.w2_speed.push_back(std::sqrt(s.transport_cost) / tau);
        tr.gaps.push_back(s.gap);
    }
    return tr;
}

IdentificationReport identification_check(const DirichletForm& form, const Eigen::VectorXd& f0,
                                          const std::vector<double>& t_grid,
                                          const std::vector<double>& tau_grid, double t_dissipation,
                                          double dt, double inner_tol, unsigned threads) {
    const SpacePtr& space = form.space_ptr();
    if (f0.size() != static_cast<Eigen::Index>(form.size())) throw StructuralError("identification: size mismatch");
    if (t_grid.empty() || tau_grid.empty()) throw InvalidArgument("identification needs times and steps");
    const ProbMeasure mu0 = ProbMeasure::normalized(space, f0.cwiseProduct(form.measure()));
    const HeatSemigroup sg(form);
    const Eigen::VectorXd g0 = density_of(mu0);
    const double t_max = *std::max_element(t_grid.begin(), t_grid.end());

    IdentificationReport rep;
    rep.taus = tau_grid;
    rep.l1_gaps.assign(tau_grid.size(), 0.0);
    detail::parallel_for(tau_grid.size(), threads, [&](std::size_t i) {
        const double tau = tau_grid[i];
        const auto steps = static_cast<std::size_t>(std::llround(t_max / tau));
        std::vector<std::size_t> at;
        for (double t : t_grid) {
            const double k = std::round(t / tau);
            if (std::abs(k * tau - t) > 1e-9 * std::max(1.0, t))
                throw InvalidArgument("every grid time must be a multiple of tau");
            at.push_back(static_cast<std::size_t>(k));
        }
        const FlowTrace jko = jko_flow(form, mu0, tau, steps, inner_tol);
        double worst = 0.0;
        for (std::size_t j = 0; j < t_grid.size(); ++j) {
            const Eigen::VectorXd ref = sg.apply(g0, t_grid[j]).cwiseProduct(form.measure());
            worst = std::max(worst, (jko.measures[at[j]].weights() - ref).cwiseAbs().sum());
        }
        rep.l1_gaps[i] = worst;
    });
    if (tau_grid.size() >= 2 &&
        std::all_of(rep.l1_gaps.begin(), rep.l1_gaps.end(), [](double g) { return g > 0.0; })) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const double k = static_cast<double>(tau_grid.size());
        for (std::size_t i = 0; i < tau_grid.size(); ++i) {
            const double x = std::log(tau_grid[i]);
            const double y = std::log(rep.l1_gaps[i]);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        rep.fitted_order = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    }

    rep.t_dissipation = t_dissipation;
    auto ent_at = [&](double t) {
        double clipped = 0.0;
        return entropy(measure_from_density(space, sg.apply(g0, t), clipped));
    };
    rep.entropy_rate = (ent_at(t_dissipation + dt) - ent_at(t_dissipation - dt)) / (2.0 * dt);
    rep.fisher = fisher_information(Eigen::VectorXd(sg.apply(g0, t_dissipation)), form);
    const double scale = std::max(rep.fisher, 1e-300);
    rep.dissipation_residual = rep.fisher == 0.0 && rep.entropy_rate == 0.0
                                   ? 0.0
                                   : std::abs(rep.entropy_rate + rep.fisher) / scale;
    return rep;
}

BakryEmeryReport bakry_emery_check(const DirichletForm& form, const Eigen::VectorXd& f,
                                   const std::vector<double>& t_grid, double K, double tol) {
    const HeatSemigroup sg(form);
    const Eigen::VectorXd gf = form.gamma(f);
    struct Sample {
        Eigen::VectorXd lhs, rhs;
        double t;
    };
    std::vector<Sample> samples;
    for (double t : t_grid) samples.push_back({form.gamma(sg.apply(f, t)), sg.apply(gf, t), t});
    auto worst_at = [&](double k, std::vector<double>* per) {
        double w = -kInf;
        for (const Sample& s : samples) {
            const double r = (s.lhs - std::exp(-2.0 * k * s.t) * s.rhs).maxCoeff();
            if (per) per->push_back(r);
            w = std::max(w, r);
        }
        return w;
    };
    BakryEmeryReport rep;
    rep.times = t_grid;
    rep.K = K;
    rep.worst = worst_at(K, &rep.residuals);
    // the residual grows with K
    double lo = -1e3, hi = 1e3;
    if (worst_at(hi, nullptr) <= tol) {
        rep.best_K = hi;
    } else if (worst_at(lo, nullptr) > tol) {
        rep.best_K = lo;
    } else {
        for (int it = 0; it < 200 && hi - lo > 1e-12 * std::max(1.0, std::abs(lo)); ++it) {
            const double mid = 0.5 * (lo + hi);
            (worst_at(mid, nullptr) <= tol ? lo : hi) = mid;
        }
        rep.best_K = lo;
    }
    return rep;
}

double integral_exp(double K, double t) {
    if (std::abs(K * t) < 1e-8) return t * (1.0 + 0.5 * K * t);
    return std::expm1(K * t) / K;
}

LipschitzRegularizationReport lipschitz_regularization_check(const DirichletForm& form,
                                                             const Eigen::VectorXd& f, double t, double K) {
    if (!(t > 0.0)) throw InvalidArgument("lipschitz regularisation needs t > 0");
    const HeatSemigroup sg(form);
    const Eigen::VectorXd ht = sg.apply(f, t);
    const double I = integral_exp(2.0 * K, t);
    LipschitzRegularizationReport r;
    r.t = t;
    r.K = K;
    r.worst = (2.0 * I * form.gamma(ht) - sg.apply(f.cwiseProduct(f), t)).maxCoeff();
    r.slope_bound = std::sqrt(2.0 * I) * slopes(form.space(), ht).two_sided().maxCoeff();
    r.sup_norm = f.cwiseAbs().maxCoeff();
    return r;
}

namespace {

struct LsiEval {
    double ent = 0.0;
    double fisher = 0.0;
};

// f density against mhat = m / m(X), f = e^u / sum e^u mhat
LsiEval lsi_eval(const DirichletForm& form, const Eigen::VectorXd& mhat, const Eigen::VectorXd& f) {
    LsiEval e;
    for (Eigen::Index i = 0; i < f.size(); ++i)
        if (f(i) > 0.0) e.ent += f(i) * std::log(f(i)) * mhat(i);
    e.fisher = fisher_information(f, form) / form.measure().sum();
    return e;
}

Eigen::VectorXd density_from_log(const Eigen::VectorXd& u, const Eigen::VectorXd& mhat) {
    const Eigen::VectorXd e = (u.array() - u.maxCoeff()).exp();
    return e / e.dot(mhat);
}

// gradient of the quotient Fisher / (2 Ent) in u
Eigen::VectorXd lsi_gradient(const DirichletForm& form, const Eigen::VectorXd& mhat, const Eigen::VectorXd& f,
                             const LsiEval& e) {
    const double mx = form.measure().sum();
    Eigen::VectorXd dF = Eigen::VectorXd::Zero(f.size());
    for (const Conductance& c : form.conductances()) {
        const double a = f(c.a), b = f(c.b), d = a - b;
        // 1/2 w d^2 (1/a + 1/b)
        dF(c.a) += 0.5 * c.w * (2.0 * d * (1.0 / a + 1.0 / b) - d * d / (a * a)) / mx;
        dF(c.b) += 0.5 * c.w * (-2.0 * d * (1.0 / a + 1.0 / b) - d * d / (b * b)) / mx;
    }
    Eigen::VectorXd dE(f.size());
    for (Eigen::Index i = 0; i < f.size(); ++i) dE(i) = std::log(f(i)) + 1.0;
    // df_j / du_i = f_i delta_ij - f_j f_i mhat_i
    auto pull = [&](const Eigen::VectorXd& g) {
        const double s = g.dot(f);
        return Eigen::VectorXd(f.cwiseProduct(g) - s * f.cwiseProduct(mhat));
    };
    const Eigen::VectorXd gF = pull(dF);
    const Eigen::VectorXd gE = pull(dE.cwiseProduct(mhat));
    return (gF * e.ent - e.fisher * gE) / (2.0 * e.ent * e.ent);
}

}  // namespace

LogSobolevReport log_sobolev_check(const DirichletForm& form, const Eigen::VectorXd& f, double K,
                                   std::uint64_t seed, std::size_t family) {
    if (!(K > 0.0)) throw InvalidArgument("log-Sobolev check needs K > 0");
    const auto n = static_cast<Eigen::Index>(form.size());
    if (f.size() != n) throw StructuralError("log-Sobolev: density size differs from the form");
    const Eigen::VectorXd mhat = form.measure() / form.measure().sum();
    LogSobolevReport rep;
    const Eigen::VectorXd fn = f / f.dot(mhat);
    const LsiEval at = lsi_eval(form, mhat, fn);
    rep.entropy = at.ent;
    rep.fisher = at.fisher;
    rep.residual = at.ent - at.fisher / (2.0 * K);

    auto quotient = [&](const Eigen::VectorXd& u, LsiEval* out = nullptr) {
        const LsiEval e = lsi_eval(form, mhat, density_from_log(u, mhat));
        if (out) *out = e;
        return e.ent > 1e-12 ? e.fisher / (2.0 * e.ent) : kInf;
    };

    std::vector<Eigen::VectorXd> starts;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    const FiniteMMSpace& sp = form.space();
    const std::size_t x0 = sp.base_point().value_or(0);
    Eigen::Index far = 0;
    sp.metric().row(static_cast<Eigen::Index>(x0)).maxCoeff(&far);
    for (double s : {-8.0, -4.0, -2.0, -1.0, -0.5, 0.5, 1.0, 2.0, 4.0, 8.0}) {
        // signed coordinate along a diameter through x0
        Eigen::VectorXd u(n);
        for (Eigen::Index i = 0; i < n; ++i) u(i) = s * (sp.distance(i, x0) - sp.distance(i, static_cast<std::size_t>(far)));
        starts.push_back(u);
    }
    for (std::size_t k = 0; k < family; ++k) {
        Eigen::VectorXd u(n);
        const double amp = 0.25 * static_cast<double>(1 + k % 8);
        for (auto& v : u) v = amp * g(rng);
        starts.push_back(u);
    }
    rep.family_size = starts.size();
    if (fn.maxCoeff() > fn.minCoeff()) starts.push_back(fn.cwiseMax(1e-300).array().log().matrix());

    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t k = 0; k < starts.size(); ++k) ranked.emplace_back(quotient(starts[k]), k);
    std::sort(ranked.begin(), ranked.end());
    double best = ranked.front().first;
    // local descent from the four best members
    for (std::size_t r = 0; r < std::min<std::size_t>(4, ranked.size()); ++r) {
        Eigen::VectorXd u = starts[ranked[r].second];
        LsiEval e;
        double q = quotient(u, &e);
        double step = 1.0;
        for (int it = 0; it < 400 && std::isfinite(q); ++it) {
            const Eigen::VectorXd grad = lsi_gradient(form, mhat, density_from_log(u, mhat), e);
            const double gn = grad.norm();
            if (gn < 1e-12) break;
            bool moved = false;
            for (int ls = 0; ls < 40; ++ls) {
                const Eigen::VectorXd cand = u - (step / gn) * grad;
                LsiEval ce;
                const double cq = quotient(cand, &ce);
                if (cq < q) {
                    u = cand;
                    q = cq;
                    e = ce;
                    step *= 1.5;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if (!moved) break;
        }
        best = std::min(best, q);
    }
    rep.best_K = best;
    return rep;
}

ContractionReport contraction_check(const DirichletForm& form, const ProbMeasure& mu, const ProbMeasure& nu,
                                    double K, const std::vector<double>& t_grid) {
    const FlowTrace a = semigroup_flow(form, mu, t_grid);
    const FlowTrace b = semigroup_flow(form, nu, t_grid);
    ContractionReport r;
    r.times = t_grid;
    r.w2_initial = w2(mu, nu).value;
    r.worst = -kInf;
    for (std::size_t k = 0; k < t_grid.size(); ++k) {
        const double v = w2(a.measures[k], b.measures[k]).value - std::exp(-K * t_grid[k]) * r.w2_initial;
        r.residuals.push_back(v);
        r.worst = std::max(r.worst, v);
    }
    if (t_grid.empty()) r.worst = 0.0;
    return r;
}

ProbMeasure product_measure(const SpacePtr& product, const ProbMeasure& a, const ProbMeasure& b) {
    if (product->size() != a.size() * b.size()) throw StructuralError("product measure: size mismatch");
    Eigen::VectorXd w(static_cast<Eigen::Index>(product->size()));
    const std::size_t nb = b.size();
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < nb; ++j) w(static_cast<Eigen::Index>(i * nb + j)) = a[i] * b[j];
    return ProbMeasure::normalized(product, w);
}

TensorizationReport tensorization_check(const DirichletForm& a, const DirichletForm& b,
                                        const ProbMeasure& mu_a, const ProbMeasure& mu_b,
                                        const ProbMeasure& nu_a, const ProbMeasure& nu_b, double t) {
    if (mu_a.size() != a.size() || nu_a.size() != a.size() || mu_b.size() != b.size() || nu_b.size() != b.size())
        throw StructuralError("tensorization: measures and forms differ in size");
    const DirichletForm ab = product_form(a, b);
    const HeatKernel kp = heat_kernel(ab, t);
    const HeatKernel ka = heat_kernel(a, t);
    const HeatKernel kb = heat_kernel(b, t);
    const auto na = static_cast<Eigen::Index>(a.size());
    const auto nb = static_cast<Eigen::Index>(b.size());
    TensorizationReport r;
    for (Eigen::Index i = 0; i < na; ++i)
        for (Eigen::Index j = 0; j < nb; ++j)
            for (Eigen::Index k = 0; k < na; ++k)
                for (Eigen::Index l = 0; l < nb; ++l)
                    r.kernel_residual = std::max(
                        r.kernel_residual, std::abs(kp.density(i * nb + j, k * nb + l) - ka.density(i, k) * kb.density(j, l)));
    const SpacePtr& ps = ab.space_ptr();
    r.w2_squared_product = w2_squared(product_measure(ps, mu_a, mu_b), product_measure(ps, nu_a, nu_b));
    r.w2_squared_sum = w2_squared(mu_a, nu_a) + w2_squared(mu_b, nu_b);
    r.additivity_residual = std::abs(r.w2_squared_product - r.w2_squared_sum);
    return r;
}

EntropyRegularizationReport entropy_regularization_check(const DirichletForm& form, const ProbMeasure& mu,
                                                         double t, double K) {
    const FlowTrace tr = semigroup_flow(form, mu, {t});
    const double I = integral_exp(K, t);
    const SpacePtr& sp = mu.space_ptr();
    const ProbMeasure ref = ProbMeasure::normalized(sp, sp->measure());
    EntropyRegularizationReport r;
    // Ent against m / m(X)
    const double shift = std::log(sp->measure().sum());
    r.lhs = I * (tr.entropy[0] + shift) + 0.5 * I * I * tr.fisher[0];
    r.rhs = 0.5 * w2_squared(mu, ref);
    r.residual = r.lhs - r.rhs;
    return r;
}

}  // namespace rcdlab
