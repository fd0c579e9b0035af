#include "rcdlab/dirichlet.hpp"

#include "rcdlab/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace rcdlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<std::size_t> label_components(std::size_t n, const std::vector<Conductance>& c,
                                          std::size_t& count) {
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&parent](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const Conductance& e : c)
        if (e.w > 0.0) parent[find(e.a)] = find(e.b);
    std::vector<std::size_t> label(n, n);
    std::vector<std::size_t> out(n);
    count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = find(i);
        if (label[r] == n) label[r] = count++;
        out[i] = label[r];
    }
    return out;
}

const std::vector<Edge>& require_graph(const FiniteMMSpace& space) {
    if (!space.has_graph()) throw InvalidArgument("Dirichlet form needs a graph carrier");
    return *space.graph();
}

}  // namespace

DirichletForm::DirichletForm(SpacePtr space, std::vector<Conductance> conductances)
    : DirichletForm(space, std::move(conductances), space->measure()) {}

DirichletForm::DirichletForm(SpacePtr space, std::vector<Conductance> conductances,
                             Eigen::VectorXd measure)
    : space_(std::move(space)), conductances_(std::move(conductances)), measure_(std::move(measure)) {
    const std::size_t n = space_->size();
    if (measure_.size() != static_cast<Eigen::Index>(n))
        throw StructuralError("form measure size differs from the space");
    for (const Conductance& e : conductances_) {
        if (e.a >= n || e.b >= n) throw StructuralError("conductance references a missing vertex");
        if (e.w < 0.0 || !std::isfinite(e.w)) throw InvalidArgument("conductances must be >= 0");
    }
    component_ = label_components(n, conductances_, component_count_);
}

DirichletForm DirichletForm::calibrated(SpacePtr space) {
    const auto& edges = require_graph(*space);
    const Eigen::VectorXd& m = space->measure();
    std::vector<Conductance> c;
    c.reserve(edges.size());
    for (const Edge& e : edges) {
        if (e.a == e.b) continue;
        const double len = e.weight;
        c.push_back({e.a, e.b, 0.5 * (m(e.a) + m(e.b)) / (len * len)});
    }
    return DirichletForm(std::move(space), std::move(c));
}

DirichletForm DirichletForm::unit(SpacePtr space) {
    const auto& edges = require_graph(*space);
    std::vector<Conductance> c;
    for (const Edge& e : edges)
        if (e.a != e.b) c.push_back({e.a, e.b, 1.0});
    return DirichletForm(std::move(space), std::move(c));
}

double DirichletForm::energy(const Eigen::VectorXd& f, const Eigen::VectorXd& g) const {
    // each undirected conductance appears twice in the symmetric double sum
    double acc = 0.0;
    for (const Conductance& e : conductances_)
        acc += e.w * (f(e.b) - f(e.a)) * (g(e.b) - g(e.a));
    return acc;
}

Eigen::VectorXd DirichletForm::gamma(const Eigen::VectorXd& f, const Eigen::VectorXd& g) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(measure_.size());
    for (const Conductance& e : conductances_) {
        const double v = e.w * (f(e.b) - f(e.a)) * (g(e.b) - g(e.a));
        out(e.a) += v;
        out(e.b) += v;
    }
    for (Eigen::Index i = 0; i < out.size(); ++i)
        out(i) = measure_(i) > 0.0 ? out(i) / (2.0 * measure_(i)) : 0.0;
    return out;
}

Eigen::VectorXd DirichletForm::laplacian(const Eigen::VectorXd& f) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(measure_.size());
    for (const Conductance& e : conductances_) {
        const double v = e.w * (f(e.b) - f(e.a));
        out(e.a) += v;
        out(e.b) -= v;
    }
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        if (!(measure_(i) > 0.0)) throw InvalidArgument("laplacian needs a positive vertex measure");
        out(i) /= measure_(i);
    }
    return out;
}

Eigen::SparseMatrix<double> DirichletForm::generator() const {
    const auto n = static_cast<Eigen::Index>(size());
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(conductances_.size() * 4);
    for (const Conductance& e : conductances_) {
        const auto a = static_cast<Eigen::Index>(e.a);
        const auto b = static_cast<Eigen::Index>(e.b);
        t.emplace_back(a, b, e.w);
        t.emplace_back(b, a, e.w);
        t.emplace_back(a, a, -e.w);
        t.emplace_back(b, b, -e.w);
    }
    Eigen::SparseMatrix<double> W(n, n);
    W.setFromTriplets(t.begin(), t.end());
    return W;
}

double log_mean(double a, double b) {
    if (a <= 0.0 || b <= 0.0) return 0.0;
    const double r = b / a - 1.0;
    if (std::abs(r) < 1e-4) {
        // series of r / log1p(r)
        return a * (1.0 + r / 2.0 - r * r / 12.0 + r * r * r / 24.0);
    }
    return (b - a) / (std::log(b) - std::log(a));
}

DirichletForm product_form(const DirichletForm& a, const DirichletForm& b) {
    auto space = std::make_shared<const FiniteMMSpace>(product_space(a.space(), b.space()));
    const std::size_t na = a.size();
    const std::size_t nb = b.size();
    auto id = [nb](std::size_t i, std::size_t j) { return i * nb + j; };
    std::vector<Conductance> c;
    for (const Conductance& e : a.conductances())
        for (std::size_t j = 0; j < nb; ++j) c.push_back({id(e.a, j), id(e.b, j), e.w * b.measure()(j)});
    for (const Conductance& e : b.conductances())
        for (std::size_t i = 0; i < na; ++i) c.push_back({id(i, e.a), id(i, e.b), a.measure()(i) * e.w});
    Eigen::VectorXd m(static_cast<Eigen::Index>(na * nb));
    for (std::size_t i = 0; i < na; ++i)
        for (std::size_t j = 0; j < nb; ++j) m(id(i, j)) = a.measure()(i) * b.measure()(j);
    return DirichletForm(std::move(space), std::move(c), std::move(m));
}

double transfer_weight(WeightTransfer rule, double a, double b) {
    if (rule == WeightTransfer::log_mean) return log_mean(a, b);
    return std::max(0.0, std::min(a, b));
}

DirichletForm weighted_form(const DirichletForm& form, const ProbMeasure& rho, WeightTransfer rule) {
    if (rho.size() != form.size()) throw StructuralError("weighted form: size mismatch");
    const Eigen::VectorXd g = rho.weights().cwiseQuotient(form.measure());
    std::vector<Conductance> c = form.conductances();
    for (Conductance& e : c) e.w *= transfer_weight(rule, g(e.a), g(e.b));
    return DirichletForm(form.space_ptr(), std::move(c), rho.weights());
}

TransferResult transfer_identity_check(const DirichletForm& form, const Eigen::VectorXd& g,
                                       const Eigen::VectorXd& phi, WeightTransfer rule) {
    TransferResult r;
    double lhs = 0.0;
    for (const Conductance& e : form.conductances()) {
        const double dphi = phi(e.b) - phi(e.a);
        if (g(e.a) <= 0.0 || g(e.b) <= 0.0) {
            if (dphi != 0.0 && e.w > 0.0) r.in_domain = false;
            continue;
        }
        lhs += e.w * transfer_weight(rule, g(e.a), g(e.b)) * (std::log(g(e.b)) - std::log(g(e.a))) * dphi;
    }
    r.residual = std::abs(lhs - form.energy(g, phi));
    return r;
}

ChainRuleReport chain_rule_check(const DirichletForm& form, const Eigen::VectorXd& f,
                                 const ScalarMap& phi) {
    const Eigen::VectorXd pf = f.unaryExpr(phi.value);
    const Eigen::VectorXd dpf = f.unaryExpr(phi.derivative);
    const Eigen::VectorXd gf = form.gamma(f);
    const Eigen::VectorXd gpf = form.gamma(pf);
    ChainRuleReport r;
    for (Eigen::Index i = 0; i < f.size(); ++i)
        r.pointwise_gap = std::max(
            r.pointwise_gap, std::abs(std::sqrt(gpf(i)) - std::abs(dpf(i)) * std::sqrt(gf(i))));
    const Eigen::VectorXd& m = form.measure();
    const double lhs = form.gamma(f, pf).dot(m);
    const double rhs = dpf.cwiseProduct(gf).dot(m);
    r.integrated_gap = std::abs(lhs - rhs);
    return r;
}

Eigen::VectorXd path_step_lengths(const FiniteMMSpace& space, const VertexPath& path) {
    Eigen::VectorXd l = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(space.size()));
    const auto& v = path.vertices;
    for (std::size_t k = 0; k + 1 < v.size(); ++k) {
        if (v[k] >= space.size() || v[k + 1] >= space.size())
            throw InvalidArgument("path vertex out of range");
        const double len = space.distance(v[k], v[k + 1]);
        l(static_cast<Eigen::Index>(v[k])) += 0.5 * len;
        l(static_cast<Eigen::Index>(v[k + 1])) += 0.5 * len;
    }
    return l;
}

namespace {

// max sum(lambda) - 1/2 lambda' G lambda over lambda >= 0, exact by active-set
// enumeration for small families and by coordinate descent otherwise.
Eigen::VectorXd solve_mod2_dual(const Eigen::MatrixXd& G) {
    const auto k = G.rows();
    Eigen::VectorXd best = Eigen::VectorXd::Zero(k);
    if (k == 0) return best;
    auto kkt = [&G](const Eigen::VectorXd& lam) {
        const Eigen::VectorXd grad = Eigen::VectorXd::Ones(G.rows()) - G * lam;
        double worst = 0.0;
        for (Eigen::Index i = 0; i < lam.size(); ++i) {
            if (lam(i) < -1e-14) return kInf;
            worst = std::max(worst, lam(i) > 0.0 ? std::abs(grad(i)) : std::max(grad(i), 0.0));
        }
        return worst;
    };
    if (k <= 16) {
        double best_res = kInf;
        for (unsigned mask = 1; mask < (1u << k); ++mask) {
            std::vector<Eigen::Index> idx;
            for (Eigen::Index i = 0; i < k; ++i)
                if (mask & (1u << i)) idx.push_back(i);
            const auto s = static_cast<Eigen::Index>(idx.size());
            Eigen::MatrixXd Gs(s, s);
            for (Eigen::Index a = 0; a < s; ++a)
                for (Eigen::Index b = 0; b < s; ++b) Gs(a, b) = G(idx[a], idx[b]);
            Eigen::LDLT<Eigen::MatrixXd> ldlt(Gs);
            if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) continue;
            const Eigen::VectorXd ls = ldlt.solve(Eigen::VectorXd::Ones(s));
            if ((Gs * ls - Eigen::VectorXd::Ones(s)).norm() > 1e-9 * (1.0 + ls.norm())) continue;
            Eigen::VectorXd lam = Eigen::VectorXd::Zero(k);
            for (Eigen::Index a = 0; a < s; ++a) lam(idx[a]) = ls(a);
            const double res = kkt(lam);
            if (res < best_res) {
                best_res = res;
                best = lam;
            }
            if (res < 1e-12) break;
        }
        return best;
    }
    for (int sweep = 0; sweep < 100000; ++sweep) {
        double moved = 0.0;
        for (Eigen::Index i = 0; i < k; ++i) {
            if (!(G(i, i) > 0.0)) continue;
            const double grad = 1.0 - G.row(i).dot(best);
            const double next = std::max(0.0, best(i) + grad / G(i, i));
            moved = std::max(moved, std::abs(next - best(i)));
            best(i) = next;
        }
        if (moved < 1e-15) break;
    }
    return best;
}

}  // namespace

Mod2Result mod2(const std::vector<Eigen::VectorXd>& step_lengths, const Eigen::VectorXd& m) {
    Mod2Result r;
    r.g = Eigen::VectorXd::Zero(m.size());
    const auto k = static_cast<Eigen::Index>(step_lengths.size());
    for (const auto& l : step_lengths) {
        if (l.size() != m.size()) throw StructuralError("mod2: path length vector size mismatch");
        if (l.maxCoeff() <= 0.0) {
            r.infinite = true;
            r.value = kInf;
            return r;
        }
    }
    Eigen::MatrixXd G(k, k);
    for (Eigen::Index a = 0; a < k; ++a)
        for (Eigen::Index b = 0; b < k; ++b)
            G(a, b) = (step_lengths[a].cwiseProduct(step_lengths[b]).array() / (2.0 * m.array())).sum();
    r.multipliers = solve_mod2_dual(G);
    for (Eigen::Index a = 0; a < k; ++a)
        r.g += r.multipliers(a) * step_lengths[a].cwiseQuotient(2.0 * m);
    r.value = r.g.cwiseProduct(r.g).dot(m);
    for (Eigen::Index a = 0; a < k; ++a) {
        const double slack = step_lengths[a].dot(r.g) - 1.0;
        r.kkt_residual = std::max(r.kkt_residual, std::max(-slack, 0.0));
        r.kkt_residual = std::max(r.kkt_residual, std::abs(r.multipliers(a) * slack));
    }
    return r;
}

Mod2Result mod2(const FiniteMMSpace& space, const std::vector<VertexPath>& paths) {
    std::vector<Eigen::VectorXd> l;
    l.reserve(paths.size());
    for (const VertexPath& p : paths) l.push_back(path_step_lengths(space, p));
    return mod2(l, space.measure());
}

double locality_check(const DirichletForm& form, const Eigen::VectorXd& f1,
                      const Eigen::VectorXd& f2) {
    const auto n = static_cast<Eigen::Index>(form.size());
    std::vector<bool> agree(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) agree[i] = f1(i) == f2(i);
    std::vector<bool> qualified = agree;
    for (const Conductance& e : form.conductances()) {
        if (e.w == 0.0) continue;
        if (!agree[e.b]) qualified[e.a] = false;
        if (!agree[e.a]) qualified[e.b] = false;
    }
    const Eigen::VectorXd g1 = form.gamma(f1);
    const Eigen::VectorXd g2 = form.gamma(f2);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        if (qualified[i]) worst = std::max(worst, std::abs(g1(i) - g2(i)));
    return worst;
}

EssentialBoundReport essential_bound_check(const DirichletForm& form, const Eigen::VectorXd& g,
                                           const Eigen::VectorXd& g_prime,
                                           const Eigen::VectorXd& phi) {
    if ((g.array() <= 0.0).any() || (g_prime.array() <= 0.0).any())
        throw InvalidArgument("essential bound needs positive densities");
    const Eigen::VectorXd& m = form.measure();
    auto weighted_energy = [&](const Eigen::VectorXd& dens) {
        double acc = 0.0;
        for (const Conductance& e : form.conductances())
            acc += e.w * transfer_weight(WeightTransfer::min, dens(e.a), dens(e.b)) *
                   (std::log(dens(e.b)) - std::log(dens(e.a))) *
                   (phi(e.b) - phi(e.a));
        return acc;
    };
    EssentialBoundReport r;
    r.lhs = std::abs(weighted_energy(g) - weighted_energy(g_prime));
    const Eigen::VectorXd gs = form.gamma(g.cwiseSqrt());
    const Eigen::VectorXd gsp = form.gamma(g_prime.cwiseSqrt());
    const Eigen::VectorXd gphi = form.gamma(phi);
    double a1 = 0, b1 = 0, a2 = 0, b2 = 0;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
        if (g(i) == g_prime(i)) continue;
        a1 += gs(i) * m(i);
        b1 += gphi(i) * g(i) * m(i);
        a2 += gsp(i) * m(i);
        b2 += gphi(i) * g_prime(i) * m(i);
    }
    r.rhs = std::sqrt(a1 * b1) + std::sqrt(a2 * b2);
    r.residual = r.lhs - r.rhs;
    return r;
}

namespace {

struct GammaTerm {
    Eigen::Index x;
    Eigen::Index y;
    double c;  // w / (2 m_x)
};

// max g(s) - g(t) s.t. Gamma(g,g)(x) <= 1, g(t) = 0, on one component.
// Log-barrier path following with damped Newton steps.
std::pair<double, Eigen::VectorXd> intrinsic_pair(const std::vector<std::vector<GammaTerm>>& terms,
                                                  const std::vector<Eigen::Index>& comp,
                                                  Eigen::Index s, Eigen::Index t, std::size_t n,
                                                  double rel_tol) {
    const auto k = static_cast<Eigen::Index>(comp.size());
    std::vector<Eigen::Index> local(n, -1);
    for (Eigen::Index i = 0; i < k; ++i) local[static_cast<std::size_t>(comp[i])] = i;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(k);
    const Eigen::Index ls = local[s];
    const Eigen::Index lt = local[t];

    auto constraint = [&](const Eigen::VectorXd& v, Eigen::Index xi) {
        double acc = 0.0;
        for (const GammaTerm& term : terms[static_cast<std::size_t>(comp[xi])]) {
            const double d = v(local[term.y]) - v(local[term.x]);
            acc += term.c * d * d;
        }
        return acc;
    };
    auto feasible = [&](const Eigen::VectorXd& v) {
        for (Eigen::Index xi = 0; xi < k; ++xi)
            if (!(constraint(v, xi) < 1.0)) return false;
        return true;
    };
    auto objective = [&](const Eigen::VectorXd& v, double tau) {
        double acc = -tau * v(ls);
        for (Eigen::Index xi = 0; xi < k; ++xi) acc -= std::log(1.0 - constraint(v, xi));
        return acc;
    };

    double tau = 1.0;
    const double constraints = static_cast<double>(k);
    for (int stage = 0; stage < 80; ++stage) {
        for (int it = 0; it < 200; ++it) {
            Eigen::VectorXd grad = Eigen::VectorXd::Zero(k);
            Eigen::MatrixXd H = Eigen::MatrixXd::Zero(k, k);
            grad(ls) -= tau;
            for (Eigen::Index xi = 0; xi < k; ++xi) {
                const double slack = 1.0 - constraint(g, xi);
                Eigen::VectorXd dq = Eigen::VectorXd::Zero(k);
                for (const GammaTerm& term : terms[static_cast<std::size_t>(comp[xi])]) {
                    const Eigen::Index a = local[term.x];
                    const Eigen::Index b = local[term.y];
                    const double d = g(b) - g(a);
                    dq(b) += 2.0 * term.c * d;
                    dq(a) -= 2.0 * term.c * d;
                    const double h = 2.0 * term.c / slack;
                    H(a, a) += h;
                    H(b, b) += h;
                    H(a, b) -= h;
                    H(b, a) -= h;
                }
                grad += dq / slack;
                H += dq * dq.transpose() / (slack * slack);
            }
            // gauge: g(t) stays 0
            grad(lt) = 0.0;
            H.row(lt).setZero();
            H.col(lt).setZero();
            H(lt, lt) = 1.0;
            Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
            const Eigen::VectorXd step = -ldlt.solve(grad);
            const double decrement = -grad.dot(step);
            if (decrement < 1e-20) break;
            double alpha = 1.0;
            const double f0 = objective(g, tau);
            while (alpha > 1e-16) {
                const Eigen::VectorXd trial = g + alpha * step;
                if (feasible(trial) && objective(trial, tau) <= f0 - 0.25 * alpha * decrement) {
                    g = trial;
                    break;
                }
                alpha *= 0.5;
            }
            if (alpha <= 1e-16 || decrement < 1e-18) break;
        }
        if (constraints / tau <= rel_tol * (1.0 + std::abs(g(ls)))) break;
        tau *= 10.0;
    }
    double worst = 0.0;
    for (Eigen::Index xi = 0; xi < k; ++xi) worst = std::max(worst, constraint(g, xi));
    if (worst > 1.0) g /= std::sqrt(worst);
    Eigen::VectorXd full = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < k; ++i) full(comp[i]) = g(i);
    return {g(ls), full};
}

}  // namespace

IntrinsicMetric intrinsic_metric(const DirichletForm& form, double rel_tol) {
    const std::size_t n = form.size();
    std::vector<std::vector<GammaTerm>> terms(n);
    const Eigen::VectorXd& m = form.measure();
    for (const Conductance& e : form.conductances()) {
        if (e.w == 0.0) continue;
        const auto a = static_cast<Eigen::Index>(e.a);
        const auto b = static_cast<Eigen::Index>(e.b);
        terms[e.a].push_back({a, b, e.w / (2.0 * m(a))});
        terms[e.b].push_back({b, a, e.w / (2.0 * m(b))});
    }
    std::vector<std::vector<Eigen::Index>> comps(form.component_count());
    for (std::size_t i = 0; i < n; ++i)
        comps[form.component()[i]].push_back(static_cast<Eigen::Index>(i));

    IntrinsicMetric out;
    out.distance = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            if (form.component()[i] != form.component()[j]) {
                out.distance(i, j) = out.distance(j, i) = kInf;
                out.maximizers.emplace_back();
                continue;
            }
            auto [value, g] = intrinsic_pair(terms, comps[form.component()[i]],
                                             static_cast<Eigen::Index>(i),
                                             static_cast<Eigen::Index>(j), n, rel_tol);
            out.distance(i, j) = out.distance(j, i) = value;
            out.max_constraint = std::max(out.max_constraint, form.gamma(g).maxCoeff());
            out.maximizers.push_back(std::move(g));
        }
    return out;
}

}  // namespace rcdlab
