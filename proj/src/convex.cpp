#include "rcdlab/convex.hpp"

#include "rcdlab/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace rcdlab {

double separable_objective(const SeparableProgram& p, const Eigen::VectorXd& x) {
    double f = p.cost.dot(x);
    for (std::size_t k = 0; k < p.entropy_vars.size(); ++k) {
        const double v = x(p.entropy_vars[k]);
        if (v > 0.0) f += p.kappa * v * std::log(v / p.entropy_ref(static_cast<Eigen::Index>(k)));
    }
    return f;
}

namespace {

double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
    double a = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (dv(i) < 0.0) a = std::min(a, -v(i) / dv(i));
    return a;
}

// Newton system  A dx = -rp,  H dx - A'dy - dz = -rd,  Z dx + X dz = comp.
//
// Variables with a large D = 1/(H + z/x) stay in a dense augmented block, the
// rest are eliminated into a Schur complement.  Eliminating the large ones
// (plain normal equations) costs all digits once D spans 1e30 near
// degenerate optima.
class KktSolver {
public:
    KktSolver(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& H, const Eigen::VectorXd& diag,
              double big)
        : A_(A), H_(H) {
        const Eigen::Index N = A.cols();
        const Eigen::Index M = A.rows();
        const Eigen::VectorXd D = diag.cwiseInverse();
        std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::sort(order.begin(), order.end(),
                  [&](Eigen::Index a, Eigen::Index b) { return D(a) > D(b); });
        const std::size_t cap = static_cast<std::size_t>(M) + 64;
        for (std::size_t k = 0; k < order.size() && k < cap && D(order[k]) > big; ++k)
            block_.push_back(order[k]);
        nb_ = static_cast<Eigen::Index>(block_.size());

        Ds_ = D;
        for (Eigen::Index i : block_) Ds_(i) = 0.0;
        Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nb_ + M, nb_ + M);
        K.bottomRightCorner(M, M) = Eigen::MatrixXd(A * Ds_.asDiagonal() * A.transpose());
        for (Eigen::Index k = 0; k < nb_; ++k) {
            const Eigen::Index j = block_[static_cast<std::size_t>(k)];
            K(k, k) = -diag(j);
            for (Eigen::SparseMatrix<double>::InnerIterator e(A, j); e; ++e) {
                K(nb_ + e.row(), k) = e.value();
                K(k, nb_ + e.row()) = e.value();
            }
        }
        // symmetric equilibration
        scale_ = Eigen::VectorXd::Ones(nb_ + M);
        for (Eigen::Index i = 0; i < nb_ + M; ++i) {
            const double m = K.row(i).cwiseAbs().maxCoeff();
            if (m > 0.0) scale_(i) = 1.0 / std::sqrt(m);
        }
        K = scale_.asDiagonal() * K * scale_.asDiagonal();
        lu_.compute(K);
    }

    void solve(const Eigen::VectorXd& x, const Eigen::VectorXd& z, const Eigen::VectorXd& rp,
               const Eigen::VectorXd& rd, const Eigen::VectorXd& comp, Eigen::VectorXd& dx,
               Eigen::VectorXd& dy, Eigen::VectorXd& dz) const {
        const Eigen::Index M = A_.rows();
        // (H + Z/X) dx - A'dy = rr
        const Eigen::VectorXd rr = -rd + comp.cwiseQuotient(x);
        Eigen::VectorXd rhs(nb_ + M);
        for (Eigen::Index k = 0; k < nb_; ++k) rhs(k) = -rr(block_[static_cast<std::size_t>(k)]);
        rhs.tail(M) = -rp - A_ * Ds_.cwiseProduct(rr);
        const Eigen::VectorXd sol = scale_.cwiseProduct(lu_.solve(scale_.cwiseProduct(rhs)));
        dy = sol.tail(M);
        dx = Ds_.cwiseProduct(rr + A_.transpose() * dy);
        for (Eigen::Index k = 0; k < nb_; ++k) dx(block_[static_cast<std::size_t>(k)]) = sol(k);
        // at the bound (z > x) comp / x swamps rd, so take dz from stationarity
        const Eigen::VectorXd aty = A_.transpose() * dy;
        dz.resize(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i)
            dz(i) = z(i) > x(i) ? rd(i) + H_(i) * dx(i) - aty(i) : (comp(i) - z(i) * dx(i)) / x(i);
    }

private:
    const Eigen::SparseMatrix<double>& A_;
    const Eigen::VectorXd& H_;
    Eigen::VectorXd Ds_;
    Eigen::VectorXd scale_;
    std::vector<Eigen::Index> block_;
    Eigen::Index nb_ = 0;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

}  // namespace

IpmResult solve_separable(const SeparableProgram& p, const IpmOptions& opt,
                          const IpmObserver& observer) {
    const Eigen::Index N = p.cost.size();
    const Eigen::Index M = p.A.rows();
    if (p.A.cols() != N || p.b.size() != M) throw StructuralError("ipm: inconsistent dimensions");
    if (static_cast<Eigen::Index>(p.entropy_vars.size()) != p.entropy_ref.size())
        throw StructuralError("ipm: entropy reference size mismatch");

    Eigen::VectorXd ent_ref = Eigen::VectorXd::Zero(N);
    for (std::size_t k = 0; k < p.entropy_vars.size(); ++k)
        ent_ref(p.entropy_vars[k]) = p.entropy_ref(static_cast<Eigen::Index>(k));
    const bool nonlinear = p.kappa > 0.0 && !p.entropy_vars.empty();

    IpmResult r;
    r.x = p.x0.size() == N ? p.x0 : Eigen::VectorXd::Constant(N, 1.0);
    const double cscale = std::max(1.0, p.cost.cwiseAbs().maxCoeff());
    r.z = Eigen::VectorXd::Constant(N, cscale);
    r.y = Eigen::VectorXd::Zero(M);

    const Eigen::SparseMatrix<double> At = p.A.transpose();
    const double bnorm = 1.0 + (M > 0 ? p.b.cwiseAbs().maxCoeff() : 0.0);

    IpmResult best;
    double best_merit = std::numeric_limits<double>::infinity();
    double stall_ref = best_merit;
    int since_progress = 0;

    Eigen::VectorXd grad(N), H(N);
    for (int it = 0; it <= opt.max_iterations; ++it) {
        grad = p.cost;
        H.setZero();
        if (nonlinear)
            for (Eigen::Index i : p.entropy_vars) {
                grad(i) += p.kappa * (std::log(r.x(i) / ent_ref(i)) + 1.0);
                H(i) = p.kappa / r.x(i);
            }
        const Eigen::VectorXd rd = grad - At * r.y - r.z;
        const Eigen::VectorXd rp = p.A * r.x - p.b;
        r.mu = r.x.dot(r.z) / static_cast<double>(N);
        r.primal_residual = M > 0 ? rp.cwiseAbs().maxCoeff() / bnorm : 0.0;
        r.dual_residual = rd.cwiseAbs().maxCoeff() / (1.0 + grad.cwiseAbs().maxCoeff());
        r.iterations = it;
        if (observer && observer(r)) {
            r.stopped = true;
            break;
        }
        if (r.primal_residual <= opt.primal_tol && r.dual_residual <= opt.dual_tol &&
            r.mu <= opt.mu_tol) {
            r.converged = true;
            break;
        }
        const double merit = std::max({r.primal_residual / opt.primal_tol,
                                       r.dual_residual / opt.dual_tol, r.mu / opt.mu_tol});
        if (merit < best_merit) {
            best_merit = merit;
            best = r;
        }
        if (merit < 0.5 * stall_ref) {
            stall_ref = merit;
            since_progress = 0;
        } else {
            ++since_progress;
        }
        if (it == opt.max_iterations || since_progress > opt.stall_iterations) break;

        const KktSolver kkt(p.A, H, H + r.z.cwiseQuotient(r.x), opt.block_threshold);
        // iterative refinement against the exact Newton system
        auto direction = [&](const Eigen::VectorXd& comp, Eigen::VectorXd& dx, Eigen::VectorXd& dy,
                             Eigen::VectorXd& dz) {
            kkt.solve(r.x, r.z, rp, rd, comp, dx, dy, dz);
            Eigen::VectorXd ex, ey, ez;
            for (int refine = 0; refine < opt.refinements; ++refine) {
                const Eigen::VectorXd e1 = -rp - p.A * dx;
                const Eigen::VectorXd e2 = -rd - (H.cwiseProduct(dx) - At * dy - dz);
                const Eigen::VectorXd e3 = comp - (r.z.cwiseProduct(dx) + r.x.cwiseProduct(dz));
                kkt.solve(r.x, r.z, -e1, -e2, e3, ex, ey, ez);
                dx += ex;
                dy += ey;
                dz += ez;
            }
        };

        Eigen::VectorXd dx, dy, dz;
        const Eigen::VectorXd xz = r.x.cwiseProduct(r.z);
        direction(-xz, dx, dy, dz);
        const double aa = std::min(max_step(r.x, dx), max_step(r.z, dz));
        const double mu_aff = (r.x + aa * dx).dot(r.z + aa * dz) / static_cast<double>(N);
        const double sigma = std::clamp(std::pow(mu_aff / std::max(r.mu, 1e-300), 3.0), 0.0, 1.0);
        const Eigen::VectorXd comp =
            Eigen::VectorXd::Constant(N, sigma * r.mu) - xz - dx.cwiseProduct(dz);
        direction(comp, dx, dy, dz);
        const double alpha = std::min(1.0, 0.995 * std::min(max_step(r.x, dx), max_step(r.z, dz)));
        r.x += alpha * dx;
        r.y += alpha * dy;
        r.z += alpha * dz;
        // keep strictly interior against roundoff
        r.x = r.x.cwiseMax(1e-300);
        r.z = r.z.cwiseMax(1e-300);
        if (nonlinear && opt.reset_entropy_duals) {
            // the log linearisation is poor where x shrinks by large factors;
            // restore stationarity of those rows exactly when z stays interior
            const Eigen::VectorXd aty = At * r.y;
            for (Eigen::Index i : p.entropy_vars) {
                const double zi = p.cost(i) + p.kappa * (std::log(r.x(i) / ent_ref(i)) + 1.0) - aty(i);
                if (zi > 0.0) r.z(i) = zi;
            }
        }
    }
    if (!r.converged && !r.stopped && best_merit < std::numeric_limits<double>::infinity()) r = best;
    r.objective = separable_objective(p, r.x);
    return r;
}

}  // namespace rcdlab
