#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <functional>
#include <string>
#include <vector>

namespace rcdlab {

/// min  c'x + kappa sum_{i in E} x_i log(x_i / r_i)   s.t.  Ax = b,  x >= 0.
///
/// Shared engine of the intermediate-point, JKO and feasibility programs.
struct SeparableProgram {
    Eigen::VectorXd cost;
    std::vector<Eigen::Index> entropy_vars;
    Eigen::VectorXd entropy_ref;   // r_i, one per entropy variable
    double kappa = 0.0;
    Eigen::SparseMatrix<double> A;
    Eigen::VectorXd b;
    Eigen::VectorXd x0;   // optional strictly positive start
};

struct IpmOptions {
    double primal_tol = 1e-12;   // relative equality residual
    double dual_tol = 1e-11;     // relative stationarity residual
    double mu_tol = 1e-12;       // complementarity, x'z / N
    int max_iterations = 300;
    int stall_iterations = 25;       // give up when the merit has not halved for this long
    double block_threshold = 1.0;    // D above this stays in the dense augmented block
    int refinements = 2;
    bool reset_entropy_duals = true;
};

struct IpmResult;

/// Called once per iterate; returning true stops the solver (certified elsewhere).
using IpmObserver = std::function<bool(const IpmResult&)>;

struct IpmResult {
    Eigen::VectorXd x;
    Eigen::VectorXd y;   // equality multipliers, Lagrangian f - y'(Ax - b) - z'x
    Eigen::VectorXd z;
    double objective = 0.0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double mu = 0.0;
    int iterations = 0;
    bool converged = false;
    bool stopped = false;   // by the observer
    std::string method = "primal-dual-ipm/mehrotra";
};

/// Primal-dual interior point method with Mehrotra correction and a single
/// step length. Newton systems go through a hybrid augmented/Schur solve.
IpmResult solve_separable(const SeparableProgram& program, const IpmOptions& options = {},
                          const IpmObserver& observer = {});

double separable_objective(const SeparableProgram& program, const Eigen::VectorXd& x);

}  // namespace rcdlab
