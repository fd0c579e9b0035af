#pragma once

#include "rcdlab/measures.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

namespace rcdlab {

/// Balanced transportation LP min <C, x> with row sums a and column sums b,
/// solved exactly by the transportation simplex on a spanning-tree basis.
struct TransportSolution {
    Eigen::MatrixXd flow;
    Eigen::VectorXd u;   // row potentials
    Eigen::VectorXd v;   // column potentials, u_i + v_j <= C_ij
    double cost = 0.0;
    bool degenerate = false;   // some basic cell carries zero flow
    int pivots = 0;
};

TransportSolution solve_transport(const Eigen::MatrixXd& cost, const Eigen::VectorXd& a,
                                  const Eigen::VectorXd& b);

struct TransportPlan {
    Eigen::MatrixXd coupling;
    double cost = 0.0;   // sum gamma d^2
};

struct W2Result {
    double value = 0.0;
    TransportPlan plan;
};

W2Result w2(const ProbMeasure& mu, const ProbMeasure& nu);
double w2_squared(const ProbMeasure& mu, const ProbMeasure& nu);

/// Residual of the marginal constraints of a plan.
double marginal_residual(const TransportPlan& plan, const ProbMeasure& mu, const ProbMeasure& nu);

/// phi(x) = min_{y in support} d(x,y)^2 / 2 - psi(y); ties go to the lowest index.
/// psi may hold -inf outside the support; it must be finite on it.
Eigen::VectorXd c_transform(const Eigen::MatrixXd& metric, const Eigen::VectorXd& psi,
                            std::span<const std::size_t> support);
Eigen::VectorXd c_transform(const FiniteMMSpace& space, const Eigen::VectorXd& psi,
                            std::span<const std::size_t> support);

struct KantorovichPair {
    Eigen::VectorXd phi;
    Eigen::VectorXd psi;   // -inf off supp nu
    double dual_value = 0.0;
    double primal = 0.0;   // W2^2 / 2
    double gap = 0.0;
    bool nonunique = false;   // the LP basis was degenerate
    std::optional<std::size_t> gauge;
};

/// For the cost d^2/2. With a gauge y0, phi(y0) = 0 and phi = psi^c.
KantorovichPair kantorovich_potentials(const ProbMeasure& mu, const ProbMeasure& nu,
                                       std::optional<std::size_t> gauge = std::nullopt);

/// Max violation of phi(x) + psi(y) <= d^2/2 over all pairs.
double dual_feasibility_violation(const FiniteMMSpace& space, const KantorovichPair& pair);
double dual_value(const KantorovichPair& pair, const ProbMeasure& mu, const ProbMeasure& nu);

/// Neighbour slopes on the graph carrier (every other point when there is none).
struct SlopeDiagnostics {
    Eigen::VectorXd ascending;
    Eigen::VectorXd descending;
    Eigen::VectorXd two_sided() const { return ascending.cwiseMax(descending); }
};

SlopeDiagnostics slopes(const FiniteMMSpace& space, const Eigen::VectorXd& f);

struct SlacknessReport {
    double complementary_residual = 0.0;   // max over supp gamma of |d^2/2 - phi - psi|
    double slope_violation = 0.0;          // max over supp gamma of (|D+ phi|(x) - d(x,y))^+
    std::vector<std::size_t> worst_pair;
};

SlacknessReport check_slackness(const FiniteMMSpace& space, const KantorovichPair& pair,
                                const TransportPlan& plan);

struct StabilityReport {
    std::vector<double> value_gaps;       // |W2^2(f_n m, sigma) - W2^2(f m, sigma)|
    std::vector<double> potential_gaps;   // sup |phi_n - phi| of gauge-normalised potentials
    bool values_converge = false;
};

StabilityReport potential_stability_probe(SpacePtr space,
                                          const std::vector<Eigen::VectorXd>& densities,
                                          const Eigen::VectorXd& limit, const ProbMeasure& sigma,
                                          std::size_t gauge);

}  // namespace rcdlab
