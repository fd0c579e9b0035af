#pragma once

#include "rcdlab/measures.hpp"

#include <Eigen/Sparse>

#include <functional>
#include <string>
#include <vector>

namespace rcdlab {

struct Conductance {
    std::size_t a = 0;
    std::size_t b = 0;
    double w = 0.0;
};

/// Quadratic form E(f,g) = 1/2 sum_{x,y} w_xy (f(y)-f(x)) (g(y)-g(x)) on a
/// graph carrier, together with a vertex measure.
///
/// Gamma(f,g)(x) = 1/(2 m(x)) sum_y w_xy (f(y)-f(x)) (g(y)-g(x)), so that
/// int Gamma dm = E and int g Lap f dm = -E(f,g).
/// Vertices of zero mass (weighted forms) get Gamma = 0.
class DirichletForm {
public:
    DirichletForm(SpacePtr space, std::vector<Conductance> conductances);
    DirichletForm(SpacePtr space, std::vector<Conductance> conductances, Eigen::VectorXd measure);

    /// w_xy = (m_x + m_y) / (2 d_xy^2) on every graph edge: Gamma(f) -> |f'|^2.
    static DirichletForm calibrated(SpacePtr space);
    /// w_xy = 1 on every graph edge.
    static DirichletForm unit(SpacePtr space);

    const FiniteMMSpace& space() const noexcept { return *space_; }
    const SpacePtr& space_ptr() const noexcept { return space_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(measure_.size()); }
    const Eigen::VectorXd& measure() const noexcept { return measure_; }
    const std::vector<Conductance>& conductances() const noexcept { return conductances_; }
    const std::vector<std::size_t>& component() const noexcept { return component_; }
    std::size_t component_count() const noexcept { return component_count_; }

    double energy(const Eigen::VectorXd& f, const Eigen::VectorXd& g) const;
    double energy(const Eigen::VectorXd& f) const { return energy(f, f); }
    Eigen::VectorXd gamma(const Eigen::VectorXd& f, const Eigen::VectorXd& g) const;
    Eigen::VectorXd gamma(const Eigen::VectorXd& f) const { return gamma(f, f); }
    /// 1/2 int Gamma(f,f) dm
    double cheeger(const Eigen::VectorXd& f) const { return 0.5 * energy(f, f); }
    Eigen::VectorXd laplacian(const Eigen::VectorXd& f) const;

    /// W with W_xy = w_xy, W_xx = -sum_y w_xy (so Lap = M^-1 W).
    Eigen::SparseMatrix<double> generator() const;

private:
    SpacePtr space_;
    std::vector<Conductance> conductances_;
    Eigen::VectorXd measure_;
    std::vector<std::size_t> component_;
    std::size_t component_count_ = 0;
};

/// Form on product_space(a.space(), b.space()): w_a m_b on a-edges, m_a w_b on
/// b-edges, product vertex measure, so the generator is Lap_a (x) I + I (x) Lap_b.
DirichletForm product_form(const DirichletForm& a, const DirichletForm& b);

/// Logarithmic mean (a - b) / (log a - log b); L(a, a) = a, L(0, .) = 0.
double log_mean(double a, double b);

/// theta in w'_xy = w_xy theta(g_x, g_y). min is local (vanishes with g);
/// log_mean makes the transfer identity exact on every graph.
enum class WeightTransfer { min, log_mean };

double transfer_weight(WeightTransfer rule, double a, double b);

/// Form with vertex measure rho and conductances w_xy theta(g_x, g_y), g = d rho / dm.
DirichletForm weighted_form(const DirichletForm& form, const ProbMeasure& rho,
                            WeightTransfer rule = WeightTransfer::min);

struct TransferResult {
    double residual = 0.0;
    bool in_domain = true;   // false when g vanishes on an edge where phi varies
};

/// | E_rho(log g, phi) - E(g, phi) |
TransferResult transfer_identity_check(const DirichletForm& form, const Eigen::VectorXd& g,
                                       const Eigen::VectorXd& phi,
                                       WeightTransfer rule = WeightTransfer::min);

struct ScalarMap {
    std::function<double(double)> value;
    std::function<double(double)> derivative;
};

struct ChainRuleReport {
    double pointwise_gap = 0.0;    // max | sqrt Gamma(phi o f) - |phi'(f)| sqrt Gamma(f) |
    double integrated_gap = 0.0;   // | int Gamma(f, phi o g) - int phi'(g) Gamma(f, g) |, with g = f
};

ChainRuleReport chain_rule_check(const DirichletForm& form, const Eigen::VectorXd& f,
                                 const ScalarMap& phi);

/// A curve on the graph as a vertex sequence with the traversed edge lengths.
struct VertexPath {
    std::vector<std::size_t> vertices;
};

struct Mod2Result {
    double value = 0.0;
    Eigen::VectorXd g;
    Eigen::VectorXd multipliers;
    double kkt_residual = 0.0;
    bool infinite = false;
};

/// Per-vertex step length: half the sum of incident traversed edge lengths.
Eigen::VectorXd path_step_lengths(const FiniteMMSpace& space, const VertexPath& path);

/// min sum g^2 m  s.t.  sum_z g(z) l_z >= 1 for every path.
Mod2Result mod2(const std::vector<Eigen::VectorXd>& step_lengths, const Eigen::VectorXd& m);
Mod2Result mod2(const FiniteMMSpace& space, const std::vector<VertexPath>& paths);

/// max over vertices where f1 = f2 on the closed neighbourhood of |Gamma(f1) - Gamma(f2)|
double locality_check(const DirichletForm& form, const Eigen::VectorXd& f1,
                      const Eigen::VectorXd& f2);

struct EssentialBoundReport {
    double lhs = 0.0;
    double rhs = 0.0;
    double residual = 0.0;   // lhs - rhs
};

/// |E_eta(log g, phi) - E_eta'(log g', phi)| against the Cauchy-Schwarz
/// products over the vertices where g != g'.
EssentialBoundReport essential_bound_check(const DirichletForm& form, const Eigen::VectorXd& g,
                                           const Eigen::VectorXd& g_prime,
                                           const Eigen::VectorXd& phi);

struct IntrinsicMetric {
    Eigen::MatrixXd distance;            // +inf between components
    std::vector<Eigen::VectorXd> maximizers;  // one per pair (i < j), row-major
    double max_constraint = 0.0;         // max Gamma(g,g) over returned maximizers
};

IntrinsicMetric intrinsic_metric(const DirichletForm& form, double rel_tol = 1e-9);

}  // namespace rcdlab
