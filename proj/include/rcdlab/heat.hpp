#pragma once

#include "rcdlab/dirichlet.hpp"
#include "rcdlab/measures.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace rcdlab {

enum class SemigroupMethod { automatic, expm, implicit_euler };

struct SemigroupSpec {
    SemigroupMethod method = SemigroupMethod::automatic;   // expm up to kDenseLimit points
    double dt = 1e-3;                                      // implicit Euler step
};

inline constexpr std::size_t kDenseLimit = 512;

/// e^{t Lap} through the spectral decomposition of M^{-1/2} W M^{-1/2}.
/// Built once per form; every apply is a dense product.
class HeatSemigroup {
public:
    explicit HeatSemigroup(const DirichletForm& form);

    std::size_t size() const noexcept { return static_cast<std::size_t>(sqrt_m_.size()); }
    Eigen::VectorXd apply(const Eigen::VectorXd& f, double t) const;
    /// rho_t^x(y), transition density against m
    Eigen::MatrixXd kernel(double t) const;
    /// -Lap eigenvalues, ascending (the first is 0 per component)
    const Eigen::VectorXd& spectrum() const noexcept { return lambda_; }
    const Eigen::VectorXd& measure() const noexcept { return m_; }

private:
    Eigen::VectorXd m_;
    Eigen::VectorXd sqrt_m_;
    Eigen::VectorXd lambda_;
    Eigen::MatrixXd V_;
};

Eigen::VectorXd semigroup_apply(const DirichletForm& form, const Eigen::VectorXd& f, double t,
                                const SemigroupSpec& spec = {});
std::string method_tag(const DirichletForm& form, const SemigroupSpec& spec);

struct HeatKernel {
    double t = 0.0;
    Eigen::MatrixXd density;   // (x, y) -> rho_t^x(y)
    double clipped = 0.0;      // largest negative entry set to 0
    std::string method;
};

HeatKernel heat_kernel(const DirichletForm& form, double t);

struct KernelLawReport {
    double symmetry = 0.0;             // max |rho_t^x(y) - rho_t^y(x)|
    double chapman_kolmogorov = 0.0;   // max |rho_{t+s} - sum_z rho_t rho_s m|
    double row_mass = 0.0;             // max |sum_y rho_t^x(y) m(y) - 1|
    double clipped = 0.0;
};

KernelLawReport kernel_laws(const DirichletForm& form, double t, double s);

enum class FlowFlavor { semigroup, jko };
std::string to_string(FlowFlavor f);

struct FlowTrace {
    FlowFlavor flavor = FlowFlavor::semigroup;
    std::string method;
    std::vector<double> times;
    std::vector<ProbMeasure> measures;
    std::vector<double> entropy;
    std::vector<double> fisher;
    std::vector<double> w2_speed;   // W2(mu_k, mu_{k+1}) / dt, one per step
    std::vector<double> gaps;       // jko: certified duality gap per step
    double clipped = 0.0;           // semigroup: largest negative mass set to 0
};

/// Heat flow of mu0 sampled at the given increasing times (the first may be 0).
FlowTrace semigroup_flow(const DirichletForm& form, const ProbMeasure& mu0,
                         const std::vector<double>& times, const SemigroupSpec& spec = {});

struct JkoStep {
    ProbMeasure nu;
    double objective = 0.0;    // W2^2(nu, mu) / (2 tau) + Ent(nu), from the coupling
    double dual_bound = 0.0;
    double gap = 0.0;
    double transport_cost = 0.0;   // sum gamma d^2
    int iterations = 0;
};

/// argmin_nu Ent(nu) + W2^2(nu, mu) / (2 tau) over couplings from mu.
/// Throws SolverError with the achieved gap above inner_tol.
JkoStep jko_step(const ProbMeasure& mu, double tau, double inner_tol = 1e-9);

FlowTrace jko_flow(const DirichletForm& form, const ProbMeasure& mu0, double tau, std::size_t nsteps,
                   double inner_tol = 1e-9);

struct IdentificationReport {
    std::vector<double> taus;
    std::vector<double> l1_gaps;          // max over t of |jko - semigroup|_1
    std::optional<double> fitted_order;   // slope of log gap against log tau
    double t_dissipation = 0.0;
    double entropy_rate = 0.0;            // centred dEnt/dt
    double fisher = 0.0;
    double dissipation_residual = 0.0;    // |dEnt/dt + Fisher| / max(Fisher, tiny)
};

IdentificationReport identification_check(const DirichletForm& form, const Eigen::VectorXd& f0,
                                          const std::vector<double>& t_grid,
                                          const std::vector<double>& tau_grid,
                                          double t_dissipation = 0.1, double dt = 1e-4,
                                          double inner_tol = 1e-9, unsigned threads = 1);

struct BakryEmeryReport {
    std::vector<double> times;
    std::vector<double> residuals;   // max_x Gamma(h_t f) - e^{-2Kt} h_t Gamma(f)
    double worst = 0.0;
    double K = 0.0;
    double best_K = 0.0;             // largest K with worst <= tol
};

BakryEmeryReport bakry_emery_check(const DirichletForm& form, const Eigen::VectorXd& f,
                                   const std::vector<double>& t_grid, double K, double tol = 1e-8);

/// int_0^t e^{K r} dr
double integral_exp(double K, double t);

struct LipschitzRegularizationReport {
    double t = 0.0;
    double K = 0.0;
    double worst = 0.0;        // max_x 2 I_2K(t) Gamma(h_t f) - h_t(f^2)
    double slope_bound = 0.0;  // sqrt(2 I_2K(t)) max slope(h_t f)
    double sup_norm = 0.0;     // |f|_inf
};

LipschitzRegularizationReport lipschitz_regularization_check(const DirichletForm& form,
                                                             const Eigen::VectorXd& f, double t,
                                                             double K);

struct LogSobolevReport {
    double entropy = 0.0;
    double fisher = 0.0;
    double residual = 0.0;   // Ent - Fisher / (2K) at f
    double best_K = 0.0;     // inf of Fisher / (2 Ent) found over the family
    std::size_t family_size = 0;
};

/// The family is seeded random log-densities, exponential tilts of d(., x0)
/// and local descent of the quotient from the best of them.
LogSobolevReport log_sobolev_check(const DirichletForm& form, const Eigen::VectorXd& f, double K,
                                   std::uint64_t seed = 1, std::size_t family = 48);

struct ContractionReport {
    std::vector<double> times;
    std::vector<double> residuals;   // W2(h_t mu, h_t nu) - e^{-Kt} W2(mu, nu)
    double worst = 0.0;
    double w2_initial = 0.0;
};

ContractionReport contraction_check(const DirichletForm& form, const ProbMeasure& mu,
                                    const ProbMeasure& nu, double K, const std::vector<double>& t_grid);

struct TensorizationReport {
    double kernel_residual = 0.0;     // max |K_prod - K_a (x) K_b|
    double w2_squared_product = 0.0;
    double w2_squared_sum = 0.0;
    double additivity_residual = 0.0;
};

TensorizationReport tensorization_check(const DirichletForm& a, const DirichletForm& b,
                                        const ProbMeasure& mu_a, const ProbMeasure& mu_b,
                                        const ProbMeasure& nu_a, const ProbMeasure& nu_b, double t);

/// Product measure on product_space(a, b) ordering (i * nb + j).
ProbMeasure product_measure(const SpacePtr& product, const ProbMeasure& a, const ProbMeasure& b);

struct EntropyRegularizationReport {
    double lhs = 0.0;   // I_K(t) Ent(H_t mu) + I_K(t)^2 / 2 Fisher(H_t mu)
    double rhs = 0.0;   // W2^2(mu, m / m(X)) / 2
    double residual = 0.0;
};

EntropyRegularizationReport entropy_regularization_check(const DirichletForm& form,
                                                         const ProbMeasure& mu, double t, double K);

}  // namespace rcdlab
