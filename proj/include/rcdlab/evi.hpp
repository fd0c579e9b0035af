#pragma once

#include "rcdlab/dirichlet.hpp"
#include "rcdlab/heat.hpp"
#include "rcdlab/measures.hpp"

#include <optional>
#include <string>
#include <vector>

namespace rcdlab {

enum class CheckStatus { pass, fail, inconclusive, report };
std::string to_string(CheckStatus s);

struct InequalityReport {
    std::string name;
    std::vector<double> grid;
    std::vector<double> residuals;   // positive = violation
    double worst = 0.0;
    std::optional<double> trend;     // slope of worst against the refinement parameter
    CheckStatus status = CheckStatus::report;
    double tolerance = 0.0;
    std::vector<std::string> notes;
};

InequalityReport make_report(std::string name, std::vector<double> grid, std::vector<double> residuals);
/// pass iff worst <= tol (keeps inconclusive)
InequalityReport& assert_tolerance(InequalityReport& r, double tol);

/// One member per refinement parameter; grid = params, residuals = member worsts.
/// The trend is the least squares slope once there are >= 3 members.
InequalityReport family_report(std::string name, const std::vector<double>& params,
                               const std::vector<InequalityReport>& members);

/// t - dt, t, t + dt for each grid time, sorted and deduplicated (t - dt >= 0 required).
std::vector<double> centred_times(const std::vector<double>& grid, double dt);

/// d/dt 1/2 W2^2(mu_t, sigma) + K/2 W2^2(mu_t, sigma) + Ent(mu_t) - Ent(sigma), centred in time,
/// at every trace time whose neighbours at distance dt are also in the trace.
InequalityReport evi_check(const FlowTrace& flow, const ProbMeasure& sigma, double K, double dt);

/// |Ent(mu_0) - Ent(mu_T) - sum dt (speed^2 / 2 + mean Fisher / 2)| per step, cumulated.
InequalityReport ede_check(const FlowTrace& flow);

struct Dw2Report {
    InequalityReport identity;       // centred d/dt 1/2 W2^2 + E_mu(phi, log f)
    InequalityReport envelope;       // quotient^2 - 8 / (2 dt) int C(sqrt f) int Gamma(phi) dmu
    std::vector<double> derivative;  // centred difference
    std::vector<double> energy;      // -E_mu(phi, log f)
    std::vector<bool> nonunique;
};

Dw2Report dw2_derivative_check(const DirichletForm& form, const FlowTrace& flow, const ProbMeasure& sigma,
                               double dt, WeightTransfer rule = WeightTransfer::min);

struct EntropyInequalityDetail {
    double lhs = 0.0;   // Ent(sigma) - Ent(eta) - K/2 W2^2
    double rhs = 0.0;   // -E_eta(phi, log f) at the best potential found
    double rhs_first = 0.0;   // at the gauge-normalised potential
    std::size_t components = 0;   // rigid blocks of the optimal dual face
};

/// Residual rhs - lhs; a violation at the first potential triggers a search of the
/// optimal dual face (one shift per rigid block of the plan support).
InequalityReport entropy_inequality_check(const DirichletForm& form, const ProbMeasure& eta,
                                          const ProbMeasure& sigma, double K,
                                          WeightTransfer rule = WeightTransfer::min,
                                          EntropyInequalityDetail* detail = nullptr,
                                          std::size_t face_cap = 24);

struct VerifySuite {
    double K = 0.0;
    std::vector<double> t_grid{0.02, 0.04, 0.06, 0.08, 0.1};
    double dt = 1e-3;
    std::uint64_t seed = 1;
    std::size_t samples = 8;
    double tol_quadratic = 1e-12;
    double tol_additivity = 1e-10;
    double tol_evi = 1e-3;
    bool assert_evi = true;   // false: evi is reported, never failed
    unsigned threads = 1;
};

struct VerifyReport {
    std::vector<InequalityReport> checks;   // name order
    bool verdict = true;
};

/// Parallelogram law of the Cheeger energy, additivity of the heat flow on mixtures and
/// EVI_K of heat flows from seeded initial data against seeded targets.
VerifyReport rcd_verify(const DirichletForm& form, const VerifySuite& suite);

}  // namespace rcdlab
