#pragma once

#include "rcdlab/measures.hpp"
#include "rcdlab/ot.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rcdlab {

/// I_t^eps = { nu : W2(mu0, nu) <= tW + eps,  W2(mu1, nu) <= (1-t)W + eps }
struct IntermediateSpec {
    double t = 0.5;
    double epsilon = 0.0;
    double W = 0.0;
    double budget_from_start() const { return t * W + epsilon; }
    double budget_to_end() const { return (1.0 - t) * W + epsilon; }
};

struct EntropyCertificate {
    double entropy = 0.0;
    double dual_bound = 0.0;   // Lagrangian lower bound on the optimum
    double gap = 0.0;          // entropy - dual_bound
    double w2_from_start = 0.0;
    double w2_to_end = 0.0;
    double violation = 0.0;    // max excess over the two budgets (exact LP distances)
    double lambda0 = 0.0;
    double lambda1 = 0.0;
    int iterations = 0;
    std::string method;
};

struct IntermediateResult {
    ProbMeasure nu;
    EntropyCertificate certificate;
    IntermediateSpec spec;
};

/// Largest excess of nu over the two distance budgets (<= 0 means member).
double intermediate_violation(const ProbMeasure& mu0, const ProbMeasure& mu1,
                              const ProbMeasure& nu, const IntermediateSpec& spec);

/// max(0, min_nu max(W2(mu0,nu) - tW, W2(nu,mu1) - (1-t)W)).
double minimal_epsilon(const ProbMeasure& mu0, const ProbMeasure& mu1, double t);

/// Entropy minimiser over I_t^eps with a Lagrangian dual certificate.
/// Throws InfeasibleIntermediate when eps is below the minimal slack.
IntermediateResult intermediate_entropy_min(const ProbMeasure& mu0, const ProbMeasure& mu1,
                                            double t, double epsilon, double tol = 1e-8);

struct GeodesicOptions {
    double K = 0.0;                       // curvature used for the t0 branch
    std::optional<double> epsilon;        // nullopt: smallest feasible slack per midpoint
    double tol = 1e-8;
    unsigned threads = 1;
};

struct GeodesicTrace {
    std::vector<double> times;
    std::vector<ProbMeasure> measures;
    std::vector<double> entropies;
    std::vector<double> w2_from_start;
    std::vector<double> sup_density;
    std::vector<std::optional<EntropyCertificate>> certificates;
    /// (left, right) time indices each interior point was selected between
    std::vector<std::pair<std::size_t, std::size_t>> parents;
    double epsilon_used = 0.0;
    double W = 0.0;
    std::optional<double> t0;
    std::optional<double> density_bound;   // max{|rho1|_inf, c1} exp((2K^- + c2) D^2)
};

GeodesicTrace build_good_geodesic(const ProbMeasure& mu0, const ProbMeasure& mu1,
                                  std::size_t depth, const GeodesicOptions& options = {});

struct CdTriple {
    double s = 0.0;
    double t = 0.0;
    double r = 0.0;
    double residual = 0.0;   // positive = violation
};

struct CdReport {
    std::vector<CdTriple> local;
    std::vector<CdTriple> global;
    double worst = 0.0;
};

CdReport cd_convexity_check(const GeodesicTrace& trace, double K);

/// Discrete curves through consecutive trace measures, glued greedily.
struct DiscreteCurvePlan {
    std::vector<std::vector<std::size_t>> curves;   // one point per trace time
    std::vector<double> weights;
    double compressibility = 0.0;   // max_t max (marginal / m)
    double action = 0.0;            // sum w sum d^2 / dt
    std::vector<double> times;
    ProbMeasure marginal(std::size_t time_index, const SpacePtr& space) const;
};

DiscreteCurvePlan curve_plan(const GeodesicTrace& trace);

struct LengthBand {
    double lo = 0.0;
    double hi = 0.0;   // [lo, hi)
};

struct BandPiece {
    LengthBand band;
    TransportPlan sub_plan;
    double mass = 0.0;
};

struct BandSplitReport {
    std::vector<BandPiece> pieces;
    double max_overlap = 0.0;   // worst shared mass between time-t marginals of distinct bands
    std::size_t time_index = 0;
};

BandSplitReport length_band_split(const TransportPlan& plan, const GeodesicTrace& trace,
                                  const std::vector<LengthBand>& bands, std::size_t time_index);

struct CombineResult {
    ProbMeasure measure;
    double c = 0.0;
    double epsilon_prime = 0.0;   // smallest slack with measure in I_lambda^eps'(mu0, mu1)
};

/// (e_lambda)#((1 - f) pi) + c nu_inner with c = sum f w.
CombineResult combine_restricted(const DiscreteCurvePlan& plan, const std::vector<double>& f,
                                 const ProbMeasure& nu_inner, std::size_t time_index,
                                 const ProbMeasure& mu0, const ProbMeasure& mu1);

struct BrenierProbe {
    std::vector<double> times;
    std::vector<double> gaps;   // weighted L2 gap between quotient and curve length
};

BrenierProbe metric_brenier_probe(const GeodesicTrace& trace, const KantorovichPair& pair);

}  // namespace rcdlab
