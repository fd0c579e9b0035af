#pragma once

#include "rcdlab/mmspace.hpp"

#include <Eigen/Dense>

#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace rcdlab {

using SpacePtr = std::shared_ptr<const FiniteMMSpace>;

class DirichletForm;

/// Real number that may also be +inf (entropy bookkeeping).
class ExtendedReal {
public:
    constexpr ExtendedReal() = default;
    constexpr explicit ExtendedReal(double v) : v_(v) {}
    static constexpr ExtendedReal infinity() {
        return ExtendedReal(std::numeric_limits<double>::infinity());
    }
    constexpr bool is_finite() const { return v_ < std::numeric_limits<double>::infinity(); }
    constexpr double value() const { return v_; }

private:
    double v_ = 0.0;
};

/// rho <= c1 exp(-c2 d(x, x0)^2)
struct DecayTag {
    double c1 = 1.0;
    double c2 = 0.0;
    std::size_t x0 = 0;
};

/// supp mu inside the closed ball B(x0, radius)
struct SupportTag {
    double radius = 0.0;
    std::size_t x0 = 0;
};

/// Probability measure on a finite space; weights are absolute masses.
class ProbMeasure {
public:
    static constexpr double kMassTolerance = 1e-12;

    /// Weights must be nonnegative and sum to 1 within 1e-8; they are then
    /// renormalised so the stored sum is 1 to rounding.
    ProbMeasure(SpacePtr space, Eigen::VectorXd weights);

    /// Normalises an arbitrary nonnegative vector of positive total mass.
    static ProbMeasure normalized(SpacePtr space, Eigen::VectorXd weights);
    static ProbMeasure from_density(SpacePtr space, const Eigen::VectorXd& density);
    static ProbMeasure dirac(SpacePtr space, std::size_t x);
    /// m / m(X)
    static ProbMeasure reference(SpacePtr space);

    const FiniteMMSpace& space() const noexcept { return *space_; }
    const SpacePtr& space_ptr() const noexcept { return space_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(weights_.size()); }
    const Eigen::VectorXd& weights() const noexcept { return weights_; }
    double operator[](std::size_t i) const { return weights_(static_cast<Eigen::Index>(i)); }
    Eigen::VectorXd density() const;
    double sup_density() const;
    std::vector<std::size_t> support() const;
    /// int d(x, x0)^2 dmu
    double second_moment(std::size_t x0) const;

    const std::optional<DecayTag>& decay() const noexcept { return decay_; }
    const std::optional<SupportTag>& support_tag() const noexcept { return support_tag_; }
    ProbMeasure& set_decay(DecayTag tag);
    ProbMeasure& set_support_tag(SupportTag tag);

private:
    SpacePtr space_;
    Eigen::VectorXd weights_;
    std::optional<DecayTag> decay_;
    std::optional<SupportTag> support_tag_;
};

/// Smallest c1 with rho <= c1 exp(-c2 d(., x0)^2) everywhere.
DecayTag fit_decay(const ProbMeasure& mu, double c2, std::size_t x0);
/// Radius of the smallest ball around x0 containing supp mu.
SupportTag fit_support(const ProbMeasure& mu, std::size_t x0);

struct TiltedReference {
    Eigen::VectorXd tilted_weights;
    double z = 0.0;
    double c = 0.0;
    std::size_t x0 = 0;
};

/// sum_{rho > 0} rho log rho ref, rho = mu / ref
ExtendedReal relative_entropy(std::span<const double> mu, std::span<const double> ref);
ExtendedReal relative_entropy(const ProbMeasure& mu, const Eigen::VectorXd& ref);
/// Entropy against the space's own reference measure.
double entropy(const ProbMeasure& mu);

/// c = 0 is accepted and gives m / m(X).
TiltedReference tilt_reference(const FiniteMMSpace& space, double c, std::size_t x0);

/// Residual of Ent_m(mu) = Ent_tilde(mu) - c int V^2 dmu - log z.
double change_of_reference_residual(const ProbMeasure& mu, const TiltedReference& tilt);

/// sum (rho - C)^+ m. There is no singular part on a full-support finite space.
double excess_mass(const ProbMeasure& mu, double threshold);

/// sum_{rho > 0} Gamma(rho, rho) / rho m; sites with rho = 0 are excluded.
double fisher_information(const ProbMeasure& mu, const DirichletForm& form);
double fisher_information(const Eigen::VectorXd& density, const DirichletForm& form);

struct MonotoneLimitReport {
    std::vector<double> gaps;   // |Ent(f_k) - Ent(f)|
    bool monotone_input = true;
    bool increasing = false;
    bool converging = true;     // gaps eventually nonincreasing toward the last one
};

MonotoneLimitReport entropy_monotone_limit_check(const std::vector<Eigen::VectorXd>& sequence,
                                                 const Eigen::VectorXd& limit,
                                                 const Eigen::VectorXd& ref);

}  // namespace rcdlab
