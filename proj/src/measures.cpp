#include "rcdlab/measures.hpp"

#include "rcdlab/dirichlet.hpp"
#include "rcdlab/error.hpp"

#include <algorithm>
#include <cmath>

namespace rcdlab {

ProbMeasure::ProbMeasure(SpacePtr space, Eigen::VectorXd weights)
    : space_(std::move(space)), weights_(std::move(weights)) {
    if (!space_) throw InvalidArgument("measure needs a space");
    if (weights_.size() != static_cast<Eigen::Index>(space_->size()))
        throw StructuralError("measure has " + std::to_string(weights_.size()) +
                              " weights but the space has " + std::to_string(space_->size()) +
                              " points");
    for (Eigen::Index i = 0; i < weights_.size(); ++i) {
        if (!std::isfinite(weights_(i))) throw InvalidArgument("measure weight is not finite");
        if (weights_(i) < -1e-12) throw InvalidArgument("measure weight is negative");
        weights_(i) = std::max(weights_(i), 0.0);
    }
    const double total = weights_.sum();
    if (std::abs(total - 1.0) > 1e-8)
        throw InvalidArgument("measure weights sum to " + std::to_string(total) + ", not 1");
    weights_ /= total;
}

ProbMeasure ProbMeasure::normalized(SpacePtr space, Eigen::VectorXd weights) {
    const double total = weights.cwiseMax(0.0).sum();
    if (!(total > 0.0)) throw InvalidArgument("measure has no positive mass");
    return ProbMeasure(std::move(space), weights.cwiseMax(0.0) / total);
}

ProbMeasure ProbMeasure::from_density(SpacePtr space, const Eigen::VectorXd& density) {
    Eigen::VectorXd w = density.cwiseProduct(space->measure());
    return normalized(std::move(space), std::move(w));
}

ProbMeasure ProbMeasure::dirac(SpacePtr space, std::size_t x) {
    if (x >= space->size()) throw InvalidArgument("dirac point out of range");
    Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(space->size()));
    w(static_cast<Eigen::Index>(x)) = 1.0;
    return ProbMeasure(std::move(space), std::move(w));
}

ProbMeasure ProbMeasure::reference(SpacePtr space) {
    Eigen::VectorXd w = space->measure();
    return normalized(std::move(space), std::move(w));
}

Eigen::VectorXd ProbMeasure::density() const {
    return weights_.cwiseQuotient(space_->measure());
}

double ProbMeasure::sup_density() const { return density().maxCoeff(); }

std::vector<std::size_t> ProbMeasure::support() const {
    std::vector<std::size_t> s;
    for (Eigen::Index i = 0; i < weights_.size(); ++i)
        if (weights_(i) > 0.0) s.push_back(static_cast<std::size_t>(i));
    return s;
}

double ProbMeasure::second_moment(std::size_t x0) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
        const double v = space_->distance(i, x0);
        acc += v * v * weights_(static_cast<Eigen::Index>(i));
    }
    return acc;
}

ProbMeasure& ProbMeasure::set_decay(DecayTag tag) {
    if (!(tag.c1 > 0.0) || !(tag.c2 > 0.0)) throw InvalidArgument("decay tag needs c1, c2 > 0");
    if (tag.x0 >= size()) throw InvalidArgument("decay tag base point out of range");
    decay_ = tag;
    return *this;
}

ProbMeasure& ProbMeasure::set_support_tag(SupportTag tag) {
    if (tag.x0 >= size()) throw InvalidArgument("support tag base point out of range");
    support_tag_ = tag;
    return *this;
}

DecayTag fit_decay(const ProbMeasure& mu, double c2, std::size_t x0) {
    const Eigen::VectorXd rho = mu.density();
    double c1 = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const double v = mu.space().distance(i, x0);
        c1 = std::max(c1, rho(static_cast<Eigen::Index>(i)) * std::exp(c2 * v * v));
    }
    return {c1, c2, x0};
}

SupportTag fit_support(const ProbMeasure& mu, std::size_t x0) {
    double r = 0.0;
    for (std::size_t i : mu.support()) r = std::max(r, mu.space().distance(i, x0));
    return {r, x0};
}

ExtendedReal relative_entropy(std::span<const double> mu, std::span<const double> ref) {
    if (mu.size() != ref.size()) throw StructuralError("entropy: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        if (!(ref[i] > 0.0)) throw InvalidArgument("entropy: reference must be positive");
        if (mu[i] > 0.0) acc += mu[i] * std::log(mu[i] / ref[i]);
    }
    return ExtendedReal(acc);
}

ExtendedReal relative_entropy(const ProbMeasure& mu, const Eigen::VectorXd& ref) {
    if (ref.size() != static_cast<Eigen::Index>(mu.size()))
        throw StructuralError("entropy: size mismatch");
    return relative_entropy(std::span<const double>(mu.weights().data(), mu.size()),
                            std::span<const double>(ref.data(), mu.size()));
}

double entropy(const ProbMeasure& mu) {
    return relative_entropy(mu, mu.space().measure()).value();
}

TiltedReference tilt_reference(const FiniteMMSpace& space, double c, std::size_t x0) {
    if (c < 0.0) throw InvalidArgument("tilt strength must be >= 0");
    if (x0 >= space.size()) throw InvalidArgument("tilt base point out of range");
    TiltedReference t;
    t.c = c;
    t.x0 = x0;
    t.tilted_weights.resize(static_cast<Eigen::Index>(space.size()));
    for (std::size_t i = 0; i < space.size(); ++i) {
        const double v = space.distance(i, x0);
        t.tilted_weights(static_cast<Eigen::Index>(i)) =
            std::exp(-c * v * v) * space.measure()(static_cast<Eigen::Index>(i));
    }
    t.z = t.tilted_weights.sum();
    t.tilted_weights /= t.z;
    return t;
}

double change_of_reference_residual(const ProbMeasure& mu, const TiltedReference& tilt) {
    const double lhs = entropy(mu);
    const double rhs = relative_entropy(mu, tilt.tilted_weights).value() -
                       tilt.c * mu.second_moment(tilt.x0) - std::log(tilt.z);
    return std::abs(lhs - rhs);
}

double excess_mass(const ProbMeasure& mu, double threshold) {
    if (threshold < 0.0) throw InvalidArgument("excess mass threshold must be >= 0");
    const Eigen::VectorXd& m = mu.space().measure();
    double acc = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        acc += std::max(mu.weights()(k) / m(k) - threshold, 0.0) * m(k);
    }
    return acc;
}

double fisher_information(const Eigen::VectorXd& density, const DirichletForm& form) {
    if (density.size() != static_cast<Eigen::Index>(form.size()))
        throw StructuralError("fisher information: form and density sizes differ");
    const Eigen::VectorXd g = form.gamma(density);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < density.size(); ++i)
        if (density(i) > 0.0) acc += g(i) / density(i) * form.measure()(i);
    return acc;
}

double fisher_information(const ProbMeasure& mu, const DirichletForm& form) {
    if (&mu.space() != &form.space() && mu.size() != form.size())
        throw StructuralError("fisher information: form and measure live on different spaces");
    return fisher_information(Eigen::VectorXd(mu.weights().cwiseQuotient(form.measure())), form);
}

MonotoneLimitReport entropy_monotone_limit_check(const std::vector<Eigen::VectorXd>& sequence,
                                                 const Eigen::VectorXd& limit,
                                                 const Eigen::VectorXd& ref) {
    auto ent = [&ref](const Eigen::VectorXd& f) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < f.size(); ++i)
            if (f(i) > 0.0) acc += f(i) * std::log(f(i)) * ref(i);
        return acc;
    };
    MonotoneLimitReport r;
    const double target = ent(limit);
    bool up = true;
    bool down = true;
    for (std::size_t k = 0; k < sequence.size(); ++k) {
        if (sequence[k].size() != limit.size()) throw StructuralError("sequence size mismatch");
        r.gaps.push_back(std::abs(ent(sequence[k]) - target));
        if (k > 0) {
            const Eigen::VectorXd step = sequence[k] - sequence[k - 1];
            if (step.minCoeff() < -1e-15) up = false;
            if (step.maxCoeff() > 1e-15) down = false;
        }
    }
    r.monotone_input = up || down;
    r.increasing = up && !down;
    for (std::size_t k = 1; k < r.gaps.size(); ++k)
        if (r.gaps[k] > r.gaps[k - 1] + 1e-15) r.converging = false;
    return r;
}

}  // namespace rcdlab
