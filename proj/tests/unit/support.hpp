#pragma once

#include "rcdlab/measures.hpp"

#include <Eigen/Dense>

#include <memory>
#include <random>

namespace testing_support {

inline rcdlab::SpacePtr model(rcdlab::ModelKind kind, std::size_t n, rcdlab::ModelParams p = {}) {
    return std::make_shared<const rcdlab::FiniteMMSpace>(rcdlab::make_model_space(kind, n, p));
}

inline rcdlab::ProbMeasure random_measure(const rcdlab::SpacePtr& s, std::mt19937_64& rng,
                                          double zero_probability = 0.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::VectorXd w(static_cast<Eigen::Index>(s->size()));
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = u(rng) < zero_probability ? 0.0 : u(rng) + 1e-3;
    if (w.sum() == 0.0) w(0) = 1.0;
    return rcdlab::ProbMeasure::normalized(s, w);
}

}  // namespace testing_support
