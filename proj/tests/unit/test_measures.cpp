#include "rcdlab/dirichlet.hpp"
#include "rcdlab/measures.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace rcdlab;
using testing_support::model;

TEST_CASE("relative entropy") {
    auto s = model(ModelKind::segment, 4);
    const ProbMeasure u = ProbMeasure::reference(s);
    CHECK(entropy(u) == doctest::Approx(0.0));
    CHECK(entropy(ProbMeasure::dirac(s, 2)) == doctest::Approx(std::log(4.0)).epsilon(1e-15));

    const double mu[] = {0.5, 0.3, 0.2};
    const double ref[] = {1.0, 2.0, 1.0};
    const double oracle = 0.5 * std::log(0.5) + 0.3 * std::log(0.15) + 0.2 * std::log(0.2);
    CHECK(relative_entropy(mu, ref).value() == doctest::Approx(oracle).epsilon(1e-15));
    CHECK(relative_entropy(mu, ref).is_finite());
}

TEST_CASE("Jensen lower bound") {
    std::mt19937_64 rng(3);
    auto s = model(ModelKind::cycle, 9);
    for (int k = 0; k < 50; ++k) {
        const ProbMeasure mu = testing_support::random_measure(s, rng, 0.3);
        CHECK(entropy(mu) >= -std::log(s->total_mass()) - 1e-14);
    }
}

TEST_CASE("change of reference is an identity") {
    std::mt19937_64 rng(11);
    auto s = model(ModelKind::segment, 16);
    for (double c : {0.0, 0.3, 1.0, 4.0})
        for (std::size_t x0 : {0u, 7u, 15u}) {
            const TiltedReference t = tilt_reference(*s, c, x0);
            CHECK(t.tilted_weights.sum() == doctest::Approx(1.0).epsilon(1e-14));
            for (int k = 0; k < 5; ++k)
                CHECK(change_of_reference_residual(testing_support::random_measure(s, rng, 0.2), t) <
                      1e-10);
        }
    const TiltedReference flat = tilt_reference(*s, 0.0, 3);
    CHECK(flat.z == doctest::Approx(s->total_mass()));
}

TEST_CASE("excess mass") {
    FiniteMMSpace raw({"a", "b", "c"}, (Eigen::MatrixXd(3, 3) << 0, 1, 2, 1, 0, 1, 2, 1, 0).finished(),
                      Eigen::VectorXd::Constant(3, 1.0 / 3.0));
    auto s = std::make_shared<const FiniteMMSpace>(raw);
    const ProbMeasure mu = ProbMeasure::dirac(s, 0);
    CHECK(excess_mass(mu, 2.0) == doctest::Approx(1.0 / 3.0));
    CHECK(excess_mass(mu, 0.0) == doctest::Approx(1.0));
    CHECK(excess_mass(mu, 3.0) == 0.0);
    double prev = 2.0;
    for (double c = 0.0; c < 4.0; c += 0.25) {
        const double e = excess_mass(mu, c);
        CHECK(e <= prev);
        prev = e;
    }
}

TEST_CASE("fisher information") {
    ModelParams p;
    auto two = model(ModelKind::two_point, 2, p);
    const DirichletForm unit = DirichletForm::unit(two);
    CHECK(fisher_information(ProbMeasure::reference(two), unit) == 0.0);
    // rho = (2, 0): Gamma(rho)(0) = (1/(2*1/2)) * 4 = 4, so 4 / 2 * 1/2 = 1
    CHECK(fisher_information(ProbMeasure::dirac(two, 0), unit) == doctest::Approx(1.0));

    // continuum: int |rho'|^2 / rho over the unit circle, rho = 1 + cos(2 pi x) / 2
    auto fisher_at = [](std::size_t n) {
        auto c = model(ModelKind::cycle, n);
        const DirichletForm f = DirichletForm::calibrated(c);
        Eigen::VectorXd rho(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i)
            rho(i) = 1.0 + 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / n);
        return fisher_information(rho, f);
    };
    // int_0^1 (pi sin)^2 / (1 + cos/2) = 2 pi^2 (2 - sqrt 3)
    const double exact = 2.0 * std::numbers::pi * std::numbers::pi * (2.0 - std::sqrt(3.0));
    const double e16 = std::abs(fisher_at(16) - exact);
    const double e32 = std::abs(fisher_at(32) - exact);
    const double e64 = std::abs(fisher_at(64) - exact);
    CHECK(e32 < e16 / 3.0);
    CHECK(e64 < e32 / 3.0);
}

TEST_CASE("monotone entropy limits") {
    auto s = model(ModelKind::segment, 10);
    Eigen::VectorXd f(10);
    for (int i = 0; i < 10; ++i) f(i) = 0.2 + 0.16 * i;
    f /= f.dot(s->measure());
    std::vector<Eigen::VectorXd> same(4, f);
    const MonotoneLimitReport r0 = entropy_monotone_limit_check(same, f, s->measure());
    for (double g : r0.gaps) CHECK(g == 0.0);

    // positive finite measures decreasing to f
    std::vector<Eigen::VectorXd> mix;
    for (int k = 1; k <= 64; ++k) mix.push_back(f + (1.0 / k) * Eigen::VectorXd::Ones(10));
    const MonotoneLimitReport r1 = entropy_monotone_limit_check(mix, f, s->measure());
    CHECK(r1.monotone_input);
    CHECK_FALSE(r1.increasing);
    CHECK(r1.converging);
    CHECK(r1.gaps.back() < 0.02 * r1.gaps.front());

    std::vector<Eigen::VectorXd> trunc;
    for (int k = 1; k <= 25; ++k) trunc.push_back(f.cwiseMin(k / 10.0));
    const MonotoneLimitReport r2 = entropy_monotone_limit_check(trunc, f, s->measure());
    CHECK(r2.increasing);
    CHECK(r2.gaps.back() == 0.0);

    std::vector<Eigen::VectorXd> zigzag{f, 2.0 * f, f};
    CHECK_FALSE(entropy_monotone_limit_check(zigzag, f, s->measure()).monotone_input);
}
