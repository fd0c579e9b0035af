#include "rcdlab/error.hpp"
#include "rcdlab/ot.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace rcdlab;
using testing_support::model;
using testing_support::random_measure;

TEST_CASE("w2 of identical measures and of atoms") {
    auto s = model(ModelKind::segment, 6);
    std::mt19937_64 rng(1);
    const ProbMeasure mu = random_measure(s, rng);
    const W2Result same = w2(mu, mu);
    CHECK(same.value == doctest::Approx(0.0).epsilon(1e-12));
    CHECK((same.plan.coupling - Eigen::MatrixXd(mu.weights().asDiagonal())).cwiseAbs().maxCoeff() <
          1e-15);

    const W2Result atoms = w2(ProbMeasure::dirac(s, 1), ProbMeasure::dirac(s, 4));
    CHECK(atoms.value == doctest::Approx(s->distance(1, 4)));
    CHECK(atoms.plan.coupling(1, 4) == 1.0);
}

TEST_CASE("three point vertex enumeration") {
    Eigen::MatrixXd d(3, 3);
    d << 0, 1.0, 1.7, 1.0, 0, 0.9, 1.7, 0.9, 0;
    auto s = std::make_shared<const FiniteMMSpace>(FiniteMMSpace({"a", "b", "c"}, d, Eigen::VectorXd::Ones(3)));
    const ProbMeasure mu(s, Eigen::Vector3d(0.5, 0.5, 0.0));
    const ProbMeasure nu(s, Eigen::Vector3d(0.0, 0.5, 0.5));
    // vertices: a->b, b->c  or  a->c, b stays
    const double v1 = 0.5 * (1.0 + 0.81);
    const double v2 = 0.5 * 1.7 * 1.7;
    CHECK(w2(mu, nu).plan.cost == doctest::Approx(std::min(v1, v2)).epsilon(1e-15));
}

TEST_CASE("strong duality and metric properties on random spaces") {
    std::mt19937_64 rng(42);
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        ModelParams p;
        p.seed = seed;
        auto s = model(ModelKind::random_metric, 12, p);
        const ProbMeasure mu = random_measure(s, rng, 0.3);
        const ProbMeasure nu = random_measure(s, rng, 0.3);
        const KantorovichPair k = kantorovich_potentials(mu, nu, std::size_t{0});
        CHECK(std::abs(k.gap) <= 1e-9 * std::max(1.0, k.primal));
        CHECK(dual_feasibility_violation(*s, k) <= 1e-9);
        CHECK(k.phi(0) == 0.0);
        const W2Result r = w2(mu, nu);
        CHECK(marginal_residual(r.plan, mu, nu) <= 1e-10);
        const SlacknessReport sl = check_slackness(*s, k, r.plan);
        CHECK(sl.complementary_residual <= 1e-8);
        CHECK(w2(nu, mu).value == doctest::Approx(r.value).epsilon(1e-12));
        const ProbMeasure rho = random_measure(s, rng, 0.3);
        CHECK(w2(mu, rho).value <= w2(mu, nu).value + w2(nu, rho).value + 1e-8);
    }
}

TEST_CASE("gauge bound on psi") {
    std::mt19937_64 rng(5);
    auto s = model(ModelKind::cycle, 10);
    const ProbMeasure mu = random_measure(s, rng);
    const ProbMeasure nu = random_measure(s, rng, 0.5);
    const std::size_t y0 = 3;
    const KantorovichPair k = kantorovich_potentials(mu, nu, y0);
    double bound = 0.0;
    for (std::size_t y = 0; y < 10; ++y) bound = std::max(bound, 0.5 * std::pow(s->distance(y0, y), 2));
    for (std::size_t y = 0; y < 10; ++y) {
        if (nu[y] > 0.0) {
            CHECK(k.psi(y) <= bound + 1e-12);
        } else {
            CHECK(std::isinf(k.psi(y)));
            CHECK(k.psi(y) < 0.0);
        }
    }
    const Eigen::VectorXd again = c_transform(*s, k.psi, nu.support());
    CHECK((again - k.phi).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("c-transform") {
    auto s = model(ModelKind::segment, 8);
    std::vector<std::size_t> all(8);
    for (std::size_t i = 0; i < 8; ++i) all[i] = i;
    CHECK(c_transform(*s, Eigen::VectorXd::Zero(8), all).cwiseAbs().maxCoeff() == 0.0);
    CHECK((c_transform(*s, Eigen::VectorXd::Constant(8, 2.5), all).array() + 2.5).abs().maxCoeff() == 0.0);
    const std::size_t end[] = {7};
    const Eigen::VectorXd phi = c_transform(*s, Eigen::VectorXd::Zero(8), end);
    for (std::size_t x = 0; x < 8; ++x) CHECK(phi(x) == doctest::Approx(0.5 * std::pow(s->distance(x, 7), 2)));
    CHECK_THROWS_AS(c_transform(*s, Eigen::VectorXd::Zero(8), std::span<const std::size_t>{}), InvalidArgument);

    // three rounds equal one
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::VectorXd psi(8);
    for (int i = 0; i < 8; ++i) psi(i) = u(rng);
    const Eigen::VectorXd p1 = c_transform(*s, psi, all);
    const Eigen::VectorXd p3 = c_transform(*s, c_transform(*s, p1, all), all);
    CHECK((p3 - p1).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("slackness residual detects perturbation") {
    std::mt19937_64 rng(2);
    auto s = model(ModelKind::segment, 7);
    const ProbMeasure mu = random_measure(s, rng);
    const ProbMeasure nu = random_measure(s, rng);
    KantorovichPair k = kantorovich_potentials(mu, nu, std::size_t{0});
    const W2Result r = w2(mu, nu);
    CHECK(check_slackness(*s, k, r.plan).complementary_residual <= 1e-8);
    k.phi(2) += 0.1;
    CHECK(check_slackness(*s, k, r.plan).complementary_residual >= 0.1 - 1e-8);

    KantorovichPair shifted = kantorovich_potentials(mu, nu, std::size_t{0});
    const double dv = shifted.dual_value;
    shifted.phi.array() += 0.37;
    shifted.psi.array() -= 0.37;
    CHECK(dual_value(shifted, mu, nu) == doctest::Approx(dv).epsilon(1e-14));
}

TEST_CASE("joint convexity of W2 squared") {
    std::mt19937_64 rng(17);
    auto s = model(ModelKind::random_metric, 10, ModelParams{});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 20; ++k) {
        const ProbMeasure a0 = random_measure(s, rng, 0.3), a1 = random_measure(s, rng, 0.3);
        const ProbMeasure b0 = random_measure(s, rng, 0.3), b1 = random_measure(s, rng, 0.3);
        const double l = u(rng);
        const ProbMeasure ma(s, l * a0.weights() + (1 - l) * a1.weights());
        const ProbMeasure mb(s, l * b0.weights() + (1 - l) * b1.weights());
        CHECK(w2_squared(ma, mb) <= l * w2_squared(a0, b0) + (1 - l) * w2_squared(a1, b1) + 1e-8);
    }
}

TEST_CASE("potential stability") {
    auto s = model(ModelKind::segment, 12);
    Eigen::VectorXd f(12);
    for (int i = 0; i < 12; ++i) f(i) = 1.0 + 0.5 * std::sin(i);
    f /= f.dot(s->measure());
    Eigen::VectorXd sw = Eigen::VectorXd::Zero(12);
    sw(3) = 0.5;
    sw(4) = 0.5;
    const ProbMeasure sigma(s, sw);
    const StabilityReport constant = potential_stability_probe(s, {f, f, f}, f, sigma, 0);
    for (double g : constant.value_gaps) CHECK(g == 0.0);

    std::vector<Eigen::VectorXd> seq;
    for (int n = 1; n <= 40; ++n) seq.push_back((1.0 - 1.0 / n) * f + (1.0 / n) * Eigen::VectorXd::Ones(12));
    const StabilityReport mixed = potential_stability_probe(s, seq, f, sigma, 0);
    CHECK(mixed.values_converge);
    CHECK(mixed.value_gaps.back() < 0.05 * mixed.value_gaps.front());
}

TEST_CASE("transport simplex handles degenerate marginals") {
    Eigen::MatrixXd c = Eigen::MatrixXd::Ones(4, 4) - Eigen::MatrixXd::Identity(4, 4);
    const Eigen::VectorXd a = Eigen::VectorXd::Constant(4, 0.25);
    const TransportSolution sol = solve_transport(c, a, a);
    CHECK(sol.cost == doctest::Approx(0.0));
    CHECK(sol.degenerate);
}

TEST_CASE("transport with tiny masses matches the monotone coupling on a line") {
    // roundoff in tiny masses once broke the starting tree
    const Eigen::VectorXd a = (Eigen::VectorXd(9) << 5.7599561478416585e-61, 4.8154709138330705e-28,
                               3.3639248193056948e-08, 0.19635489320848307, 0.30364507315226874,
                               0.31246513915355278, 0.18154311775157775, 0.0059740901263072689,
                               1.7652968562247302e-05)
                                  .finished();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(9);
    b(6) = 0.5;
    b(7) = 0.5;
    Eigen::MatrixXd cost(9, 9);
    for (int i = 0; i < 9; ++i)
        for (int j = 0; j < 9; ++j) cost(i, j) = std::pow((i - j) / 8.0, 2);
    const TransportSolution s = solve_transport(cost, a, b * a.sum());

    // north-west corner on sorted supports is optimal in one dimension
    Eigen::VectorXd ra = a;
    Eigen::VectorXd rb = b * a.sum();
    double monotone = 0.0;
    for (int i = 0, j = 0; i < 9 && j < 9;) {
        const double x = std::min(ra(i), rb(j));
        monotone += x * cost(i, j);
        ra(i) -= x;
        rb(j) -= x;
        if (ra(i) <= rb(j)) ++i; else ++j;
    }
    CHECK(s.cost == doctest::Approx(monotone).epsilon(1e-12));
}
