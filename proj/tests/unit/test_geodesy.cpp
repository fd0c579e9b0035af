#include "rcdlab/error.hpp"
#include "rcdlab/geodesy.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace rcdlab;
using testing_support::model;
using testing_support::random_measure;

TEST_CASE("intermediate minimiser at the endpoints") {
    auto s = model(ModelKind::segment, 5);
    std::mt19937_64 rng(3);
    const ProbMeasure mu0 = random_measure(s, rng);
    const ProbMeasure mu1 = random_measure(s, rng);
    const auto a = intermediate_entropy_min(mu0, mu1, 0.0, 1e-6);
    CHECK((a.nu.weights() - mu0.weights()).cwiseAbs().maxCoeff() < 1e-5);
    CHECK(a.certificate.entropy == doctest::Approx(entropy(mu0)).epsilon(1e-5));
    const auto b = intermediate_entropy_min(mu0, mu1, 1.0, 1e-6);
    CHECK((b.nu.weights() - mu1.weights()).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("three point segment midpoint is the middle atom") {
    auto s = model(ModelKind::segment, 3);
    const auto r = intermediate_entropy_min(ProbMeasure::dirac(s, 0), ProbMeasure::dirac(s, 2), 0.5, 0.0);
    CHECK(r.nu[1] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.certificate.entropy == doctest::Approx(std::log(3.0)).epsilon(1e-6));
    CHECK(r.certificate.dual_bound <= r.certificate.entropy + 1e-12);
    CHECK(r.certificate.gap <= 1e-8);
    CHECK(r.certificate.violation <= 1e-8);
}

TEST_CASE("two point midpoint needs slack") {
    auto s = model(ModelKind::segment, 2);
    const ProbMeasure a = ProbMeasure::dirac(s, 0);
    const ProbMeasure b = ProbMeasure::dirac(s, 1);
    const double eps = minimal_epsilon(a, b, 0.5);
    CHECK(eps == doctest::Approx(std::sqrt(0.5) - 0.5).epsilon(1e-7));
    CHECK_THROWS_AS(intermediate_entropy_min(a, b, 0.5, 0.5 * eps), InfeasibleIntermediate);
    const auto r = intermediate_entropy_min(a, b, 0.5, eps + 1e-6);
    CHECK(r.nu[0] == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("three point grid oracle") {
    Eigen::MatrixXd d(3, 3);
    d << 0, 1.0, 1.6, 1.0, 0, 1.1, 1.6, 1.1, 0;
    auto s = std::make_shared<const FiniteMMSpace>(
        FiniteMMSpace({"a", "b", "c"}, d, Eigen::Vector3d(0.2, 0.5, 0.3)));
    const ProbMeasure mu0(s, Eigen::Vector3d(0.7, 0.3, 0.0));
    const ProbMeasure mu1(s, Eigen::Vector3d(0.0, 0.2, 0.8));
    const double t = 0.4;
    const double eps = minimal_epsilon(mu0, mu1, t) + 0.05;
    const auto r = intermediate_entropy_min(mu0, mu1, t, eps);
    const IntermediateSpec spec{t, eps, w2(mu0, mu1).value};
    double best = 1e300;
    const int steps = 1000;
    for (int i = 0; i <= steps; ++i)
        for (int j = 0; i + j <= steps; ++j) {
            const ProbMeasure nu(s, Eigen::Vector3d(i, j, steps - i - j) / steps);
            if (intermediate_violation(mu0, mu1, nu, spec) <= 0.0) best = std::min(best, entropy(nu));
        }
    CHECK(r.certificate.entropy <= best + 1e-9);
    CHECK(r.certificate.entropy >= best - 2e-3);
}

TEST_CASE("constant and trivial geodesics") {
    auto s = model(ModelKind::segment, 6);
    std::mt19937_64 rng(5);
    const ProbMeasure mu = random_measure(s, rng);
    const GeodesicTrace c = build_good_geodesic(mu, mu, 2);
    CHECK(c.times.size() == 5);
    for (double e : c.entropies) CHECK(e == doctest::Approx(entropy(mu)).epsilon(1e-6));
    CHECK(cd_convexity_check(c, 0.0).worst <= 1e-6);
    CHECK(cd_convexity_check(c, -1.0).worst <= 1e-6);

    const GeodesicTrace e = build_good_geodesic(mu, random_measure(s, rng), 0);
    CHECK(e.times == std::vector<double>{0.0, 1.0});
}

TEST_CASE("diracs at the ends of segment(9)") {
    auto s = model(ModelKind::segment, 9);
    const GeodesicTrace tr = build_good_geodesic(ProbMeasure::dirac(s, 0), ProbMeasure::dirac(s, 8), 3);
    REQUIRE(tr.times.size() == 9);
    CHECK(tr.epsilon_used <= 1e-5);
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
        CHECK(tr.measures[k][k] == doctest::Approx(1.0).epsilon(1e-3));
        CHECK(tr.w2_from_start[k] == doctest::Approx(tr.times[k] * tr.W).epsilon(1e-5));
        CHECK(std::isfinite(tr.sup_density[k]));
    }
    for (const auto& cert : tr.certificates)
        if (cert) CHECK(cert->gap <= 1e-8);

    const KantorovichPair pair = kantorovich_potentials(tr.measures.front(), tr.measures.back());
    const BrenierProbe probe = metric_brenier_probe(tr, pair);
    REQUIRE(!probe.times.empty());
    // quotient along the straight curve is W - t W / 2, up to the auto slack
    for (std::size_t k = 0; k < probe.times.size(); ++k)
        CHECK(probe.gaps[k] == doctest::Approx(probe.times[k] / 2).epsilon(1e-4));
}

TEST_CASE("length bands") {
    auto s = model(ModelKind::segment, 16);
    Eigen::VectorXd a = Eigen::VectorXd::Zero(16), b = Eigen::VectorXd::Zero(16);
    a(0) = a(10) = 0.5;
    b(1) = b(15) = 0.5;
    const ProbMeasure mu0(s, a), mu1(s, b);
    const GeodesicTrace tr = build_good_geodesic(mu0, mu1, 2);
    const TransportPlan plan = w2(mu0, mu1).plan;

    const auto one = length_band_split(plan, tr, {{0.0, 2.0}}, 2);
    REQUIRE(one.pieces.size() == 1);
    CHECK(one.pieces[0].mass == doctest::Approx(1.0));
    CHECK((one.pieces[0].sub_plan.coupling - plan.coupling).cwiseAbs().maxCoeff() == 0.0);

    const auto two = length_band_split(plan, tr, {{0.0, 3.0 / 15}, {3.0 / 15, 2.0}}, 2);
    REQUIRE(two.pieces.size() == 2);
    CHECK(two.pieces[0].mass == doctest::Approx(0.5));
    CHECK(two.pieces[1].mass == doctest::Approx(0.5));
    CHECK(two.max_overlap <= 1e-8);

    CHECK_THROWS_AS(length_band_split(plan, tr, {{0.0, 0.1}}, 2), InvalidArgument);
}

TEST_CASE("surgery identities") {
    auto s = model(ModelKind::segment, 9);
    std::mt19937_64 rng(8);
    const ProbMeasure mu0 = random_measure(s, rng);
    const ProbMeasure mu1 = random_measure(s, rng);
    const GeodesicTrace tr = build_good_geodesic(mu0, mu1, 1);
    const DiscreteCurvePlan plan = curve_plan(tr);
    const ProbMeasure mid = plan.marginal(1, s);

    const auto full = combine_restricted(plan, std::vector<double>(plan.curves.size(), 1.0), mid, 1, mu0, mu1);
    CHECK((full.measure.weights() - mid.weights()).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(full.c == doctest::Approx(1.0));

    const auto half = combine_restricted(plan, std::vector<double>(plan.curves.size(), 0.5), mid, 1, mu0, mu1);
    CHECK((half.measure.weights() - mid.weights()).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(half.epsilon_prime <= tr.epsilon_used + 1e-8);

    CHECK_THROWS(combine_restricted(plan, std::vector<double>(plan.curves.size(), 0.0), mid, 1, mu0, mu1));
}
