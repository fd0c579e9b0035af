#include "rcdlab/error.hpp"
#include "rcdlab/evi.hpp"
#include "rcdlab/ot.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace rcdlab;
using testing_support::model;
using testing_support::random_measure;

namespace {

SpacePtr two_point() {
    Eigen::MatrixXd d(2, 2);
    d << 0, 1, 1, 0;
    return std::make_shared<const FiniteMMSpace>(
        FiniteMMSpace({"a", "b"}, d, Eigen::Vector2d(0.5, 0.5), std::vector<Edge>{{0, 1, 1.0}}));
}

ProbMeasure cosine(const SpacePtr& s, double amp) {
    const auto n = static_cast<Eigen::Index>(s->size());
    Eigen::VectorXd f(n);
    for (Eigen::Index i = 0; i < n; ++i) f(i) = 1.0 + amp * std::cos(2 * std::numbers::pi * i / static_cast<double>(n));
    return ProbMeasure::normalized(s, f.cwiseProduct(s->measure()));
}

}  // namespace

TEST_CASE("report plumbing") {
    const InequalityReport r = make_report("x", {1, 2, 3}, {-1.0, 0.5, 0.2});
    CHECK(r.worst == 0.5);
    CHECK_FALSE(r.trend);
    InequalityReport a = r;
    CHECK(assert_tolerance(a, 0.4).status == CheckStatus::fail);
    CHECK(assert_tolerance(a, 0.5).status == CheckStatus::pass);
    const InequalityReport two = family_report("f", {16, 32}, {r, r});
    CHECK_FALSE(two.trend);
    const InequalityReport fam = family_report("f", {16, 32, 64}, {make_report("a", {0}, {3.0}),
                                                                   make_report("b", {0}, {2.0}),
                                                                   make_report("c", {0}, {1.0})});
    REQUIRE(fam.trend);
    CHECK(*fam.trend < 0.0);
    const auto t = centred_times({0.02, 0.021}, 1e-3);
    CHECK(t.size() == 4);
    CHECK_THROWS_AS(centred_times({0.0005}, 1e-3), InvalidArgument);
}

TEST_CASE("evi on stationary flows") {
    auto s = model(ModelKind::cycle, 12);
    const DirichletForm form = DirichletForm::calibrated(s);
    const ProbMeasure ref = ProbMeasure::normalized(s, s->measure());
    const FlowTrace tr = semigroup_flow(form, ref, centred_times({0.05}, 1e-3));
    CHECK(std::abs(evi_check(tr, ref, 0.0, 1e-3).worst) < 1e-12);
    std::mt19937_64 rng(4);
    const ProbMeasure sigma = random_measure(s, rng);
    const InequalityReport r = evi_check(tr, sigma, 0.0, 1e-3);
    CHECK(r.worst == doctest::Approx(entropy(ref) - entropy(sigma)).epsilon(1e-10));
    CHECK(r.worst <= 0.0);
    FlowTrace shorter = tr;
    shorter.times.resize(2);
    CHECK_THROWS_AS(evi_check(shorter, sigma, 0.0, 1e-3), InvalidArgument);
}

TEST_CASE("evi along a cycle flow") {
    auto s = model(ModelKind::cycle, 32);
    const DirichletForm form = DirichletForm::calibrated(s);
    const ProbMeasure mu = cosine(s, 0.5);
    const FlowTrace tr = semigroup_flow(form, mu, centred_times({0.02, 0.06, 0.1}, 1e-3));
    const ProbMeasure sigma = semigroup_flow(form, mu, {0.05}).measures[0];
    const InequalityReport r = evi_check(tr, sigma, 0.0, 1e-3);
    CHECK(r.grid.size() == 3);
    CHECK(r.worst < 5e-3);
    // K only moves the W2 term
    CHECK(evi_check(tr, sigma, -1.0, 1e-3).worst <= r.worst);
}

TEST_CASE("ede on a stationary flow and a two point flow") {
    auto s = model(ModelKind::cycle, 8);
    const DirichletForm form = DirichletForm::calibrated(s);
    const ProbMeasure ref = ProbMeasure::normalized(s, s->measure());
    std::vector<double> times{0.0, 0.01, 0.02};
    CHECK(ede_check(semigroup_flow(form, ref, times)).worst < 1e-12);

    const DirichletForm tp(two_point(), {{0, 1, 1.0}});
    const ProbMeasure mu(tp.space_ptr(), Eigen::Vector2d(0.8, 0.2));
    // W2^2 is linear in the moved mass here, so the metric speed term blows up like 1/dt
    std::vector<double> coarse, fine;
    for (int k = 0; k <= 10; ++k) coarse.push_back(1e-3 * k);
    for (int k = 0; k <= 100; ++k) fine.push_back(1e-4 * k);
    const InequalityReport ec = ede_check(semigroup_flow(tp, mu, coarse));
    const InequalityReport ef = ede_check(semigroup_flow(tp, mu, fine));
    CHECK(ef.worst > 5.0 * ec.worst);
    CHECK(ef.grid.size() == 100);
    FlowTrace broken = semigroup_flow(tp, mu, fine);
    broken.fisher.clear();
    CHECK_THROWS_AS(ede_check(broken), InvalidArgument);
}

TEST_CASE("dW2 derivative on two points against closed forms") {
    const DirichletForm tp(two_point(), {{0, 1, 1.0}});
    const ProbMeasure mu(tp.space_ptr(), Eigen::Vector2d(0.8, 0.2));
    const ProbMeasure sigma = ProbMeasure::dirac(tp.space_ptr(), 1);
    const double dt = 1e-4;
    const FlowTrace tr = semigroup_flow(tp, mu, centred_times({0.05, 0.2}, dt));
    const Dw2Report lm = dw2_derivative_check(tp, tr, sigma, dt, WeightTransfer::log_mean);
    const Dw2Report mn = dw2_derivative_check(tp, tr, sigma, dt, WeightTransfer::min);
    REQUIRE(lm.derivative.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        const double t = lm.identity.grid[i];
        const double fa = 1.0 + 0.6 * std::exp(-4 * t), fb = 1.0 - 0.6 * std::exp(-4 * t);
        CHECK(std::abs(lm.derivative[i] + 0.6 * std::exp(-4 * t)) < 1e-4);
        CHECK(std::abs(mn.energy[i] + 0.5 * std::min(fa, fb) * std::log(fa / fb)) < 1e-10);
    }
    CHECK(lm.identity.worst < 1e-4);
    CHECK(mn.identity.worst > 1e-2);
    CHECK(lm.envelope.worst <= 0.0);
}

TEST_CASE("dW2 derivative with a stationary coincidence") {
    auto s = model(ModelKind::cycle, 8);
    const DirichletForm form = DirichletForm::calibrated(s);
    const ProbMeasure ref = ProbMeasure::normalized(s, s->measure());
    const FlowTrace tr = semigroup_flow(form, ref, centred_times({0.05}, 1e-3));
    const Dw2Report r = dw2_derivative_check(form, tr, ref, 1e-3);
    CHECK(r.identity.worst < 1e-12);
    CHECK(std::abs(r.energy[0]) < 1e-12);
}

TEST_CASE("entropy inequality") {
    auto s = model(ModelKind::cycle, 16);
    const DirichletForm form = DirichletForm::calibrated(s);
    const ProbMeasure eta = cosine(s, 0.4);
    EntropyInequalityDetail det;
    const InequalityReport same = entropy_inequality_check(form, eta, eta, 0.0, WeightTransfer::min, &det);
    CHECK(std::abs(det.lhs) < 1e-12);
    CHECK(det.rhs <= 1e-12);
    CHECK(same.worst <= 1e-12);

    std::mt19937_64 rng(9);
    const ProbMeasure sigma = random_measure(s, rng);
    double prev = 1e300;
    for (double K : {2.0, 0.0, -2.0, -50.0}) {
        // positive residual = violation; lowering K can only add slack
        const double worst = entropy_inequality_check(form, eta, sigma, K).worst;
        CHECK(worst <= prev + 1e-12);
        prev = worst;
    }
    Eigen::VectorXd w = eta.weights();
    w(3) = 0.0;
    CHECK_THROWS_AS(entropy_inequality_check(form, ProbMeasure::normalized(s, w), sigma, 0.0), InvalidArgument);
}

TEST_CASE("dual face search on a near diagonal plan") {
    // a small perturbation of eta keeps most mass in place, so the plan splits into blocks
    auto s = model(ModelKind::cycle, 8);
    const DirichletForm form = DirichletForm::calibrated(s);
    const ProbMeasure eta = cosine(s, 0.4);
    Eigen::VectorXd w = eta.weights();
    w(2) *= 1.05;
    w(6) *= 0.95;
    const ProbMeasure sigma = ProbMeasure::normalized(s, w);
    EntropyInequalityDetail det;
    const InequalityReport r = entropy_inequality_check(form, eta, sigma, 1e4, WeightTransfer::min, &det);
    REQUIRE(det.rhs_first > det.lhs);
    CHECK(det.components > 1);
    CHECK(det.rhs <= det.rhs_first + 1e-12);
    CHECK(r.worst == doctest::Approx(det.rhs - det.lhs));
    CHECK(r.status != CheckStatus::inconclusive);
    const InequalityReport capped = entropy_inequality_check(form, eta, sigma, 1e4, WeightTransfer::min, nullptr, 1);
    CHECK(capped.status == CheckStatus::inconclusive);
}

TEST_CASE("verification battery") {
    auto s = model(ModelKind::cycle, 16);
    VerifySuite suite;
    suite.samples = 3;
    const VerifyReport r = rcd_verify(DirichletForm::calibrated(s), suite);
    REQUIRE(r.checks.size() == 3);
    CHECK(r.checks[0].name == "cheeger_parallelogram");
    CHECK(r.checks[1].name == "evi");
    CHECK(r.checks[2].name == "heat_additivity");
    for (const auto& c : r.checks) CHECK(c.status == CheckStatus::pass);
    CHECK(r.verdict);

    const VerifyReport again = rcd_verify(DirichletForm::calibrated(s), suite);
    CHECK(again.checks[1].worst == r.checks[1].worst);

    auto tp = model(ModelKind::two_point, 2);
    suite.assert_evi = false;
    const VerifyReport two = rcd_verify(DirichletForm::calibrated(tp), suite);
    CHECK(two.checks[1].status == CheckStatus::report);
    CHECK(two.verdict);
}
