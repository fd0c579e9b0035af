#include "rcdlab/dirichlet.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace rcdlab;
using testing_support::model;

namespace {

DirichletForm two_point_form() {
    Eigen::MatrixXd d(2, 2);
    d << 0, 1, 1, 0;
    auto s = std::make_shared<const FiniteMMSpace>(
        FiniteMMSpace({"a", "b"}, d, Eigen::Vector2d(0.5, 0.5), std::vector<Edge>{{0, 1, 1.0}}));
    return DirichletForm(s, {{0, 1, 1.0}});
}

Eigen::VectorXd random_vec(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (auto& x : v) x = g(rng);
    return v;
}

}  // namespace

TEST_CASE("two point hand values") {
    const DirichletForm f = two_point_form();
    const Eigen::Vector2d x(0.0, 1.0);
    CHECK(f.gamma(x)(0) == doctest::Approx(1.0));
    CHECK(f.gamma(x)(1) == doctest::Approx(1.0));
    CHECK(f.cheeger(x) == doctest::Approx(0.5));
    CHECK(f.laplacian(x)(0) == doctest::Approx(2.0));
    CHECK(f.laplacian(x)(1) == doctest::Approx(-2.0));
    CHECK(f.cheeger(Eigen::Vector2d(3.0, 3.0)) == 0.0);

    const IntrinsicMetric im = intrinsic_metric(f);
    CHECK(im.distance(0, 1) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(im.max_constraint <= 1.0 + 1e-9);
}

TEST_CASE("form identities on a random cycle") {
    auto s = model(ModelKind::cycle, 8);
    const DirichletForm form = DirichletForm::calibrated(s);
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 10; ++rep) {
        const Eigen::VectorXd f = random_vec(8, rng), g = random_vec(8, rng);
        const Eigen::VectorXd m = form.measure();
        CHECK(std::abs(form.gamma(f, g).dot(m) - form.energy(f, g)) < 1e-12);
        CHECK(std::abs(g.dot(form.laplacian(f).cwiseProduct(m)) + form.energy(f, g)) < 1e-12);
        CHECK(std::abs(form.laplacian(f).dot(m)) < 1e-12);
        const Eigen::VectorXd pol = 0.25 * (form.gamma(f + g) - form.gamma(f - g));
        CHECK((pol - form.gamma(f, g)).cwiseAbs().maxCoeff() < 1e-12);
        const Eigen::VectorXd cs = form.gamma(f).cwiseProduct(form.gamma(g)).cwiseSqrt();
        CHECK((form.gamma(f, g).cwiseAbs() - cs).maxCoeff() <= 1e-12);
        CHECK(std::abs(form.cheeger(f + g) + form.cheeger(f - g) - 2 * form.cheeger(f) - 2 * form.cheeger(g)) <
              1e-12);
        CHECK(form.gamma(f, Eigen::VectorXd::Constant(8, 2.0)).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("cheeger energy of a sine converges") {
    std::vector<double> err;
    for (std::size_t n : {16, 32, 64}) {
        auto s = model(ModelKind::cycle, n);
        const DirichletForm form = DirichletForm::calibrated(s);
        Eigen::VectorXd f(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) f(i) = std::sin(2 * std::numbers::pi * i / n);
        // 1/2 int_0^1 |f'|^2 against m(X) = 1
        err.push_back(std::abs(form.cheeger(f) - std::numbers::pi * std::numbers::pi));
    }
    CHECK(err[1] < err[0] / 3);
    CHECK(err[2] < err[1] / 3);
}

TEST_CASE("transfer and chain rule") {
    std::vector<double> res, chain;
    for (std::size_t n : {16, 32, 64}) {
        auto s = model(ModelKind::cycle, n);
        const DirichletForm form = DirichletForm::calibrated(s);
        Eigen::VectorXd g(static_cast<Eigen::Index>(n)), phi(g.size());
        for (std::size_t i = 0; i < n; ++i) {
            const double x = 2 * std::numbers::pi * i / n;
            g(i) = 1 + 0.5 * std::cos(x);
            phi(i) = std::sin(x + 0.7);
        }
        g /= g.dot(form.measure());
        const TransferResult r = transfer_identity_check(form, g, phi);
        CHECK(r.in_domain);
        res.push_back(r.residual);
        const ScalarMap lg{[](double v) { return std::log(v); }, [](double v) { return 1.0 / v; }};
        chain.push_back(chain_rule_check(form, g, lg).integrated_gap);
    }
    CHECK(res[1] < res[0]);
    CHECK(res[2] < res[1]);
    CHECK(chain[1] < chain[0]);
    CHECK(chain[2] < chain[1]);

    auto s = model(ModelKind::cycle, 8);
    const DirichletForm form = DirichletForm::calibrated(s);
    const Eigen::VectorXd c = Eigen::VectorXd::Ones(8);
    std::mt19937_64 rng(2);
    const Eigen::VectorXd phi = random_vec(8, rng);
    CHECK(transfer_identity_check(form, c, phi).residual < 1e-14);
    CHECK(transfer_identity_check(form, c + 0.1 * phi.cwiseAbs(), c).residual < 1e-14);

    const ScalarMap affine{[](double v) { return 3 * v - 1; }, [](double) { return 3.0; }};
    const auto rep = chain_rule_check(form, phi, affine);
    CHECK(rep.pointwise_gap < 1e-12);
    CHECK(rep.integrated_gap < 1e-12);
}

TEST_CASE("weighted form locality") {
    auto s = model(ModelKind::segment, 6);
    const DirichletForm form = DirichletForm::calibrated(s);
    Eigen::VectorXd w = Eigen::VectorXd::Ones(6);
    w(0) = 0.0;
    const ProbMeasure rho = ProbMeasure::normalized(s, w.cwiseProduct(s->measure()));
    const DirichletForm wf = weighted_form(form, rho);
    std::mt19937_64 rng(4);
    const Eigen::VectorXd f = random_vec(6, rng);
    CHECK(wf.gamma(f)(0) == 0.0);
    // g is constant away from the hole, so Gamma is unchanged there
    for (Eigen::Index x = 2; x < 6; ++x) CHECK(wf.gamma(f)(x) == doctest::Approx(form.gamma(f)(x)).epsilon(1e-12));
}

TEST_CASE("mod2 oracles") {
    const Eigen::VectorXd m = Eigen::Vector4d(0.1, 0.2, 0.3, 0.4);
    CHECK(mod2({}, m).value == 0.0);
    const Eigen::VectorXd l1 = Eigen::Vector4d(0.5, 1.0, 0.0, 0.0);
    const double single = 1.0 / (0.25 / 0.1 + 1.0 / 0.2);
    const Mod2Result a = mod2({l1}, m);
    CHECK(a.value == doctest::Approx(single).epsilon(1e-10));
    CHECK(a.kkt_residual < 1e-10);
    const Eigen::VectorXd l2 = Eigen::Vector4d(0.0, 0.0, 0.7, 0.2);
    const double other = 1.0 / (0.49 / 0.3 + 0.04 / 0.4);
    CHECK(mod2({l1, l2}, m).value == doctest::Approx(single + other).epsilon(1e-10));
    CHECK(mod2({l1, l2}, m).value >= a.value);
    CHECK(mod2({Eigen::Vector4d::Zero()}, m).infinite);
}

TEST_CASE("locality and essential bound") {
    auto s = model(ModelKind::segment, 10);
    const DirichletForm form = DirichletForm::calibrated(s);
    std::mt19937_64 rng(6);
    Eigen::VectorXd f1 = random_vec(10, rng), f2 = f1;
    for (Eigen::Index i = 6; i < 10; ++i) f2(i) = f1(i) + 1.0 + i;
    CHECK(locality_check(form, f1, f2) == 0.0);
    CHECK(locality_check(form, f1, f1) == 0.0);

    Eigen::VectorXd g = Eigen::VectorXd::Ones(10) + 0.1 * f1.cwiseAbs();
    g /= g.dot(form.measure());
    const Eigen::VectorXd phi = random_vec(10, rng);
    const auto same = essential_bound_check(form, g, g, phi);
    CHECK(same.lhs == 0.0);
    CHECK(same.rhs == 0.0);
    Eigen::VectorXd gp = g;
    gp(4) *= 1.3;
    gp /= gp.dot(form.measure());
    CHECK(essential_bound_check(form, g, gp, phi).residual <= 1e-12);
}

TEST_CASE("intrinsic metric of a calibrated segment") {
    auto s = model(ModelKind::segment, 16);
    const IntrinsicMetric im = intrinsic_metric(DirichletForm::calibrated(s));
    const double h = s->distance(0, 1);
    CHECK(im.max_constraint <= 1.0 + 1e-9);
    // one varying edge at a vertex: Gamma = a^2 / (2 h^2), so neighbours sit sqrt 2 h apart
    CHECK(im.distance(0, 1) == doctest::Approx(std::sqrt(2.0) * h).epsilon(1e-6));
    CHECK(im.distance(7, 8) == doctest::Approx(std::sqrt(2.0) * h).epsilon(1e-6));
    CHECK(im.distance(0, 15) >= 1.0);
    for (Eigen::Index i = 0; i < 16; ++i)
        for (Eigen::Index j = 0; j < 16; ++j)
            for (Eigen::Index k = 0; k < 16; ++k)
                CHECK(im.distance(i, k) <= im.distance(i, j) + im.distance(j, k) + 1e-8);
}
