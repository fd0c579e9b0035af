#include "rcdlab/error.hpp"
#include "rcdlab/mmspace.hpp"

#include <doctest.h>

#include <cmath>

using namespace rcdlab;

TEST_CASE("one point space validates") {
    FiniteMMSpace s({"a"}, Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1));
    CHECK(validate_space(s).passed);
}

TEST_CASE("triangle violation carries its witness") {
    Eigen::MatrixXd d(3, 3);
    d << 0, 1, 5, 1, 0, 1, 5, 1, 0;
    FiniteMMSpace s({"a", "b", "c"}, d, Eigen::VectorXd::Ones(3));
    const ValidationReport r = validate_space(s);
    REQUIRE_FALSE(r.passed);
    REQUIRE(r.violations.size() == 1);
    CHECK(r.violations[0].check == "triangle");
    CHECK(r.violations[0].witness == std::vector<std::size_t>{0, 1, 2});
    CHECK(r.violations[0].magnitude == doctest::Approx(3.0));
}

TEST_CASE("dimension mismatch is structural") {
    CHECK_THROWS_AS(FiniteMMSpace({"a", "b"}, Eigen::MatrixXd::Zero(3, 3), Eigen::VectorXd::Ones(2)),
                    StructuralError);
}

TEST_CASE("random metric from a graph passes and matches Floyd-Warshall") {
    ModelParams p;
    p.seed = 7;
    const FiniteMMSpace s = make_model_space(ModelKind::random_metric, 20, p);
    CHECK(validate_space(s).passed);
    const Eigen::MatrixXd once = shortest_path_closure(s.metric());
    CHECK((once - s.metric()).cwiseAbs().maxCoeff() <= kMetricTolerance);
    CHECK((shortest_path_closure(once) - once).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("model spaces") {
    const FiniteMMSpace seg = make_model_space(ModelKind::segment, 2);
    CHECK(seg.distance(0, 1) == 1.0);
    CHECK(seg.measure()(0) == 0.5);

    const FiniteMMSpace cyc = make_model_space(ModelKind::cycle, 4);
    CHECK(cyc.distance(0, 2) == doctest::Approx(0.5));
    CHECK(cyc.distance(0, 1) == doctest::Approx(0.25));
    CHECK(validate_space(cyc).passed);

    ModelParams g;
    g.profile = MeasureProfile::Kind::gaussian;
    g.c = 2.0;
    const FiniteMMSpace gs = make_model_space(ModelKind::segment, 64, g);
    const std::size_t x0 = *gs.base_point();
    for (std::size_t i = x0; i + 1 < 64; ++i) CHECK(gs.measure()(i + 1) < gs.measure()(i));
    for (std::size_t i = x0; i > 0; --i) CHECK(gs.measure()(i - 1) < gs.measure()(i));
    CHECK(gs.measure().sum() == doctest::Approx(1.0));

    ModelParams bad;
    bad.profile = MeasureProfile::Kind::gaussian;
    bad.c = 0.0;
    CHECK_THROWS_AS(make_model_space(ModelKind::segment, 8, bad), InvalidArgument);
    CHECK_THROWS_AS(parse_model_kind("torus"), InvalidArgument);
    CHECK(validate_space(make_model_space(ModelKind::grid, 5)).passed);
}

TEST_CASE("every generated space satisfies the triangle inequality") {
    for (std::size_t n : {1u, 2u, 3u, 17u, 64u}) {
        CHECK(validate_space(make_model_space(ModelKind::segment, n)).passed);
        if (n >= 3) CHECK(validate_space(make_model_space(ModelKind::cycle, n)).passed);
    }
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        ModelParams p;
        p.seed = seed;
        CHECK(validate_space(make_model_space(ModelKind::random_metric, 40, p)).passed);
    }
}

TEST_CASE("product space") {
    const FiniteMMSpace one({"p"}, Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1));
    CHECK(product_space(one, one).size() == 1);

    const FiniteMMSpace a = make_model_space(ModelKind::segment, 2);
    const FiniteMMSpace sq = product_space(a, a);
    REQUIRE(sq.size() == 4);
    CHECK(sq.distance(0, 3) == doctest::Approx(std::sqrt(2.0)));
    CHECK(validate_space(sq).passed);

    const FiniteMMSpace c8 = make_model_space(ModelKind::cycle, 8);
    const FiniteMMSpace s5 = make_model_space(ModelKind::segment, 5);
    const FiniteMMSpace p = product_space(c8, s5);
    CHECK(validate_space(p).passed);
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 5; ++j)
            for (std::size_t k = 0; k < 8; ++k)
                for (std::size_t l = 0; l < 5; ++l) {
                    const double dp = p.distance(i * 5 + j, k * 5 + l);
                    const double dx = c8.distance(i, k);
                    const double dy = s5.distance(j, l);
                    CHECK(dp * dp == doctest::Approx(dx * dx + dy * dy).epsilon(1e-14));
                }
}

TEST_CASE("growth condition") {
    const FiniteMMSpace one({"p"}, Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Constant(1, 3.0));
    CHECK(check_growth_condition(one, 5.0, 0) == 3.0);
    ModelParams p;
    p.distance = 1.0;
    const FiniteMMSpace two = make_model_space(ModelKind::two_point, 2, p);
    CHECK(check_growth_condition(two, std::log(2.0), 0) == doctest::Approx(0.75).epsilon(1e-15));
    const double z = check_growth_condition(make_model_space(ModelKind::segment, 64), 1.0, 0);
    CHECK(z > 0.0);
    CHECK(z < 1.0);
}
