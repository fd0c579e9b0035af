#include "rcdlab/cd_algebra.hpp"

#include <boost/multiprecision/cpp_int.hpp>
#include <doctest.h>

#include <random>

using rational = boost::multiprecision::cpp_rational;
using namespace rcdlab;

TEST_CASE("equality at every level composes to equality everywhere") {
    const rational e0(3, 7), e1(-5, 11), W(13, 10), K(-2, 3);
    const auto m = compose_dyadic<rational>(e0, e1, W, K, 6);
    CHECK(m.times.size() == 65);
    const auto r = composition_residual(m);
    CHECK(r.worst_global == 0);
    CHECK(r.worst_triple == 0);
    CHECK(r.triples == 43680);
}

TEST_CASE("nonpositive local slack keeps the global inequality") {
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> num(0, 40);
    const rational e0(1, 2), e1(2), W(1), K(1, 4);
    const auto m = compose_dyadic<rational>(e0, e1, W, K, 5, [&](std::size_t, const rational&) {
        return rational(-num(rng), 1000);
    });
    const auto r = composition_residual(m);
    CHECK(r.worst_global <= 0);
}

TEST_CASE("positive slack is rejected") {
    CHECK_THROWS(compose_dyadic<rational>(rational(0), rational(0), rational(1), rational(0), 1,
                                          [](std::size_t, const rational&) { return rational(1, 3); }));
}

TEST_CASE("doubles reproduce the rational composition to rounding") {
    const auto m = compose_dyadic<double>(0.3, -0.1, 0.7, 2.0, 6);
    CHECK(composition_residual(m).worst_triple < 1e-12);
}
