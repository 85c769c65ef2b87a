#include <doctest.h>

#include <cmath>

#include "exitperron/catalog.hpp"

using namespace exitperron;

TEST_CASE("every catalog entry validates") {
    for (const auto& name : catalog_names()) {
        ControlProblem p = catalog_problem(name);
        auto rep = validate_assumptions(p, 256, 1);
        CHECK(rep.all_finite);
        CHECK(std::isfinite(rep.growth));
        CHECK(std::isfinite(rep.lipschitz_b));
    }
    CHECK_THROWS_AS(catalog_problem("nope"), std::invalid_argument);
}

TEST_CASE("oracle availability") {
    CHECK(oracle_available("bm-1d"));
    CHECK(oracle_available("disc-2d"));
    CHECK_FALSE(oracle_available("drift-control-1d"));
    CHECK_THROWS_AS(oracle_value("drift-control-1d", {0.5}), std::invalid_argument);
}

TEST_CASE("interval oracle values") {
    CHECK(oracle_value("bm-1d", {0.0}) == 0.0);
    CHECK(oracle_value("bm-1d", {1.0}) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(oracle_value("bm-1d", {0.5}) == doctest::Approx(0.39663909087319343).epsilon(1e-14));
}

TEST_CASE("disc oracle matches reference Bessel values") {
    // I₁-series values frozen from an independent evaluation
    CHECK(oracle_value("disc-2d", {0.0, 0.0}) == 0.0);
    CHECK(oracle_value("disc-2d", {1.0, 0.0}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(oracle_value("disc-2d", {-1.0, 0.0}) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(oracle_value("disc-2d", {0.5, 0.0}) ==
          doctest::Approx(0.41825749401196793).epsilon(1e-12));
    CHECK(oracle_value("disc-2d", {0.0, 0.5}) == doctest::Approx(0.0).epsilon(1e-15));
    // cos θ factor: on the ray x=y, cos θ = 1/√2
    double r = std::sqrt(2.0) * 0.3;
    CHECK(oracle_value("disc-2d", {0.3, 0.3}) ==
          doctest::Approx(oracle_value("disc-2d", {r, 0.0}) / std::sqrt(2.0)).epsilon(1e-12));
}
