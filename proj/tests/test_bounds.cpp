#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "pls/bounds.hpp"
#include "pls/normal.hpp"

#include "oracles.hpp"

using namespace pls;

namespace {

BoundInputs base_inputs() {
    BoundInputs in;
    in.lambda = 1.0;
    in.mu4 = 1.0;
    in.sigma = 1.0;
    in.n = 100;
    in.delta = 0.1;
    in.bias = 0.0;
    return in;
}

}  // namespace

TEST_CASE("prediction deviation bound") {
    SECTION("noiseless penalty-free case reduces to the bias") {
        BoundInputs in = base_inputs();
        in.lambda = 0.0;
        in.sigma = 0.0;
        in.bias = 0.37;
        CHECK(oracle_rhs_deviation(in) == 0.37);
    }

    SECTION("pinned arithmetic example") {
        BoundInputs in = base_inputs();
        in.lambda = 3.03485;
        in.mu4 = std::sqrt(3.0);
        const double q = oracle::normal_quantile(0.9);
        const double expected =
            (16.0 / 25.0) * in.lambda * in.lambda * 3.0 + 16.0 * q * q / 100.0;
        CHECK(expected == Catch::Approx(17.9466).margin(1e-4));
        CHECK(oracle_rhs_deviation(in) == Catch::Approx(expected).margin(1e-8));
    }

    SECTION("median deviation level removes the noise term") {
        BoundInputs in = base_inputs();
        in.delta = 0.5;
        in.bias = 0.25;
        CHECK(oracle_rhs_deviation(in) == 0.25 + 16.0 / 25.0);
    }

    SECTION("degenerate compatibility gives a vacuous bound") {
        BoundInputs in = base_inputs();
        in.mu4_infinite = true;
        CHECK(std::isinf(oracle_rhs_deviation(in)));
        CHECK(std::isinf(estimation_rhs_deviation(in)));
        CHECK(std::isinf(oracle_rhs_expectation(in).prediction));
        CHECK(std::isinf(oracle_rhs_expectation(in).estimation));
    }
}

TEST_CASE("estimation deviation bound") {
    SECTION("noiseless case") {
        BoundInputs in = base_inputs();
        in.sigma = 0.0;
        in.lambda = 2.5;
        in.mu4 = 1.5;
        CHECK(estimation_rhs_deviation(in) == 4.0 * 2.5 * 1.5 * 1.5);
    }

    SECTION("pinned arithmetic example") {
        BoundInputs in = base_inputs();
        const double q = oracle::normal_quantile(0.9);
        CHECK(q * q == Catch::Approx(1.64245).margin(1e-4));
        CHECK(estimation_rhs_deviation(in) ==
              Catch::Approx(4.0 + 20.0 * q * q / 100.0).margin(1e-8));
        CHECK(estimation_rhs_deviation(in) == Catch::Approx(4.3285).margin(1e-4));
    }

    SECTION("median deviation level") {
        BoundInputs in = base_inputs();
        in.delta = 0.5;
        CHECK(estimation_rhs_deviation(in) == 4.0);
    }

    SECTION("zero lambda is rejected") {
        BoundInputs in = base_inputs();
        in.lambda = 0.0;
        CHECK_THROWS_AS(estimation_rhs_deviation(in), usage_error);
    }
}

TEST_CASE("expectation bounds") {
    SECTION("noiseless prediction part") {
        BoundInputs in = base_inputs();
        in.sigma = 0.0;
        in.bias = 0.1;
        in.lambda = 2.0;
        in.mu4 = 0.5;
        CHECK(oracle_rhs_expectation(in).prediction ==
              0.1 + (16.0 / 25.0) * 4.0 * 0.25);
    }

    SECTION("pinned arithmetic example") {
        const ExpectationBounds out = oracle_rhs_expectation(base_inputs());
        CHECK(out.estimation_valid);
        CHECK(out.estimation == Catch::Approx(8.2).margin(1e-12));
    }

    SECTION("prediction expectation dominates the median deviation bound") {
        BoundInputs in = base_inputs();
        in.delta = 0.5;
        in.bias = 0.3;
        CHECK(oracle_rhs_expectation(in).prediction >= oracle_rhs_deviation(in));
    }

    SECTION("estimation part is omitted when lambda vanishes") {
        BoundInputs in = base_inputs();
        in.lambda = 0.0;
        const ExpectationBounds out = oracle_rhs_expectation(in);
        CHECK_FALSE(out.estimation_valid);
        CHECK(out.prediction > 0.0);
    }

    SECTION("matches the deviation bound at the unit quantile") {
        // At delta = 1 - Phi(1) the deviation noise term is exactly
        // 16 sigma^2 / n, the same closed form the expectation uses.
        BoundInputs in = base_inputs();
        in.delta = 1.0 - normal_cdf(1.0);
        in.bias = 0.05;
        const double dev = oracle_rhs_deviation(in);
        const double exp_pred = oracle_rhs_expectation(in).prediction;
        CHECK(dev == Catch::Approx(exp_pred).margin(1e-12));
    }
}

TEST_CASE("bound monotonicity") {
    const BoundInputs in = base_inputs();

    SECTION("nonincreasing in delta over the deviation range") {
        double prev = std::numeric_limits<double>::infinity();
        for (double d : {0.01, 0.05, 0.1, 0.25, 0.5}) {
            BoundInputs cur = in;
            cur.delta = d;
            const double v = oracle_rhs_deviation(cur);
            CHECK(v <= prev + 1e-12);
            prev = v;
        }
    }

    SECTION("nondecreasing in each scale parameter") {
        const double ref = oracle_rhs_deviation(in);
        for (int which = 0; which < 4; ++which) {
            BoundInputs cur = in;
            switch (which) {
                case 0: cur.lambda *= 2.0; break;
                case 1: cur.mu4 *= 2.0; break;
                case 2: cur.sigma *= 2.0; break;
                case 3: cur.bias += 1.0; break;
            }
            CHECK(oracle_rhs_deviation(cur) >= ref);
        }
    }
}

TEST_CASE("gaussian quantile log bound") {
    for (double d : {0.5, 0.1, 0.01, 1e-4}) {
        const double q = normal_quantile(1.0 - d);
        CHECK(q * q <= 2.0 * std::log(1.0 / d) + 1e-12);
    }
}

TEST_CASE("bound input validation") {
    BoundInputs bad = base_inputs();
    bad.delta = 0.0;
    CHECK_THROWS_AS(oracle_rhs_deviation(bad), usage_error);
    bad.delta = 1.0;
    CHECK_THROWS_AS(oracle_rhs_deviation(bad), usage_error);

    bad = base_inputs();
    bad.n = 0;
    CHECK_THROWS_AS(oracle_rhs_deviation(bad), usage_error);

    bad = base_inputs();
    bad.sigma = -1.0;
    CHECK_THROWS_AS(oracle_rhs_deviation(bad), usage_error);

    bad = base_inputs();
    bad.bias = -0.1;
    CHECK_THROWS_AS(oracle_rhs_expectation(bad), usage_error);

    bad = base_inputs();
    bad.mu4 = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(oracle_rhs_deviation(bad), usage_error);

    bad = base_inputs();
    bad.lambda = -2.0;
    CHECK_THROWS_AS(estimation_rhs_deviation(bad), usage_error);
}
