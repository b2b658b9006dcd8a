#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstddef>
#include <numbers>

#include "pls/model.hpp"
#include "pls/penalty.hpp"
#include "pls/rng.hpp"
#include "pls/smallball.hpp"

#include "oracles.hpp"

using namespace pls;

namespace {

ConeSection make_section(DesignShape shape, std::size_t s, double c0) {
    ConeSection sec;
    sec.shape = std::move(shape);
    sec.kind = natural_penalty(sec.shape);
    sec.s = s;
    sec.c0 = c0;
    return sec;
}

}  // namespace

TEST_CASE("small-ball parameters derived from the moment ratio") {
    const SmallBallParams unit = smallball_params_from_L(1.0);
    CHECK(unit.beta0 == Catch::Approx(0.70711).margin(1e-5));
    CHECK(unit.kappa0 == Catch::Approx(1.0 / 64.0).margin(1e-15));
    CHECK(unit.provenance == SmallBallProvenance::moment_derived);

    const SmallBallParams gauss = smallball_params_from_L(gaussian_moment_ratio());
    CHECK(gauss.kappa0 == Catch::Approx(1.0 / 12.0).margin(1e-12));

    // Quartic law: doubling L divides kappa0 by 16.
    const SmallBallParams twice = smallball_params_from_L(2.0);
    CHECK(unit.kappa0 / twice.kappa0 == Catch::Approx(16.0).margin(1e-10));

    CHECK_THROWS_AS(smallball_params_from_L(0.0), usage_error);
    CHECK_THROWS_AS(smallball_params_from_L(-1.0), usage_error);
    // L so small that kappa0 would leave (0, 1).
    CHECK_THROWS_AS(smallball_params_from_L(0.2), usage_error);

    SmallBallParams bad;
    bad.beta0 = 1.2;
    CHECK_THROWS_AS(validate_smallball_params(bad), usage_error);
    bad.beta0 = 0.5;
    bad.kappa0 = 1.0;
    CHECK_THROWS_AS(validate_smallball_params(bad), usage_error);
}

TEST_CASE("small-ball frequency of the standard gaussian") {
    RngStream rng(601, 0);
    const double beta0 = 1.0 / std::numbers::sqrt2;
    const double est = estimate_small_ball(gaussian_row_sampler(6), 6, beta0, 25, 10000, rng);

    const double expected = 2.0 * (1.0 - oracle::normal_cdf(beta0));
    CHECK(expected == Catch::Approx(0.4795).margin(1e-4));
    CHECK(std::fabs(est - expected) <= 0.02);

    // Paley-Zygmund floor for the gaussian law.
    const double l4 = std::pow(gaussian_moment_ratio(), 4.0);
    const double pz = std::pow(1.0 - beta0 * beta0, 2.0) / (16.0 * l4);
    const double se = 2.0 * std::sqrt(expected * (1.0 - expected) / 10000.0);
    CHECK(est >= pz - se);
}

TEST_CASE("small-ball frequency degenerate cases") {
    // Fixed unit vector aligned with the (canonical) first direction.
    const RowSampler aligned = [](RngStream&) { return Vec{1.0, 0.0, 0.0}; };
    RngStream rng(602, 0);
    CHECK(estimate_small_ball(aligned, 3, 0.5, 1, 100, rng) == 1.0);

    // A vanishing threshold accepts almost every draw of a continuous law.
    RngStream rng2(603, 0);
    CHECK(estimate_small_ball(gaussian_row_sampler(4), 4, 1e-6, 1, 5000, rng2) >= 0.999);

    RngStream rng3(604, 0);
    CHECK_THROWS_AS(estimate_small_ball(gaussian_row_sampler(4), 4, 0.5, 0, 10, rng3),
                    usage_error);
}

TEST_CASE("moment ratio of gaussian and sign laws") {
    RngStream rng(605, 0);
    const MomentRatio gauss = moment_ratio_L(gaussian_row_sampler(5), 5, 15, 100000, rng);
    CHECK(std::fabs(gauss.l_estimate - 0.658037) <= 0.02);
    CHECK(gauss.isotropy_deviation <= 0.05);

    const RowSampler signs = [](RngStream& r) {
        Vec x(4);
        for (auto& v : x) v = (r.next_u32() & 1u) ? 1.0 : -1.0;
        return x;
    };
    RngStream rng2(606, 0);
    const MomentRatio rad = moment_ratio_L(signs, 4, 4, 2000, rng2);
    CHECK(rad.l_estimate == Catch::Approx(0.5).margin(1e-12));
    CHECK(rad.isotropy_deviation == Catch::Approx(0.0).margin(1e-12));

    // Scaling the law leaves the ratio unchanged but inflates the isotropy report.
    const RowSampler doubled = [](RngStream& r) {
        Vec x = gauss_vector(r, 5);
        for (auto& v : x) v *= 2.0;
        return x;
    };
    RngStream rng3(607, 0), rng4(607, 0);
    const MomentRatio base = moment_ratio_L(gaussian_row_sampler(5), 5, 10, 20000, rng3);
    const MomentRatio big = moment_ratio_L(doubled, 5, 10, 20000, rng4);
    CHECK(big.l_estimate == Catch::Approx(base.l_estimate).margin(1e-12));
    CHECK(big.isotropy_deviation > base.isotropy_deviation);
}

TEST_CASE("support function closed forms") {
    // Maximizer e_1 is feasible for both balls.
    const ConeSection tight = make_section(VectorShape{2}, 1, 1e-9);
    CHECK(support_function(Vec{3.0, -1.0}, tight) == Catch::Approx(3.0).margin(1e-6));
    CHECK(support_function(Vec{0.0, 0.0}, tight) == 0.0);

    // A huge penalty radius leaves only the euclidean ball.
    const ConeSection loose = make_section(VectorShape{6}, 6, 1.0);
    RngStream rng(608, 0);
    const Vec v = gauss_vector(rng, 6);
    CHECK(support_function(v, loose) == Catch::Approx(norm2(v)).margin(1e-12));

    CHECK_THROWS_AS(support_function(Vec{1.0, 2.0, 3.0}, tight), usage_error);
}

TEST_CASE("support function dominates random search and attains its value") {
    struct Case {
        ConeSection sec;
        PenaltySpec pen;
    };
    GroupedShape gs;
    for (std::size_t g = 0; g < 4; ++g) gs.blocks.push_back({3 * g, 3 * g + 3});
    const Case cases[] = {
        {make_section(VectorShape{12}, 2, 1.5), PenaltySpec::l1(12)},
        {make_section(gs, 2, 1.0), PenaltySpec::group(gs.blocks)},
        {make_section(MatrixShape{3, 4}, 2, 0.5), PenaltySpec::nuclear(3, 4)},
    };
    RngStream rng(609, 0);
    for (const auto& c : cases) {
        const std::size_t p = shape_dim(c.sec.shape);
        const Vec v = gauss_vector(rng, p);
        Vec attain;
        const double closed = support_function(v, c.sec, &attain);
        const double scale = std::max(1.0, std::fabs(closed));

        // The reported maximizer is feasible and achieves the value.
        CHECK(norm2(attain) <= 1.0 + 1e-9);
        CHECK(penalty_norm(c.pen, attain) <= c.sec.radius() * (1.0 + 1e-9));
        CHECK(dot(v, attain) >= closed - 1e-9 * scale);

        // No random feasible point beats the closed form.
        const double radius = c.sec.radius();
        double search = 0.0;
        for (int t = 0; t < 100000; ++t) {
            Vec g = gauss_vector(rng, p);
            const double n2 = norm2(g);
            const double np = penalty_norm(c.pen, g);
            if (n2 <= 0.0) continue;
            const double shrink = std::min(1.0 / n2, np > 0.0 ? radius / np : 1.0);
            for (auto& w : g) w *= shrink;
            search = std::max(search, dot(v, g));
        }
        CHECK(search <= closed + 1e-9 * scale);
        CHECK(closed <= search + 0.25 * scale);  // sanity: search gets close
    }
}

TEST_CASE("mean width of reference bodies") {
    SECTION("euclidean ball in the plane") {
        const ConeSection sec = make_section(VectorShape{2}, 2, 1.0);
        RngStream rng(610, 0);
        const MonteCarloEstimate est = mean_width(rng, sec, 100000);
        const double expected = std::sqrt(std::numbers::pi / 2.0);
        CHECK(expected == Catch::Approx(1.25331).margin(1e-5));
        CHECK(std::fabs(est.mean - expected) <= 3.0 * est.std_error);
    }

    SECTION("singleton has zero width") {
        RngStream rng(611, 0);
        const Vec b{0.3, -0.7, 0.2};
        const MonteCarloEstimate est =
            monte_carlo_width(rng, 3, 20000, [&b](const Vec& g) { return dot(g, b); });
        CHECK(std::fabs(est.mean) <= 3.0 * est.std_error);
    }

    SECTION("unit nuclear ball is narrower than the root-dimension sum") {
        const ConeSection sec = make_section(MatrixShape{5, 5}, 1, 1e-9);
        RngStream rng(612, 0);
        const MonteCarloEstimate est = mean_width(rng, sec, 20000);
        CHECK(est.mean <= std::sqrt(5.0) + std::sqrt(5.0) + 3.0 * est.std_error);
    }

    SECTION("monotone under set inclusion") {
        RngStream rng1(613, 0), rng2(614, 0);
        const MonteCarloEstimate small =
            mean_width(rng1, make_section(VectorShape{16}, 2, 1e-9), 20000);
        const MonteCarloEstimate big =
            mean_width(rng2, make_section(VectorShape{16}, 16, 1.0), 20000);
        CHECK(small.mean <= big.mean + 3.0 * (small.std_error + big.std_error));
    }

    SECTION("sparse-section width obeys the root-s-log bound") {
        for (std::size_t p : {32u, 128u}) {
            for (std::size_t s : {1u, 2u, 4u}) {
                RngStream rng(615 + p + s, 0);
                const MonteCarloEstimate est =
                    mean_width(rng, make_section(VectorShape{p}, s, 1e-9), 4000);
                const double bound =
                    3.0 * std::sqrt(static_cast<double>(s) *
                                    std::log(std::exp(1.0) * static_cast<double>(p) /
                                             static_cast<double>(s)));
                CHECK(est.mean <= bound);
            }
        }
    }
}

TEST_CASE("rademacher complexity of cone sections") {
    const ConeSection ball2 = make_section(VectorShape{8}, 8, 1.0);

    SECTION("matches the closed-form euclidean width") {
        RngStream rng(620, 0);
        const std::size_t n = 50;
        const MonteCarloEstimate est =
            rademacher_complexity(gaussian_row_sampler(8), ball2, n, 1500, rng);
        // w is exactly N(0, I/n); E |w|_2 = E|N(0, I_8)|_2 / sqrt(n).
        const double e_norm = std::numbers::sqrt2 * std::tgamma(4.5) / std::tgamma(4.0);
        const double expected = e_norm / std::sqrt(static_cast<double>(n));
        CHECK(std::fabs(est.mean - expected) <= 3.0 * est.std_error + 1e-3);
    }

    SECTION("halves when the sample size quadruples") {
        RngStream rng1(621, 0), rng2(622, 0);
        const MonteCarloEstimate base =
            rademacher_complexity(gaussian_row_sampler(8), ball2, 50, 1500, rng1);
        const MonteCarloEstimate fourx =
            rademacher_complexity(gaussian_row_sampler(8), ball2, 200, 1500, rng2);
        CHECK(std::fabs(fourx.mean - 0.5 * base.mean) <=
              3.0 * (fourx.std_error + 0.5 * base.std_error) + 1e-3);
    }

    SECTION("zero design gives zero complexity") {
        const RowSampler zeros = [](RngStream&) { return Vec(8, 0.0); };
        RngStream rng(623, 0);
        CHECK(rademacher_complexity(zeros, ball2, 20, 10, rng).mean == 0.0);
    }
}

TEST_CASE("restricted lower bound certification") {
    const SmallBallParams gauss = smallball_params_from_L(gaussian_moment_ratio());

    SECTION("gaussian threshold value") {
        RngStream rng(630, 0);
        InstanceSpec spec;
        spec.shape = VectorShape{12};
        spec.n = 24;
        spec.orthonormalize = true;
        Instance inst = generate_instance(spec, rng);
        RngStream check_rng(631, 0);
        const RestrictedLowerBound out = restricted_lower_bound_check(
            inst.design, make_section(VectorShape{12}, 2, 2.0), gauss, 200, check_rng);
        CHECK(out.threshold == Catch::Approx(std::sqrt(1.0 / 192.0)).margin(1e-12));
        CHECK(out.threshold == Catch::Approx(0.072169).margin(1e-6));
        // Orthonormal-scaled designs keep every ratio at exactly one.
        CHECK(out.min_ratio == Catch::Approx(1.0).margin(1e-9));
        CHECK(out.pass);
    }

    SECTION("gaussian designs certify at moderate sizes") {
        for (int rep = 0; rep < 5; ++rep) {
            RngStream rng(640 + rep, 0);
            InstanceSpec spec;
            spec.shape = VectorShape{10};
            spec.n = 300;
            Instance inst = generate_instance(spec, rng);
            RngStream check_rng(650 + rep, 0);
            const RestrictedLowerBound out = restricted_lower_bound_check(
                inst.design, make_section(VectorShape{10}, 2, 2.0), gauss, 300, check_rng);
            CHECK(out.pass);
        }
    }

    SECTION("matrix sections work the same way") {
        RngStream rng(660, 0);
        InstanceSpec spec;
        spec.shape = MatrixShape{4, 4};
        spec.n = 32;
        spec.orthonormalize = true;
        Instance inst = generate_instance(spec, rng);
        RngStream check_rng(661, 0);
        const RestrictedLowerBound out = restricted_lower_bound_check(
            inst.design, make_section(MatrixShape{4, 4}, 2, 1.0), gauss, 100, check_rng);
        CHECK(out.min_ratio == Catch::Approx(1.0).margin(1e-9));
        CHECK(out.pass);
    }
}

TEST_CASE("sample size conditions") {
    const SmallBallParams gauss = smallball_params_from_L(gaussian_moment_ratio());

    // Nuclear: ceil((1 + 4)^2 * 2 * max(10, 4)) = 500.
    CHECK(min_sample_size(PenaltyKind::nuclear, 2, 4.0, gauss, MatrixShape{10, 4}) == 500);

    // Group: ceil((1 + 1)^2 * 2 * (4 + log(10 / 2))).
    GroupedShape gs;
    for (std::size_t g = 0; g < 10; ++g) gs.blocks.push_back({4 * g, 4 * g + 4});
    const auto expected_group =
        static_cast<std::size_t>(std::ceil(4.0 * 2.0 * (4.0 + std::log(5.0))));
    CHECK(min_sample_size(PenaltyKind::group, 2, 1.0, gauss, gs) == expected_group);

    // l1 doubles with s when the log factor is held fixed.
    const auto n1 = min_sample_size(PenaltyKind::l1, 2, 4.0, gauss, VectorShape{40});
    const auto n2 = min_sample_size(PenaltyKind::l1, 4, 4.0, gauss, VectorShape{80});
    CHECK(n2 >= 2 * n1 - 1);
    CHECK(n2 <= 2 * n1 + 1);

    // The l1 term scales by (kappa0 beta0)^-2.
    const double kb = gauss.kappa0 * gauss.beta0;
    const double raw = 25.0 * 3.0 * std::log(std::exp(1.0) * 40.0 / 3.0) / (kb * kb);
    CHECK(min_sample_size(PenaltyKind::l1, 3, 4.0, gauss, VectorShape{40}) ==
          static_cast<std::size_t>(std::ceil(raw)));

    CHECK_THROWS_AS(min_sample_size(PenaltyKind::l1, 0, 1.0, gauss, VectorShape{10}),
                    usage_error);
    CHECK_THROWS_AS(min_sample_size(PenaltyKind::l1, 11, 1.0, gauss, VectorShape{10}),
                    usage_error);
    CHECK_THROWS_AS(min_sample_size(PenaltyKind::nuclear, 5, 1.0, gauss, MatrixShape{4, 4}),
                    usage_error);
    CHECK_THROWS_AS(min_sample_size(PenaltyKind::l1, 1, 1.0, gauss, VectorShape{10}, 0.0),
                    usage_error);
    CHECK_THROWS_AS(min_sample_size(PenaltyKind::group, 1, 1.0, gauss, VectorShape{10}),
                    usage_error);
}
