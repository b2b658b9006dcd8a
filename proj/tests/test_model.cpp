#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>

#include "oracles.hpp"
#include "pls/io.hpp"
#include "pls/model.hpp"
#include "pls/penalty.hpp"

using namespace pls;

namespace {

GroupedShape even_blocks(std::size_t m_blocks, std::size_t t) {
    GroupedShape g;
    for (std::size_t i = 0; i < m_blocks; ++i) g.blocks.emplace_back(i * t, (i + 1) * t);
    return g;
}

}  // namespace

TEST_CASE("empirical norm on a fixed pair") {
    CHECK(std::fabs(empirical_norm({3.0, 4.0}) - 3.5355339059327378) < 1e-12);
    CHECK(std::fabs(empirical_norm_sq({3.0, 4.0}) - 12.5) < 1e-12);
}

TEST_CASE("apply_design equals the index-level product") {
    RngStream rng(100, 0);
    const auto inst = generate_instance({VectorShape{9}, 6, 2, 1.5, 0.5, false}, rng);
    const Vec beta = gauss_vector(rng, 9);
    const Vec got = apply_design(inst.design, beta);
    const Vec ref = oracle::matvec(inst.design.x, beta);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::fabs(got[i] - ref[i]) < 1e-12);
}

TEST_CASE("shape validation") {
    CHECK_THROWS_AS(validate_shape(VectorShape{0}), usage_error);
    GroupedShape gap;
    gap.blocks = {{0, 3}, {4, 6}};
    CHECK_THROWS_AS(validate_shape(gap), usage_error);
    GroupedShape uneven;
    uneven.blocks = {{0, 3}, {3, 4}};
    CHECK(validate_shape(uneven).size() == 1);  // warning, not an error
    CHECK(validate_shape(even_blocks(4, 4)).empty());
    CHECK_THROWS_AS(validate_shape(MatrixShape{0, 4}), usage_error);
}

TEST_CASE("generated vector instance has the requested structure") {
    RngStream rng(7, 3);
    const InstanceSpec spec{VectorShape{20}, 50, 3, 2.0, 1.0, false};
    const Instance inst = generate_instance(spec, rng);
    REQUIRE(inst.beta_star.size() == 20);
    std::size_t active = 0;
    for (double b : inst.beta_star) {
        if (b != 0.0) {
            ++active;
            CHECK(std::fabs(std::fabs(b) - 2.0) < 1e-15);
        }
    }
    CHECK(active == 3);
    for (std::size_t i = 0; i < inst.y.size(); ++i)
        CHECK(std::fabs(inst.y[i] - inst.f[i] - inst.xi[i]) < 1e-15);
    const Vec f = apply_design(inst.design, inst.beta_star);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(std::fabs(f[i] - inst.f[i]) < 1e-12);
}

TEST_CASE("generated grouped instance activates whole blocks") {
    RngStream rng(8, 1);
    const Instance inst = generate_instance({even_blocks(5, 4), 60, 2, 1.0, 1.0, false}, rng);
    const auto& g = std::get<GroupedShape>(inst.design.shape);
    std::size_t active_blocks = 0;
    for (const auto& [b, e] : g.blocks) {
        bool any = false, all = true;
        for (std::size_t j = b; j < e; ++j) {
            if (inst.beta_star[j] != 0.0) any = true;
            else all = false;
        }
        if (any) {
            ++active_blocks;
            CHECK(all);  // active blocks are fully populated
        }
    }
    CHECK(active_blocks == 2);
}

TEST_CASE("generated matrix instance has the requested rank and amplitudes") {
    RngStream rng(9, 2);
    const Instance inst = generate_instance({MatrixShape{6, 5}, 80, 2, 3.0, 1.0, false}, rng);
    const auto r = svd(reshape_row_major(inst.beta_star, 6, 5));
    CHECK(std::fabs(r.singular_values[0] - 3.0) < 1e-10);
    CHECK(std::fabs(r.singular_values[1] - 3.0) < 1e-10);
    CHECK(r.singular_values[2] < 1e-10);
}

TEST_CASE("orthonormalized design satisfies X^T X = n I") {
    RngStream rng(10, 5);
    const Instance inst = generate_instance({VectorShape{12}, 40, 2, 1.0, 1.0, true}, rng);
    const auto& x = inst.design.x;
    const double n = static_cast<double>(x.rows);
    for (std::size_t i = 0; i < x.cols; ++i)
        for (std::size_t j = i; j < x.cols; ++j) {
            double acc = 0.0;
            for (std::size_t r = 0; r < x.rows; ++r) acc += x(r, i) * x(r, j);
            CHECK(std::fabs(acc / n - (i == j ? 1.0 : 0.0)) < 1e-12);
        }
}

TEST_CASE("dual norm statistic matches direct formulas") {
    RngStream rng(11, 0);

    SECTION("l1") {
        const Instance inst = generate_instance({VectorShape{15}, 30, 2, 1.0, 1.0, false}, rng);
        const double stat = dual_norm_statistic(inst.design, inst.xi, PenaltyKind::l1);
        double ref = 0.0;
        for (std::size_t j = 0; j < 15; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < 30; ++i) acc += inst.design.x(i, j) * inst.xi[i];
            ref = std::max(ref, std::fabs(acc) / 30.0);
        }
        CHECK(std::fabs(stat - ref) < 1e-14);
    }

    SECTION("group") {
        const Instance inst = generate_instance({even_blocks(4, 3), 30, 1, 1.0, 1.0, false}, rng);
        const double stat = dual_norm_statistic(inst.design, inst.xi, PenaltyKind::group);
        const Vec t = matvec_t(inst.design.x, inst.xi);
        double ref = 0.0;
        for (std::size_t bi = 0; bi < 4; ++bi) {
            double acc = 0.0;
            for (std::size_t j = bi * 3; j < (bi + 1) * 3; ++j) acc += t[j] * t[j];
            ref = std::max(ref, std::sqrt(acc) / 30.0);
        }
        CHECK(std::fabs(stat - ref) < 1e-14);
    }

    SECTION("nuclear") {
        const Instance inst = generate_instance({MatrixShape{4, 5}, 30, 1, 1.0, 1.0, false}, rng);
        const double stat = dual_norm_statistic(inst.design, inst.xi, PenaltyKind::nuclear);
        Vec t = matvec_t(inst.design.x, inst.xi);
        for (auto& v : t) v /= 30.0;
        const double ref = oracle::spectral_norm_gram(reshape_row_major(t, 4, 5));
        CHECK(std::fabs(stat - ref) < 1e-10);
    }
}

TEST_CASE("dual norm statistic dominates sampled unit-ball directions") {
    RngStream rng(12, 0);
    const Instance inst = generate_instance({VectorShape{10}, 25, 2, 1.0, 1.0, false}, rng);
    const PenaltySpec pen = PenaltySpec::l1(10);
    const double stat = dual_norm_statistic(inst.design, inst.xi, PenaltyKind::l1);
    for (int rep = 0; rep < 200; ++rep) {
        Vec v = gauss_vector(rng, 10);
        const double nrm = penalty_norm(pen, v);
        for (auto& x : v) x /= nrm;
        const Vec xv = apply_design(inst.design, v);
        double cross = 0.0;
        for (std::size_t i = 0; i < xv.size(); ++i) cross += inst.xi[i] * xv[i];
        CHECK(cross / 25.0 <= stat + 1e-12);
    }
}

TEST_CASE("penalty kind must match design shape") {
    RngStream rng(13, 0);
    const Instance inst = generate_instance({VectorShape{8}, 10, 1, 1.0, 1.0, false}, rng);
    CHECK_THROWS_AS(dual_norm_statistic(inst.design, inst.xi, PenaltyKind::group), usage_error);
    CHECK_THROWS_AS(dual_norm_statistic(inst.design, inst.xi, PenaltyKind::nuclear), usage_error);
}

TEST_CASE("design save/load round trip preserves bytes and metadata") {
    RngStream rng(14, 0);
    const Instance inst = generate_instance({MatrixShape{3, 4}, 7, 1, 1.0, 0.7, false}, rng);
    const std::string csv = "/tmp/pls_test_design.csv";
    const std::string sidecar = "/tmp/pls_test_design.csv.json";
    save_design_csv(inst.design, csv, sidecar, &inst.y);

    const LoadedInstance got = load_design_csv(csv, sidecar);
    CHECK(got.design.n() == 7);
    CHECK(got.design.dim() == 12);
    REQUIRE(std::holds_alternative<MatrixShape>(got.design.shape));
    for (std::size_t i = 0; i < inst.design.x.a.size(); ++i)
        CHECK(got.design.x.a[i] == inst.design.x.a[i]);  // exact round trip
    for (std::size_t i = 0; i < inst.y.size(); ++i) CHECK(got.y[i] == inst.y[i]);

    save_design_csv(got.design, csv + ".2", sidecar + ".2", &got.y);
    CHECK(read_text_file(csv) == read_text_file(csv + ".2"));
    std::remove(csv.c_str());
    std::remove((csv + ".2").c_str());
    std::remove(sidecar.c_str());
    std::remove((sidecar + ".2").c_str());
}

TEST_CASE("malformed csv and sidecar are rejected") {
    const std::string csv = "/tmp/pls_test_bad.csv";
    const std::string sidecar = "/tmp/pls_test_bad.csv.json";
    write_text_file(csv, "1.0,2.0\r\n3.0\r\n");
    write_text_file(sidecar, "{\"shape\":\"vector\",\"p\":2,\"n\":2,\"response\":false}");
    CHECK_THROWS_AS(load_design_csv(csv, sidecar), config_error);
    write_text_file(csv, "1.0,oops\r\n");
    CHECK_THROWS_AS(load_design_csv(csv, sidecar), config_error);
    write_text_file(sidecar, "not json");
    CHECK_THROWS_AS(load_design_csv(csv, sidecar), config_error);
    std::remove(csv.c_str());
    std::remove(sidecar.c_str());
}
