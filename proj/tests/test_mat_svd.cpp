#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "pls/rng.hpp"
#include "pls/svd.hpp"

using pls::Mat;
using pls::Vec;

namespace {

double reconstruction_error(const Mat& a, const pls::SvdResult& r) {
    const std::size_t q = r.singular_values.size();
    double err = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < q; ++k)
                acc += r.u(i, k) * r.singular_values[k] * r.v(j, k);
            const double d = acc - a(i, j);
            err += d * d;
        }
    return std::sqrt(err);
}

double max_orthonormality_defect(const Mat& m) {
    double worst = 0.0;
    for (std::size_t i = 0; i < m.cols; ++i)
        for (std::size_t j = i; j < m.cols; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < m.rows; ++k) acc += m(k, i) * m(k, j);
            worst = std::max(worst, std::fabs(acc - (i == j ? 1.0 : 0.0)));
        }
    return worst;
}

}  // namespace

TEST_CASE("matvec agrees with the index-level oracle") {
    pls::RngStream rng(11, 0);
    for (int rep = 0; rep < 20; ++rep) {
        const Mat a = pls::gauss_matrix(rng, 13, 7);
        const Vec x = pls::gauss_vector(rng, 7);
        const Vec y = pls::matvec(a, x);
        const Vec ref = oracle::matvec(a, x);
        for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::fabs(y[i] - ref[i]) < 1e-12);

        const Vec z = pls::gauss_vector(rng, 13);
        const Vec yt = pls::matvec_t(a, z);
        const Vec reft = oracle::matvec(pls::transpose(a), z);
        for (std::size_t i = 0; i < yt.size(); ++i) CHECK(std::fabs(yt[i] - reft[i]) < 1e-12);
    }
}

TEST_CASE("svd of a diagonal matrix returns sorted absolute entries") {
    Mat a(4, 4);
    a(0, 0) = -2.0;
    a(1, 1) = 5.0;
    a(2, 2) = 0.5;
    a(3, 3) = -7.0;
    const auto r = pls::svd(a);
    REQUIRE(r.singular_values.size() == 4);
    CHECK(std::fabs(r.singular_values[0] - 7.0) < 1e-12);
    CHECK(std::fabs(r.singular_values[1] - 5.0) < 1e-12);
    CHECK(std::fabs(r.singular_values[2] - 2.0) < 1e-12);
    CHECK(std::fabs(r.singular_values[3] - 0.5) < 1e-12);
}

TEST_CASE("svd of a 2x2 with known singular values") {
    // A = [[3,0],[4,5]]: A^T A has eigenvalues 45 and 5.
    Mat a(2, 2, {3.0, 0.0, 4.0, 5.0});
    const auto r = pls::svd(a);
    CHECK(std::fabs(r.singular_values[0] - std::sqrt(45.0)) < 1e-12);
    CHECK(std::fabs(r.singular_values[1] - std::sqrt(5.0)) < 1e-12);
}

TEST_CASE("svd reconstruction and factor orthonormality on random shapes") {
    pls::RngStream rng(3, 1);
    const std::pair<std::size_t, std::size_t> shapes[] = {
        {5, 5}, {12, 4}, {4, 12}, {30, 7}, {2, 9}, {1, 6}, {6, 1}};
    for (const auto& [rows, cols] : shapes) {
        const Mat a = pls::gauss_matrix(rng, rows, cols);
        const auto r = pls::svd(a);
        CHECK(reconstruction_error(a, r) < 1e-10 * std::max(1.0, pls::frobenius_norm(a)));
        CHECK(max_orthonormality_defect(r.u) < 1e-10);
        CHECK(max_orthonormality_defect(r.v) < 1e-10);
        for (std::size_t k = 0; k + 1 < r.singular_values.size(); ++k)
            CHECK(r.singular_values[k] >= r.singular_values[k + 1]);
    }
}

TEST_CASE("rank-deficient input keeps orthonormal factors") {
    pls::RngStream rng(8, 0);
    Mat a = pls::gauss_matrix(rng, 10, 6);
    for (std::size_t i = 0; i < a.rows; ++i) {
        a(i, 3) = a(i, 1);             // duplicated column
        a(i, 5) = 2.0 * a(i, 0);       // scaled copy
    }
    const auto r = pls::svd(a);
    CHECK(r.singular_values[4] < 1e-10 * r.singular_values[0]);
    CHECK(r.singular_values[5] < 1e-10 * r.singular_values[0]);
    CHECK(max_orthonormality_defect(r.u) < 1e-10);
    CHECK(max_orthonormality_defect(r.v) < 1e-10);
    CHECK(reconstruction_error(a, r) < 1e-10 * pls::frobenius_norm(a));
}

TEST_CASE("svd of the zero matrix") {
    const Mat a(5, 3);
    const auto r = pls::svd(a);
    for (double s : r.singular_values) CHECK(s == 0.0);
    CHECK(max_orthonormality_defect(r.u) < 1e-12);
    CHECK(max_orthonormality_defect(r.v) < 1e-12);
}

TEST_CASE("spectral norm matches a Gram power-iteration oracle") {
    pls::RngStream rng(21, 0);
    for (int rep = 0; rep < 10; ++rep) {
        const Mat a = pls::gauss_matrix(rng, 15, 8);
        const double s = pls::spectral_norm(a);
        const double ref = oracle::spectral_norm_gram(a);
        CHECK(std::fabs(s - ref) < 1e-9 * ref);
        const double pw = pls::top_singular_value_power(a);
        CHECK(std::fabs(pw - ref) < 1e-8 * ref);
    }
}

TEST_CASE("kahan summation survives adversarial orderings") {
    Vec xs;
    xs.push_back(1e16);
    for (int i = 0; i < 10000; ++i) xs.push_back(1.0);
    xs.push_back(-1e16);
    CHECK(pls::kahan_sum(xs) == 10000.0);
}
