#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "pls/errors.hpp"
#include "pls/mat.hpp"
#include "pls/rng.hpp"
#include "pls/svd.hpp"

namespace pls {

// Coefficient shapes. A grouped shape partitions [0, p) into contiguous
// blocks; a matrix shape flattens a k x m matrix row-major into length k*m.
struct VectorShape {
    std::size_t p = 0;
};

struct GroupedShape {
    // Half-open [begin, end) ranges, sorted, covering [0, p) exactly.
    std::vector<std::pair<std::size_t, std::size_t>> blocks;
};

struct MatrixShape {
    std::size_t k = 0;
    std::size_t m = 0;
};

using DesignShape = std::variant<VectorShape, GroupedShape, MatrixShape>;

enum class PenaltyKind { l1, group, nuclear };

inline std::size_t shape_dim(const DesignShape& s) {
    if (const auto* v = std::get_if<VectorShape>(&s)) return v->p;
    if (const auto* g = std::get_if<GroupedShape>(&s)) {
        std::size_t d = 0;
        for (const auto& [b, e] : g->blocks) d += e - b;
        return d;
    }
    const auto& m = std::get<MatrixShape>(s);
    return m.k * m.m;
}

inline PenaltyKind natural_penalty(const DesignShape& s) {
    if (std::holds_alternative<VectorShape>(s)) return PenaltyKind::l1;
    if (std::holds_alternative<GroupedShape>(s)) return PenaltyKind::group;
    return PenaltyKind::nuclear;
}

// Hard shape violations throw; soft oddities come back as warning strings
// for the caller to surface.
inline std::vector<std::string> validate_shape(const DesignShape& s) {
    std::vector<std::string> warnings;
    if (const auto* v = std::get_if<VectorShape>(&s)) {
        if (v->p == 0) throw usage_error("shape: vector dimension must be positive");
        return warnings;
    }
    if (const auto* g = std::get_if<GroupedShape>(&s)) {
        if (g->blocks.empty()) throw usage_error("shape: grouped shape needs at least one block");
        std::size_t expect = 0;
        std::size_t first_size = g->blocks.front().second - g->blocks.front().first;
        bool unequal = false;
        for (const auto& [b, e] : g->blocks) {
            if (b != expect || e <= b) throw usage_error("shape: blocks must be contiguous, nonempty, and sorted");
            if (e - b != first_size) unequal = true;
            expect = e;
        }
        if (unequal) warnings.push_back("grouped shape has unequal block sizes");
        return warnings;
    }
    const auto& m = std::get<MatrixShape>(s);
    if (m.k == 0 || m.m == 0) throw usage_error("shape: matrix dimensions must be positive");
    return warnings;
}

// Design operator: n observations of a linear functional of the
// coefficient vector, stored as an n x dim matrix acting by matvec.
struct DesignOperator {
    Mat x;
    DesignShape shape;

    std::size_t n() const { return x.rows; }
    std::size_t dim() const { return x.cols; }
};

inline DesignOperator make_design(Mat x, DesignShape shape) {
    if (x.cols != shape_dim(shape)) throw usage_error("design: matrix width does not match shape dimension");
    validate_shape(shape);
    return DesignOperator{std::move(x), std::move(shape)};
}

inline Vec apply_design(const DesignOperator& d, const Vec& beta) {
    if (beta.size() != d.dim()) throw usage_error("apply_design: coefficient length does not match design");
    return matvec(d.x, beta);
}

// ||u||_n = sqrt(sum u_i^2 / n) with n the sample count (= u.size()).
inline double empirical_norm(const Vec& u) {
    if (u.empty()) throw usage_error("empirical_norm: empty vector");
    return norm2(u) / std::sqrt(static_cast<double>(u.size()));
}

inline double empirical_norm_sq(const Vec& u) {
    if (u.empty()) throw usage_error("empirical_norm: empty vector");
    return dot(u, u) / static_cast<double>(u.size());
}

inline Mat reshape_row_major(const Vec& beta, std::size_t k, std::size_t m) {
    if (beta.size() != k * m) throw usage_error("reshape: length does not match k*m");
    Mat out(k, m);
    out.a = beta;
    return out;
}

// Generation request for synthetic instances. The design has i.i.d.
// standard normal entries; with orthonormalize set, columns are made
// exactly orthonormal (two-pass Gram-Schmidt) and rescaled so every
// column has unit empirical norm, i.e. X^T X = n I.
struct InstanceSpec {
    DesignShape shape;
    std::size_t n = 0;
    std::size_t sparsity = 1;           // active coordinates / blocks / rank
    double signal_amplitude = 1.0;
    double sigma = 1.0;
    bool orthonormalize = false;
};

struct Instance {
    DesignOperator design;
    Vec beta_star;        // empty when the instance has no ground truth
    double sigma = 0.0;
    Vec xi;               // noise draw; empty for loaded instances
    Vec f;                // X beta_star
    Vec y;

    bool has_beta_star() const { return !beta_star.empty(); }
    bool has_noise() const { return !xi.empty(); }
};

namespace detail {

// Two-pass modified Gram-Schmidt; columns come out orthonormal to near
// machine precision, then are scaled by sqrt(n) for unit empirical norm.
inline void orthonormalize_columns(Mat& x) {
    const std::size_t n = x.rows, p = x.cols;
    if (n < p) throw usage_error("orthonormalize: needs n >= p");
    for (std::size_t j = 0; j < p; ++j) {
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t i = 0; i < j; ++i) {
                double proj = 0.0;
                for (std::size_t r = 0; r < n; ++r) proj += x(r, i) * x(r, j);
                for (std::size_t r = 0; r < n; ++r) x(r, j) -= proj * x(r, i);
            }
        }
        double nrm = 0.0;
        for (std::size_t r = 0; r < n; ++r) nrm += x(r, j) * x(r, j);
        nrm = std::sqrt(nrm);
        if (nrm < 1e-10) throw numeric_error("orthonormalize: numerically dependent columns");
        for (std::size_t r = 0; r < n; ++r) x(r, j) /= nrm;
    }
    const double root_n = std::sqrt(static_cast<double>(n));
    for (auto& v : x.a) v *= root_n;
}

inline std::vector<std::size_t> sample_without_replacement(RngStream& rng, std::size_t count,
                                                           std::size_t total) {
    std::vector<std::size_t> pool(total);
    for (std::size_t i = 0; i < total; ++i) pool[i] = i;
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.next_u64() % (total - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    return pool;
}

}  // namespace detail

inline Vec generate_beta_star(const DesignShape& shape, std::size_t sparsity, double amplitude,
                              RngStream& rng) {
    const std::size_t d = shape_dim(shape);
    Vec beta(d, 0.0);
    if (const auto* v = std::get_if<VectorShape>(&shape)) {
        if (sparsity > v->p) throw usage_error("generate: sparsity exceeds dimension");
        for (std::size_t j : detail::sample_without_replacement(rng, sparsity, v->p))
            beta[j] = (rng.next_u32() & 1u) ? amplitude : -amplitude;
        return beta;
    }
    if (const auto* g = std::get_if<GroupedShape>(&shape)) {
        if (sparsity > g->blocks.size()) throw usage_error("generate: sparsity exceeds block count");
        for (std::size_t bi : detail::sample_without_replacement(rng, sparsity, g->blocks.size())) {
            const auto [b, e] = g->blocks[bi];
            for (std::size_t j = b; j < e; ++j)
                beta[j] = (rng.next_u32() & 1u) ? amplitude : -amplitude;
        }
        return beta;
    }
    const auto& ms = std::get<MatrixShape>(shape);
    const std::size_t r = std::min(ms.k, ms.m);
    if (sparsity > r) throw usage_error("generate: rank exceeds min(k,m)");
    // Random orthonormal factors U (k x s), V (m x s); all singular values
    // equal to the signal amplitude.
    Mat gu = gauss_matrix(rng, ms.k, sparsity);
    Mat gv = gauss_matrix(rng, ms.m, sparsity);
    for (std::size_t j = 0; j < sparsity; ++j) {
        auto orth = [&](Mat& mat) {
            for (int pass = 0; pass < 2; ++pass)
                for (std::size_t i = 0; i < j; ++i) {
                    double proj = 0.0;
                    for (std::size_t t = 0; t < mat.rows; ++t) proj += mat(t, i) * mat(t, j);
                    for (std::size_t t = 0; t < mat.rows; ++t) mat(t, j) -= proj * mat(t, i);
                }
            double nrm = 0.0;
            for (std::size_t t = 0; t < mat.rows; ++t) nrm += mat(t, j) * mat(t, j);
            nrm = std::sqrt(nrm);
            if (nrm < 1e-10) throw numeric_error("generate: degenerate factor draw");
            for (std::size_t t = 0; t < mat.rows; ++t) mat(t, j) /= nrm;
        };
        orth(gu);
        orth(gv);
    }
    for (std::size_t i = 0; i < ms.k; ++i)
        for (std::size_t j = 0; j < ms.m; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < sparsity; ++t) acc += gu(i, t) * gv(j, t);
            beta[i * ms.m + j] = amplitude * acc;
        }
    return beta;
}

inline Instance generate_instance(const InstanceSpec& spec, RngStream& rng) {
    if (spec.n == 0) throw usage_error("generate: n must be positive");
    validate_shape(spec.shape);
    const std::size_t d = shape_dim(spec.shape);
    Mat x = gauss_matrix(rng, spec.n, d);
    if (spec.orthonormalize) detail::orthonormalize_columns(x);

    Instance inst;
    inst.design = DesignOperator{std::move(x), spec.shape};
    inst.beta_star = generate_beta_star(spec.shape, spec.sparsity, spec.signal_amplitude, rng);
    inst.sigma = spec.sigma;
    inst.xi.resize(spec.n);
    for (auto& v : inst.xi) v = spec.sigma * rng.next_gauss();
    inst.f = apply_design(inst.design, inst.beta_star);
    inst.y.resize(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) inst.y[i] = inst.f[i] + inst.xi[i];
    return inst;
}

// Dual-norm statistic of the noise interaction: the dual norm of
// (1/n) X^T xi with respect to the penalty named by kind.
//   l1      -> max_j |(X^T xi)_j| / n
//   group   -> max_block |(X^T xi)_block|_2 / n
//   nuclear -> largest singular value of (1/n) sum_i xi_i X_i
inline double dual_norm_statistic(const DesignOperator& d, const Vec& xi, PenaltyKind kind) {
    if (xi.size() != d.n()) throw usage_error("dual_norm_statistic: noise length mismatch");
    Vec t = matvec_t(d.x, xi);
    const double inv_n = 1.0 / static_cast<double>(d.n());
    for (auto& v : t) v *= inv_n;
    switch (kind) {
        case PenaltyKind::l1:
            if (!std::holds_alternative<VectorShape>(d.shape))
                throw usage_error("dual_norm_statistic: l1 expects a vector shape");
            return norm_inf(t);
        case PenaltyKind::group: {
            const auto* g = std::get_if<GroupedShape>(&d.shape);
            if (!g) throw usage_error("dual_norm_statistic: group expects a grouped shape");
            double worst = 0.0;
            for (const auto& [b, e] : g->blocks) {
                double acc = 0.0;
                for (std::size_t j = b; j < e; ++j) acc += t[j] * t[j];
                worst = std::max(worst, acc);
            }
            return std::sqrt(worst);
        }
        case PenaltyKind::nuclear: {
            const auto* ms = std::get_if<MatrixShape>(&d.shape);
            if (!ms) throw usage_error("dual_norm_statistic: nuclear expects a matrix shape");
            return spectral_norm(reshape_row_major(t, ms->k, ms->m));
        }
    }
    throw usage_error("dual_norm_statistic: unknown penalty kind");
}

}  // namespace pls
