#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <variant>
#include <vector>

#include "pls/errors.hpp"
#include "pls/mat.hpp"
#include "pls/model.hpp"
#include "pls/svd.hpp"

namespace pls {

// Penalty description: the norm family plus the structure it acts on.
// The shape payload fixes the block layout (group) or the matrix
// dimensions (nuclear); for l1 it only carries the ambient dimension.
struct PenaltySpec {
    DesignShape shape;
    double lambda = 0.0;

    PenaltyKind kind() const { return natural_penalty(shape); }
    std::size_t dim() const { return shape_dim(shape); }

    static PenaltySpec l1(std::size_t p, double lambda = 0.0) {
        return PenaltySpec{VectorShape{p}, lambda};
    }
    static PenaltySpec group(std::vector<std::pair<std::size_t, std::size_t>> blocks,
                             double lambda = 0.0) {
        return PenaltySpec{GroupedShape{std::move(blocks)}, lambda};
    }
    static PenaltySpec nuclear(std::size_t k, std::size_t m, double lambda = 0.0) {
        return PenaltySpec{MatrixShape{k, m}, lambda};
    }
};

inline void check_penalty_matches_design(const PenaltySpec& pen, const DesignOperator& d) {
    if (pen.dim() != d.dim()) throw usage_error("penalty/design dimension mismatch");
    if (pen.kind() != natural_penalty(d.shape))
        throw usage_error("penalty kind does not match design shape");
}

inline double penalty_norm(const PenaltySpec& pen, const Vec& beta) {
    if (beta.size() != pen.dim()) throw usage_error("penalty_norm: dimension mismatch");
    switch (pen.kind()) {
        case PenaltyKind::l1:
            return norm1(beta);
        case PenaltyKind::group: {
            const auto& g = std::get<GroupedShape>(pen.shape);
            double total = 0.0;
            for (const auto& [b, e] : g.blocks) {
                double acc = 0.0;
                for (std::size_t j = b; j < e; ++j) acc += beta[j] * beta[j];
                total += std::sqrt(acc);
            }
            return total;
        }
        case PenaltyKind::nuclear: {
            const auto& ms = std::get<MatrixShape>(pen.shape);
            const auto r = svd(reshape_row_major(beta, ms.k, ms.m));
            double total = 0.0;
            for (double s : r.singular_values) total += s;
            return total;
        }
    }
    throw usage_error("penalty_norm: unknown kind");
}

// prox_{t*norm}(v) = argmin_z 0.5|z - v|_2^2 + t*norm(z).
// l1: componentwise soft threshold. group: blockwise shrink of the block
// norm. nuclear: soft threshold of the singular values.
inline Vec prox(const PenaltySpec& pen, const Vec& v, double t) {
    if (v.size() != pen.dim()) throw usage_error("prox: dimension mismatch");
    if (t < 0.0) throw usage_error("prox: threshold must be nonnegative");
    if (t == 0.0) return v;
    switch (pen.kind()) {
        case PenaltyKind::l1: {
            Vec z(v.size());
            for (std::size_t j = 0; j < v.size(); ++j) {
                const double a = std::fabs(v[j]) - t;
                z[j] = a > 0.0 ? (v[j] > 0.0 ? a : -a) : 0.0;
            }
            return z;
        }
        case PenaltyKind::group: {
            const auto& g = std::get<GroupedShape>(pen.shape);
            Vec z(v.size(), 0.0);
            for (const auto& [b, e] : g.blocks) {
                double acc = 0.0;
                for (std::size_t j = b; j < e; ++j) acc += v[j] * v[j];
                const double nrm = std::sqrt(acc);
                if (nrm > t) {
                    const double scale = 1.0 - t / nrm;
                    for (std::size_t j = b; j < e; ++j) z[j] = scale * v[j];
                }
            }
            return z;
        }
        case PenaltyKind::nuclear: {
            const auto& ms = std::get<MatrixShape>(pen.shape);
            const auto r = svd(reshape_row_major(v, ms.k, ms.m));
            Vec z(v.size(), 0.0);
            for (std::size_t s = 0; s < r.singular_values.size(); ++s) {
                const double sv = r.singular_values[s] - t;
                if (sv <= 0.0) continue;
                for (std::size_t i = 0; i < ms.k; ++i)
                    for (std::size_t j = 0; j < ms.m; ++j)
                        z[i * ms.m + j] += sv * r.u(i, s) * r.v(j, s);
            }
            return z;
        }
    }
    throw usage_error("prox: unknown kind");
}

// Support structure of a reference point: active coordinates (l1), active
// blocks (group), or the singular subspace pair (nuclear). Defines the
// decomposition projectors P_A and its complement.
struct SupportProjector {
    PenaltyKind kind = PenaltyKind::l1;
    DesignShape shape;
    std::vector<std::size_t> coords;   // l1
    std::vector<std::size_t> blocks;   // group
    Mat left_basis;                    // nuclear: k x r
    Mat right_basis;                   // nuclear: m x r

    std::size_t support_size() const {
        switch (kind) {
            case PenaltyKind::l1: return coords.size();
            case PenaltyKind::group: return blocks.size();
            case PenaltyKind::nuclear: return left_basis.cols;
        }
        return 0;
    }
};

// Entries (or blocks, or singular values) below rel_zero_tol times the
// largest magnitude count as zero.
inline SupportProjector support_of(const PenaltySpec& pen, const Vec& beta,
                                   double rel_zero_tol = 1e-8) {
    if (beta.size() != pen.dim()) throw usage_error("support_of: dimension mismatch");
    SupportProjector proj;
    proj.kind = pen.kind();
    proj.shape = pen.shape;
    switch (pen.kind()) {
        case PenaltyKind::l1: {
            const double cutoff = rel_zero_tol * norm_inf(beta);
            for (std::size_t j = 0; j < beta.size(); ++j)
                if (std::fabs(beta[j]) > cutoff && beta[j] != 0.0) proj.coords.push_back(j);
            return proj;
        }
        case PenaltyKind::group: {
            const auto& g = std::get<GroupedShape>(pen.shape);
            std::vector<double> norms(g.blocks.size(), 0.0);
            double worst = 0.0;
            for (std::size_t bi = 0; bi < g.blocks.size(); ++bi) {
                const auto [b, e] = g.blocks[bi];
                double acc = 0.0;
                for (std::size_t j = b; j < e; ++j) acc += beta[j] * beta[j];
                norms[bi] = std::sqrt(acc);
                worst = std::max(worst, norms[bi]);
            }
            for (std::size_t bi = 0; bi < g.blocks.size(); ++bi)
                if (norms[bi] > rel_zero_tol * worst && norms[bi] > 0.0) proj.blocks.push_back(bi);
            return proj;
        }
        case PenaltyKind::nuclear: {
            const auto& ms = std::get<MatrixShape>(pen.shape);
            const auto r = svd(reshape_row_major(beta, ms.k, ms.m));
            const double cutoff = rel_zero_tol * (r.singular_values.empty() ? 0.0 : r.singular_values[0]);
            std::size_t rank = 0;
            while (rank < r.singular_values.size() && r.singular_values[rank] > cutoff &&
                   r.singular_values[rank] > 0.0)
                ++rank;
            proj.left_basis = Mat(ms.k, rank);
            proj.right_basis = Mat(ms.m, rank);
            for (std::size_t s = 0; s < rank; ++s) {
                for (std::size_t i = 0; i < ms.k; ++i) proj.left_basis(i, s) = r.u(i, s);
                for (std::size_t j = 0; j < ms.m; ++j) proj.right_basis(j, s) = r.v(j, s);
            }
            return proj;
        }
    }
    throw usage_error("support_of: unknown kind");
}

namespace detail {

// For the matrix case: B - (I - UU^T) B (I - VV^T), i.e. everything of B
// that touches the row space of U or the column space of V.
inline Vec nuclear_project_support(const SupportProjector& proj, const Vec& b) {
    const auto& ms = std::get<MatrixShape>(proj.shape);
    const std::size_t k = ms.k, m = ms.m, r = proj.left_basis.cols;
    if (r == 0) return Vec(b.size(), 0.0);
    Mat bm = reshape_row_major(b, k, m);
    // C = (I - UU^T) B
    Mat ut_b(r, m);
    for (std::size_t s = 0; s < r; ++s)
        for (std::size_t j = 0; j < m; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < k; ++i) acc += proj.left_basis(i, s) * bm(i, j);
            ut_b(s, j) = acc;
        }
    Mat c = bm;
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double acc = 0.0;
            for (std::size_t s = 0; s < r; ++s) acc += proj.left_basis(i, s) * ut_b(s, j);
            c(i, j) -= acc;
        }
    // C <- C (I - VV^T); what is left is the complement part.
    Mat c_v(k, r);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t s = 0; s < r; ++s) {
            double acc = 0.0;
            for (std::size_t j = 0; j < m; ++j) acc += c(i, j) * proj.right_basis(j, s);
            c_v(i, s) = acc;
        }
    Vec out(b.size());
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double acc = 0.0;
            for (std::size_t s = 0; s < r; ++s) acc += c_v(i, s) * proj.right_basis(j, s);
            const double complement = c(i, j) - acc;
            out[i * m + j] = bm(i, j) - complement;
        }
    return out;
}

}  // namespace detail

inline Vec project_support(const SupportProjector& proj, const Vec& b) {
    if (b.size() != shape_dim(proj.shape)) throw usage_error("project_support: dimension mismatch");
    switch (proj.kind) {
        case PenaltyKind::l1: {
            Vec out(b.size(), 0.0);
            for (std::size_t j : proj.coords) out[j] = b[j];
            return out;
        }
        case PenaltyKind::group: {
            const auto& g = std::get<GroupedShape>(proj.shape);
            Vec out(b.size(), 0.0);
            for (std::size_t bi : proj.blocks) {
                const auto [bb, ee] = g.blocks[bi];
                for (std::size_t j = bb; j < ee; ++j) out[j] = b[j];
            }
            return out;
        }
        case PenaltyKind::nuclear:
            return detail::nuclear_project_support(proj, b);
    }
    throw usage_error("project_support: unknown kind");
}

inline Vec project_complement(const SupportProjector& proj, const Vec& b) {
    Vec s = project_support(proj, b);
    Vec out(b.size());
    for (std::size_t j = 0; j < b.size(); ++j) out[j] = b[j] - s[j];
    return out;
}

// Numerical check of the two structural properties the estimation theory
// rests on, at the pair (a, b) with A = support_of(a):
//   equality_violation = | norm(a) + norm(P_A_perp b) - norm(a + P_A_perp b) |
//   inequality_slack   = norm(P_A(a-b)) - norm(P_A_perp b) - (norm(a) - norm(b))
// The first should vanish, the second should be nonnegative.
struct DecomposabilityCheck {
    double equality_violation = 0.0;
    double inequality_slack = 0.0;
};

inline DecomposabilityCheck check_decomposability(const PenaltySpec& pen, const Vec& a,
                                                  const Vec& b, double rel_zero_tol = 1e-8) {
    const SupportProjector proj = support_of(pen, a, rel_zero_tol);
    const Vec b_perp = project_complement(proj, b);
    Vec a_plus(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) a_plus[j] = a[j] + b_perp[j];

    DecomposabilityCheck out;
    out.equality_violation =
        std::fabs(penalty_norm(pen, a) + penalty_norm(pen, b_perp) - penalty_norm(pen, a_plus));

    const Vec diff = sub(a, b);
    const Vec p_diff = project_support(proj, diff);
    out.inequality_slack = penalty_norm(pen, p_diff) - penalty_norm(pen, b_perp) -
                           (penalty_norm(pen, a) - penalty_norm(pen, b));
    return out;
}

}  // namespace pls
