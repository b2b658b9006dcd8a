#pragma once

// Cone geometry and restricted-eigenvalue style constants: membership tests
// for the decomposition cone, a search-based estimate of the compatibility
// factor mu_{c0}(A), the (squared) restricted eigenvalue constant kappa^2,
// and the closed-form upper bounds on mu from small-ball / subgaussian
// design assumptions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "pls/errors.hpp"
#include "pls/mat.hpp"
#include "pls/model.hpp"
#include "pls/penalty.hpp"
#include "pls/rng.hpp"
#include "pls/svd.hpp"

namespace pls {

struct ConeSpec {
    SupportProjector projector;
    double c0 = 1.0;
    PenaltySpec penalty;  // lambda is irrelevant here; only the norm matters
};

namespace detail {

inline void validate_cone(const ConeSpec& cone) {
    if (!(cone.c0 > 0.0) || !std::isfinite(cone.c0)) {
        throw usage_error("cone constant c0 must be finite and positive");
    }
    if (cone.projector.kind != cone.penalty.kind()) {
        throw usage_error("cone projector and penalty kinds disagree");
    }
}

}  // namespace detail

// Membership in { B : ||P_A_perp B|| <= c0 ||P_A B|| }, norms in the penalty norm.
inline bool cone_contains(const ConeSpec& cone, const Vec& b, double tol = 0.0) {
    detail::validate_cone(cone);
    if (b.size() != cone.penalty.dim()) throw usage_error("cone_contains: dimension mismatch");
    const double on = penalty_norm(cone.penalty, project_support(cone.projector, b));
    const double off = penalty_norm(cone.penalty, project_complement(cone.projector, b));
    return off <= cone.c0 * on + tol;
}

struct CompatEstimate {
    double lower = 0.0;  // best ratio found by the search (a lower bound)
    double upper = std::numeric_limits<double>::quiet_NaN();  // analytic bound when available
    bool infinite = false;  // a cone direction with X B = 0 and P_A B != 0 exists
    std::string method = "search";
    Vec best_direction;  // the argmax found; always a cone member
};

struct SearchBudget {
    std::size_t samples = 10000;
    int refine_starts = 10;
    int refine_iters = 200;
};

namespace detail {

// Orthonormal basis of the numerical null space of x (vectors in R^p with
// ||x v|| ~ 0), including the directions beyond the thin rank when p > n.
inline std::vector<Vec> null_space_basis(const Mat& x, double rel_cutoff = 1e-10) {
    const std::size_t p = x.cols;
    const SvdResult s = svd(x);
    const double smax = s.singular_values.empty() ? 0.0 : s.singular_values[0];
    const double cutoff = rel_cutoff * std::max(smax, 1e-300);

    std::vector<Vec> range, null;
    for (std::size_t i = 0; i < s.singular_values.size(); ++i) {
        Vec col(p);
        for (std::size_t j = 0; j < p; ++j) col[j] = s.v(j, i);
        (s.singular_values[i] > cutoff ? range : null).push_back(std::move(col));
    }
    // Complete with canonical directions orthogonal to everything kept so far.
    for (std::size_t e = 0; e < p && range.size() + null.size() < p; ++e) {
        Vec w(p, 0.0);
        w[e] = 1.0;
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& q : range) axpy(-dot(q, w), q, w);
            for (const auto& q : null) axpy(-dot(q, w), q, w);
        }
        const double nw = norm2(w);
        if (nw > 0.5) {
            for (auto& v : w) v /= nw;
            null.push_back(std::move(w));
        }
    }
    return null;
}

inline bool is_orthonormal_scaled(const DesignOperator& d, double tol = 1e-8) {
    const std::size_t n = d.n(), p = d.dim();
    for (std::size_t a = 0; a < p; ++a) {
        for (std::size_t b = a; b < p; ++b) {
            KahanSum s;
            for (std::size_t i = 0; i < n; ++i) s.add(d.x(i, a) * d.x(i, b));
            const double g = s.value() / static_cast<double>(n) - (a == b ? 1.0 : 0.0);
            if (std::fabs(g) > tol) return false;
        }
    }
    return true;
}

// A subgradient of the penalty norm at v.
inline Vec penalty_norm_subgradient(const PenaltySpec& pen, const Vec& v) {
    Vec g(v.size(), 0.0);
    switch (pen.kind()) {
        case PenaltyKind::l1:
            for (std::size_t j = 0; j < v.size(); ++j) {
                g[j] = (v[j] > 0.0) ? 1.0 : (v[j] < 0.0 ? -1.0 : 0.0);
            }
            return g;
        case PenaltyKind::group: {
            const auto& gs = std::get<GroupedShape>(pen.shape);
            for (const auto& [b, e] : gs.blocks) {
                double acc = 0.0;
                for (std::size_t j = b; j < e; ++j) acc += v[j] * v[j];
                const double nb = std::sqrt(acc);
                if (nb > 0.0) {
                    for (std::size_t j = b; j < e; ++j) g[j] = v[j] / nb;
                }
            }
            return g;
        }
        case PenaltyKind::nuclear: {
            const auto& ms = std::get<MatrixShape>(pen.shape);
            const SvdResult s = svd(reshape_row_major(v, ms.k, ms.m));
            const double smax = s.singular_values.empty() ? 0.0 : s.singular_values[0];
            const double cutoff = 1e-12 * std::max(smax, 1e-300);
            for (std::size_t r = 0; r < s.singular_values.size(); ++r) {
                if (s.singular_values[r] <= cutoff) continue;
                for (std::size_t i = 0; i < ms.k; ++i) {
                    for (std::size_t j = 0; j < ms.m; ++j) {
                        g[i * ms.m + j] += s.u(i, r) * s.v(j, r);
                    }
                }
            }
            return g;
        }
    }
    throw usage_error("penalty_norm_subgradient: unknown kind");
}

// Rescales the complement part so that b lands inside the cone.
inline Vec cone_retract(const ConeSpec& cone, const Vec& b) {
    Vec on = project_support(cone.projector, b);
    Vec off = project_complement(cone.projector, b);
    const double non = penalty_norm(cone.penalty, on);
    const double noff = penalty_norm(cone.penalty, off);
    if (noff > cone.c0 * non && noff > 0.0) {
        const double scale = cone.c0 * non / noff;
        for (auto& v : off) v *= scale;
    }
    Vec out = on;
    axpy(1.0, off, out);
    return out;
}

// Equal-magnitude direction concentrated on the support: the classical
// extremal direction for the compatibility ratio.
inline Vec equal_magnitude_support_direction(const SupportProjector& proj) {
    const std::size_t p = shape_dim(proj.shape);
    Vec b(p, 0.0);
    switch (proj.kind) {
        case PenaltyKind::l1:
            for (std::size_t j : proj.coords) b[j] = 1.0;
            return b;
        case PenaltyKind::group: {
            const auto& gs = std::get<GroupedShape>(proj.shape);
            for (std::size_t bi : proj.blocks) {
                const auto [bb, ee] = gs.blocks[bi];
                const double w = 1.0 / std::sqrt(static_cast<double>(ee - bb));
                for (std::size_t j = bb; j < ee; ++j) b[j] = w;
            }
            return b;
        }
        case PenaltyKind::nuclear: {
            const auto& ms = std::get<MatrixShape>(proj.shape);
            const std::size_t r = proj.left_basis.cols;
            for (std::size_t i = 0; i < ms.k; ++i) {
                for (std::size_t j = 0; j < ms.m; ++j) {
                    double acc = 0.0;
                    for (std::size_t t = 0; t < r; ++t) {
                        acc += proj.left_basis(i, t) * proj.right_basis(j, t);
                    }
                    b[i * ms.m + j] = acc;
                }
            }
            return b;
        }
    }
    throw usage_error("unknown projector kind");
}

}  // namespace detail

// Search-based estimate of mu_{c0}(A) = sup over the cone of
// ||P_A B|| / ||X B||_n. The returned lower member is the best ratio found;
// upper is an analytic bound when one applies.
inline CompatEstimate compatibility_factor(const DesignOperator& d, const ConeSpec& cone,
                                           RngStream& rng, const SearchBudget& budget = {}) {
    detail::validate_cone(cone);
    if (cone.penalty.dim() != d.dim()) {
        throw usage_error("compatibility_factor: penalty and design dimensions disagree");
    }
    const std::size_t p = d.dim(), n = d.n();
    const double s_size = static_cast<double>(cone.projector.support_size());

    CompatEstimate est;
    if (cone.projector.support_size() == 0) {
        // The cone degenerates to {0}; the ratio sup over an empty set is zero.
        est.method = "empty-support";
        est.upper = 0.0;
        est.best_direction.assign(p, 0.0);
        return est;
    }

    const double sigma_top = spectral_norm(d.x);
    const double den_floor = 1e-12 * std::max(sigma_top / std::sqrt(static_cast<double>(n)), 1e-300);

    const auto declare_infinite = [&](const Vec& dir) {
        est.infinite = true;
        est.method = "degenerate-null-direction";
        est.best_direction = dir;
    };

    // Null-space scan: any cone direction annihilated by the design makes mu infinite.
    const std::vector<Vec> null_dirs = detail::null_space_basis(d.x);
    const auto probe_null = [&](const Vec& nu) {
        if (est.infinite) return;
        const double num = penalty_norm(cone.penalty, project_support(cone.projector, nu));
        if (num > 1e-8 && cone_contains(cone, nu, 1e-8)) declare_infinite(nu);
    };
    for (const auto& nu : null_dirs) probe_null(nu);
    if (null_dirs.size() > 1 && !est.infinite) {
        for (int t = 0; t < 100 && !est.infinite; ++t) {
            Vec w(p, 0.0);
            for (const auto& nu : null_dirs) axpy(rng.next_gauss(), nu, w);
            const double nw = norm2(w);
            if (nw > 0.0) {
                for (auto& v : w) v /= nw;
                probe_null(w);
            }
        }
    }
    if (est.infinite) return est;

    double best_ratio = -1.0;
    Vec best_dir;
    std::vector<std::pair<double, Vec>> top;  // candidates for refinement

    const auto consider = [&](Vec b) -> bool {
        const double nb = norm2(b);
        if (nb <= 0.0) return false;
        for (auto& v : b) v /= nb;
        const double num = penalty_norm(cone.penalty, project_support(cone.projector, b));
        const double den = empirical_norm(apply_design(d, b));
        if (den <= den_floor) {
            if (num > 1e-8) {
                declare_infinite(b);
                return true;
            }
            return false;
        }
        const double ratio = num / den;
        if (ratio > best_ratio) {
            best_ratio = ratio;
            best_dir = b;
        }
        top.emplace_back(ratio, std::move(b));
        std::push_heap(top.begin(), top.end(),
                       [](const auto& x, const auto& y) { return x.first > y.first; });
        if (top.size() > static_cast<std::size_t>(budget.refine_starts)) {
            std::pop_heap(top.begin(), top.end(),
                          [](const auto& x, const auto& y) { return x.first > y.first; });
            top.pop_back();
        }
        return false;
    };

    // Seeds: the equal-magnitude support direction plus random support elements.
    if (consider(detail::equal_magnitude_support_direction(cone.projector))) return est;
    for (int t = 0; t < 8; ++t) {
        Vec g = gauss_vector(rng, p);
        if (consider(project_support(cone.projector, g))) return est;
    }

    // Random cone samples: support part kept, complement rescaled to a random
    // fraction of the cone budget.
    for (std::size_t t = 0; t < budget.samples; ++t) {
        const Vec u = gauss_vector(rng, p);
        Vec on = project_support(cone.projector, u);
        Vec off = project_complement(cone.projector, u);
        const double non = penalty_norm(cone.penalty, on);
        if (non <= 0.0) continue;
        const double noff = penalty_norm(cone.penalty, off);
        const double theta = rng.next_uniform();
        const double scale = noff > 0.0 ? theta * cone.c0 * non / noff : 0.0;
        Vec b = on;
        axpy(scale, off, b);
        if (consider(std::move(b))) return est;
    }

    // Subgradient ascent refinement of the best candidates.
    std::vector<std::pair<double, Vec>> starts = top;
    for (auto& [r0, b] : starts) {
        for (int it = 0; it < budget.refine_iters; ++it) {
            const Vec pa = project_support(cone.projector, b);
            const double num = penalty_norm(cone.penalty, pa);
            const Vec xb = apply_design(d, b);
            const double den = empirical_norm(xb);
            if (den <= den_floor) {
                if (num > 1e-8) {
                    declare_infinite(b);
                    return est;
                }
                break;
            }
            // gradient of num/den
            Vec g_num = project_support(cone.projector,
                                        detail::penalty_norm_subgradient(cone.penalty, pa));
            Vec g_den = matvec_t(d.x, xb);
            const double den_scale = 1.0 / (den * static_cast<double>(n));
            for (auto& v : g_den) v *= den_scale;
            Vec grad = g_num;
            for (std::size_t j = 0; j < p; ++j) {
                grad[j] = (grad[j] * den - num * g_den[j]) / (den * den);
            }
            const double gn = norm2(grad);
            if (gn <= 1e-14) break;
            const double step = 0.3 / std::sqrt(1.0 + it);
            axpy(step / gn, grad, b);
            b = detail::cone_retract(cone, b);
            const double nb = norm2(b);
            if (nb <= 1e-14) break;
            for (auto& v : b) v /= nb;
            if (consider(b)) return est;
        }
    }

    est.lower = std::max(best_ratio, 0.0);
    est.best_direction = best_dir;

    // Analytic upper bound when the design is an exact empirical isometry:
    // the numerator is at most sqrt(rank of the projected direction) times
    // its Frobenius/Euclidean norm, and the denominator equals that norm.
    if (detail::is_orthonormal_scaled(d)) {
        est.upper = cone.penalty.kind() == PenaltyKind::nuclear ? std::sqrt(2.0 * s_size)
                                                                : std::sqrt(s_size);
        est.method = "search+orthonormal-upper";
    }
    return est;
}

// Best-found value of min ||X delta||_n^2 / |delta|_2^2 over the restricted
// eigenvalue cone; this is the squared constant kappa^2(S, c0) (coordinate
// support for the l1 penalty, block-index support for the group penalty).
// The search result is an upper bound on the true minimum.
inline double re_constant(const DesignOperator& d, const std::vector<std::size_t>& support,
                          double c0, PenaltyKind kind, RngStream& rng,
                          const SearchBudget& budget = {}) {
    if (support.empty()) throw usage_error("re_constant: support set must be nonempty");
    if (!(c0 > 0.0) || !std::isfinite(c0)) throw usage_error("re_constant: c0 must be positive");
    if (kind == PenaltyKind::nuclear) {
        throw usage_error(
            "no restricted eigenvalue constant is defined for the nuclear penalty; "
            "use the small-ball route instead");
    }
    const std::size_t p = d.dim(), n = d.n();

    std::vector<char> in_support;
    std::vector<std::pair<std::size_t, std::size_t>> blocks;
    if (kind == PenaltyKind::l1) {
        if (!std::holds_alternative<VectorShape>(d.shape)) {
            throw usage_error("re_constant: l1 kind requires a vector-shaped design");
        }
        in_support.assign(p, 0);
        for (std::size_t j : support) {
            if (j >= p) throw usage_error("re_constant: support coordinate out of range");
            in_support[j] = 1;
        }
    } else {
        const auto* gs = std::get_if<GroupedShape>(&d.shape);
        if (gs == nullptr) throw usage_error("re_constant: group kind requires a grouped design");
        blocks = gs->blocks;
        in_support.assign(blocks.size(), 0);
        for (std::size_t bi : support) {
            if (bi >= blocks.size()) throw usage_error("re_constant: block index out of range");
            in_support[bi] = 1;
        }
    }

    // Penalty mass of delta on and off the support, in the cone's norm.
    const auto cone_masses = [&](const Vec& delta) {
        double on = 0.0, off = 0.0;
        if (kind == PenaltyKind::l1) {
            for (std::size_t j = 0; j < p; ++j) {
                (in_support[j] ? on : off) += std::fabs(delta[j]);
            }
        } else {
            for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
                double acc = 0.0;
                for (std::size_t j = blocks[bi].first; j < blocks[bi].second; ++j) {
                    acc += delta[j] * delta[j];
                }
                (in_support[bi] ? on : off) += std::sqrt(acc);
            }
        }
        return std::make_pair(on, off);
    };
    const auto in_cone = [&](const Vec& delta, double tol) {
        const auto [on, off] = cone_masses(delta);
        return off <= c0 * on + tol;
    };
    const auto retract = [&](Vec delta) {
        const auto [on, off] = cone_masses(delta);
        if (off > c0 * on && off > 0.0) {
            const double scale = c0 * on / off;
            if (kind == PenaltyKind::l1) {
                for (std::size_t j = 0; j < p; ++j) {
                    if (!in_support[j]) delta[j] *= scale;
                }
            } else {
                for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
                    if (in_support[bi]) continue;
                    for (std::size_t j = blocks[bi].first; j < blocks[bi].second; ++j) {
                        delta[j] *= scale;
                    }
                }
            }
        }
        return delta;
    };
    const auto rayleigh = [&](const Vec& delta) {
        const double nd = norm2(delta);
        if (nd <= 0.0) return std::numeric_limits<double>::infinity();
        const double en = empirical_norm(apply_design(d, delta));
        return en * en / (nd * nd);
    };

    // Null directions inside the cone pin the constant to exactly zero.
    for (const auto& nu : detail::null_space_basis(d.x)) {
        if (in_cone(nu, 1e-9)) return 0.0;
    }

    double best = std::numeric_limits<double>::infinity();
    std::vector<std::pair<double, Vec>> top;
    const auto consider = [&](Vec delta) {
        const double nd = norm2(delta);
        if (nd <= 0.0) return;
        for (auto& v : delta) v /= nd;
        const double val = rayleigh(delta);
        best = std::min(best, val);
        top.emplace_back(val, std::move(delta));
        std::push_heap(top.begin(), top.end(),
                       [](const auto& x, const auto& y) { return x.first < y.first; });
        if (top.size() > static_cast<std::size_t>(budget.refine_starts)) {
            std::pop_heap(top.begin(), top.end(),
                          [](const auto& x, const auto& y) { return x.first < y.first; });
            top.pop_back();
        }
    };

    // Canonical on-support seeds are always cone members.
    if (kind == PenaltyKind::l1) {
        for (std::size_t j : support) {
            Vec e(p, 0.0);
            e[j] = 1.0;
            consider(std::move(e));
        }
    } else {
        for (std::size_t bi : support) {
            Vec e(p, 0.0);
            for (std::size_t j = blocks[bi].first; j < blocks[bi].second; ++j) e[j] = 1.0;
            consider(std::move(e));
        }
    }
    for (std::size_t t = 0; t < budget.samples; ++t) {
        consider(retract(gauss_vector(rng, p)));
    }

    // Projected gradient descent on the Rayleigh quotient from the best starts.
    const double l_gram = [&] {
        const double sm = top_singular_value_power(d.x);
        return sm * sm / static_cast<double>(n);
    }();
    const double step = l_gram > 0.0 ? 0.5 / l_gram : 0.0;
    std::vector<std::pair<double, Vec>> starts = top;
    for (auto& [v0, delta] : starts) {
        for (int it = 0; it < budget.refine_iters; ++it) {
            const Vec xd = apply_design(d, delta);
            Vec md = matvec_t(d.x, xd);
            for (auto& v : md) v /= static_cast<double>(n);
            const double nd2 = dot(delta, delta);
            if (nd2 <= 1e-28) break;
            const double r = dot(delta, md) / nd2;
            Vec grad = md;
            axpy(-r, delta, grad);
            for (auto& v : grad) v *= 2.0 / nd2;
            axpy(-step, grad, delta);
            delta = retract(std::move(delta));
            const double nd = norm2(delta);
            if (nd <= 1e-14) break;
            for (auto& v : delta) v /= nd;
            best = std::min(best, rayleigh(delta));
        }
    }
    return best;
}

// sqrt(8 s / (beta0^2 kappa0)): the small-ball route upper bound on mu_{c0}.
inline double mu_upper_bound_smallball(double beta0, double kappa0, std::size_t s) {
    if (!(beta0 > 0.0 && beta0 <= 1.0) || !(kappa0 > 0.0 && kappa0 <= 1.0)) {
        throw usage_error("small-ball parameters must lie in (0, 1]");
    }
    if (s == 0) throw usage_error("support size must be at least 1");
    return std::sqrt(8.0 * static_cast<double>(s) / (beta0 * beta0 * kappa0));
}

// 32 L^2 sqrt(s): the subgaussian-design route (group/low-rank propositions).
inline double mu_upper_bound_subgaussian(double l_moment, std::size_t s) {
    if (!(l_moment > 0.0) || !std::isfinite(l_moment)) {
        throw usage_error("subgaussian moment constant must be finite and positive");
    }
    if (s == 0) throw usage_error("support size must be at least 1");
    return 32.0 * l_moment * l_moment * std::sqrt(static_cast<double>(s));
}

}  // namespace pls
