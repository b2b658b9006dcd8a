#pragma once

// Small-ball certification machinery: empirical small-ball constants, the
// fourth-moment ratio L, Gaussian mean width and Rademacher complexity of
// cone sections, the restricted empirical-norm lower bound, and the
// sample-size conditions attached to it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
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

enum class SmallBallProvenance { assumed, moment_derived, subgaussian };

struct SmallBallParams {
    double beta0 = 1.0 / std::numbers::sqrt2;
    double kappa0 = 0.5;
    SmallBallProvenance provenance = SmallBallProvenance::assumed;
    double l_moment = std::numeric_limits<double>::quiet_NaN();
};

inline void validate_smallball_params(const SmallBallParams& p) {
    if (!(p.beta0 > 0.0 && p.beta0 <= 1.0)) {
        throw usage_error("small-ball beta0 must lie in (0, 1]");
    }
    if (!(p.kappa0 > 0.0 && p.kappa0 < 1.0)) {
        throw usage_error("small-ball kappa0 must lie in (0, 1)");
    }
}

// The fourth-to-second moment ratio of a one-dimensional standard Gaussian:
// (E Z^4)^{1/4} / (2 (E Z^2)^{1/2}) = 3^{1/4} / 2.
inline double gaussian_moment_ratio() { return std::pow(3.0, 0.25) / 2.0; }

// beta0 = 1/sqrt(2), kappa0 = 1/(64 L^4): the small-ball parameters implied
// by an isotropic law with fourth-moment ratio at most L.
inline SmallBallParams smallball_params_from_L(double l_moment) {
    if (!(l_moment > 0.0) || !std::isfinite(l_moment)) {
        throw usage_error("moment ratio L must be finite and positive");
    }
    SmallBallParams p;
    p.beta0 = 1.0 / std::numbers::sqrt2;
    p.kappa0 = 1.0 / (64.0 * std::pow(l_moment, 4.0));
    p.provenance = SmallBallProvenance::moment_derived;
    p.l_moment = l_moment;
    validate_smallball_params(p);  // rejects L too small for kappa0 < 1
    return p;
}

// Convex relaxation of the union of decomposition cones intersected with the
// sphere: ((1 + c0) sqrt(s) * penalty ball) intersected with the l2 ball.
struct ConeSection {
    PenaltyKind kind = PenaltyKind::l1;
    DesignShape shape;
    std::size_t s = 1;
    double c0 = 1.0;

    double radius() const { return (1.0 + c0) * std::sqrt(static_cast<double>(s)); }
};

inline void validate_section(const ConeSection& sec) {
    if (sec.s == 0) throw usage_error("cone section sparsity must be at least 1");
    if (!(sec.c0 > 0.0) || !std::isfinite(sec.c0)) {
        throw usage_error("cone section c0 must be finite and positive");
    }
    if (sec.kind != natural_penalty(sec.shape)) {
        throw usage_error("cone section kind must match its shape");
    }
}

using RowSampler = std::function<Vec(RngStream&)>;

inline RowSampler gaussian_row_sampler(std::size_t dim) {
    return [dim](RngStream& rng) { return gauss_vector(rng, dim); };
}

// Minimum over unit directions B (canonical basis first, then random) of the
// empirical frequency of {|<X, B>| >= beta0}. A sampled surrogate for the
// "for all B" quantifier of the small-ball assumption.
inline double estimate_small_ball(const RowSampler& sampler, std::size_t dim, double beta0,
                                  std::size_t directions, std::size_t samples, RngStream& rng) {
    if (dim == 0 || directions == 0 || samples == 0) {
        throw usage_error("small-ball estimation needs positive dimension and counts");
    }
    if (!(beta0 > 0.0)) throw usage_error("beta0 must be positive");
    double worst = 1.0;
    for (std::size_t di = 0; di < directions; ++di) {
        Vec b;
        if (di < dim) {
            b.assign(dim, 0.0);
            b[di] = 1.0;
        } else {
            b = unit_sphere_vector(rng, dim);
        }
        std::size_t hits = 0;
        for (std::size_t t = 0; t < samples; ++t) {
            const Vec x = sampler(rng);
            if (std::fabs(dot(x, b)) >= beta0) ++hits;
        }
        worst = std::min(worst, static_cast<double>(hits) / static_cast<double>(samples));
    }
    return worst;
}

struct MomentRatio {
    double l_estimate = 0.0;          // max over directions of (E4)^{1/4} / (2 sqrt(E2))
    double isotropy_deviation = 0.0;  // max over directions of |E2 - 1|
};

// Sampled fourth-to-second moment ratio over unit directions (canonical basis
// first, then random); the sample pool is shared across directions.
inline MomentRatio moment_ratio_L(const RowSampler& sampler, std::size_t dim,
                                  std::size_t directions, std::size_t samples, RngStream& rng) {
    if (dim == 0 || directions == 0 || samples == 0) {
        throw usage_error("moment ratio estimation needs positive dimension and counts");
    }
    std::vector<Vec> pool(samples);
    for (auto& row : pool) row = sampler(rng);

    MomentRatio out;
    for (std::size_t di = 0; di < directions; ++di) {
        Vec b;
        if (di < dim) {
            b.assign(dim, 0.0);
            b[di] = 1.0;
        } else {
            b = unit_sphere_vector(rng, dim);
        }
        KahanSum m2, m4;
        for (const auto& x : pool) {
            const double z = dot(x, b);
            const double z2 = z * z;
            m2.add(z2);
            m4.add(z2 * z2);
        }
        const double e2 = m2.value() / static_cast<double>(samples);
        const double e4 = m4.value() / static_cast<double>(samples);
        if (e2 > 0.0) {
            out.l_estimate = std::max(out.l_estimate, std::pow(e4, 0.25) / (2.0 * std::sqrt(e2)));
        }
        out.isotropy_deviation = std::max(out.isotropy_deviation, std::fabs(e2 - 1.0));
    }
    return out;
}

namespace detail {

// Penalty-norm "magnitudes" of v: absolute entries (l1), block norms (group),
// or singular values (nuclear), with enough context to rebuild a vector from
// shrunken magnitudes. For all three kinds, sum(mags) is the penalty norm and
// sqrt(sum of squares) is the euclidean norm of v.
struct MagnitudeView {
    PenaltyKind kind = PenaltyKind::l1;
    DesignShape shape;
    Vec v;
    SvdResult svd_res;  // nuclear only
    std::vector<double> mags;

    Vec rebuild(const std::vector<double>& nm) const {
        switch (kind) {
            case PenaltyKind::l1: {
                Vec out(v.size(), 0.0);
                for (std::size_t j = 0; j < v.size(); ++j) {
                    out[j] = (v[j] >= 0.0 ? 1.0 : -1.0) * nm[j];
                }
                return out;
            }
            case PenaltyKind::group: {
                const auto& gs = std::get<GroupedShape>(shape);
                Vec out(v.size(), 0.0);
                for (std::size_t bi = 0; bi < gs.blocks.size(); ++bi) {
                    if (mags[bi] <= 0.0) continue;
                    const double scale = nm[bi] / mags[bi];
                    for (std::size_t j = gs.blocks[bi].first; j < gs.blocks[bi].second; ++j) {
                        out[j] = v[j] * scale;
                    }
                }
                return out;
            }
            case PenaltyKind::nuclear: {
                const auto& ms = std::get<MatrixShape>(shape);
                Vec out(ms.k * ms.m, 0.0);
                for (std::size_t r = 0; r < nm.size(); ++r) {
                    if (nm[r] == 0.0) continue;
                    for (std::size_t i = 0; i < ms.k; ++i) {
                        for (std::size_t j = 0; j < ms.m; ++j) {
                            out[i * ms.m + j] += nm[r] * svd_res.u(i, r) * svd_res.v(j, r);
                        }
                    }
                }
                return out;
            }
        }
        throw usage_error("unknown penalty kind");
    }
};

inline MagnitudeView decompose_magnitudes(PenaltyKind kind, const DesignShape& shape,
                                          const Vec& v) {
    MagnitudeView mv;
    mv.kind = kind;
    mv.shape = shape;
    mv.v = v;
    switch (kind) {
        case PenaltyKind::l1:
            mv.mags.resize(v.size());
            for (std::size_t j = 0; j < v.size(); ++j) mv.mags[j] = std::fabs(v[j]);
            return mv;
        case PenaltyKind::group: {
            const auto& gs = std::get<GroupedShape>(shape);
            mv.mags.resize(gs.blocks.size());
            for (std::size_t bi = 0; bi < gs.blocks.size(); ++bi) {
                double acc = 0.0;
                for (std::size_t j = gs.blocks[bi].first; j < gs.blocks[bi].second; ++j) {
                    acc += v[j] * v[j];
                }
                mv.mags[bi] = std::sqrt(acc);
            }
            return mv;
        }
        case PenaltyKind::nuclear: {
            const auto& ms = std::get<MatrixShape>(shape);
            mv.svd_res = svd(reshape_row_major(v, ms.k, ms.m));
            mv.mags = mv.svd_res.singular_values;
            return mv;
        }
    }
    throw usage_error("unknown penalty kind");
}

// Ratio sum((m - theta)+) / sqrt(sum((m - theta)+^2)): nonincreasing in theta.
inline double shrunk_ratio(const std::vector<double>& mags, double theta) {
    double s1 = 0.0, s2 = 0.0;
    for (double m : mags) {
        const double w = std::max(0.0, m - theta);
        s1 += w;
        s2 += w * w;
    }
    if (s2 <= 0.0) return 1.0;
    return s1 / std::sqrt(s2);
}

// Largest theta with shrunk ratio still at least target (bisection).
inline double bisect_shrink_level(const std::vector<double>& mags, double target) {
    double lo = 0.0;
    double hi = *std::max_element(mags.begin(), mags.end());
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        (shrunk_ratio(mags, mid) > target ? lo : hi) = mid;
    }
    return hi;
}

}  // namespace detail

// Exact maximum of <v, t> over the section's intersection of the scaled
// penalty ball and the unit l2 ball, via the Lagrangian dual
// min over theta >= 0 of [theta * R + |shrink(v, theta)|_2].
// If argmax is non-null it receives a feasible point attaining the value (up
// to bisection precision).
inline double support_function(const Vec& v, const ConeSection& sec, Vec* argmax = nullptr) {
    validate_section(sec);
    if (v.size() != shape_dim(sec.shape)) {
        throw usage_error("support_function: dimension mismatch");
    }
    const double nv = norm2(v);
    if (nv <= 0.0) {
        if (argmax != nullptr) argmax->assign(v.size(), 0.0);
        return 0.0;
    }
    const double radius = sec.radius();
    auto mv = detail::decompose_magnitudes(sec.kind, sec.shape, v);
    if (detail::shrunk_ratio(mv.mags, 0.0) <= radius) {
        // The l2 constraint binds alone.
        if (argmax != nullptr) {
            *argmax = v;
            for (auto& t : *argmax) t /= nv;
        }
        return nv;
    }
    const double theta = detail::bisect_shrink_level(mv.mags, radius);
    std::vector<double> soft(mv.mags.size());
    double s2 = 0.0;
    for (std::size_t i = 0; i < soft.size(); ++i) {
        soft[i] = std::max(0.0, mv.mags[i] - theta);
        s2 += soft[i] * soft[i];
    }
    const double soft_l2 = std::sqrt(s2);
    const double value = theta * radius + soft_l2;
    if (argmax != nullptr && soft_l2 > 0.0) {
        for (auto& w : soft) w /= soft_l2;
        *argmax = mv.rebuild(soft);
        // Guard the degenerate all-equal case where the shrink direction can
        // overshoot the penalty ball; rescaling keeps the point feasible.
        const double pen = std::accumulate(soft.begin(), soft.end(), 0.0);
        if (pen > radius * (1.0 + 1e-12)) {
            for (auto& t : *argmax) t *= radius / pen;
        }
    }
    return value;
}

struct MonteCarloEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t trials = 0;
};

// Monte Carlo mean of a functional of a standard Gaussian vector.
template <class SupportFn>
MonteCarloEstimate monte_carlo_width(RngStream& rng, std::size_t dim, std::size_t trials,
                                     SupportFn&& support) {
    if (trials < 2) throw usage_error("width estimation needs at least 2 trials");
    KahanSum sum, sumsq;
    for (std::size_t t = 0; t < trials; ++t) {
        const double w = support(gauss_vector(rng, dim));
        sum.add(w);
        sumsq.add(w * w);
    }
    MonteCarloEstimate est;
    est.trials = trials;
    est.mean = sum.value() / static_cast<double>(trials);
    const double var =
        std::max(0.0, (sumsq.value() - static_cast<double>(trials) * est.mean * est.mean) /
                          static_cast<double>(trials - 1));
    est.std_error = std::sqrt(var / static_cast<double>(trials));
    return est;
}

// Gaussian mean width of a cone section: E sup over the section of <G, t>.
inline MonteCarloEstimate mean_width(RngStream& rng, const ConeSection& sec, std::size_t trials) {
    validate_section(sec);
    return monte_carlo_width(rng, shape_dim(sec.shape), trials,
                             [&sec](const Vec& g) { return support_function(g, sec); });
}

// Monte Carlo estimate of E sup over the section of |(1/n) sum eps_i <X_i, B>|.
inline MonteCarloEstimate rademacher_complexity(const RowSampler& sampler, const ConeSection& sec,
                                                std::size_t n, std::size_t trials,
                                                RngStream& rng) {
    validate_section(sec);
    if (n == 0) throw usage_error("rademacher complexity needs a positive sample size");
    if (trials < 2) throw usage_error("rademacher complexity needs at least 2 trials");
    const std::size_t dim = shape_dim(sec.shape);
    KahanSum sum, sumsq;
    for (std::size_t t = 0; t < trials; ++t) {
        Vec w(dim, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const Vec x = sampler(rng);
            if (x.size() != dim) throw usage_error("sampler dimension mismatch");
            const double eps = rng.next_uniform() < 0.5 ? -1.0 : 1.0;
            axpy(eps, x, w);
        }
        for (auto& c : w) c /= static_cast<double>(n);
        Vec neg = w;
        for (auto& c : neg) c = -c;
        const double val = std::max(support_function(w, sec), support_function(neg, sec));
        sum.add(val);
        sumsq.add(val * val);
    }
    MonteCarloEstimate est;
    est.trials = trials;
    est.mean = sum.value() / static_cast<double>(trials);
    const double var =
        std::max(0.0, (sumsq.value() - static_cast<double>(trials) * est.mean * est.mean) /
                          static_cast<double>(trials - 1));
    est.std_error = std::sqrt(var / static_cast<double>(trials));
    return est;
}

struct RestrictedLowerBound {
    double min_ratio = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

// Minimum over sampled section elements B of ||X B||_n / |B|_2, compared with
// the small-ball threshold sqrt(beta0^2 kappa0 / 8). Samples alternate between
// sparse directions (support of size s) and penalty-ball boundary points.
inline RestrictedLowerBound restricted_lower_bound_check(const DesignOperator& d,
                                                         const ConeSection& sec,
                                                         const SmallBallParams& params,
                                                         std::size_t samples, RngStream& rng) {
    validate_section(sec);
    validate_smallball_params(params);
    if (samples == 0) throw usage_error("restricted bound check needs at least one sample");
    const std::size_t dim = shape_dim(sec.shape);
    if (d.dim() != dim) throw usage_error("restricted bound check: design dimension mismatch");

    const auto sparse_sample = [&]() -> Vec {
        Vec b(dim, 0.0);
        switch (sec.kind) {
            case PenaltyKind::l1: {
                for (std::size_t j : detail::sample_without_replacement(rng, sec.s, dim)) {
                    b[j] = rng.next_gauss();
                }
                return b;
            }
            case PenaltyKind::group: {
                const auto& gs = std::get<GroupedShape>(sec.shape);
                const std::size_t count = std::min(sec.s, gs.blocks.size());
                for (std::size_t bi :
                     detail::sample_without_replacement(rng, count, gs.blocks.size())) {
                    for (std::size_t j = gs.blocks[bi].first; j < gs.blocks[bi].second; ++j) {
                        b[j] = rng.next_gauss();
                    }
                }
                return b;
            }
            case PenaltyKind::nuclear: {
                const auto& ms = std::get<MatrixShape>(sec.shape);
                const std::size_t r = std::min({sec.s, ms.k, ms.m});
                const Mat left = gauss_matrix(rng, ms.k, r);
                const Mat right = gauss_matrix(rng, ms.m, r);
                for (std::size_t i = 0; i < ms.k; ++i) {
                    for (std::size_t j = 0; j < ms.m; ++j) {
                        double acc = 0.0;
                        for (std::size_t t = 0; t < r; ++t) acc += left(i, t) * right(j, t);
                        b[i * ms.m + j] = acc;
                    }
                }
                return b;
            }
        }
        throw usage_error("unknown penalty kind");
    };

    double worst = std::numeric_limits<double>::infinity();
    const double radius = sec.radius();
    for (std::size_t t = 0; t < samples; ++t) {
        Vec b;
        if (t % 2 == 0) {
            b = sparse_sample();
        } else {
            b = gauss_vector(rng, dim);
            auto mv = detail::decompose_magnitudes(sec.kind, sec.shape, b);
            if (detail::shrunk_ratio(mv.mags, 0.0) > radius) {
                const double theta = detail::bisect_shrink_level(mv.mags, radius);
                std::vector<double> soft(mv.mags.size());
                for (std::size_t i = 0; i < soft.size(); ++i) {
                    soft[i] = std::max(0.0, mv.mags[i] - theta);
                }
                b = mv.rebuild(soft);
            }
        }
        const double nb = norm2(b);
        if (nb <= 0.0) continue;
        worst = std::min(worst, empirical_norm(apply_design(d, b)) / nb);
    }

    RestrictedLowerBound out;
    out.min_ratio = worst;
    out.threshold = std::sqrt(params.beta0 * params.beta0 * params.kappa0 / 8.0);
    out.pass = worst >= out.threshold;
    return out;
}

// ceil(override * (1 + c0)^2 * shape term): the sample-size conditions under
// which the restricted lower bound is certified. Shape terms:
//   l1      s log(e p / s) / (kappa0 beta0)^2
//   group   s (T + log(M / s))      with T the largest block size
//   nuclear s max(k, m)
inline std::size_t min_sample_size(PenaltyKind kind, std::size_t s, double c0,
                                   const SmallBallParams& params, const DesignShape& dims,
                                   double constant_override = 1.0) {
    if (s == 0) throw usage_error("sparsity must be at least 1");
    if (!(c0 >= 0.0) || !std::isfinite(c0)) throw usage_error("c0 must be finite and nonnegative");
    if (!(constant_override > 0.0) || !std::isfinite(constant_override)) {
        throw usage_error("constant override must be finite and positive");
    }
    validate_smallball_params(params);

    double shape_term = 0.0;
    switch (kind) {
        case PenaltyKind::l1: {
            const auto* vs = std::get_if<VectorShape>(&dims);
            if (vs == nullptr) throw usage_error("l1 sample size needs a vector shape");
            if (s > vs->p) throw usage_error("sparsity exceeds dimension");
            const double p = static_cast<double>(vs->p);
            const double ds = static_cast<double>(s);
            const double kb = params.kappa0 * params.beta0;
            shape_term = ds * std::log(std::exp(1.0) * p / ds) / (kb * kb);
            break;
        }
        case PenaltyKind::group: {
            const auto* gs = std::get_if<GroupedShape>(&dims);
            if (gs == nullptr) throw usage_error("group sample size needs a grouped shape");
            if (s > gs->blocks.size()) throw usage_error("sparsity exceeds the block count");
            std::size_t t_max = 0;
            for (const auto& [b, e] : gs->blocks) t_max = std::max(t_max, e - b);
            const double m_blocks = static_cast<double>(gs->blocks.size());
            const double ds = static_cast<double>(s);
            shape_term = ds * (static_cast<double>(t_max) + std::log(m_blocks / ds));
            break;
        }
        case PenaltyKind::nuclear: {
            const auto* ms = std::get_if<MatrixShape>(&dims);
            if (ms == nullptr) throw usage_error("nuclear sample size needs a matrix shape");
            if (s > std::min(ms->k, ms->m)) throw usage_error("rank exceeds matrix dimensions");
            shape_term = static_cast<double>(s) * static_cast<double>(std::max(ms->k, ms->m));
            break;
        }
    }
    const double value = constant_override * (1.0 + c0) * (1.0 + c0) * shape_term;
    return static_cast<std::size_t>(std::ceil(value));
}

}  // namespace pls
