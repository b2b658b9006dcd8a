#pragma once

// Penalty-level calculators: the deterministic noise thresholds tau' for each
// penalty, the lambda = 10*tau' rule, the random-design lambda rules, and the
// rank-one restricted maximal eigenvalue phi_max used by the nuclear rule.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <variant>

#include "pls/errors.hpp"
#include "pls/mat.hpp"
#include "pls/model.hpp"
#include "pls/rng.hpp"
#include "pls/svd.hpp"

namespace pls {

inline double max_column_empirical_norm(const DesignOperator& d) {
    const std::size_t n = d.n(), p = d.dim();
    double best = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
        KahanSum s;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = d.x(i, j);
            s.add(v * v);
        }
        best = std::max(best, std::sqrt(s.value() / static_cast<double>(n)));
    }
    return best;
}

namespace detail {

inline void require_sigma(double sigma) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
        throw usage_error("noise level sigma must be finite and nonnegative");
    }
}

inline Mat columns_submatrix(const Mat& x, std::size_t begin, std::size_t end) {
    Mat sub(x.rows, end - begin);
    for (std::size_t i = 0; i < x.rows; ++i) {
        for (std::size_t j = begin; j < end; ++j) sub(i, j - begin) = x(i, j);
    }
    return sub;
}

}  // namespace detail

// sigma * max_j ||X e_j||_n * sqrt(2 log p / n)
inline double tau_lasso(const DesignOperator& d, double sigma) {
    detail::require_sigma(sigma);
    if (!std::holds_alternative<VectorShape>(d.shape)) {
        throw usage_error("tau_lasso requires a vector-shaped design");
    }
    const double n = static_cast<double>(d.n());
    const double p = static_cast<double>(d.dim());
    return sigma * max_column_empirical_norm(d) * std::sqrt(2.0 * std::log(p) / n);
}

struct GroupColumnScales {
    double psi_frobenius = 0.0;  // max_k ||X_{G_k}||_Fr / sqrt(n)
    double psi_spectral = 0.0;   // max_k ||X_{G_k}||_sp / sqrt(n)
};

inline GroupColumnScales group_column_scales(const DesignOperator& d) {
    const auto* gs = std::get_if<GroupedShape>(&d.shape);
    if (gs == nullptr) throw usage_error("group column scales require a grouped design");
    const double sqrt_n = std::sqrt(static_cast<double>(d.n()));
    GroupColumnScales out;
    for (const auto& [begin, end] : gs->blocks) {
        const Mat sub = detail::columns_submatrix(d.x, begin, end);
        out.psi_frobenius = std::max(out.psi_frobenius, frobenius_norm(sub) / sqrt_n);
        out.psi_spectral = std::max(out.psi_spectral, spectral_norm(sub) / sqrt_n);
    }
    return out;
}

// (sigma / sqrt(n)) * (psi*_Fr + psi*_sp * sqrt(2 log(2M)))
inline double tau_group(const DesignOperator& d, double sigma) {
    detail::require_sigma(sigma);
    const auto* gs = std::get_if<GroupedShape>(&d.shape);
    if (gs == nullptr) throw usage_error("tau_group requires a grouped design");
    const GroupColumnScales scales = group_column_scales(d);
    const double n = static_cast<double>(d.n());
    const double m_groups = static_cast<double>(gs->blocks.size());
    return sigma / std::sqrt(n) *
           (scales.psi_frobenius + scales.psi_spectral * std::sqrt(2.0 * std::log(2.0 * m_groups)));
}

struct PhiMaxOptions {
    int restarts = 20;
    double tol = 1e-8;
    int max_alternations = 200;
};

// max over unit u in R^k, v in R^m of sqrt((1/n) sum_i <X_i, u v^T>^2),
// by alternating maximization: for fixed v the optimal u is the top right
// singular direction of the n x k matrix with rows (X_i v)^T, and symmetrically.
inline double phi_max(const DesignOperator& d, RngStream& rng, const PhiMaxOptions& opt = {}) {
    const auto* ms = std::get_if<MatrixShape>(&d.shape);
    if (ms == nullptr) throw usage_error("phi_max requires a matrix-shaped design");
    const std::size_t n = d.n(), k = ms->k, m = ms->m;
    const double sqrt_n = std::sqrt(static_cast<double>(n));

    double best = 0.0;
    for (int r = 0; r < opt.restarts; ++r) {
        Vec v = unit_sphere_vector(rng, m);
        Vec u(k, 0.0);
        double prev = -1.0, val = 0.0;
        for (int it = 0; it < opt.max_alternations; ++it) {
            Mat w(n, k);  // w(i, a) = sum_j X_i(a, j) v_j
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t a = 0; a < k; ++a) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < m; ++j) acc += d.x(i, a * m + j) * v[j];
                    w(i, a) = acc;
                }
            }
            SvdResult su = svd(w);
            for (std::size_t a = 0; a < k; ++a) u[a] = su.v(a, 0);

            Mat z(n, m);  // z(i, j) = sum_a u_a X_i(a, j)
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < m; ++j) {
                    double acc = 0.0;
                    for (std::size_t a = 0; a < k; ++a) acc += d.x(i, a * m + j) * u[a];
                    z(i, j) = acc;
                }
            }
            SvdResult sv = svd(z);
            for (std::size_t j = 0; j < m; ++j) v[j] = sv.v(j, 0);
            val = sv.singular_values[0] / sqrt_n;

            if (std::fabs(val - prev) <= opt.tol * std::max(1.0, val)) break;
            prev = val;
        }
        best = std::max(best, val);
    }
    return best;
}

// 8 * sigma * phi_max * sqrt((k + m) / n); requires k >= 2 and m >= 2.
inline double tau_nuclear(const DesignOperator& d, double sigma, double phi) {
    detail::require_sigma(sigma);
    const auto* ms = std::get_if<MatrixShape>(&d.shape);
    if (ms == nullptr) throw usage_error("tau_nuclear requires a matrix-shaped design");
    if (ms->k < 2 || ms->m < 2) {
        throw usage_error("tau_nuclear requires both matrix dimensions to be at least 2");
    }
    if (!(phi >= 0.0) || !std::isfinite(phi)) {
        throw usage_error("phi_max value must be finite and nonnegative");
    }
    const double n = static_cast<double>(d.n());
    return 8.0 * sigma * phi * std::sqrt(static_cast<double>(ms->k + ms->m) / n);
}

inline double tau_nuclear(const DesignOperator& d, double sigma, RngStream& rng,
                          const PhiMaxOptions& opt = {}) {
    return tau_nuclear(d, sigma, phi_max(d, rng, opt));
}

// The minimal admissible lambda for the deterministic rules.
inline double lambda_from_tau(double tau_prime) {
    if (!(tau_prime >= 0.0) || !std::isfinite(tau_prime)) {
        throw usage_error("tau_prime must be finite and nonnegative");
    }
    return 10.0 * tau_prime;
}

struct TuningReport {
    double tau_prime = 0.0;
    double lambda = 0.0;
    // Per-penalty diagnostics; NaN when not applicable.
    double max_column_norm = std::numeric_limits<double>::quiet_NaN();
    double psi_frobenius = std::numeric_limits<double>::quiet_NaN();
    double psi_spectral = std::numeric_limits<double>::quiet_NaN();
    double phi_max_value = std::numeric_limits<double>::quiet_NaN();
    std::string rule = "deterministic";
};

// Assembles tau' and lambda = 10 tau' for the design's natural penalty.
// The RNG stream is consumed only for matrix shapes (phi_max restarts).
inline TuningReport tune_deterministic(const DesignOperator& d, double sigma, RngStream& rng,
                                       const PhiMaxOptions& phi_opt = {}) {
    TuningReport rep;
    rep.rule = "deterministic";
    switch (natural_penalty(d.shape)) {
        case PenaltyKind::l1:
            rep.max_column_norm = max_column_empirical_norm(d);
            rep.tau_prime = tau_lasso(d, sigma);
            break;
        case PenaltyKind::group: {
            const GroupColumnScales scales = group_column_scales(d);
            rep.psi_frobenius = scales.psi_frobenius;
            rep.psi_spectral = scales.psi_spectral;
            rep.tau_prime = tau_group(d, sigma);
            break;
        }
        case PenaltyKind::nuclear:
            rep.phi_max_value = phi_max(d, rng, phi_opt);
            rep.tau_prime = tau_nuclear(d, sigma, rep.phi_max_value);
            break;
    }
    rep.lambda = lambda_from_tau(rep.tau_prime);
    return rep;
}

// Random-design rules: a*sigma*sqrt(2 log p / n) for L1 with a >= 20, and
// a*sigma*sqrt((k+m)/n) for nuclear with a >= 120. No rule exists for the
// group penalty, so that combination is refused rather than invented.
inline double lambda_random_design(PenaltyKind kind, const DesignShape& shape, std::size_t n,
                                   double sigma, double a) {
    detail::require_sigma(sigma);
    if (n == 0) throw usage_error("sample size must be positive");
    const double dn = static_cast<double>(n);
    switch (kind) {
        case PenaltyKind::l1: {
            if (!(a >= 20.0)) {
                throw usage_error("random-design L1 rule requires a >= 20");
            }
            const auto* vs = std::get_if<VectorShape>(&shape);
            if (vs == nullptr) throw usage_error("L1 random-design rule requires a vector shape");
            return a * sigma * std::sqrt(2.0 * std::log(static_cast<double>(vs->p)) / dn);
        }
        case PenaltyKind::nuclear: {
            if (!(a >= 120.0)) {
                throw usage_error("random-design nuclear rule requires a >= 120");
            }
            const auto* ms = std::get_if<MatrixShape>(&shape);
            if (ms == nullptr) {
                throw usage_error("nuclear random-design rule requires a matrix shape");
            }
            if (ms->k < 2 || ms->m < 2) {
                throw usage_error("nuclear random-design rule requires k >= 2 and m >= 2");
            }
            return a * sigma * std::sqrt(static_cast<double>(ms->k + ms->m) / dn);
        }
        case PenaltyKind::group:
            throw usage_error(
                "no random-design rule is available for the group penalty; "
                "use the deterministic rule instead");
    }
    throw usage_error("unknown penalty kind");
}

}  // namespace pls
