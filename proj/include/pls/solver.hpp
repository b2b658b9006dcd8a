#pragma once

#include <cmath>
#include <cstddef>
#include <limits>

#include "pls/errors.hpp"
#include "pls/mat.hpp"
#include "pls/model.hpp"
#include "pls/penalty.hpp"
#include "pls/svd.hpp"

namespace pls {

struct SolveOptions {
    std::size_t max_iters = 20000;
    // Convergence: relative objective change below rel_obj_tol for 10
    // consecutive iterations AND prox fixed-point residual below
    // fixed_point_tol in l2 norm.
    double rel_obj_tol = 1e-10;
    double fixed_point_tol = 1e-6;
    // 0 means automatic: 0.99 / L with L = (2/n) * spectral_norm(X)^2
    // estimated by power iteration.
    double step = 0.0;
    // When set, receives the objective value after every iteration.
    Vec* objective_trace = nullptr;
};

struct SolveResult {
    Vec beta_hat;
    double objective_value = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    // Minimum certificate gap over the reference probes {0, beta_star};
    // NaN when the instance carries no noise realization.
    double certificate_slack = std::numeric_limits<double>::quiet_NaN();
};

// (1/n)|X beta - y|_2^2 + lambda * penalty_norm(beta)
inline double objective(const DesignOperator& d, const Vec& y, const PenaltySpec& pen,
                        const Vec& beta) {
    Vec r = apply_design(d, beta);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= y[i];
    return empirical_norm_sq(r) + pen.lambda * penalty_norm(pen, beta);
}

// Slack in the fixed-design certificate at a reference point beta:
//   (2/n) xi^T X (bh - beta) + lambda(|beta| - |bh|) - |X(bh-beta)|_n^2
//     - ( |X bh - f|_n^2 - |X beta - f|_n^2 ).
// Nonnegative for every beta when bh is an exact minimizer.
inline double certificate_gap(const Instance& inst, const PenaltySpec& pen, const Vec& beta_hat,
                              const Vec& beta) {
    if (!inst.has_noise()) throw usage_error("certificate_gap: instance has no noise realization");
    const double n = static_cast<double>(inst.design.n());
    Vec xh = apply_design(inst.design, beta_hat);
    Vec xb = apply_design(inst.design, beta);

    double cross = 0.0;
    for (std::size_t i = 0; i < xh.size(); ++i) cross += inst.xi[i] * (xh[i] - xb[i]);
    cross *= 2.0 / n;

    Vec dxy(xh.size());
    for (std::size_t i = 0; i < xh.size(); ++i) dxy[i] = xh[i] - xb[i];
    const double quad = empirical_norm_sq(dxy);

    Vec eh(xh.size()), eb(xh.size());
    for (std::size_t i = 0; i < xh.size(); ++i) {
        eh[i] = xh[i] - inst.f[i];
        eb[i] = xb[i] - inst.f[i];
    }
    const double lhs = empirical_norm_sq(eh) - empirical_norm_sq(eb);

    const double rhs = cross + pen.lambda * (penalty_norm(pen, beta) - penalty_norm(pen, beta_hat)) - quad;
    return rhs - lhs;
}

namespace detail {

struct FistaState {
    Vec x;        // current iterate
    Vec x_apply;  // X x, cached
    double fx = 0.0;
};

}  // namespace detail

// Accelerated proximal gradient with a monotone function-value restart:
// when the extrapolated step would raise the objective, momentum is reset
// and the iteration falls back to a plain proximal step from the current
// iterate, which cannot increase it.
inline SolveResult solve_penalized_ls(const DesignOperator& d, const Vec& y,
                                      const PenaltySpec& pen, const SolveOptions& opt = {}) {
    check_penalty_matches_design(pen, d);
    if (y.size() != d.n()) throw usage_error("solve: response length mismatch");
    if (pen.lambda < 0.0) throw usage_error("solve: lambda must be nonnegative");
    const std::size_t n = d.n(), p = d.dim();
    const double inv_n = 1.0 / static_cast<double>(n);

    double step = opt.step;
    if (step <= 0.0) {
        const double smax = top_singular_value_power(d.x);
        const double lip = 2.0 * inv_n * smax * smax;
        step = lip > 0.0 ? 0.99 / lip : 1.0;
    }

    auto value = [&](const Vec& beta, const Vec& xbeta) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = xbeta[i] - y[i];
            acc += r * r;
        }
        return acc * inv_n + pen.lambda * penalty_norm(pen, beta);
    };
    auto grad_from_apply = [&](const Vec& xbeta) {
        Vec r(n);
        for (std::size_t i = 0; i < n; ++i) r[i] = xbeta[i] - y[i];
        Vec g = matvec_t(d.x, r);
        for (auto& v : g) v *= 2.0 * inv_n;
        return g;
    };
    auto prox_step = [&](const Vec& point, const Vec& grad) {
        Vec shifted(p);
        for (std::size_t j = 0; j < p; ++j) shifted[j] = point[j] - step * grad[j];
        return prox(pen, shifted, step * pen.lambda);
    };

    detail::FistaState cur;
    cur.x.assign(p, 0.0);
    cur.x_apply.assign(n, 0.0);
    cur.fx = value(cur.x, cur.x_apply);

    Vec z = cur.x;
    Vec z_apply = cur.x_apply;
    double t = 1.0;
    std::size_t small_count = 0;
    std::size_t iters = 0;
    bool converged = false;

    for (std::size_t it = 1; it <= opt.max_iters; ++it) {
        iters = it;
        Vec cand = prox_step(z, grad_from_apply(z_apply));
        Vec cand_apply = apply_design(d, cand);
        double fcand = value(cand, cand_apply);
        // Ties within rounding granularity are accepted so the iterate can
        // keep contracting after the objective value has saturated.
        const double slack = 1e-15 * std::max(1.0, std::fabs(cur.fx));
        if (fcand > cur.fx + slack) {
            t = 1.0;
            cand = prox_step(cur.x, grad_from_apply(cur.x_apply));
            cand_apply = apply_design(d, cand);
            fcand = value(cand, cand_apply);
            if (fcand > cur.fx + slack) {  // numerical floor: keep the better point
                cand = cur.x;
                cand_apply = cur.x_apply;
                fcand = cur.fx;
            }
        }
        if (!std::isfinite(fcand)) throw numeric_error("solve: objective became non-finite");

        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        const double theta = (t - 1.0) / t_next;
        z.resize(p);
        z_apply.resize(n);
        for (std::size_t j = 0; j < p; ++j) z[j] = cand[j] + theta * (cand[j] - cur.x[j]);
        for (std::size_t i = 0; i < n; ++i)
            z_apply[i] = cand_apply[i] + theta * (cand_apply[i] - cur.x_apply[i]);
        t = t_next;

        const double rel_change = std::fabs(cur.fx - fcand) / std::max(1.0, std::fabs(cur.fx));
        cur.x = std::move(cand);
        cur.x_apply = std::move(cand_apply);
        cur.fx = fcand;
        if (opt.objective_trace) opt.objective_trace->push_back(cur.fx);

        if (rel_change < opt.rel_obj_tol) ++small_count;
        else small_count = 0;

        if (small_count >= 10) {
            const Vec fp = prox_step(cur.x, grad_from_apply(cur.x_apply));
            double resid = 0.0;
            for (std::size_t j = 0; j < p; ++j) {
                const double dlt = fp[j] - cur.x[j];
                resid += dlt * dlt;
            }
            if (std::sqrt(resid) < opt.fixed_point_tol) {
                converged = true;
                break;
            }
            small_count = 0;
        }
    }

    SolveResult out;
    out.beta_hat = std::move(cur.x);
    out.objective_value = cur.fx;
    out.iterations = iters;
    out.converged = converged;
    return out;
}

inline SolveResult solve_penalized_ls(const Instance& inst, const PenaltySpec& pen,
                                      const SolveOptions& opt = {}) {
    SolveResult out = solve_penalized_ls(inst.design, inst.y, pen, opt);
    if (inst.has_noise()) {
        const Vec zero(inst.design.dim(), 0.0);
        double slack = certificate_gap(inst, pen, out.beta_hat, zero);
        if (inst.has_beta_star())
            slack = std::min(slack, certificate_gap(inst, pen, out.beta_hat, inst.beta_star));
        out.certificate_slack = slack;
    }
    return out;
}

}  // namespace pls
