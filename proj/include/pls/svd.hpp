#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>

#include "pls/errors.hpp"
#include "pls/mat.hpp"

namespace pls {

// Thin SVD: a = u * diag(singular_values) * v^T with u (rows x q) and
// v (cols x q) having orthonormal columns, q = min(rows, cols), singular
// values sorted nonincreasing.
struct SvdResult {
    Mat u;
    Vec singular_values;
    Mat v;
};

struct SvdOptions {
    // Columns i, j count as orthogonal when |<wi,wj>| <= orth_tol*|wi||wj|.
    double orth_tol = 1e-12;
    // Sweep cap is sweep_factor * min(rows, cols).
    std::size_t sweep_factor = 100;
};

namespace detail {

// One-sided Jacobi: plane rotations orthogonalize the columns of w in
// place; the same rotations accumulate into v (initialized to identity).
inline void jacobi_orthogonalize(Mat& w, Mat& v, const SvdOptions& opt) {
    const std::size_t r = w.rows, c = w.cols;
    const std::size_t max_sweeps = std::max<std::size_t>(1, opt.sweep_factor * std::min(r, c));
    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t i = 0; i + 1 < c; ++i) {
            for (std::size_t j = i + 1; j < c; ++j) {
                double dii = 0.0, djj = 0.0, dij = 0.0;
                for (std::size_t k = 0; k < r; ++k) {
                    const double wi = w(k, i), wj = w(k, j);
                    dii += wi * wi;
                    djj += wj * wj;
                    dij += wi * wj;
                }
                if (dii == 0.0 || djj == 0.0) continue;
                if (std::fabs(dij) <= opt.orth_tol * std::sqrt(dii * djj)) continue;
                rotated = true;
                const double tau = (djj - dii) / (2.0 * dij);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                const double cs = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = cs * t;
                for (std::size_t k = 0; k < r; ++k) {
                    const double wi = w(k, i), wj = w(k, j);
                    w(k, i) = cs * wi - sn * wj;
                    w(k, j) = sn * wi + cs * wj;
                }
                for (std::size_t k = 0; k < c; ++k) {
                    const double vi = v(k, i), vj = v(k, j);
                    v(k, i) = cs * vi - sn * vj;
                    v(k, j) = sn * vi + cs * vj;
                }
            }
        }
        if (!rotated) return;
    }
    throw numeric_error("svd: Jacobi sweep limit exceeded");
}

// Replace numerically null columns of u with an orthonormal completion so
// u always has orthonormal columns; the associated singular values stay
// as computed and are below the rank cutoff.
inline void complete_null_columns(Mat& u, const Vec& sigma) {
    const std::size_t r = u.rows, q = u.cols;
    const double smax = sigma.empty() ? 0.0 : sigma.front();
    const double cutoff = static_cast<double>(r) * std::numeric_limits<double>::epsilon() * smax;
    std::vector<std::size_t> good;
    std::vector<std::size_t> missing;
    for (std::size_t j = 0; j < q; ++j) {
        if (sigma[j] > cutoff && sigma[j] > 0.0) good.push_back(j);
        else missing.push_back(j);
    }
    for (std::size_t j : missing) {
        double best_norm = -1.0;
        Vec best;
        for (std::size_t k = 0; k < r; ++k) {
            Vec cand(r, 0.0);
            cand[k] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t g : good) {
                    double proj = 0.0;
                    for (std::size_t t = 0; t < r; ++t) proj += cand[t] * u(t, g);
                    for (std::size_t t = 0; t < r; ++t) cand[t] -= proj * u(t, g);
                }
            }
            const double nrm = norm2(cand);
            if (nrm > best_norm) {
                best_norm = nrm;
                best = std::move(cand);
            }
            if (best_norm > 0.7) break;
        }
        for (std::size_t t = 0; t < r; ++t) u(t, j) = best[t] / best_norm;
        good.push_back(j);
    }
}

}  // namespace detail

inline SvdResult svd(const Mat& a, const SvdOptions& opt = {}) {
    if (a.rows == 0 || a.cols == 0) throw usage_error("svd: empty matrix");
    if (a.rows < a.cols) {
        SvdResult t = svd(transpose(a), opt);
        std::swap(t.u, t.v);
        return t;
    }
    Mat w = a;
    Mat v = Mat::identity(a.cols);
    detail::jacobi_orthogonalize(w, v, opt);

    const std::size_t q = a.cols;
    Vec sigma(q, 0.0);
    for (std::size_t j = 0; j < q; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < a.rows; ++k) acc += w(k, j) * w(k, j);
        sigma[j] = std::sqrt(acc);
    }
    std::vector<std::size_t> order(q);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return sigma[i] > sigma[j]; });

    SvdResult out;
    out.u = Mat(a.rows, q);
    out.v = Mat(a.cols, q);
    out.singular_values.resize(q);
    for (std::size_t slot = 0; slot < q; ++slot) {
        const std::size_t j = order[slot];
        out.singular_values[slot] = sigma[j];
        if (sigma[j] > 0.0)
            for (std::size_t k = 0; k < a.rows; ++k) out.u(k, slot) = w(k, j) / sigma[j];
        for (std::size_t k = 0; k < a.cols; ++k) out.v(k, slot) = v(k, j);
    }
    detail::complete_null_columns(out.u, out.singular_values);
    return out;
}

// Largest singular value.
inline double spectral_norm(const Mat& a, const SvdOptions& opt = {}) {
    return svd(a, opt).singular_values.front();
}

// Power iteration on a^T a from a fixed deterministic start; used where a
// cheap top-singular-value estimate suffices (e.g. solver step sizing).
inline double top_singular_value_power(const Mat& a, std::size_t iters = 50, double tol = 1e-10) {
    if (a.rows == 0 || a.cols == 0) throw usage_error("top_singular_value_power: empty matrix");
    Vec v(a.cols);
    for (std::size_t j = 0; j < a.cols; ++j)
        v[j] = 1.0 + 0.5 * static_cast<double>(j + 1) / static_cast<double>(a.cols);
    double nv = norm2(v);
    for (auto& x : v) x /= nv;
    double sigma = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
        Vec w = matvec(a, v);
        const double s = norm2(w);
        if (s == 0.0) {
            // Start vector hit the null space; retry from a canonical axis.
            bool found = false;
            for (std::size_t k = 0; k < a.cols && !found; ++k) {
                std::fill(v.begin(), v.end(), 0.0);
                v[k] = 1.0;
                if (norm2(matvec(a, v)) > 0.0) found = true;
            }
            if (!found) return 0.0;
            continue;
        }
        Vec z = matvec_t(a, w);
        const double nz = norm2(z);
        if (nz == 0.0) return s;
        for (std::size_t j = 0; j < a.cols; ++j) v[j] = z[j] / nz;
        if (std::fabs(s - sigma) <= tol * std::max(s, 1e-300)) return s;
        sigma = s;
    }
    return sigma;
}

}  // namespace pls
