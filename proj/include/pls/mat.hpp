#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "pls/errors.hpp"

namespace pls {

using Vec = std::vector<double>;

// Dense row-major matrix. Sized for problems where n and p are at most a
// few thousand; storage is a flat vector, entry (i,j) at i*cols + j.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec a;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}
    Mat(std::size_t r, std::size_t c, Vec data) : rows(r), cols(c), a(std::move(data)) {
        if (a.size() != rows * cols) throw usage_error("Mat: data size does not match shape");
    }

    double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
};

inline Mat transpose(const Mat& m) {
    Mat t(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
    return t;
}

// y = A x
inline Vec matvec(const Mat& m, const Vec& x) {
    if (x.size() != m.cols) throw usage_error("matvec: dimension mismatch");
    Vec y(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* row = m.a.data() + i * m.cols;
        double acc = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
    return y;
}

// y = A^T x
inline Vec matvec_t(const Mat& m, const Vec& x) {
    if (x.size() != m.rows) throw usage_error("matvec_t: dimension mismatch");
    Vec y(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* row = m.a.data() + i * m.cols;
        const double xi = x[i];
        for (std::size_t j = 0; j < m.cols; ++j) y[j] += row[j] * xi;
    }
    return y;
}

inline Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols != b.rows) throw usage_error("matmul: dimension mismatch");
    Mat c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

inline double dot(const Vec& x, const Vec& y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
    return acc;
}

inline double norm2(const Vec& x) { return std::sqrt(dot(x, x)); }

inline double norm1(const Vec& x) {
    double acc = 0.0;
    for (double v : x) acc += std::fabs(v);
    return acc;
}

inline double norm_inf(const Vec& x) {
    double m = 0.0;
    for (double v : x) m = std::max(m, std::fabs(v));
    return m;
}

// y += alpha x
inline void axpy(double alpha, const Vec& x, Vec& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline Vec sub(const Vec& x, const Vec& y) {
    Vec d(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - y[i];
    return d;
}

inline double frobenius_norm(const Mat& m) {
    double acc = 0.0;
    for (double v : m.a) acc += v * v;
    return std::sqrt(acc);
}

// Compensated accumulator for order-stable reductions across long trial
// sequences; keeps aggregate results independent of chunking.
struct KahanSum {
    double sum = 0.0;
    double carry = 0.0;
    void add(double x) {
        const double y = x - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    double value() const { return sum; }
};

inline double kahan_sum(const Vec& xs) {
    KahanSum s;
    for (double x : xs) s.add(x);
    return s.value();
}

}  // namespace pls
