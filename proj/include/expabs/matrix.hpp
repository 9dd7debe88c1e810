#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace expabs {

// Dense row-major matrix, just enough linear algebra for LM training.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) {
        assert(i < rows && j < cols);
        return a[i * cols + j];
    }
    double operator()(std::size_t i, std::size_t j) const {
        assert(i < rows && j < cols);
        return a[i * cols + j];
    }

    std::span<double> row(std::size_t i) { return {a.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {a.data() + i * cols, cols}; }

    bool empty() const { return rows == 0 || cols == 0; }

    bool all_finite() const {
        for (double v : a)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

// A = J * J^T, exploiting symmetry. J is (n x m), result (n x n).
inline Matrix gram(const Matrix& j) {
    Matrix g(j.rows, j.rows);
    for (std::size_t i = 0; i < j.rows; ++i) {
        const double* ri = j.a.data() + i * j.cols;
        for (std::size_t k = i; k < j.rows; ++k) {
            const double* rk = j.a.data() + k * j.cols;
            double s = 0.0;
            for (std::size_t c = 0; c < j.cols; ++c) s += ri[c] * rk[c];
            g(i, k) = s;
            g(k, i) = s;
        }
    }
    return g;
}

// J * x
inline std::vector<double> matvec(const Matrix& j, std::span<const double> x) {
    assert(x.size() == j.cols);
    std::vector<double> y(j.rows, 0.0);
    for (std::size_t i = 0; i < j.rows; ++i) {
        const double* ri = j.a.data() + i * j.cols;
        double s = 0.0;
        for (std::size_t c = 0; c < j.cols; ++c) s += ri[c] * x[c];
        y[i] = s;
    }
    return y;
}

inline double mean_diagonal(const Matrix& a) {
    assert(a.rows == a.cols && a.rows > 0);
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) s += a(i, i);
    return s / static_cast<double>(a.rows);
}

// Solves (A + damping*I) x = b for symmetric positive definite A via Cholesky.
// Returns false when the damped matrix is not numerically positive definite
// or the result is non-finite; callers treat that as a rejected step.
inline bool cholesky_solve(const Matrix& a, double damping, std::span<const double> b,
                           std::vector<double>& x) {
    assert(a.rows == a.cols && b.size() == a.rows);
    const std::size_t n = a.rows;
    Matrix l(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a(i, j) + (i == j ? damping : 0.0);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            if (i == j) {
                if (!(s > 0.0) || !std::isfinite(s)) return false;
                l(i, i) = std::sqrt(s);
            } else {
                l(i, j) = s / l(j, j);
            }
        }
    }
    x.assign(n, 0.0);
    // forward then backward substitution
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x[k];
        x[i] = s / l(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double s = x[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x[k];
        x[ii] = s / l(ii, ii);
        if (!std::isfinite(x[ii])) return false;
    }
    return true;
}

}  // namespace expabs
