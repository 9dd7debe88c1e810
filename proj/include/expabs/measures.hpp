#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>

#include "expabs/matrix.hpp"

namespace expabs {

// Saturation ceiling for the exponential measures: early in training bad
// weights can push exp(sum e^2 / |tau|) past double range; values are capped
// here so error comparisons stay well ordered.
inline constexpr double kSaturationMax = 1e300;
// Output clamp for the cross-entropy log: sigmoid outputs never reach 0 or 1
// exactly but accumulated round-off can.
inline constexpr double kCeClampEps = 1e-12;
inline constexpr double kDefaultTauGuard = 1e-6;

// The measure-blending parameter. |value| must stay >= guard_epsilon:
// E_ExpAbs diverges at tau = 0 and is unstable close to it.
struct Tau {
    double value = 1.0;
    double guard_epsilon = kDefaultTauGuard;

    bool valid() const {
        return guard_epsilon > 0.0 && std::isfinite(value) && std::abs(value) >= guard_epsilon;
    }

    // Projects v away from zero instead of erroring mid-run; sign(0) counts
    // as positive.
    static Tau projected(double v, double guard = kDefaultTauGuard) {
        if (std::abs(v) < guard) v = v < 0.0 ? -guard : guard;
        return Tau{v, guard};
    }
};

// Differences e_{p,n} = t_{p,n} - o_{p,n}, one row per pattern.
using ErrorMatrix = Matrix;

inline ErrorMatrix error_matrix(const Matrix& targets, const Matrix& outputs) {
    if (targets.rows != outputs.rows || targets.cols != outputs.cols)
        throw std::invalid_argument("error_matrix: shape mismatch");
    ErrorMatrix e(targets.rows, targets.cols);
    for (std::size_t i = 0; i < e.a.size(); ++i) e.a[i] = targets.a[i] - outputs.a[i];
    return e;
}

// (1/N) sum e^2 with N = patterns * outputs, a per-scalar mean.
inline double mse(const ErrorMatrix& errors) {
    if (errors.empty()) throw std::invalid_argument("mse: empty error matrix");
    double s = 0.0;
    for (double v : errors.a) s += v * v;
    return s / static_cast<double>(errors.a.size());
}

// sum over patterns and outputs of -t*log(o); outputs clamped to
// [eps, 1-eps] before the log. `clamped` reports whether the clamp fired.
inline double cross_entropy(const Matrix& targets, const Matrix& outputs,
                            bool* clamped = nullptr) {
    if (targets.rows != outputs.rows || targets.cols != outputs.cols)
        throw std::invalid_argument("cross_entropy: shape mismatch");
    if (clamped) *clamped = false;
    double s = 0.0;
    for (std::size_t i = 0; i < outputs.a.size(); ++i) {
        double o = outputs.a[i];
        if (o < kCeClampEps || o > 1.0 - kCeClampEps) {
            o = std::clamp(o, kCeClampEps, 1.0 - kCeClampEps);
            if (clamped) *clamped = true;
        }
        if (targets.a[i] != 0.0) s -= targets.a[i] * std::log(o);
    }
    return s;
}

// sum h^2 * exp(-e^2 / (2 h^2)); an evaluation-only metric (maximized),
// never the LM objective.
inline double zedm(const ErrorMatrix& errors, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("zedm: h must be positive");
    double s = 0.0;
    for (double e : errors.a) s += h * h * std::exp(-(e * e) / (2.0 * h * h));
    return s;
}

// Per-pattern novel measure |tau| * exp(sum e^2 / |tau|). Saturates at
// kSaturationMax; sets *saturated when that happens.
inline double err_expabs(std::span<const double> e_p, const Tau& tau, bool* saturated = nullptr) {
    if (!tau.valid()) throw std::invalid_argument("err_expabs: invalid tau");
    double ssq = 0.0;
    for (double e : e_p) ssq += e * e;
    const double at = std::abs(tau.value);
    // exp overflows past ~709.78; compare in log space first
    const double expo = ssq / at;
    double v;
    if (expo > 690.0 && std::log(at) + expo >= std::log(kSaturationMax)) {
        v = kSaturationMax;
        if (saturated) *saturated = true;
    } else {
        v = at * std::exp(expo);
        if (v >= kSaturationMax) {
            v = kSaturationMax;
            if (saturated) *saturated = true;
        }
    }
    return v;
}

// E_ExpAbs over all patterns; the total is capped at kSaturationMax too.
inline double e_expabs_total(const ErrorMatrix& errors, const Tau& tau, bool* saturated = nullptr) {
    if (errors.empty()) throw std::invalid_argument("e_expabs_total: empty error matrix");
    double s = 0.0;
    for (std::size_t p = 0; p < errors.rows; ++p) s += err_expabs(errors.row(p), tau, saturated);
    if (s >= kSaturationMax) {
        s = kSaturationMax;
        if (saturated) *saturated = true;
    }
    return s;
}

// The original signed measure sum tau * exp(sum e^2 / tau); negative tau
// allowed here (fixed-tau baseline and limit checks only).
inline double e_exp_total(const ErrorMatrix& errors, double tau) {
    if (tau == 0.0) throw std::invalid_argument("e_exp_total: tau must be nonzero");
    double s = 0.0;
    for (std::size_t p = 0; p < errors.rows; ++p) {
        double ssq = 0.0;
        for (double e : errors.row(p)) ssq += e * e;
        double v = tau * std::exp(ssq / tau);
        v = std::clamp(v, -kSaturationMax, kSaturationMax);
        s += v;
    }
    return std::clamp(s, -kSaturationMax, kSaturationMax);
}

inline std::size_t argmax_index(std::span<const double> row) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < row.size(); ++i)
        if (row[i] > row[best]) best = i;  // ties keep the lowest index
    return best;
}

inline bool is_one_hot_row(std::span<const double> row) {
    int ones = 0;
    for (double v : row) {
        if (v == 1.0)
            ++ones;
        else if (v != 0.0)
            return false;
    }
    return ones == 1;
}

// Fraction of patterns whose argmax output matches the argmax target.
inline double recognition_rate(const Matrix& outputs, const Matrix& targets) {
    if (targets.rows != outputs.rows || targets.cols != outputs.cols)
        throw std::invalid_argument("recognition_rate: shape mismatch");
    if (targets.rows == 0) throw std::invalid_argument("recognition_rate: empty input");
    std::size_t hits = 0;
    for (std::size_t p = 0; p < targets.rows; ++p) {
        if (!is_one_hot_row(targets.row(p)))
            throw std::invalid_argument("recognition_rate: targets not one-hot");
        if (argmax_index(outputs.row(p)) == argmax_index(targets.row(p))) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(targets.rows);
}

}  // namespace expabs
