#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "expabs/measures.hpp"
#include "expabs/network.hpp"

namespace expabs {

// Entry clamp for the extended Jacobian. Keeps J*J^T representable even when
// the per-pattern exponential factor is near the measure saturation ceiling.
inline constexpr double kJacobianEntryClamp = 1e100;

inline double clamp_jacobian_entry(double v) {
    if (v > kJacobianEntryClamp) return kJacobianEntryClamp;
    if (v < -kJacobianEntryClamp) return -kJacobianEntryClamp;
    return v;
}

namespace detail {
inline double sum_squares(std::span<const double> e_p) {
    double s = 0.0;
    for (double e : e_p) s += e * e;
    return s;
}
// exp(ssq/|tau|) capped so downstream products stay finite.
inline double exp_factor(double ssq, double abs_tau) {
    double expo = ssq / abs_tau;
    if (expo > 690.0) return kJacobianEntryClamp;
    return std::min(std::exp(expo), kJacobianEntryClamp);
}
}  // namespace detail

// d err_p^ExpAbs / d tau = sign(tau) * exp(ssq/|tau|) * (1 - ssq/|tau|)
inline double d_err_d_tau(std::span<const double> e_p, const Tau& tau) {
    if (!tau.valid()) throw std::invalid_argument("d_err_d_tau: invalid tau");
    const double at = std::abs(tau.value);
    const double ssq = detail::sum_squares(e_p);
    const double sign = tau.value < 0.0 ? -1.0 : 1.0;
    return clamp_jacobian_entry(sign * detail::exp_factor(ssq, at) * (1.0 - ssq / at));
}

// d err_p^ExpAbs / d o_{n} = -2 * exp(ssq/|tau|) * e_n
inline double d_err_d_output(std::span<const double> e_p, const Tau& tau, std::size_t n) {
    if (!tau.valid()) throw std::invalid_argument("d_err_d_output: invalid tau");
    if (n >= e_p.size()) throw std::out_of_range("d_err_d_output: output index");
    const double ssq = detail::sum_squares(e_p);
    return clamp_jacobian_entry(-2.0 * detail::exp_factor(ssq, std::abs(tau.value)) * e_p[n]);
}

// d o^l_j / d o^{l-1} = o^l_j * (1 - o^l_j) * w^l_{src,j}.
// Layers are 1-based (1..L); dest is the 0-based node index within layer l;
// src indexes the weight row (0 = bias row, i >= 1 is node i-1 of layer l-1).
inline double layer_output_derivative(const ForwardTrace& trace, const Network& net,
                                      std::size_t l, std::size_t dest, std::size_t src) {
    if (l < 1 || l >= trace.activations.size())
        throw std::out_of_range("layer_output_derivative: layer index");
    const Matrix& w = net.weights[l - 1];
    if (dest >= w.cols || src >= w.rows)
        throw std::out_of_range("layer_output_derivative: node index");
    const double o = trace.activations[l][dest];
    return o * (1.0 - o) * w(src, dest);
}

// d o^l_j / d w^l_{src,j} = o^l_j * (1 - o^l_j) * o^{l-1}_src, bias src = 1.
inline double weight_derivative(const ForwardTrace& trace, const Network& net, std::size_t l,
                                std::size_t src, std::size_t dest) {
    if (l < 1 || l >= trace.activations.size())
        throw std::out_of_range("weight_derivative: layer index");
    const Matrix& w = net.weights[l - 1];
    if (dest >= w.cols || src >= w.rows) throw std::out_of_range("weight_derivative: node index");
    const double o = trace.activations[l][dest];
    const double upstream = src == 0 ? 1.0 : trace.activations[l - 1][src - 1];
    return o * (1.0 - o) * upstream;
}

// Residual pairings for the LM update; all are length-P vectors.
//   collapsed_difference:      r_p = sum_n (t - o)          (raw differences)
//   pattern_error:             r_p = err_p^ExpAbs           (per-pattern measure)
//   pattern_error_minus_floor: r_p = err_p^ExpAbs - |tau|   (deviation from the
//                                    per-pattern minimum, zero iff perfect fit)
enum class ResidualKind { collapsed_difference, pattern_error, pattern_error_minus_floor };

struct JacobianBuild {
    Matrix j;  // (W [+1]) x P; final row = d err_p / d tau when present
    std::vector<double> residual_collapsed;
    std::vector<double> residual_error;
    std::vector<double> pattern_ssq;
    bool has_tau_row = false;
    bool saturated = false;

    std::span<const double> residual(ResidualKind kind, std::vector<double>& scratch,
                                     double abs_tau) const {
        switch (kind) {
            case ResidualKind::collapsed_difference: return residual_collapsed;
            case ResidualKind::pattern_error: return residual_error;
            case ResidualKind::pattern_error_minus_floor:
                scratch.resize(residual_error.size());
                for (std::size_t p = 0; p < residual_error.size(); ++p)
                    scratch[p] = residual_error[p] - abs_tau;
                return scratch;
        }
        throw std::logic_error("residual: bad kind");
    }
};

// Extended Jacobian of Eq. tau_in_matrix: one column per pattern, rows are
// d err_p / d w in canonical flatten order plus (optionally) the tau row.
// Full chain rule per pattern by backward accumulation through the layers.
inline JacobianBuild build_extended_jacobian(const Network& net, const Matrix& inputs,
                                             const Matrix& targets, const Tau& tau,
                                             bool include_tau_row = true) {
    if (inputs.rows == 0) throw std::invalid_argument("build_extended_jacobian: empty batch");
    if (inputs.rows != targets.rows)
        throw std::invalid_argument("build_extended_jacobian: batch size mismatch");
    if (inputs.cols != static_cast<std::size_t>(net.spec.inputs()) ||
        targets.cols != static_cast<std::size_t>(net.spec.outputs()))
        throw std::invalid_argument("build_extended_jacobian: dimension mismatch");
    if (!tau.valid()) throw std::invalid_argument("build_extended_jacobian: invalid tau");

    const std::size_t patterns = inputs.rows;
    const std::size_t w_total = weight_count(net.spec);
    const std::size_t layers = net.weights.size();

    JacobianBuild out;
    out.has_tau_row = include_tau_row;
    out.j = Matrix(w_total + (include_tau_row ? 1 : 0), patterns);
    out.residual_collapsed.assign(patterns, 0.0);
    out.residual_error.assign(patterns, 0.0);
    out.pattern_ssq.assign(patterns, 0.0);

    // row offset of each layer's weight block in the canonical order
    std::vector<std::size_t> offsets(layers, 0);
    for (std::size_t l = 1; l < layers; ++l)
        offsets[l] = offsets[l - 1] + net.weights[l - 1].a.size();

    std::vector<double> e_p(targets.cols);
    for (std::size_t p = 0; p < patterns; ++p) {
        const ForwardTrace trace = forward(net, inputs.row(p));
        const std::span<const double> o_l = trace.output();
        double collapsed = 0.0;
        for (std::size_t n = 0; n < targets.cols; ++n) {
            e_p[n] = targets(p, n) - o_l[n];
            collapsed += e_p[n];
        }
        out.residual_collapsed[p] = collapsed;
        out.pattern_ssq[p] = detail::sum_squares(e_p);
        out.residual_error[p] = err_expabs(e_p, tau, &out.saturated);

        // delta over layer outputs, starting at d err_p / d o^L
        std::vector<double> delta(targets.cols);
        for (std::size_t n = 0; n < targets.cols; ++n) delta[n] = d_err_d_output(e_p, tau, n);

        for (std::size_t l = layers; l-- > 0;) {
            const Matrix& w = net.weights[l];
            const std::vector<double>& act = trace.activations[l + 1];
            const std::vector<double>& prev = trace.activations[l];
            // d err / d pre-activation of layer l+1
            std::vector<double> dpre(w.cols);
            for (std::size_t jn = 0; jn < w.cols; ++jn)
                dpre[jn] = delta[jn] * act[jn] * (1.0 - act[jn]);
            double* col = out.j.a.data() + p;
            const std::size_t stride = patterns;
            for (std::size_t i = 0; i < w.rows; ++i) {
                const double upstream = i == 0 ? 1.0 : prev[i - 1];
                double* dst = col + (offsets[l] + i * w.cols) * stride;
                for (std::size_t jn = 0; jn < w.cols; ++jn)
                    dst[jn * stride] = clamp_jacobian_entry(dpre[jn] * upstream);
            }
            if (l > 0) {
                std::vector<double> next_delta(prev.size(), 0.0);
                for (std::size_t i = 0; i < prev.size(); ++i) {
                    double s = 0.0;
                    for (std::size_t jn = 0; jn < w.cols; ++jn) s += dpre[jn] * w(i + 1, jn);
                    next_delta[i] = s;
                }
                delta = std::move(next_delta);
            }
        }
        if (include_tau_row) out.j(w_total, p) = d_err_d_tau(e_p, tau);
    }
    return out;
}

// Central finite differences (f(x+h e_i) - f(x-h e_i)) / (2h), one shared step.
inline std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& f, std::span<const double> x,
    double step) {
    if (!(step > 0.0)) throw std::invalid_argument("finite_difference_gradient: step <= 0");
    std::vector<double> steps(x.size(), step);
    std::vector<double> grad(x.size());
    std::vector<double> xs(x.begin(), x.end());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double saved = xs[i];
        xs[i] = saved + steps[i];
        const double fp = f(xs);
        xs[i] = saved - steps[i];
        const double fm = f(xs);
        xs[i] = saved;
        grad[i] = (fp - fm) / (2.0 * steps[i]);
    }
    return grad;
}

// Same, with an individual step per coordinate.
inline std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& f, std::span<const double> x,
    std::span<const double> steps) {
    if (steps.size() != x.size())
        throw std::invalid_argument("finite_difference_gradient: step count mismatch");
    std::vector<double> grad(x.size());
    std::vector<double> xs(x.begin(), x.end());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!(steps[i] > 0.0)) throw std::invalid_argument("finite_difference_gradient: step <= 0");
        const double saved = xs[i];
        xs[i] = saved + steps[i];
        const double fp = f(xs);
        xs[i] = saved - steps[i];
        const double fm = f(xs);
        xs[i] = saved;
        grad[i] = (fp - fm) / (2.0 * steps[i]);
    }
    return grad;
}

}  // namespace expabs
