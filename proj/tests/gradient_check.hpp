#pragma once

#include <random>

#include "expabs/jacobian.hpp"

// Shared finite-difference oracle harness for the extended Jacobian.
namespace gradcheck {

using namespace expabs;

struct Deviation {
    double worst = 0.0;   // worst scaled deviation (1.0 = at tolerance)
    std::size_t entries = 0;
};

// err_expabs of one pattern as a function of (flattened weights, tau).
inline double pattern_err(const Network& proto, const Matrix& x, const Matrix& t, std::size_t p,
                          std::span<const double> params) {
    Network net = proto;
    net.unflatten(params.subspan(0, params.size() - 1));
    const Tau tau = Tau::projected(params.back());
    const ForwardTrace tr = forward(net, x.row(p));
    std::vector<double> e(t.cols);
    for (std::size_t n = 0; n < t.cols; ++n) e[n] = t(p, n) - tr.output()[n];
    return err_expabs(e, tau);
}

inline double pattern_ssq(const Network& proto, const Matrix& x, const Matrix& t, std::size_t p,
                          std::span<const double> weights) {
    Network net = proto;
    net.unflatten(weights);
    const ForwardTrace tr = forward(net, x.row(p));
    double ssq = 0.0;
    for (std::size_t n = 0; n < t.cols; ++n) {
        const double e = t(p, n) - tr.output()[n];
        ssq += e * e;
    }
    return ssq;
}

// Central differences column-vs-analytic comparison for every pattern of one
// (net, batch, tau) triple. Weight rows difference |tau|*expm1(ssq/|tau|)
// (= err - |tau|, with the same derivative): subtracting the constant |tau|
// part in exact arithmetic keeps the probe value O(ssq), otherwise the
// measure's |tau| bulk drowns O(1) entries in round-off once |tau| is large.
// The tau row differences the raw measure with a |tau|-scaled step.
inline Deviation check_jacobian(const Network& net, const Matrix& x, const Matrix& t,
                                double tau_value, double rel_tol = 1e-5,
                                double abs_floor = 1e-8) {
    const Tau tau = Tau::projected(tau_value);
    const double at = std::abs(tau.value);
    const JacobianBuild build = build_extended_jacobian(net, x, t, tau, true);
    const std::size_t w_total = weight_count(net.spec);

    const std::vector<double> weights = net.flatten();
    Deviation dev;
    for (std::size_t p = 0; p < x.rows; ++p) {
        auto fw = [&](std::span<const double> q) {
            return at * std::expm1(pattern_ssq(net, x, t, p, q) / at);
        };
        const std::vector<double> wgrad = finite_difference_gradient(fw, weights, 1e-6);

        const std::vector<double> tau_param{tau.value};
        auto ft = [&](std::span<const double> q) {
            Network probe = net;  // weights fixed, tau varies
            std::vector<double> params = weights;
            params.push_back(q[0]);
            return pattern_err(probe, x, t, p, params);
        };
        const double tau_step = 1e-6 * std::max(1.0, at);
        const double tgrad =
            finite_difference_gradient(ft, tau_param, std::vector<double>{tau_step})[0];

        for (std::size_t i = 0; i <= w_total; ++i) {
            const double analytic = build.j(i, p);
            const double numeric = i == w_total ? tgrad : wgrad[i];
            const double scale = std::max(std::abs(analytic), std::abs(numeric));
            const double diff = std::abs(analytic - numeric);
            const double scaled = diff / std::max(abs_floor, rel_tol * scale);
            dev.worst = std::max(dev.worst, scaled);
            ++dev.entries;
        }
    }
    return dev;
}

inline Network random_network(std::vector<int> layers, std::uint64_t seed) {
    NetworkSpec spec;
    spec.layer_sizes = std::move(layers);
    spec.seed = seed;
    return init_network(spec);
}

inline void random_batch(Matrix& x, Matrix& t, int inputs, int outputs, std::size_t patterns,
                         std::uint64_t seed, bool one_hot_targets) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> du(0.0, 1.0);
    x = Matrix(patterns, inputs);
    t = Matrix(patterns, outputs);
    for (double& v : x.a) v = du(rng);
    if (one_hot_targets) {
        std::uniform_int_distribution<int> dc(0, outputs - 1);
        for (std::size_t p = 0; p < patterns; ++p) t(p, dc(rng)) = 1.0;
    } else {
        for (double& v : t.a) v = du(rng);
    }
}

}  // namespace gradcheck
