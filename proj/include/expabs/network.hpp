#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "expabs/matrix.hpp"

namespace expabs {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Layer sizes N_0..N_L plus init settings. Weights are drawn uniformly from
// [-init_range, init_range].
struct NetworkSpec {
    std::vector<int> layer_sizes;
    std::uint64_t seed = 0;
    double init_range = 0.5;

    bool valid() const {
        if (layer_sizes.size() < 2) return false;
        for (int n : layer_sizes)
            if (n < 1) return false;
        return init_range >= 0.0 && std::isfinite(init_range);
    }
    int inputs() const { return layer_sizes.front(); }
    int outputs() const { return layer_sizes.back(); }
};

// Number of trainable weights, bias rows included: sum_l (N_{l-1}+1)*N_l.
inline std::size_t weight_count(const NetworkSpec& spec) {
    std::size_t w = 0;
    for (std::size_t l = 1; l < spec.layer_sizes.size(); ++l)
        w += static_cast<std::size_t>(spec.layer_sizes[l - 1] + 1) * spec.layer_sizes[l];
    return w;
}

// Feed-forward MLP, sigmoid on every layer. weights[l-1] has shape
// (N_{l-1}+1) x N_l; row 0 is the bias row (upstream bias unit outputs 1).
struct Network {
    NetworkSpec spec;
    std::vector<Matrix> weights;

    std::size_t layer_count() const { return spec.layer_sizes.size(); }

    // Canonical flattening order: layer-major, then source node (bias first),
    // then destination node. The extended Jacobian rows follow this order.
    std::vector<double> flatten() const {
        std::vector<double> v;
        v.reserve(weight_count(spec));
        for (const Matrix& w : weights) v.insert(v.end(), w.a.begin(), w.a.end());
        return v;
    }

    void unflatten(std::span<const double> v) {
        std::size_t off = 0;
        for (Matrix& w : weights) {
            for (double& x : w.a) x = v[off++];
        }
        if (off != v.size()) throw std::invalid_argument("unflatten: size mismatch");
    }
};

inline Network init_network(const NetworkSpec& spec) {
    if (!spec.valid()) throw std::invalid_argument("init_network: invalid spec");
    Network net;
    net.spec = spec;
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> dist(-spec.init_range, spec.init_range);
    for (std::size_t l = 1; l < spec.layer_sizes.size(); ++l) {
        Matrix w(spec.layer_sizes[l - 1] + 1, spec.layer_sizes[l]);
        for (double& x : w.a) x = spec.init_range == 0.0 ? 0.0 : dist(rng);
        net.weights.push_back(std::move(w));
    }
    return net;
}

// All layer outputs of one forward pass; activations[0] is the input pattern.
struct ForwardTrace {
    std::vector<std::vector<double>> activations;

    std::span<const double> output() const { return activations.back(); }
};

inline ForwardTrace forward(const Network& net, std::span<const double> input) {
    if (input.size() != static_cast<std::size_t>(net.spec.inputs()))
        throw std::invalid_argument("forward: input dimension mismatch");
    for (double v : input)
        if (!std::isfinite(v)) throw std::invalid_argument("forward: non-finite input");

    ForwardTrace trace;
    trace.activations.reserve(net.layer_count());
    trace.activations.emplace_back(input.begin(), input.end());
    for (const Matrix& w : net.weights) {
        const std::vector<double>& prev = trace.activations.back();
        std::vector<double> next(w.cols, 0.0);
        for (std::size_t j = 0; j < w.cols; ++j) {
            double pre = w(0, j);  // bias unit outputs 1
            for (std::size_t i = 0; i < prev.size(); ++i) pre += w(i + 1, j) * prev[i];
            next[j] = sigmoid(pre);
        }
        trace.activations.push_back(std::move(next));
    }
    return trace;
}

}  // namespace expabs
