#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "disbelief/core/graph.hpp"

namespace disbelief {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    /// Global gradient-norm clip; 0 disables.
    double max_grad_norm = 0.0;
};

struct AdamState {
    AdamConfig config;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;
    std::size_t step = 0;

    AdamState() = default;
    explicit AdamState(AdamConfig c) : config(c) {}
};

inline double global_grad_norm(const std::vector<Parameter*>& params) {
    double s = 0.0;
    for (const auto* p : params)
        for (double g : p->grad.data()) s += g * g;
    return std::sqrt(s);
}

/// One bias-corrected Adam descent step on `params` using their `grad` fields.
/// Callers maximizing an objective pass the gradient of its negation.
inline void adam_step(const std::vector<Parameter*>& params, AdamState& state) {
    if (state.first_moment.empty()) {
        for (const auto* p : params) {
            state.first_moment.push_back(Tensor::zeros_like(p->value));
            state.second_moment.push_back(Tensor::zeros_like(p->value));
        }
    }
    if (state.first_moment.size() != params.size()) throw ShapeError("adam_step: parameter count changed");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->grad.shape() != params[i]->value.shape() ||
            state.first_moment[i].shape() != params[i]->value.shape())
            throw ShapeError("adam_step: shape mismatch for " + params[i]->name);
    }
    const AdamConfig& c = state.config;
    double clip = 1.0;
    if (c.max_grad_norm > 0.0) {
        const double norm = global_grad_norm(params);
        if (!std::isfinite(norm)) throw NumericError("adam_step: non-finite gradient norm");
        if (norm > c.max_grad_norm) clip = c.max_grad_norm / norm;
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& w = params[i]->value;
        const Tensor& g = params[i]->grad;
        Tensor& m = state.first_moment[i];
        Tensor& v = state.second_moment[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double gk = g[k] * clip;
            m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * gk;
            v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * gk * gk;
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            w[k] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
        }
    }
}

} // namespace disbelief
