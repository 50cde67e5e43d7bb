#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "disbelief/core/distributions.hpp"
#include "disbelief/core/rng.hpp"

namespace disbelief {

/// softplus(raw + kStdShift) + kStdFloor equals 1 at raw = 0.
inline const double kStdShift = std::log(std::expm1(1.0 - kStdFloor));

/// Gaussian from a mean and an unconstrained std pre-activation.
inline GaussianVar gaussian_from_raw(const Var& mean, const Var& raw_std) {
    return {mean, ops::softplus(raw_std + kStdShift) + kStdFloor};
}

/// Same, with a larger floor; raw = 0 still maps to std 1.
inline GaussianVar gaussian_from_raw(const Var& mean, const Var& raw_std, double floor) {
    if (!(floor >= kStdFloor && floor < 1.0)) throw ValueError("std floor must lie in [1e-3, 1)");
    if (floor == kStdFloor) return gaussian_from_raw(mean, raw_std);
    return {mean, ops::softplus(raw_std + std::log(std::expm1(1.0 - floor))) + floor};
}

/// Splits a [rows, 2d] head output into mean | raw std halves.
inline GaussianVar split_gaussian(const Var& out, std::size_t d) {
    if (out.cols() != 2 * d) throw ShapeError("split_gaussian: expected " + std::to_string(2 * d) + " columns");
    return gaussian_from_raw(ops::slice_cols(out, 0, d), ops::slice_cols(out, d, d));
}

inline void uniform_fill(Tensor& t, double bound, Rng& rng) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& v : t.data()) v = u(rng);
}

enum class Activation { Tanh, Relu };

inline Var activate(const Var& x, Activation a) { return a == Activation::Tanh ? ops::tanh(x) : ops::relu(x); }

/// y = x W + b with W: [in, out], b: [1, out].
struct Linear {
    Parameter weight;
    Parameter bias;

    Linear() = default;
    Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng)
        : weight(name + ".weight", Tensor::zeros(in, out)), bias(name + ".bias", Tensor::zeros(1, out)) {
        uniform_fill(weight.value, 1.0 / std::sqrt(static_cast<double>(in)), rng);
    }

    std::size_t in_dim() const { return weight.value.rows(); }
    std::size_t out_dim() const { return weight.value.cols(); }

    Var operator()(Graph& g, const Var& x) {
        if (x.cols() != in_dim())
            throw ShapeError(weight.name + ": input width " + std::to_string(x.cols()) + ", expected " +
                             std::to_string(in_dim()));
        return ops::matmul(x, g.param(weight)) + g.param(bias);
    }

    void collect(std::vector<Parameter*>& out) {
        out.push_back(&weight);
        out.push_back(&bias);
    }
};

/// Feedforward network; the activation is applied between layers, not after the last.
struct Mlp {
    std::vector<Linear> layers;
    Activation activation = Activation::Tanh;

    Mlp() = default;
    Mlp(const std::string& name, const std::vector<std::size_t>& widths, Activation act, Rng& rng)
        : activation(act) {
        if (widths.size() < 2) throw ShapeError(name + ": an MLP needs at least input and output widths");
        for (std::size_t i = 0; i + 1 < widths.size(); ++i)
            layers.emplace_back(name + ".l" + std::to_string(i), widths[i], widths[i + 1], rng);
    }

    std::size_t in_dim() const { return layers.front().in_dim(); }
    std::size_t out_dim() const { return layers.back().out_dim(); }

    Var operator()(Graph& g, Var x) {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            x = layers[i](g, x);
            if (i + 1 < layers.size()) x = activate(x, activation);
        }
        return x;
    }

    /// Shrinks the output layer, e.g. so an untrained policy starts near uniform.
    void scale_output(double factor) {
        for (auto& v : layers.back().weight.value.data()) v *= factor;
    }

    void collect(std::vector<Parameter*>& out) {
        for (auto& l : layers) l.collect(out);
    }
};

/// Single-layer gated recurrent unit. Gate columns are laid out [update | reset | candidate].
struct GruCell {
    Parameter w_input;
    Parameter w_hidden;
    Parameter b_input;
    Parameter b_hidden;

    GruCell() = default;
    GruCell(const std::string& name, std::size_t in, std::size_t hidden, Rng& rng)
        : w_input(name + ".w_input", Tensor::zeros(in, 3 * hidden)),
          w_hidden(name + ".w_hidden", Tensor::zeros(hidden, 3 * hidden)),
          b_input(name + ".b_input", Tensor::zeros(1, 3 * hidden)),
          b_hidden(name + ".b_hidden", Tensor::zeros(1, 3 * hidden)) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
        uniform_fill(w_input.value, bound, rng);
        uniform_fill(w_hidden.value, bound, rng);
    }

    std::size_t in_dim() const { return w_input.value.rows(); }
    std::size_t hidden_dim() const { return w_hidden.value.rows(); }

    Var step(Graph& g, const Var& h_prev, const Var& x) {
        const std::size_t hd = hidden_dim();
        if (x.cols() != in_dim())
            throw ShapeError(w_input.name + ": input width " + std::to_string(x.cols()) + ", expected " +
                             std::to_string(in_dim()));
        if (h_prev.cols() != hd || h_prev.rows() != x.rows())
            throw ShapeError(w_hidden.name + ": hidden state shape " + shape_str(h_prev.shape()));
        Var gx = ops::matmul(x, g.param(w_input)) + g.param(b_input);
        Var gh = ops::matmul(h_prev, g.param(w_hidden)) + g.param(b_hidden);
        Var update = ops::sigmoid(ops::slice_cols(gx, 0, hd) + ops::slice_cols(gh, 0, hd));
        Var reset = ops::sigmoid(ops::slice_cols(gx, hd, hd) + ops::slice_cols(gh, hd, hd));
        Var candidate = ops::tanh(ops::slice_cols(gx, 2 * hd, hd) + reset * ops::slice_cols(gh, 2 * hd, hd));
        // h' = candidate + update * (h - candidate)
        return candidate + update * (h_prev - candidate);
    }

    void collect(std::vector<Parameter*>& out) {
        out.push_back(&w_input);
        out.push_back(&w_hidden);
        out.push_back(&b_input);
        out.push_back(&b_hidden);
    }
};

/// Linear map from a feature vector to a diagonal Gaussian.
struct GaussianHead {
    Linear mean;
    Linear raw_std;

    GaussianHead() = default;
    GaussianHead(const std::string& name, std::size_t in, std::size_t out, Rng& rng)
        : mean(name + ".mean", in, out, rng), raw_std(name + ".raw_std", in, out, rng) {}

    std::size_t out_dim() const { return mean.out_dim(); }

    GaussianVar operator()(Graph& g, const Var& h) { return gaussian_from_raw(mean(g, h), raw_std(g, h)); }

    void collect(std::vector<Parameter*>& out) {
        mean.collect(out);
        raw_std.collect(out);
    }
};

inline void zero_parameters(const std::vector<Parameter*>& params) {
    for (auto* p : params) p->value.fill(0.0);
}

inline void zero_grads(const std::vector<Parameter*>& params) {
    for (auto* p : params) p->zero_grad();
}

} // namespace disbelief
