#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "disbelief/core/checkpoint.hpp"
#include "disbelief/core/nn.hpp"
#include "disbelief/envs/meta_env.hpp"

namespace disbelief {

struct PolicyConfig {
    std::size_t input_dim = 0; ///< belief width + observation width
    ActionSpace action_space{5};
    std::size_t hidden = 64;
    double output_scale = 0.01; ///< shrinks the initial actor output toward uniform / zero mean
};

/// Actor and critic over the input [belief, o_t]. Continuous actions use a
/// state-independent learned log-std.
struct PolicyParams {
    PolicyConfig config;
    Mlp actor;
    Mlp critic;
    Parameter log_std;

    PolicyParams() = default;
    PolicyParams(const PolicyConfig& cfg, Rng& rng) : config(cfg) {
        if (cfg.input_dim == 0) throw ValueError("policy: input width must be >= 1");
        const std::size_t out = cfg.action_space.continuous() ? 1 : cfg.action_space.discrete;
        actor = Mlp("policy.actor", {cfg.input_dim, cfg.hidden, cfg.hidden, out}, Activation::Tanh, rng);
        actor.scale_output(cfg.output_scale);
        critic = Mlp("policy.critic", {cfg.input_dim, cfg.hidden, cfg.hidden, 1}, Activation::Tanh, rng);
        if (cfg.action_space.continuous()) log_std = Parameter("policy.log_std", Tensor::zeros(1, 1));
    }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> ps;
        actor.collect(ps);
        critic.collect(ps);
        if (config.action_space.continuous()) ps.push_back(&log_std);
        return ps;
    }
};

inline std::vector<NamedTensor> to_checkpoint(PolicyParams& p) {
    const auto& c = p.config;
    auto entries = snapshot(p.parameters());
    entries.insert(entries.begin(), NamedTensor{"policy.config", Tensor::vector({double(c.input_dim),
                                                                                 double(c.action_space.discrete),
                                                                                 double(c.hidden), c.output_scale})});
    return entries;
}

inline PolicyParams policy_from_checkpoint(const std::vector<NamedTensor>& entries) {
    const NamedTensor* cfg = find_entry(entries, "policy.config");
    if (!cfg || cfg->value.size() != 4) throw ParseError("checkpoint has no valid policy.config entry");
    const auto& v = cfg->value;
    PolicyConfig c{static_cast<std::size_t>(v[0]), ActionSpace{static_cast<std::size_t>(v[1])},
                   static_cast<std::size_t>(v[2]), v[3]};
    Rng unused(0);
    PolicyParams p(c, unused);
    restore(p.parameters(), entries);
    return p;
}

/// Distribution and value nodes for a batch of policy inputs.
struct PolicyHeads {
    Var logits;  ///< discrete: [B, A]
    Var mean;    ///< continuous: [B, 1]
    Var log_std; ///< continuous: [1, 1]
    Var value;   ///< [B, 1]
};

inline PolicyHeads policy_forward(Graph& g, PolicyParams& p, const Var& input) {
    if (input.cols() != p.config.input_dim)
        throw ShapeError("policy: input width " + std::to_string(input.cols()) + ", expected " +
                         std::to_string(p.config.input_dim));
    PolicyHeads h;
    if (p.config.action_space.continuous()) {
        h.mean = p.actor(g, input);
        h.log_std = g.param(p.log_std);
    } else {
        h.logits = p.actor(g, input);
    }
    h.value = p.critic(g, input);
    return h;
}

/// Per-row log-probability of taken actions ([B, 1]) and per-row entropy ([B, 1] or [1, 1]).
inline Var action_log_prob(const PolicyHeads& h, const PolicyParams& p, const std::vector<std::size_t>& indices,
                           const Tensor& raw_actions) {
    if (!p.config.action_space.continuous()) return ops::pick_cols(ops::log_softmax_rows(h.logits), indices);
    Graph& g = h.mean.graph();
    Var a = g.constant(raw_actions);
    Var z = (a - h.mean) * ops::exp(-h.log_std);
    return ops::scale(ops::square(z), -0.5) - h.log_std - kHalfLog2Pi;
}

inline Var policy_entropy(const PolicyHeads& h, const PolicyParams& p) {
    if (!p.config.action_space.continuous()) {
        Var lp = ops::log_softmax_rows(h.logits);
        return -ops::sum_cols(ops::exp(lp) * lp);
    }
    return h.log_std + (0.5 + kHalfLog2Pi);
}

enum class ActMode { Sample, Greedy };

struct ActResult {
    Action action;          ///< what the environment receives (forces clipped to [-1, 1])
    double raw_action = 0;  ///< unclipped Gaussian sample, used for log-probs
    double log_prob = 0;
    double value = 0;
};

inline std::vector<ActResult> act_batch(PolicyParams& p, const Tensor& inputs, Rng& rng, ActMode mode) {
    Graph g;
    auto h = policy_forward(g, p, g.constant(inputs));
    const std::size_t B = inputs.rows();
    std::vector<ActResult> out(B);
    const auto& value = h.value.value();
    if (p.config.action_space.continuous()) {
        const double ls = h.log_std.value()[0], sd = std::exp(ls);
        std::normal_distribution<double> n(0.0, 1.0);
        for (std::size_t i = 0; i < B; ++i) {
            const double mu = h.mean.value()[i];
            const double a = mode == ActMode::Sample ? mu + sd * n(rng) : mu;
            const double z = (a - mu) / sd;
            out[i].raw_action = a;
            out[i].action = {0, std::clamp(a, -1.0, 1.0)};
            out[i].log_prob = -0.5 * z * z - ls - kHalfLog2Pi;
            out[i].value = value[i];
        }
        return out;
    }
    const std::size_t A = p.config.action_space.discrete;
    const auto& logits = h.logits.value();
    std::vector<double> prob(A);
    for (std::size_t i = 0; i < B; ++i) {
        double mx = -INFINITY;
        for (std::size_t a = 0; a < A; ++a) mx = std::max(mx, logits.at(i, a));
        double z = 0;
        for (std::size_t a = 0; a < A; ++a) z += (prob[a] = std::exp(logits.at(i, a) - mx));
        std::size_t pick = 0;
        if (mode == ActMode::Sample) {
            const double u = uniform01(rng) * z;
            double c = 0;
            pick = A - 1;
            for (std::size_t a = 0; a < A; ++a) {
                c += prob[a];
                if (u < c) {
                    pick = a;
                    break;
                }
            }
        } else {
            for (std::size_t a = 1; a < A; ++a)
                if (logits.at(i, a) > logits.at(i, pick)) pick = a;
        }
        out[i].action = {static_cast<int>(pick), 0.0};
        out[i].raw_action = static_cast<double>(pick);
        out[i].log_prob = logits.at(i, pick) - mx - std::log(z);
        out[i].value = value[i];
    }
    return out;
}

/// Single-row convenience over [belief, o_t].
inline ActResult act(PolicyParams& p, std::span<const double> belief, std::span<const double> observation, Rng& rng,
                     ActMode mode) {
    if (belief.size() + observation.size() != p.config.input_dim)
        throw ShapeError("act: belief + observation width " + std::to_string(belief.size() + observation.size()) +
                         " does not match policy input " + std::to_string(p.config.input_dim));
    std::vector<double> row(belief.begin(), belief.end());
    row.insert(row.end(), observation.begin(), observation.end());
    return act_batch(p, Tensor::matrix(1, row.size(), row), rng, mode).front();
}

} // namespace disbelief
