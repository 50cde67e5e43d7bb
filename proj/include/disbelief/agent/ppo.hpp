#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "disbelief/agent/policy.hpp"
#include "disbelief/core/adam.hpp"

namespace disbelief {

/// Flat store of policy steps. Sequences are appended whole; `done` marks the
/// last step of each meta-episode, where bootstrapping stops.
struct RolloutBuffer {
    std::size_t input_dim = 0;
    std::vector<double> inputs; ///< [n, input_dim]
    std::vector<std::size_t> action_indices;
    std::vector<double> raw_actions;
    std::vector<double> log_probs;
    std::vector<double> rewards;
    std::vector<double> values;
    std::vector<std::uint8_t> dones;
    std::vector<double> advantages;
    std::vector<double> returns;

    explicit RolloutBuffer(std::size_t width = 0) : input_dim(width) {}

    std::size_t size() const noexcept { return rewards.size(); }
    bool has_advantages() const noexcept { return advantages.size() == size() && returns.size() == size() && size() > 0; }

    void add(std::span<const double> input, const ActResult& a, double reward, bool done) {
        if (input.size() != input_dim) throw ShapeError("rollout buffer: input width mismatch");
        inputs.insert(inputs.end(), input.begin(), input.end());
        action_indices.push_back(static_cast<std::size_t>(std::max(a.action.index, 0)));
        raw_actions.push_back(a.raw_action);
        log_probs.push_back(a.log_prob);
        rewards.push_back(reward);
        values.push_back(a.value);
        dones.push_back(done ? 1 : 0);
    }

    void append(const RolloutBuffer& other) {
        if (other.input_dim != input_dim) throw ShapeError("rollout buffer: cannot append buffers of different width");
        auto cat = [](auto& a, const auto& b) { a.insert(a.end(), b.begin(), b.end()); };
        cat(inputs, other.inputs);
        cat(action_indices, other.action_indices);
        cat(raw_actions, other.raw_actions);
        cat(log_probs, other.log_probs);
        cat(rewards, other.rewards);
        cat(values, other.values);
        cat(dones, other.dones);
        advantages.clear();
        returns.clear();
    }
};

/// Generalised advantage estimation, backward over the flat buffer.
inline void gae(RolloutBuffer& buf, double gamma, double lambda) {
    const std::size_t n = buf.size();
    if (n == 0) throw ValueError("gae: empty buffer");
    if (buf.values.size() != n || buf.dones.size() != n)
        throw ValueError("gae: values or done flags missing for some steps");
    if (!buf.dones.back()) throw ValueError("gae: the last step must close its sequence");
    buf.advantages.assign(n, 0.0);
    buf.returns.assign(n, 0.0);
    double next_adv = 0.0, next_value = 0.0;
    for (std::size_t k = n; k-- > 0;) {
        const bool done = buf.dones[k] != 0;
        const double v_next = done ? 0.0 : next_value;
        const double delta = buf.rewards[k] + gamma * v_next - buf.values[k];
        const double adv = delta + (done ? 0.0 : gamma * lambda * next_adv);
        buf.advantages[k] = adv;
        buf.returns[k] = adv + buf.values[k];
        next_adv = adv;
        next_value = buf.values[k];
    }
}

struct PpoConfig {
    double clip = 0.2;
    std::size_t epochs = 4;
    std::size_t minibatch = 256;
    double value_coef = 0.5;
    double entropy_coef = 0.01;
    double gamma = 0.99;
    double lambda = 0.95;
    bool normalize_advantages = true;
    AdamConfig adam{3e-4, 0.9, 0.999, 1e-5, 0.5};
};

struct PpoStats {
    double policy_loss = 0;
    double value_loss = 0;
    double entropy = 0;
    double clip_fraction = 0;
    double approx_kl = 0;
};

/// Batch mean of min(ratio * A, clip(ratio, 1-eps, 1+eps) * A).
inline Var clipped_surrogate(const Var& log_prob, const Tensor& old_log_prob, const Tensor& advantages, double clip) {
    Graph& g = log_prob.graph();
    Var ratio = ops::exp(log_prob - g.constant(old_log_prob));
    Var adv = g.constant(advantages);
    return ops::mean(ops::minimum(ratio * adv, ops::clamp(ratio, 1.0 - clip, 1.0 + clip) * adv));
}

inline void normalize_in_place(std::vector<double>& v) {
    if (v.size() < 2) return;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(v.size()));
    for (double& x : v) x = (x - mean) / (sd + 1e-8);
}

/// Clipped-surrogate updates over shuffled minibatches. Only policy parameters
/// appear in the graph; the belief inputs are constants.
inline PpoStats ppo_update(PolicyParams& policy, AdamState& opt, const RolloutBuffer& buf, const PpoConfig& cfg, Rng& rng) {
    if (!buf.has_advantages()) throw ValueError("ppo_update: run gae before updating");
    if (cfg.minibatch == 0 || cfg.epochs == 0) throw ValueError("ppo_update: epochs and minibatch must be >= 1");
    const std::size_t n = buf.size(), w = buf.input_dim;
    std::vector<double> adv = buf.advantages;
    if (cfg.normalize_advantages) normalize_in_place(adv);
    auto params = policy.parameters();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    PpoStats stats;
    std::size_t batches = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
        for (std::size_t begin = 0; begin < n; begin += cfg.minibatch) {
            const std::size_t m = std::min(cfg.minibatch, n - begin);
            Tensor x = Tensor::zeros(m, w), old_lp = Tensor::zeros(m, 1), a = Tensor::zeros(m, 1),
                   ret = Tensor::zeros(m, 1), ad = Tensor::zeros(m, 1);
            std::vector<std::size_t> idx(m);
            for (std::size_t r = 0; r < m; ++r) {
                const std::size_t k = order[begin + r];
                std::copy_n(buf.inputs.begin() + static_cast<std::ptrdiff_t>(k * w), w, x.row(r).begin());
                old_lp[r] = buf.log_probs[k];
                a[r] = buf.raw_actions[k];
                ret[r] = buf.returns[k];
                ad[r] = adv[k];
                idx[r] = buf.action_indices[k];
            }
            zero_grads(params);
            Graph g;
            try {
                auto heads = policy_forward(g, policy, g.constant(x));
                Var lp = action_log_prob(heads, policy, idx, a);
                Var surrogate = clipped_surrogate(lp, old_lp, ad, cfg.clip);
                Var value_loss = ops::mean(ops::square(heads.value - g.constant(ret)));
                Var entropy = ops::mean(policy_entropy(heads, policy));
                Var loss = -surrogate + value_loss * cfg.value_coef - entropy * cfg.entropy_coef;
                g.backward(loss);
                stats.policy_loss += -surrogate.value().item();
                stats.value_loss += value_loss.value().item();
                stats.entropy += entropy.value().item();
                for (std::size_t r = 0; r < m; ++r) {
                    const double log_ratio = lp.value()[r] - old_lp[r];
                    stats.approx_kl += (std::exp(log_ratio) - 1.0 - log_ratio) / static_cast<double>(m);
                    stats.clip_fraction += (std::abs(std::exp(log_ratio) - 1.0) > cfg.clip) / static_cast<double>(m);
                }
            } catch (const NumericError& e) {
                throw NumericError(std::string("ppo_update: non-finite probability ratio or loss: ") + e.what());
            }
            adam_step(params, opt);
            ++batches;
        }
    }
    const double b = static_cast<double>(batches);
    stats.policy_loss /= b;
    stats.value_loss /= b;
    stats.entropy /= b;
    stats.clip_fraction /= b;
    stats.approx_kl /= b;
    return stats;
}

} // namespace disbelief
