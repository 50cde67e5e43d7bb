#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "disbelief/envs/trajectory.hpp"

namespace disbelief {

/// Builds a fresh policy for one meta-episode (stateful agents reset their memory here).
using PolicyFactory = std::function<PolicyFn()>;

struct RewardCurve {
    std::size_t horizon = 0;
    std::size_t episodes = 0;
    std::size_t tasks = 0;
    std::vector<double> mean; ///< per timestep t = 0 .. N*H-1
    std::vector<double> std;
    std::vector<double> episode_return_mean; ///< per episode index 1..N
    std::vector<double> episode_return_std;

    /// Mean per-timestep reward over the steps of episode k (0-based).
    double episode_segment_mean(std::size_t k) const {
        double s = 0;
        for (std::size_t t = k * horizon; t < (k + 1) * horizon; ++t) s += mean[t];
        return s / static_cast<double>(horizon);
    }
};

inline void mean_std(const std::vector<double>& v, double& mean, double& sd) {
    mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
}

/// Runs one meta-episode per task and aggregates per-timestep rewards and per-episode returns.
inline RewardCurve reward_curve(const MetaEnv& env, const std::vector<TaskSpec>& tasks, const PolicyFactory& make_policy,
                                Rng& rng) {
    if (tasks.empty()) throw ValueError("reward_curve: need at least one task");
    const auto& cfg = env.config();
    const std::size_t T = cfg.length();
    std::vector<std::vector<double>> per_step(T), per_episode(cfg.episodes);
    for (const auto& task : tasks) {
        auto tr = run_meta_episode(env, task, make_policy(), rng);
        for (std::size_t t = 0; t < T; ++t) per_step[t].push_back(tr.rewards[t]);
        for (std::size_t k = 0; k < cfg.episodes; ++k) {
            double ret = 0;
            for (std::size_t t = k * cfg.horizon; t < (k + 1) * cfg.horizon; ++t) ret += tr.rewards[t];
            per_episode[k].push_back(ret);
        }
    }
    RewardCurve c;
    c.horizon = cfg.horizon;
    c.episodes = cfg.episodes;
    c.tasks = tasks.size();
    c.mean.resize(T);
    c.std.resize(T);
    for (std::size_t t = 0; t < T; ++t) mean_std(per_step[t], c.mean[t], c.std[t]);
    c.episode_return_mean.resize(cfg.episodes);
    c.episode_return_std.resize(cfg.episodes);
    for (std::size_t k = 0; k < cfg.episodes; ++k) mean_std(per_episode[k], c.episode_return_mean[k], c.episode_return_std[k]);
    return c;
}

inline RewardCurve reward_curve(const MetaEnv& env, std::size_t n_tasks, const PolicyFactory& make_policy, Rng& rng) {
    std::vector<TaskSpec> tasks;
    for (std::size_t i = 0; i < n_tasks; ++i) tasks.push_back(env.sample_task(rng));
    return reward_curve(env, tasks, make_policy, rng);
}

} // namespace disbelief
