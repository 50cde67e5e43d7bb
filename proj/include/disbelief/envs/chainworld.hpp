#pragma once

#include <array>
#include <string>
#include <vector>

#include "disbelief/envs/meta_env.hpp"

namespace disbelief {

/// Four states on a line with noisy state symbols. Task 0 pays at the left
/// end, task 1 at the right end. Small enough for exact joint filtering.
class ChainWorld final : public MetaEnv {
public:
    static constexpr int kStates = 4;
    static constexpr int kTasks = 2;
    static constexpr int kStart = 1;
    static constexpr double kMoveProb = 0.8;
    static constexpr double kEmitCorrect = 0.8;
    static constexpr double kRewardAtGoal = 0.9;
    static constexpr double kRewardElsewhere = 0.1;
    enum Move : int { Left = 0, Right = 1 };

    explicit ChainWorld(MetaEpisodeConfig config = {2, 5, 0.99}) : MetaEnv(config) {}

    EnvId id() const override { return EnvId::ChainWorld; }
    std::size_t observation_dim() const override { return kStates; }
    ObservationKind observation_kind() const override { return ObservationKind::Categorical; }
    ActionSpace action_space() const override { return {2}; }
    std::size_t task_classes() const override { return kTasks; }

    TaskSpec sample_task(Rng& rng) const override {
        return {EnvId::ChainWorld, static_cast<int>(uniform_index(rng, kTasks)), 0.0};
    }

    static int goal_state(int task) { return task == 0 ? 0 : kStates - 1; }

    static double transition_prob(int s, int a, int next) {
        const int moved = std::clamp(s + (a == Right ? 1 : -1), 0, kStates - 1);
        double p = 0.0;
        if (next == moved) p += kMoveProb;
        if (next == s) p += 1.0 - kMoveProb;
        return p;
    }

    static double emission_prob(int s, int symbol) {
        return symbol == s ? kEmitCorrect : (1.0 - kEmitCorrect) / (kStates - 1);
    }

    /// Probability of reward value `r` (0 or 1) on entering state `s` under `task`.
    static double reward_prob(int task, int s, int r) {
        const double p1 = s == goal_state(task) ? kRewardAtGoal : kRewardElsewhere;
        return r == 1 ? p1 : 1.0 - p1;
    }

    static int symbol_of(const std::vector<double>& onehot) {
        for (std::size_t i = 0; i < onehot.size(); ++i)
            if (onehot[i] == 1.0) return static_cast<int>(i);
        throw ValueError("chainworld: observation is not one-hot");
    }

protected:
    void check_task(const TaskSpec& task) const override {
        if (task.env != EnvId::ChainWorld || task.index < 0 || task.index >= kTasks)
            throw ValueError("chainworld: invalid task");
    }

    void check_action(const Action& a) const override {
        if (a.index != Left && a.index != Right)
            throw ValueError("chainworld: invalid action index " + std::to_string(a.index));
    }

    void reset_state(EnvState& s, Rng&) const override { s.chain_state = kStart; }

    std::vector<double> observe(const EnvState& s, Rng& rng) const override {
        std::vector<double> onehot(kStates, 0.0);
        onehot[static_cast<std::size_t>(sample_row([&](int o) { return emission_prob(s.chain_state, o); }, rng))] = 1.0;
        return onehot;
    }

    double transition(EnvState& s, const Action& a, Rng& rng) const override {
        const int from = s.chain_state;
        s.chain_state = sample_row([&](int n) { return transition_prob(from, a.index, n); }, rng);
        return uniform01(rng) < reward_prob(s.task.index, s.chain_state, 1) ? 1.0 : 0.0;
    }

private:
    template <class P>
    static int sample_row(P prob, Rng& rng) {
        const double u = uniform01(rng);
        double c = 0.0;
        for (int i = 0; i < kStates; ++i) {
            c += prob(i);
            if (u < c) return i;
        }
        return kStates - 1;
    }
};

} // namespace disbelief
