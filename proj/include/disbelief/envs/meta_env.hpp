#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "disbelief/core/error.hpp"
#include "disbelief/core/rng.hpp"

namespace disbelief {

enum class EnvId { GridWorld, ChainWorld, PointMass };

inline std::string to_string(EnvId id) {
    switch (id) {
    case EnvId::GridWorld: return "gridworld";
    case EnvId::ChainWorld: return "chainworld";
    case EnvId::PointMass: return "pointmass";
    }
    return "unknown";
}

inline EnvId parse_env_id(const std::string& s) {
    if (s == "gridworld") return EnvId::GridWorld;
    if (s == "chainworld") return EnvId::ChainWorld;
    if (s == "pointmass") return EnvId::PointMass;
    throw ValueError("unknown environment id '" + s + "'");
}

/// N POMDP episodes of H steps that share one task.
struct MetaEpisodeConfig {
    std::size_t episodes = 4;
    std::size_t horizon = 15;
    double gamma = 0.99;

    std::size_t length() const noexcept { return episodes * horizon; }

    void validate() const {
        if (episodes == 0) throw ValueError("meta-episode: episodes must be >= 1");
        if (horizon == 0) throw ValueError("meta-episode: horizon must be >= 1");
        if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValueError("meta-episode: gamma must lie in [0, 1]");
    }

    bool operator==(const MetaEpisodeConfig&) const = default;
};

/// Hidden task. GridWorld: goal index 0-20; ChainWorld: task id; PointMass: target velocity.
struct TaskSpec {
    EnvId env = EnvId::GridWorld;
    int index = 0;
    double target_velocity = 0.0;

    bool operator==(const TaskSpec&) const = default;
};

struct Action {
    int index = 0;
    double force = 0.0;

    bool operator==(const Action&) const = default;
};

/// True environment state. Only the oracle/debug channel may read it.
struct EnvState {
    TaskSpec task;
    int cell = 0;
    int chain_state = 0;
    double position = 0.0;
    double velocity = 0.0;
    std::size_t step_in_episode = 0;
    std::size_t episode = 0;
};

struct StepResult {
    std::vector<double> observation;
    double reward = 0.0;
    bool episode_done = false;
    bool meta_done = false;
    /// The observation comes from a freshly reset state of the next episode.
    bool boundary_reset = false;
};

enum class ObservationKind { Binary, Categorical, Gaussian };

struct ActionSpace {
    /// Number of discrete actions; 0 means a single continuous force.
    std::size_t discrete = 0;

    bool continuous() const noexcept { return discrete == 0; }
    std::size_t feature_dim() const noexcept { return continuous() ? 1 : discrete; }
};

/// Meta-POMDP: stateless description of dynamics; all mutable data lives in EnvState.
///
/// `step` advances the true state, and when an episode ends inside the
/// meta-episode it resets the state from the initial distribution while
/// keeping the task.
class MetaEnv {
public:
    explicit MetaEnv(MetaEpisodeConfig config) : config_(config) { config_.validate(); }
    virtual ~MetaEnv() = default;

    virtual EnvId id() const = 0;
    virtual std::size_t observation_dim() const = 0;
    virtual ObservationKind observation_kind() const = 0;
    virtual ActionSpace action_space() const = 0;
    virtual TaskSpec sample_task(Rng& rng) const = 0;
    /// Number of discrete task classes; 0 for continuous task spaces.
    virtual std::size_t task_classes() const = 0;

    const MetaEpisodeConfig& config() const noexcept { return config_; }

    std::pair<EnvState, std::vector<double>> reset(const TaskSpec& task, Rng& rng) const {
        check_task(task);
        EnvState s;
        s.task = task;
        reset_state(s, rng);
        return {s, observe(s, rng)};
    }

    StepResult step(EnvState& s, const Action& a, Rng& rng) const {
        if (s.episode >= config_.episodes) throw ValueError("step: meta-episode already finished");
        check_action(a);
        StepResult r;
        r.reward = transition(s, a, rng);
        ++s.step_in_episode;
        if (s.step_in_episode == config_.horizon) {
            r.episode_done = true;
            ++s.episode;
            if (s.episode == config_.episodes) {
                r.meta_done = true;
            } else {
                s.step_in_episode = 0;
                reset_state(s, rng);
                r.boundary_reset = true;
            }
        }
        r.observation = observe(s, rng);
        return r;
    }

    /// Action features fed to the model: one-hot for discrete, [force] for continuous.
    std::vector<double> encode_action(const Action& a) const {
        const auto space = action_space();
        if (space.continuous()) return {a.force};
        std::vector<double> v(space.discrete, 0.0);
        v.at(static_cast<std::size_t>(a.index)) = 1.0;
        return v;
    }

    int task_label(const TaskSpec& task) const {
        if (task_classes() == 0) throw ValueError(to_string(id()) + " has no discrete task labels");
        return task.index;
    }

protected:
    virtual void check_task(const TaskSpec& task) const = 0;
    virtual void check_action(const Action& a) const = 0;
    /// Samples the state from the initial distribution; task untouched.
    virtual void reset_state(EnvState& s, Rng& rng) const = 0;
    /// Observation of the current state. Reads only observable fields.
    virtual std::vector<double> observe(const EnvState& s, Rng& rng) const = 0;
    /// Advances the state and returns the reward.
    virtual double transition(EnvState& s, const Action& a, Rng& rng) const = 0;

    MetaEpisodeConfig config_;
};

} // namespace disbelief
