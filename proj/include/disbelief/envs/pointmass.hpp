#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "disbelief/envs/meta_env.hpp"

namespace disbelief {

/// 1-D point mass that must track a hidden target velocity; only its
/// position is observed.
class PointMass final : public MetaEnv {
public:
    static constexpr double kDt = 0.1;
    static constexpr double kMaxSpeed = 2.0;

    explicit PointMass(MetaEpisodeConfig config = {2, 50, 0.99}) : MetaEnv(config) {}

    EnvId id() const override { return EnvId::PointMass; }
    std::size_t observation_dim() const override { return 1; }
    ObservationKind observation_kind() const override { return ObservationKind::Gaussian; }
    ActionSpace action_space() const override { return {0}; }
    std::size_t task_classes() const override { return 0; }

    TaskSpec sample_task(Rng& rng) const override {
        return {EnvId::PointMass, 0, std::uniform_real_distribution<double>(-1.0, 1.0)(rng)};
    }

protected:
    void check_task(const TaskSpec& task) const override {
        if (task.env != EnvId::PointMass || !std::isfinite(task.target_velocity))
            throw ValueError("pointmass: invalid task");
    }

    void check_action(const Action& a) const override {
        if (!(a.force >= -1.0 && a.force <= 1.0))
            throw ValueError("pointmass: force must lie in [-1, 1], got " + std::to_string(a.force));
    }

    void reset_state(EnvState& s, Rng&) const override {
        s.position = 0.0;
        s.velocity = 0.0;
    }

    std::vector<double> observe(const EnvState& s, Rng&) const override { return {s.position}; }

    double transition(EnvState& s, const Action& a, Rng&) const override {
        s.velocity = std::clamp(s.velocity + kDt * a.force, -kMaxSpeed, kMaxSpeed);
        s.position += kDt * s.velocity;
        return -std::abs(s.velocity - s.task.target_velocity);
    }
};

} // namespace disbelief
