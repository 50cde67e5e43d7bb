#pragma once

#include <array>
#include <string>
#include <vector>

#include "disbelief/envs/meta_env.hpp"

namespace disbelief {

/// 5x5 grid, agent starts bottom-left at (0, 0); the goal lies anywhere
/// outside the 2x2 block around the start (21 cells). Reward +1 when the
/// agent's resulting cell is the goal, -0.1 otherwise; nothing terminates
/// early.
class GridWorld final : public MetaEnv {
public:
    static constexpr int kSize = 5;
    static constexpr std::size_t kGoalCount = 21;
    static constexpr double kGoalReward = 1.0;
    static constexpr double kStepReward = -0.1;

    enum Move : int { Up = 0, Down = 1, Left = 2, Right = 3, Stay = 4 };
    static constexpr std::size_t kActionCount = 5;

    /// Surround: 8 wall bits (NW, N, NE, W, E, SW, S, SE). FullCell: one-hot of
    /// the agent cell, used only for the fully observed sanity setting.
    enum class Observation { Surround, FullCell };

    explicit GridWorld(MetaEpisodeConfig config = {}, Observation obs = Observation::Surround)
        : MetaEnv(config), obs_(obs) {}

    EnvId id() const override { return EnvId::GridWorld; }
    std::size_t observation_dim() const override { return obs_ == Observation::Surround ? 8 : kSize * kSize; }
    ObservationKind observation_kind() const override { return ObservationKind::Binary; }
    ActionSpace action_space() const override { return {kActionCount}; }
    std::size_t task_classes() const override { return kGoalCount; }

    TaskSpec sample_task(Rng& rng) const override {
        return {EnvId::GridWorld, static_cast<int>(uniform_index(rng, kGoalCount)), 0.0};
    }

    static int cell_index(int x, int y) { return y * kSize + x; }
    static int cell_x(int cell) { return cell % kSize; }
    static int cell_y(int cell) { return cell / kSize; }

    static const std::array<int, kGoalCount>& goal_cells() {
        static const std::array<int, kGoalCount> cells = [] {
            std::array<int, kGoalCount> c{};
            std::size_t k = 0;
            for (int y = 0; y < kSize; ++y)
                for (int x = 0; x < kSize; ++x)
                    if (!(x < 2 && y < 2)) c[k++] = cell_index(x, y);
            return c;
        }();
        return cells;
    }

    static int goal_cell(const TaskSpec& task) { return goal_cells().at(static_cast<std::size_t>(task.index)); }

    static bool inside(int x, int y) { return x >= 0 && x < kSize && y >= 0 && y < kSize; }

    /// Deterministic move; leaving the grid is a no-op.
    static int next_cell(int cell, int action) {
        static constexpr std::array<int, 5> dx{0, 0, -1, 1, 0};
        static constexpr std::array<int, 5> dy{1, -1, 0, 0, 0};
        const int nx = cell_x(cell) + dx[static_cast<std::size_t>(action)];
        const int ny = cell_y(cell) + dy[static_cast<std::size_t>(action)];
        return inside(nx, ny) ? cell_index(nx, ny) : cell;
    }

    /// 1 = wall / outside the grid, in NW, N, NE, W, E, SW, S, SE order.
    static std::vector<double> surround_bits(int cell) {
        static constexpr std::array<int, 8> ox{-1, 0, 1, -1, 1, -1, 0, 1};
        static constexpr std::array<int, 8> oy{1, 1, 1, 0, 0, -1, -1, -1};
        std::vector<double> bits(8);
        for (std::size_t i = 0; i < 8; ++i) bits[i] = inside(cell_x(cell) + ox[i], cell_y(cell) + oy[i]) ? 0.0 : 1.0;
        return bits;
    }

protected:
    void check_task(const TaskSpec& task) const override {
        if (task.env != EnvId::GridWorld || task.index < 0 || task.index >= static_cast<int>(kGoalCount))
            throw ValueError("gridworld: invalid task");
    }

    void check_action(const Action& a) const override {
        if (a.index < 0 || a.index >= static_cast<int>(kActionCount))
            throw ValueError("gridworld: invalid action index " + std::to_string(a.index));
    }

    void reset_state(EnvState& s, Rng&) const override { s.cell = cell_index(0, 0); }

    std::vector<double> observe(const EnvState& s, Rng&) const override {
        if (obs_ == Observation::Surround) return surround_bits(s.cell);
        std::vector<double> onehot(kSize * kSize, 0.0);
        onehot[static_cast<std::size_t>(s.cell)] = 1.0;
        return onehot;
    }

    double transition(EnvState& s, const Action& a, Rng&) const override {
        s.cell = next_cell(s.cell, a.index);
        return s.cell == goal_cell(s.task) ? kGoalReward : kStepReward;
    }

private:
    Observation obs_;
};

} // namespace disbelief
