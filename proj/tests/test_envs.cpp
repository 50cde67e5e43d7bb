#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "disbelief/envs/trajectory.hpp"
#include "support/gridworld_oracles.hpp"

using namespace disbelief;

namespace {

Action uniform_policy(const MetaEnv& env, Rng& rng) {
    const auto space = env.action_space();
    if (space.continuous()) return {0, std::uniform_real_distribution<double>(-1, 1)(rng)};
    return {static_cast<int>(uniform_index(rng, space.discrete)), 0.0};
}

} // namespace

TEST(gridworld, goal_distribution_is_uniform_over_21_cells) {
    GridWorld env;
    Rng rng(17);
    std::vector<int> counts(21, 0);
    for (int i = 0; i < 21000; ++i) ++counts.at(static_cast<std::size_t>(env.sample_task(rng).index));
    for (int c : counts) EXPECT_NEAR(c / 21000.0, 1.0 / 21.0, 0.01);
}

TEST(gridworld, goals_avoid_start_block) {
    for (int cell : GridWorld::goal_cells()) {
        const int x = GridWorld::cell_x(cell), y = GridWorld::cell_y(cell);
        EXPECT_FALSE(x < 2 && y < 2) << cell;
    }
    std::set<int> unique(GridWorld::goal_cells().begin(), GridWorld::goal_cells().end());
    EXPECT_EQ(unique.size(), 21u);
}

TEST(gridworld, seeded_task_sequence_repeats) {
    GridWorld env;
    Rng a(5), b(5);
    for (int i = 0; i < 50; ++i) EXPECT_EQ(env.sample_task(a), env.sample_task(b));
}

TEST(gridworld, reset_corner_surround_bits) {
    GridWorld env;
    Rng rng(1);
    auto [state, obs] = env.reset({EnvId::GridWorld, 10, 0}, rng);
    EXPECT_EQ(state.cell, 0);
    // NW, N, NE, W, E, SW, S, SE
    EXPECT_EQ(obs, (std::vector<double>{1, 0, 0, 1, 0, 1, 1, 1}));
}

TEST(gridworld, entering_goal_pays_one_else_minus_tenth) {
    GridWorld env;
    Rng rng(2);
    const TaskSpec task{EnvId::GridWorld, 0, 0};
    const int goal = GridWorld::goal_cell(task);
    ASSERT_EQ(goal, GridWorld::cell_index(2, 0));
    auto [s, obs] = env.reset(task, rng);
    EXPECT_DOUBLE_EQ(env.step(s, {GridWorld::Right, 0}, rng).reward, -0.1);
    EXPECT_DOUBLE_EQ(env.step(s, {GridWorld::Right, 0}, rng).reward, 1.0);
    // camping on the goal keeps paying
    EXPECT_DOUBLE_EQ(env.step(s, {GridWorld::Stay, 0}, rng).reward, 1.0);
    EXPECT_DOUBLE_EQ(env.step(s, {GridWorld::Up, 0}, rng).reward, -0.1);
}

TEST(gridworld, walls_are_noops_and_dynamics_deterministic) {
    EXPECT_EQ(GridWorld::next_cell(0, GridWorld::Left), 0);
    EXPECT_EQ(GridWorld::next_cell(0, GridWorld::Down), 0);
    EXPECT_EQ(GridWorld::next_cell(24, GridWorld::Up), 24);
    for (int c = 0; c < 25; ++c)
        for (int a = 0; a < 5; ++a) EXPECT_EQ(GridWorld::next_cell(c, a), GridWorld::next_cell(c, a));
}

TEST(gridworld, invalid_action_throws) {
    GridWorld env;
    Rng rng(3);
    auto [s, o] = env.reset({EnvId::GridWorld, 0, 0}, rng);
    EXPECT_THROW(env.step(s, {5, 0}, rng), ValueError);
    EXPECT_THROW(env.step(s, {-1, 0}, rng), ValueError);
}

TEST(gridworld, observation_hides_goal) {
    GridWorld env;
    for (int cell = 0; cell < 25; ++cell) {
        std::vector<double> first;
        for (int goal = 0; goal < 21; ++goal) {
            Rng rng(4);
            auto [s, o] = env.reset({EnvId::GridWorld, goal, 0}, rng);
            s.cell = cell;
            auto r = env.step(s, {GridWorld::Stay, 0}, rng);
            if (goal == 0) first = r.observation;
            EXPECT_EQ(r.observation, first);
        }
    }
}

TEST(pointmass, reset_observes_origin) {
    PointMass env;
    Rng rng(1);
    auto [s, obs] = env.reset({EnvId::PointMass, 0, 0.4}, rng);
    EXPECT_EQ(obs, (std::vector<double>{0.0}));
}

TEST(pointmass, matching_velocity_earns_zero) {
    PointMass env;
    Rng rng(2);
    auto [s, obs] = env.reset({EnvId::PointMass, 0, 0.5}, rng);
    s.velocity = 0.5;
    auto r = env.step(s, {0, 0.0}, rng);
    EXPECT_EQ(r.reward, 0.0);
    EXPECT_DOUBLE_EQ(r.observation[0], 0.05);
}

TEST(pointmass, velocity_is_hidden_and_clipped) {
    PointMass env;
    Rng rng(3);
    auto [a, oa] = env.reset({EnvId::PointMass, 0, 0.2}, rng);
    auto [b, ob] = env.reset({EnvId::PointMass, 0, -0.7}, rng);
    b.velocity = 1.3;
    a.velocity = -0.4;
    a.position = b.position = 0.25;
    EXPECT_EQ(env.step(a, {0, 0.0}, rng).observation.size(), 1u);
    for (int i = 0; i < 100; ++i) env.step(b, {0, 1.0}, rng), b.step_in_episode = b.episode = 0;
    EXPECT_LE(b.velocity, 2.0);
    EXPECT_THROW(env.step(b, {0, 1.5}, rng), ValueError);
    EXPECT_THROW(env.step(b, {0, std::nan("")}, rng), ValueError);
}

TEST(pointmass, tasks_uniform_in_unit_interval) {
    PointMass env;
    Rng rng(4);
    double s = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double z = env.sample_task(rng).target_velocity;
        ASSERT_GE(z, -1.0);
        ASSERT_LE(z, 1.0);
        s += z;
    }
    EXPECT_NEAR(s / 20000, 0.0, 3 * std::sqrt(1.0 / 3.0 / 20000));
}

TEST(chainworld, tables_are_normalized) {
    for (int s = 0; s < ChainWorld::kStates; ++s) {
        for (int a = 0; a < 2; ++a) {
            double row = 0.0;
            for (int n = 0; n < ChainWorld::kStates; ++n) row += ChainWorld::transition_prob(s, a, n);
            EXPECT_NEAR(row, 1.0, 1e-12);
        }
        double e = 0.0;
        for (int o = 0; o < ChainWorld::kStates; ++o) e += ChainWorld::emission_prob(s, o);
        EXPECT_NEAR(e, 1.0, 1e-12);
        for (int z = 0; z < 2; ++z) EXPECT_NEAR(ChainWorld::reward_prob(z, s, 0) + ChainWorld::reward_prob(z, s, 1), 1.0, 1e-12);
    }
}

TEST(chainworld, reset_emissions_follow_table) {
    ChainWorld env;
    Rng rng(6);
    const int n = 10000;
    std::vector<int> counts(4, 0);
    for (int i = 0; i < n; ++i) {
        auto [s, obs] = env.reset({EnvId::ChainWorld, i % 2, 0}, rng);
        EXPECT_EQ(s.chain_state, ChainWorld::kStart);
        ++counts[static_cast<std::size_t>(ChainWorld::symbol_of(obs))];
    }
    for (int o = 0; o < 4; ++o) {
        const double p = ChainWorld::emission_prob(ChainWorld::kStart, o);
        const double se = std::sqrt(p * (1 - p) / n);
        EXPECT_LT(std::abs(counts[static_cast<std::size_t>(o)] / double(n) - p), 3 * se) << o;
    }
}

TEST(meta_episode, gridworld_length_and_boundaries) {
    GridWorld env({4, 15, 0.99});
    Rng rng(7);
    auto tr = run_meta_episode(env, [&](const StepContext&, Rng& r) { return uniform_policy(env, r); }, rng);
    ASSERT_EQ(tr.length(), 60u);
    for (std::size_t t = 0; t < 60; ++t) {
        const bool expected = t == 15 || t == 30 || t == 45;
        EXPECT_EQ(tr.boundary[t] != 0, expected) << t;
        EXPECT_EQ(tr.states[t].task, tr.task);
        if (expected) EXPECT_EQ(tr.states[t].cell, 0);
    }
}

TEST(meta_episode, random_policy_reward_matches_exact_occupancy) {
    const std::size_t H = 15, N = 4;
    const double expected = -0.1 + 1.1 * disbelief::testing::random_walk_goal_occupancy(H);

    GridWorld env({N, H, 0.99});
    Rng rng(8);
    std::vector<double> per_traj;
    for (int i = 0; i < 4000; ++i) {
        auto tr = run_meta_episode(env, [&](const StepContext&, Rng& r) { return uniform_policy(env, r); }, rng);
        double s = 0.0;
        for (double r : tr.rewards) s += r;
        per_traj.push_back(s / tr.length());
    }
    double m = 0.0, v = 0.0;
    for (double x : per_traj) m += x;
    m /= per_traj.size();
    for (double x : per_traj) v += (x - m) * (x - m);
    const double se = std::sqrt(v / (per_traj.size() - 1) / per_traj.size());
    EXPECT_LT(std::abs(m - expected), 3 * se) << m << " vs " << expected;
}

TEST(meta_episode, task_constant_and_lengths_exact_across_envs) {
    Rng rng(9);
    std::vector<std::unique_ptr<MetaEnv>> envs;
    envs.push_back(std::make_unique<GridWorld>(MetaEpisodeConfig{3, 7, 0.9}));
    envs.push_back(std::make_unique<ChainWorld>(MetaEpisodeConfig{2, 5, 0.9}));
    envs.push_back(std::make_unique<PointMass>(MetaEpisodeConfig{2, 11, 0.9}));
    for (auto& env : envs) {
        for (int i = 0; i < 20; ++i) {
            auto tr = run_meta_episode(*env, [&](const StepContext&, Rng& r) { return uniform_policy(*env, r); }, rng);
            ASSERT_EQ(tr.length(), env->config().length());
            ASSERT_EQ(tr.observations.size(), tr.length() * env->observation_dim());
            for (const auto& s : tr.states) EXPECT_EQ(s.task, tr.task);
        }
    }
}

TEST(explorer, dead_reckoning_tracks_true_cell) {
    GridWorld env({4, 15, 0.99});
    Rng rng(10);
    for (int trial = 0; trial < 50; ++trial) {
        Explorer ex(env, 0.2);
        std::vector<int> tracked;
        auto tr = run_meta_episode(env, [&](const StepContext& c, Rng& r) {
            Action a = ex(c, r);
            tracked.push_back(ex.tracked_cell());
            return a;
        }, rng);
        for (std::size_t t = 0; t < tr.length(); ++t) EXPECT_EQ(tracked[t], tr.states[t].cell);
    }
}

TEST(explorer, waypoints_cover_more_goals_than_random_walk) {
    GridWorld env({4, 15, 0.99});
    auto visited_fraction = [&](double eps) {
        Rng rng(11);
        int hits = 0;
        for (int i = 0; i < 2000; ++i) {
            Explorer ex(env, eps);
            auto tr = run_meta_episode(env, [&](const StepContext& c, Rng& r) { return ex(c, r); }, rng);
            bool hit = false;
            for (double r : tr.rewards) hit = hit || r > 0;
            hits += hit;
        }
        return hits / 2000.0;
    };
    EXPECT_GT(visited_fraction(0.2), visited_fraction(1.0) + 0.2);
}

TEST(trajectory_io, round_trip_and_debug_section) {
    Rng rng(12);
    std::vector<std::unique_ptr<MetaEnv>> envs;
    envs.push_back(std::make_unique<GridWorld>(MetaEpisodeConfig{2, 4, 0.9}));
    envs.push_back(std::make_unique<ChainWorld>(MetaEpisodeConfig{2, 3, 0.9}));
    envs.push_back(std::make_unique<PointMass>(MetaEpisodeConfig{1, 6, 0.9}));
    for (auto& env : envs) {
        auto tr = run_meta_episode(*env, [&](const StepContext&, Rng& r) { return uniform_policy(*env, r); }, rng);
        std::ostringstream plain, debug;
        write_trajectory(plain, tr, false);
        write_trajectory(debug, tr, true);
        EXPECT_EQ(plain.str().find("\"debug\",\"state\""), std::string::npos);
        EXPECT_EQ(plain.str().find("\"record\":\"debug\""), std::string::npos);
        EXPECT_NE(debug.str().find("\"record\":\"debug\""), std::string::npos);
        std::istringstream in(debug.str());
        Trajectory back = read_trajectory(in);
        EXPECT_EQ(back.observations, tr.observations);
        EXPECT_EQ(back.rewards, tr.rewards);
        EXPECT_EQ(back.actions, tr.actions);
        EXPECT_EQ(back.boundary, tr.boundary);
        EXPECT_EQ(back.task, tr.task);
        ASSERT_EQ(back.states.size(), tr.states.size());
        std::istringstream in2(plain.str());
        EXPECT_TRUE(read_trajectory(in2).states.empty());
    }
    std::istringstream bad("{\"record\":\"step\"}\n");
    EXPECT_THROW(read_trajectory(bad), ParseError);
}
