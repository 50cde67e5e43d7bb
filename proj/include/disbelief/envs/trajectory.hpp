#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "disbelief/envs/chainworld.hpp"
#include "disbelief/envs/gridworld.hpp"
#include "disbelief/envs/pointmass.hpp"
#include "json.hpp"

namespace disbelief {

/// One meta-episode. Step t holds o_t, the action a_t taken after it, the
/// reward r_t that action earned, and whether o_t follows an in-task reset.
struct Trajectory {
    EnvId env = EnvId::GridWorld;
    TaskSpec task;
    MetaEpisodeConfig config;
    std::size_t observation_dim = 0;
    std::vector<double> observations;
    std::vector<Action> actions;
    std::vector<double> rewards;
    std::vector<std::uint8_t> boundary;
    /// True state at each step (oracle/debug channel).
    std::vector<EnvState> states;

    std::size_t length() const noexcept { return rewards.size(); }
    std::span<const double> observation(std::size_t t) const {
        return {observations.data() + t * observation_dim, observation_dim};
    }
};

/// What a policy sees before choosing a_t.
struct StepContext {
    std::size_t t = 0;
    std::span<const double> observation;
    bool boundary_reset = false;
    /// a_{t-1} and r_{t-1}; unset at t = 0.
    const Action* previous_action = nullptr;
    double previous_reward = 0.0;
};

using PolicyFn = std::function<Action(const StepContext&, Rng&)>;

inline Trajectory run_meta_episode(const MetaEnv& env, const TaskSpec& task, const PolicyFn& policy, Rng& rng) {
    const MetaEpisodeConfig& cfg = env.config();
    Trajectory tr;
    tr.env = env.id();
    tr.task = task;
    tr.config = cfg;
    tr.observation_dim = env.observation_dim();
    const std::size_t T = cfg.length();
    tr.observations.reserve(T * tr.observation_dim);
    auto [state, obs] = env.reset(task, rng);
    bool boundary = false;
    for (std::size_t t = 0; t < T; ++t) {
        tr.observations.insert(tr.observations.end(), obs.begin(), obs.end());
        tr.boundary.push_back(boundary ? 1 : 0);
        tr.states.push_back(state);
        StepContext ctx{t, std::span<const double>(tr.observations.data() + t * tr.observation_dim, tr.observation_dim),
                        boundary, t ? &tr.actions.back() : nullptr, t ? tr.rewards.back() : 0.0};
        const Action a = policy(ctx, rng);
        StepResult r = env.step(state, a, rng);
        tr.actions.push_back(a);
        tr.rewards.push_back(r.reward);
        obs = std::move(r.observation);
        boundary = r.boundary_reset;
        if (r.meta_done != (t + 1 == T)) throw Error("run_meta_episode: episode schedule out of sync");
    }
    return tr;
}

inline Trajectory run_meta_episode(const MetaEnv& env, const PolicyFn& policy, Rng& rng) {
    const TaskSpec task = env.sample_task(rng);
    return run_meta_episode(env, task, policy, rng);
}

inline std::unique_ptr<MetaEnv> make_env(EnvId id, const MetaEpisodeConfig& cfg) {
    switch (id) {
    case EnvId::GridWorld: return std::make_unique<GridWorld>(cfg);
    case EnvId::ChainWorld: return std::make_unique<ChainWorld>(cfg);
    case EnvId::PointMass: return std::make_unique<PointMass>(cfg);
    }
    throw ValueError("make_env: unknown environment");
}

/// Scripted data-collection policy. With probability epsilon it takes a
/// uniform random action; otherwise (GridWorld only) it heads for a random
/// waypoint cell, tracking its own position by dead reckoning from reset,
/// the wall bits and its own actions. epsilon = 1 is a plain random walk.
class Explorer {
public:
    Explorer(const MetaEnv& env, double epsilon) : space_(env.action_space()), grid_(env.id() == EnvId::GridWorld),
                                                    epsilon_(epsilon) {
        if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ValueError("explorer: epsilon must lie in [0, 1]");
    }

    Action operator()(const StepContext& ctx, Rng& rng) {
        if (space_.continuous()) return {0, std::uniform_real_distribution<double>(-1.0, 1.0)(rng)};
        if (!grid_) return {static_cast<int>(uniform_index(rng, space_.discrete)), 0.0};
        if (ctx.t == 0 || ctx.boundary_reset) {
            cell_ = 0;
            waypoint_ = -1;
        } else if (last_move_ok_) {
            cell_ = GridWorld::next_cell(cell_, last_action_);
        }
        if (waypoint_ < 0 || waypoint_ == cell_)
            waypoint_ = static_cast<int>(uniform_index(rng, GridWorld::kSize * GridWorld::kSize));
        int a;
        if (uniform01(rng) < epsilon_) {
            a = static_cast<int>(uniform_index(rng, GridWorld::kActionCount));
        } else {
            std::vector<int> options;
            const int dx = GridWorld::cell_x(waypoint_) - GridWorld::cell_x(cell_);
            const int dy = GridWorld::cell_y(waypoint_) - GridWorld::cell_y(cell_);
            if (dx > 0) options.push_back(GridWorld::Right);
            if (dx < 0) options.push_back(GridWorld::Left);
            if (dy > 0) options.push_back(GridWorld::Up);
            if (dy < 0) options.push_back(GridWorld::Down);
            a = options.empty() ? GridWorld::Stay : options[uniform_index(rng, options.size())];
        }
        // wall bits: N = 1, S = 6, W = 3, E = 4
        static constexpr std::array<std::size_t, 4> wall_bit{1, 6, 3, 4};
        last_move_ok_ = a == GridWorld::Stay || ctx.observation[wall_bit[static_cast<std::size_t>(a)]] == 0.0;
        last_action_ = a;
        return {a, 0.0};
    }

    /// Dead-reckoned cell at the most recent decision.
    int tracked_cell() const noexcept { return cell_; }

private:
    ActionSpace space_;
    bool grid_;
    double epsilon_;
    int cell_ = 0;
    int waypoint_ = -1;
    int last_action_ = GridWorld::Stay;
    bool last_move_ok_ = false;
};

inline std::vector<Trajectory> collect_explorer_trajectories(const MetaEnv& env, std::size_t count, double epsilon,
                                                             Rng& rng) {
    std::vector<Trajectory> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Explorer explorer(env, epsilon);
        out.push_back(run_meta_episode(env, [&](const StepContext& c, Rng& r) { return explorer(c, r); }, rng));
    }
    return out;
}

// Line-delimited JSON: one header record, one record per step, and an
// optional trailing debug section with true states and the task.

inline nlohmann::json task_to_json(const TaskSpec& task) {
    if (task.env == EnvId::PointMass) return {{"target_velocity", task.target_velocity}};
    if (task.env == EnvId::GridWorld) return {{"goal", task.index}};
    return {{"task", task.index}};
}

inline void write_trajectory(std::ostream& os, const Trajectory& tr, bool include_debug) {
    using nlohmann::json;
    const bool continuous = tr.env == EnvId::PointMass;
    os << json{{"record", "header"},
               {"env", to_string(tr.env)},
               {"episodes", tr.config.episodes},
               {"horizon", tr.config.horizon},
               {"gamma", tr.config.gamma},
               {"observation_dim", tr.observation_dim},
               {"steps", tr.length()},
               {"debug", include_debug}}
              .dump()
       << '\n';
    for (std::size_t t = 0; t < tr.length(); ++t) {
        auto o = tr.observation(t);
        json rec{{"record", "step"},
                 {"t", t},
                 {"episode", t / tr.config.horizon},
                 {"observation", std::vector<double>(o.begin(), o.end())},
                 {"reward", tr.rewards[t]},
                 {"boundary", tr.boundary[t] != 0}};
        if (continuous)
            rec["action"] = tr.actions[t].force;
        else
            rec["action"] = tr.actions[t].index;
        os << rec.dump() << '\n';
    }
    if (!include_debug) return;
    for (std::size_t t = 0; t < tr.states.size(); ++t) {
        const EnvState& s = tr.states[t];
        json state;
        switch (tr.env) {
        case EnvId::GridWorld: state = {{"cell", s.cell}}; break;
        case EnvId::ChainWorld: state = {{"state", s.chain_state}}; break;
        case EnvId::PointMass: state = {{"position", s.position}, {"velocity", s.velocity}}; break;
        }
        os << json{{"record", "debug"}, {"t", t}, {"state", state}, {"task", task_to_json(tr.task)}}.dump() << '\n';
    }
}

inline Trajectory read_trajectory(std::istream& is) {
    using nlohmann::json;
    Trajectory tr;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false, continuous = false;
    std::size_t steps = 0;
    auto fail = [&](const std::string& why) { throw ParseError("trajectory line " + std::to_string(lineno) + ": " + why); };
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            fail(e.what());
        }
        const std::string kind = rec.value("record", "");
        if (kind == "header") {
            tr.env = parse_env_id(rec.at("env").get<std::string>());
            tr.task.env = tr.env;
            tr.config = {rec.at("episodes").get<std::size_t>(), rec.at("horizon").get<std::size_t>(),
                         rec.at("gamma").get<double>()};
            tr.observation_dim = rec.at("observation_dim").get<std::size_t>();
            steps = rec.at("steps").get<std::size_t>();
            continuous = tr.env == EnvId::PointMass;
            have_header = true;
        } else if (kind == "step") {
            if (!have_header) fail("step before header");
            if (rec.at("t").get<std::size_t>() != tr.length()) fail("steps out of order");
            auto o = rec.at("observation").get<std::vector<double>>();
            if (o.size() != tr.observation_dim) fail("observation width");
            tr.observations.insert(tr.observations.end(), o.begin(), o.end());
            tr.rewards.push_back(rec.at("reward").get<double>());
            tr.boundary.push_back(rec.at("boundary").get<bool>() ? 1 : 0);
            Action a;
            if (continuous)
                a.force = rec.at("action").get<double>();
            else
                a.index = rec.at("action").get<int>();
            tr.actions.push_back(a);
        } else if (kind == "debug") {
            EnvState s;
            const auto& st = rec.at("state");
            const auto& task = rec.at("task");
            switch (tr.env) {
            case EnvId::GridWorld:
                s.cell = st.at("cell").get<int>();
                tr.task.index = task.at("goal").get<int>();
                break;
            case EnvId::ChainWorld:
                s.chain_state = st.at("state").get<int>();
                tr.task.index = task.at("task").get<int>();
                break;
            case EnvId::PointMass:
                s.position = st.at("position").get<double>();
                s.velocity = st.at("velocity").get<double>();
                tr.task.target_velocity = task.at("target_velocity").get<double>();
                break;
            }
            s.task = tr.task;
            tr.states.push_back(s);
        } else {
            fail("unknown record kind '" + kind + "'");
        }
    }
    if (!have_header) throw ParseError("trajectory: missing header");
    if (tr.length() != steps) throw ParseError("trajectory: expected " + std::to_string(steps) + " steps");
    for (auto& s : tr.states) s.task = tr.task;
    return tr;
}

} // namespace disbelief
