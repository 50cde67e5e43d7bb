#pragma once

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "disbelief/agent.hpp"

namespace disbelief {

enum class TrainMode { Agent, Model };

/// Model-only training on scripted explorer data (probing experiments).
struct ExplorerTraining {
    std::size_t trajectories = 5000;
    double epsilon = 0.2;
    std::size_t iterations = 20000;
};

struct ProbeSettings {
    std::size_t trajectories = 1000;
    std::size_t train = 800;
    double epsilon = 0.2;
    double l2 = 1e-4;
};

struct OracleSettings {
    std::size_t fit_trajectories = 1000;
    std::size_t test_trajectories = 1000;
    double epsilon = 1.0;
};

struct ExperimentConfig {
    std::string name = "experiment";
    EnvId env = EnvId::GridWorld;
    GridWorld::Observation grid_observation = GridWorld::Observation::Surround;
    TrainMode mode = TrainMode::Agent;
    std::vector<std::uint64_t> seeds{0};
    std::string output_dir = "runs/experiment";
    MetaEpisodeConfig meta;
    AgentConfig agent;
    ExplorerTraining explorer;
    ProbeSettings probe;
    OracleSettings oracle;

    std::unique_ptr<MetaEnv> make_env() const {
        if (env == EnvId::GridWorld) return std::make_unique<GridWorld>(meta, grid_observation);
        return disbelief::make_env(env, meta);
    }

    /// The agent knobs for one seed; the env discount doubles as the PPO discount.
    AgentConfig agent_for_seed(std::uint64_t seed) const {
        AgentConfig a = agent;
        a.seed = seed;
        a.ppo.gamma = meta.gamma;
        return a;
    }
};

namespace detail {

/// Collects field-level problems so a config reports all of them at once.
class ConfigReader {
public:
    std::vector<std::string> errors;

    void check_keys(const YAML::Node& node, const std::string& section, const std::set<std::string>& allowed) {
        if (!node) return;
        if (!node.IsMap()) {
            errors.push_back(section + ": expected a mapping");
            return;
        }
        for (const auto& kv : node) {
            const auto key = kv.first.as<std::string>();
            if (!allowed.count(key)) errors.push_back(qualify(section, key) + ": unknown key");
        }
    }

    template <class T>
    void read(const YAML::Node& node, const std::string& section, const std::string& key, T& out) {
        if (!node || !node.IsMap() || !node[key]) return;
        const YAML::Node v = node[key];
        try {
            if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
                const auto s = v.as<std::string>();
                if (!s.empty() && s[0] == '-') throw YAML::BadConversion(v.Mark());
                out = v.as<T>();
            } else {
                out = v.as<T>();
            }
        } catch (const YAML::Exception&) {
            errors.push_back(qualify(section, key) + ": cannot read '" + scalar_text(v) + "' as " + type_name<T>());
        }
    }

    void require(bool ok, const std::string& field, const std::string& message) {
        if (!ok) errors.push_back(field + ": " + message);
    }

private:
    static std::string qualify(const std::string& section, const std::string& key) {
        return section.empty() ? key : section + "." + key;
    }
    static std::string scalar_text(const YAML::Node& v) {
        if (v.IsScalar()) return v.Scalar();
        std::ostringstream os;
        os << v;
        return os.str();
    }
    template <class T>
    static const char* type_name() {
        if constexpr (std::is_same_v<T, bool>) return "a boolean";
        else if constexpr (std::is_same_v<T, double>) return "a number";
        else if constexpr (std::is_same_v<T, std::string>) return "a string";
        else return "a non-negative integer";
    }
};

inline std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

/// Shortest decimal text that reads back to the same double.
inline std::string shortest(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

} // namespace detail

/// Parses and validates a YAML experiment config. Unknown keys, malformed
/// values and out-of-range knobs are all reported in one ConfigError.
inline ExperimentConfig parse_experiment_config(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ParseError(std::string("config: YAML syntax error: ") + e.what());
    }
    if (!root || root.IsNull()) throw ConfigError("config: empty document");
    if (!root.IsMap()) throw ConfigError("config: top level must be a mapping");

    ExperimentConfig c;
    detail::ConfigReader r;
    r.check_keys(root, "", {"experiment", "meta_episode", "model", "agent", "ppo", "explorer", "probe", "oracle"});

    const auto ex = root["experiment"];
    r.check_keys(ex, "experiment", {"name", "env", "observation", "variant", "mode", "seeds", "output_dir"});
    r.read(ex, "experiment", "name", c.name);
    std::string env = to_string(c.env), variant = to_string(c.agent.variant), mode = "agent", obs = "surround";
    r.read(ex, "experiment", "env", env);
    r.read(ex, "experiment", "variant", variant);
    r.read(ex, "experiment", "mode", mode);
    r.read(ex, "experiment", "observation", obs);
    r.read(ex, "experiment", "output_dir", c.output_dir);
    try {
        c.env = parse_env_id(detail::lower(env));
    } catch (const Error&) {
        r.require(false, "experiment.env", "unknown environment '" + env + "' (gridworld, chainworld, pointmass)");
    }
    try {
        c.agent.variant = parse_agent_variant(variant);
    } catch (const Error&) {
        r.require(false, "experiment.variant", "unknown variant '" + variant + "' (HSSMA, SSMA, PPO)");
    }
    mode = detail::lower(mode);
    if (mode == "agent") c.mode = TrainMode::Agent;
    else if (mode == "model") c.mode = TrainMode::Model;
    else r.require(false, "experiment.mode", "must be 'agent' or 'model', got '" + mode + "'");
    obs = detail::lower(obs);
    if (obs == "surround") c.grid_observation = GridWorld::Observation::Surround;
    else if (obs == "full_cell") c.grid_observation = GridWorld::Observation::FullCell;
    else r.require(false, "experiment.observation", "must be 'surround' or 'full_cell', got '" + obs + "'");
    if (ex && ex.IsMap() && ex["observation"] && c.env != EnvId::GridWorld)
        r.require(false, "experiment.observation", "only applies to GridWorld");
    if (ex && ex.IsMap() && ex["seeds"]) {
        if (!ex["seeds"].IsSequence() || ex["seeds"].size() == 0) {
            r.require(false, "experiment.seeds", "must be a non-empty list of non-negative integers");
        } else {
            c.seeds.clear();
            std::set<std::uint64_t> seen;
            for (std::size_t i = 0; i < ex["seeds"].size(); ++i) {
                std::uint64_t s = 0;
                YAML::Node item;
                item["v"] = ex["seeds"][i];
                r.read(item, "experiment.seeds[" + std::to_string(i) + "]", "v", s);
                r.require(seen.insert(s).second, "experiment.seeds", "duplicate seed " + std::to_string(s));
                c.seeds.push_back(s);
            }
        }
    }

    const auto me = root["meta_episode"];
    r.check_keys(me, "meta_episode", {"episodes", "horizon", "gamma"});
    r.read(me, "meta_episode", "episodes", c.meta.episodes);
    r.read(me, "meta_episode", "horizon", c.meta.horizon);
    r.read(me, "meta_episode", "gamma", c.meta.gamma);
    r.require(c.meta.episodes >= 1, "meta_episode.episodes", "must be >= 1");
    r.require(c.meta.horizon >= 1, "meta_episode.horizon", "must be >= 1");
    r.require(c.meta.gamma > 0 && c.meta.gamma <= 1, "meta_episode.gamma", "must lie in (0, 1]");

    auto& a = c.agent;
    const auto mo = root["model"];
    r.check_keys(mo, "model", {"state_dim", "task_dim", "encoder_hidden", "beta", "reward_std_floor", "learning_rate",
                               "batch_size", "steps_per_batch", "buffer_capacity"});
    r.read(mo, "model", "state_dim", a.state_dim);
    r.read(mo, "model", "task_dim", a.task_dim);
    r.read(mo, "model", "encoder_hidden", a.encoder_hidden);
    r.read(mo, "model", "beta", a.beta);
    r.read(mo, "model", "reward_std_floor", a.reward_std_floor);
    r.read(mo, "model", "learning_rate", a.model_learning_rate);
    r.read(mo, "model", "batch_size", a.model_batch);
    r.read(mo, "model", "steps_per_batch", a.model_steps);
    r.read(mo, "model", "buffer_capacity", a.buffer_capacity);
    r.require(a.state_dim >= 1, "model.state_dim", "must be >= 1");
    r.require(a.encoder_hidden >= 1, "model.encoder_hidden", "must be >= 1");
    r.require(std::isfinite(a.beta) && a.beta > 0, "model.beta", "must be > 0, got " + format_number(a.beta));
    r.require(a.reward_std_floor >= 1e-3 && a.reward_std_floor < 1, "model.reward_std_floor", "must lie in [1e-3, 1)");
    r.require(a.model_learning_rate > 0, "model.learning_rate", "must be > 0");
    r.require(a.model_batch >= 1, "model.batch_size", "must be >= 1");
    r.require(a.buffer_capacity >= 1, "model.buffer_capacity", "must be >= 1");
    if (a.variant == AgentVariant::HSSMA) r.require(a.task_dim >= 1, "model.task_dim", "HSSMA needs task_dim >= 1");

    const auto ag = root["agent"];
    r.check_keys(ag, "agent", {"total_frames", "meta_episodes_per_batch", "policy_hidden", "eval_interval_frames",
                               "eval_tasks", "fixed_task"});
    r.read(ag, "agent", "total_frames", a.total_frames);
    r.read(ag, "agent", "meta_episodes_per_batch", a.meta_episodes_per_batch);
    r.read(ag, "agent", "policy_hidden", a.policy_hidden);
    r.read(ag, "agent", "eval_interval_frames", a.eval_interval_frames);
    r.read(ag, "agent", "eval_tasks", a.eval_tasks);
    if (ag && ag.IsMap() && ag["fixed_task"]) {
        std::size_t index = 0;
        r.read(ag, "agent", "fixed_task", index);
        TaskSpec t;
        t.env = c.env;
        t.index = static_cast<int>(index);
        a.fixed_task = t;
        if (c.env == EnvId::PointMass) r.require(false, "agent.fixed_task", "PointMass tasks are continuous");
        else if (c.env == EnvId::GridWorld)
            r.require(index < GridWorld::kGoalCount, "agent.fixed_task", "goal index must be < 21");
        else if (c.env == EnvId::ChainWorld) r.require(index < 2, "agent.fixed_task", "task index must be 0 or 1");
    }
    r.require(a.total_frames >= 1, "agent.total_frames", "must be >= 1");
    r.require(a.meta_episodes_per_batch >= 1, "agent.meta_episodes_per_batch", "must be >= 1");
    r.require(a.policy_hidden >= 1, "agent.policy_hidden", "must be >= 1");
    r.require(a.eval_tasks >= 1, "agent.eval_tasks", "must be >= 1");

    auto& p = a.ppo;
    const auto pp = root["ppo"];
    r.check_keys(pp, "ppo", {"clip", "epochs", "minibatch", "value_coef", "entropy_coef", "lambda",
                             "normalize_advantages", "learning_rate", "max_grad_norm"});
    r.read(pp, "ppo", "clip", p.clip);
    r.read(pp, "ppo", "epochs", p.epochs);
    r.read(pp, "ppo", "minibatch", p.minibatch);
    r.read(pp, "ppo", "value_coef", p.value_coef);
    r.read(pp, "ppo", "entropy_coef", p.entropy_coef);
    r.read(pp, "ppo", "lambda", p.lambda);
    r.read(pp, "ppo", "normalize_advantages", p.normalize_advantages);
    r.read(pp, "ppo", "learning_rate", p.adam.learning_rate);
    r.read(pp, "ppo", "max_grad_norm", p.adam.max_grad_norm);
    r.require(p.clip > 0 && p.clip < 1, "ppo.clip", "must lie in (0, 1)");
    r.require(p.epochs >= 1, "ppo.epochs", "must be >= 1");
    r.require(p.minibatch >= 1, "ppo.minibatch", "must be >= 1");
    r.require(p.value_coef >= 0, "ppo.value_coef", "must be >= 0");
    r.require(p.entropy_coef >= 0, "ppo.entropy_coef", "must be >= 0");
    r.require(p.lambda >= 0 && p.lambda <= 1, "ppo.lambda", "must lie in [0, 1]");
    r.require(p.adam.learning_rate > 0, "ppo.learning_rate", "must be > 0");
    r.require(p.adam.max_grad_norm >= 0, "ppo.max_grad_norm", "must be >= 0 (0 disables clipping)");

    const auto xp = root["explorer"];
    r.check_keys(xp, "explorer", {"trajectories", "epsilon", "iterations"});
    r.read(xp, "explorer", "trajectories", c.explorer.trajectories);
    r.read(xp, "explorer", "epsilon", c.explorer.epsilon);
    r.read(xp, "explorer", "iterations", c.explorer.iterations);
    r.require(c.explorer.trajectories >= 1, "explorer.trajectories", "must be >= 1");
    r.require(c.explorer.epsilon >= 0 && c.explorer.epsilon <= 1, "explorer.epsilon", "must lie in [0, 1]");

    const auto pr = root["probe"];
    r.check_keys(pr, "probe", {"trajectories", "train", "epsilon", "l2"});
    r.read(pr, "probe", "trajectories", c.probe.trajectories);
    r.read(pr, "probe", "train", c.probe.train);
    r.read(pr, "probe", "epsilon", c.probe.epsilon);
    r.read(pr, "probe", "l2", c.probe.l2);
    r.require(c.probe.train >= 1 && c.probe.train < c.probe.trajectories, "probe.train",
              "must be >= 1 and leave test trajectories");
    r.require(c.probe.epsilon >= 0 && c.probe.epsilon <= 1, "probe.epsilon", "must lie in [0, 1]");
    r.require(c.probe.l2 >= 0, "probe.l2", "must be >= 0");

    const auto orc = root["oracle"];
    r.check_keys(orc, "oracle", {"fit_trajectories", "test_trajectories", "epsilon"});
    r.read(orc, "oracle", "fit_trajectories", c.oracle.fit_trajectories);
    r.read(orc, "oracle", "test_trajectories", c.oracle.test_trajectories);
    r.read(orc, "oracle", "epsilon", c.oracle.epsilon);
    r.require(c.oracle.fit_trajectories >= 1, "oracle.fit_trajectories", "must be >= 1");
    r.require(c.oracle.test_trajectories >= 1, "oracle.test_trajectories", "must be >= 1");
    r.require(c.oracle.epsilon >= 0 && c.oracle.epsilon <= 1, "oracle.epsilon", "must lie in [0, 1]");

    if (c.mode == TrainMode::Model)
        r.require(a.variant != AgentVariant::ObservationOnly, "experiment.variant", "model mode needs HSSMA or SSMA");

    if (!r.errors.empty()) {
        std::string msg = "invalid config (" + std::to_string(r.errors.size()) + " problem" +
                          (r.errors.size() == 1 ? "" : "s") + "):";
        for (const auto& e : r.errors) msg += "\n  " + e;
        throw ConfigError(msg);
    }
    return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_experiment_config(ss.str());
}

/// Canonical YAML with every knob spelled out; parses back to an equal config.
inline std::string to_yaml(const ExperimentConfig& c) {
    const auto& a = c.agent;
    const auto& p = a.ppo;
    YAML::Emitter e;
    e << YAML::BeginMap;
    e << YAML::Key << "experiment" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "name" << YAML::Value << c.name;
    e << YAML::Key << "env" << YAML::Value << to_string(c.env);
    if (c.env == EnvId::GridWorld)
        e << YAML::Key << "observation" << YAML::Value
          << (c.grid_observation == GridWorld::Observation::Surround ? "surround" : "full_cell");
    e << YAML::Key << "variant" << YAML::Value << to_string(a.variant);
    e << YAML::Key << "mode" << YAML::Value << (c.mode == TrainMode::Agent ? "agent" : "model");
    e << YAML::Key << "seeds" << YAML::Value << YAML::Flow << c.seeds;
    e << YAML::Key << "output_dir" << YAML::Value << c.output_dir;
    e << YAML::EndMap;
    e << YAML::Key << "meta_episode" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "episodes" << YAML::Value << c.meta.episodes;
    e << YAML::Key << "horizon" << YAML::Value << c.meta.horizon;
    e << YAML::Key << "gamma" << YAML::Value << detail::shortest(c.meta.gamma);
    e << YAML::EndMap;
    e << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "state_dim" << YAML::Value << a.state_dim;
    e << YAML::Key << "task_dim" << YAML::Value << a.task_dim;
    e << YAML::Key << "encoder_hidden" << YAML::Value << a.encoder_hidden;
    e << YAML::Key << "beta" << YAML::Value << detail::shortest(a.beta);
    e << YAML::Key << "reward_std_floor" << YAML::Value << detail::shortest(a.reward_std_floor);
    e << YAML::Key << "learning_rate" << YAML::Value << detail::shortest(a.model_learning_rate);
    e << YAML::Key << "batch_size" << YAML::Value << a.model_batch;
    e << YAML::Key << "steps_per_batch" << YAML::Value << a.model_steps;
    e << YAML::Key << "buffer_capacity" << YAML::Value << a.buffer_capacity;
    e << YAML::EndMap;
    e << YAML::Key << "agent" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "total_frames" << YAML::Value << a.total_frames;
    e << YAML::Key << "meta_episodes_per_batch" << YAML::Value << a.meta_episodes_per_batch;
    e << YAML::Key << "policy_hidden" << YAML::Value << a.policy_hidden;
    e << YAML::Key << "eval_interval_frames" << YAML::Value << a.eval_interval_frames;
    e << YAML::Key << "eval_tasks" << YAML::Value << a.eval_tasks;
    if (a.fixed_task) e << YAML::Key << "fixed_task" << YAML::Value << a.fixed_task->index;
    e << YAML::EndMap;
    e << YAML::Key << "ppo" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "clip" << YAML::Value << detail::shortest(p.clip);
    e << YAML::Key << "epochs" << YAML::Value << p.epochs;
    e << YAML::Key << "minibatch" << YAML::Value << p.minibatch;
    e << YAML::Key << "value_coef" << YAML::Value << detail::shortest(p.value_coef);
    e << YAML::Key << "entropy_coef" << YAML::Value << detail::shortest(p.entropy_coef);
    e << YAML::Key << "lambda" << YAML::Value << detail::shortest(p.lambda);
    e << YAML::Key << "normalize_advantages" << YAML::Value << p.normalize_advantages;
    e << YAML::Key << "learning_rate" << YAML::Value << detail::shortest(p.adam.learning_rate);
    e << YAML::Key << "max_grad_norm" << YAML::Value << detail::shortest(p.adam.max_grad_norm);
    e << YAML::EndMap;
    e << YAML::Key << "explorer" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "trajectories" << YAML::Value << c.explorer.trajectories;
    e << YAML::Key << "epsilon" << YAML::Value << detail::shortest(c.explorer.epsilon);
    e << YAML::Key << "iterations" << YAML::Value << c.explorer.iterations;
    e << YAML::EndMap;
    e << YAML::Key << "probe" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "trajectories" << YAML::Value << c.probe.trajectories;
    e << YAML::Key << "train" << YAML::Value << c.probe.train;
    e << YAML::Key << "epsilon" << YAML::Value << detail::shortest(c.probe.epsilon);
    e << YAML::Key << "l2" << YAML::Value << detail::shortest(c.probe.l2);
    e << YAML::EndMap;
    e << YAML::Key << "oracle" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "fit_trajectories" << YAML::Value << c.oracle.fit_trajectories;
    e << YAML::Key << "test_trajectories" << YAML::Value << c.oracle.test_trajectories;
    e << YAML::Key << "epsilon" << YAML::Value << detail::shortest(c.oracle.epsilon);
    e << YAML::EndMap;
    e << YAML::EndMap;
    return std::string(e.c_str()) + "\n";
}

} // namespace disbelief
