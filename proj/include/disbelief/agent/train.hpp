#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "disbelief/agent/ppo.hpp"
#include "disbelief/evaluation/curves.hpp"
#include "disbelief/evaluation/export.hpp"
#include "disbelief/hssm.hpp"

namespace disbelief {

/// HSSMA conditions on the hierarchical model's belief, SSMA on a flat
/// state-space model (d_z = 0). ObservationOnly drops the model entirely and
/// serves as a plain PPO baseline.
enum class AgentVariant { HSSMA, SSMA, ObservationOnly };

inline const char* to_string(AgentVariant v) {
    switch (v) {
    case AgentVariant::HSSMA: return "HSSMA";
    case AgentVariant::SSMA: return "SSMA";
    case AgentVariant::ObservationOnly: return "PPO";
    }
    return "unknown";
}

inline AgentVariant parse_agent_variant(const std::string& s) {
    if (s == "HSSMA" || s == "hssma") return AgentVariant::HSSMA;
    if (s == "SSMA" || s == "ssma") return AgentVariant::SSMA;
    if (s == "PPO" || s == "ppo") return AgentVariant::ObservationOnly;
    throw ValueError("unknown agent variant '" + s + "'");
}

struct AgentConfig {
    AgentVariant variant = AgentVariant::HSSMA;
    std::size_t state_dim = 5;
    std::size_t task_dim = 5;
    std::size_t encoder_hidden = 32;
    double reward_std_floor = kStdFloor;
    double beta = 0.1;
    std::size_t policy_hidden = 64;
    std::size_t total_frames = 100000;
    std::size_t meta_episodes_per_batch = 32;
    std::size_t model_steps = 50;
    std::size_t model_batch = 16;
    std::size_t buffer_capacity = 512;
    double model_learning_rate = 1e-3;
    PpoConfig ppo;
    std::size_t eval_interval_frames = 50000;
    std::size_t eval_tasks = 20;
    std::optional<TaskSpec> fixed_task; ///< every meta-episode uses this task when set
    std::uint64_t seed = 0;

    /// SSMA keeps the total latent width of the matching HSSMA.
    HssmConfig model_config(const MetaEnv& env) const {
        if (variant == AgentVariant::SSMA)
            return HssmConfig::for_env(env, state_dim + task_dim, 0, encoder_hidden, reward_std_floor);
        return HssmConfig::for_env(env, state_dim, task_dim, encoder_hidden, reward_std_floor);
    }
    bool uses_model() const noexcept { return variant != AgentVariant::ObservationOnly; }
};

/// Frozen-encoder belief tracker plus policy for B lockstep environments.
struct BeliefAgent {
    Hssm* model = nullptr;
    PolicyParams* policy = nullptr;

    std::size_t belief_dim() const { return model ? model->config.belief_dim() : 0; }

    static std::size_t policy_input_dim(const std::optional<HssmConfig>& model, const MetaEnv& env) {
        return (model ? model->belief_dim() : 0) + env.observation_dim();
    }
};

struct RolloutBatch {
    std::vector<Trajectory> trajectories;
    RolloutBuffer buffer;
};

/// Runs one meta-episode per entry of `rngs` in lockstep. Each environment
/// draws its task, dynamics noise and actions from its own generator, so the
/// result does not depend on how many run side by side.
inline RolloutBatch collect_rollouts(const MetaEnv& env, BeliefAgent agent, std::vector<Rng>& rngs, ActMode mode,
                                     const std::optional<TaskSpec>& fixed_task = std::nullopt,
                                     const std::vector<TaskSpec>* tasks = nullptr) {
    const std::size_t B = rngs.size();
    const auto& cfg = env.config();
    const std::size_t T = cfg.length(), od = env.observation_dim(), bd = agent.belief_dim(), in = bd + od;
    if (agent.policy->config.input_dim != in) throw ShapeError("collect_rollouts: policy input width mismatch");
    std::vector<Trajectory> trs(B);
    std::vector<EnvState> states(B);
    std::vector<std::vector<double>> obs(B);
    std::vector<RolloutBuffer> per_env(B, RolloutBuffer(in));
    for (std::size_t i = 0; i < B; ++i) {
        TaskSpec task = tasks ? (*tasks)[i] : fixed_task ? *fixed_task : env.sample_task(rngs[i]);
        auto [s, o] = env.reset(task, rngs[i]);
        states[i] = s;
        obs[i] = o;
        auto& tr = trs[i];
        tr.env = env.id();
        tr.task = task;
        tr.config = cfg;
        tr.observation_dim = od;
    }
    std::optional<OnlineEncoder> encoder;
    if (agent.model) encoder.emplace(*agent.model, B);
    std::vector<std::uint8_t> boundary(B, 0);
    for (std::size_t t = 0; t < T; ++t) {
        Tensor beliefs;
        if (encoder) {
            Tensor enc_in = Tensor::zeros(B, agent.model->config.encoder_input_dim());
            for (std::size_t i = 0; i < B; ++i) {
                const Action* prev = t ? &trs[i].actions.back() : nullptr;
                auto row = encoder_input_row(agent.model->config, obs[i], prev, t ? trs[i].rewards.back() : 0.0,
                                             boundary[i] != 0);
                std::copy(row.begin(), row.end(), enc_in.row(i).begin());
            }
            beliefs = encoder->step(enc_in);
        }
        Tensor x = Tensor::zeros(B, in);
        for (std::size_t i = 0; i < B; ++i) {
            auto r = x.row(i);
            for (std::size_t k = 0; k < bd; ++k) r[k] = beliefs.at(i, k);
            std::copy(obs[i].begin(), obs[i].end(), r.begin() + static_cast<std::ptrdiff_t>(bd));
        }
        // Actions are drawn per environment from that environment's generator.
        std::vector<ActResult> acts(B);
        for (std::size_t i = 0; i < B; ++i) {
            Tensor row = Tensor::matrix(1, in, std::vector<double>(x.row(i).begin(), x.row(i).end()));
            acts[i] = act_batch(*agent.policy, row, rngs[i], mode).front();
        }
        for (std::size_t i = 0; i < B; ++i) {
            auto& tr = trs[i];
            tr.observations.insert(tr.observations.end(), obs[i].begin(), obs[i].end());
            tr.boundary.push_back(boundary[i]);
            tr.states.push_back(states[i]);
            auto res = env.step(states[i], acts[i].action, rngs[i]);
            tr.actions.push_back(acts[i].action);
            tr.rewards.push_back(res.reward);
            per_env[i].add(x.row(i), acts[i], res.reward, t + 1 == T);
            obs[i] = res.observation;
            boundary[i] = res.boundary_reset ? 1 : 0;
        }
    }
    RolloutBatch out{std::move(trs), RolloutBuffer(in)};
    for (auto& b : per_env) out.buffer.append(b);
    return out;
}

/// Greedy evaluation factory for reward_curve: one fresh belief state per meta-episode.
inline PolicyFactory greedy_agent(const MetaEnv& env, Hssm* model, PolicyParams& policy) {
    return [&env, model, &policy] {
        struct State {
            std::optional<OnlineEncoder> encoder;
        };
        auto st = std::make_shared<State>();
        if (model) st->encoder.emplace(*model, 1);
        const std::size_t od = env.observation_dim();
        return PolicyFn([st, model, &policy, od](const StepContext& c, Rng& rng) {
            std::vector<double> belief;
            if (model) {
                auto row = encoder_input_row(model->config, c.observation, c.previous_action, c.previous_reward,
                                             c.boundary_reset);
                Tensor b = st->encoder->step(Tensor::matrix(1, row.size(), row));
                belief.assign(b.data().begin(), b.data().end());
            }
            (void)od;
            return act(policy, belief, c.observation, rng, ActMode::Greedy).action;
        });
    };
}

struct EvaluationPoint {
    std::size_t frames = 0;
    RewardCurve curve;
};

struct AgentObserver {
    std::function<void(const std::vector<MetricsRow>&)> on_model_metrics;
    std::function<void(const EvaluationPoint&)> on_evaluation;
    std::function<void(std::size_t frames, const PpoStats&)> on_ppo;
    std::function<void(std::size_t frames, const RolloutBatch&)> on_rollout;
};

struct AgentRun {
    std::optional<Hssm> model;
    PolicyParams policy;
    std::vector<EvaluationPoint> evaluations;
    std::vector<LearningCurveRow> learning_curve;
    std::size_t frames = 0;
    std::size_t iterations = 0;
};

inline std::vector<TaskSpec> evaluation_tasks(const MetaEnv& env, std::size_t n, std::uint64_t seed) {
    Rng rng = make_rng(seed, Stream::Evaluation, 0);
    std::vector<TaskSpec> tasks;
    for (std::size_t i = 0; i < n; ++i) tasks.push_back(env.sample_task(rng));
    return tasks;
}

inline EvaluationPoint evaluate_agent(const MetaEnv& env, AgentRun& run, const std::vector<TaskSpec>& tasks,
                                      std::uint64_t seed, std::size_t index) {
    Rng rng = make_rng(seed, Stream::Evaluation, 1 + index);
    Hssm* model = run.model ? &*run.model : nullptr;
    return {run.frames, reward_curve(env, tasks, greedy_agent(env, model, run.policy), rng)};
}

/// Alternates rollout collection with the frozen encoder, one PPO phase and
/// `model_steps` model updates per batch, evaluating every eval_interval_frames.
inline AgentRun train_agent(const MetaEnv& env, const AgentConfig& cfg, const AgentObserver& observer = {}) {
    check_beta(cfg.beta);
    if (cfg.meta_episodes_per_batch == 0) throw ValueError("agent: meta_episodes_per_batch must be >= 1");
    AgentRun run;
    std::optional<HssmConfig> mcfg;
    if (cfg.uses_model()) {
        mcfg = cfg.model_config(env);
        Rng init = make_rng(cfg.seed, Stream::ModelInit, 0);
        run.model.emplace(*mcfg, init);
    }
    {
        Rng init = make_rng(cfg.seed, Stream::PolicyInit, 0);
        PolicyConfig pc{BeliefAgent::policy_input_dim(mcfg, env), env.action_space(), cfg.policy_hidden, 0.01};
        run.policy = PolicyParams(pc, init);
    }
    AdamState policy_opt(cfg.ppo.adam);
    ModelTrainConfig mtc;
    mtc.steps = cfg.model_steps;
    mtc.batch_size = cfg.model_batch;
    mtc.beta = cfg.beta;
    mtc.adam.learning_rate = cfg.model_learning_rate;
    AdamState model_opt(mtc.adam);
    TrajectoryBuffer buffer(cfg.buffer_capacity);
    Rng policy_rng = make_rng(cfg.seed, Stream::PolicyTrain, 0);
    Rng model_rng = make_rng(cfg.seed, Stream::ModelTrain, 0);
    const auto tasks = cfg.fixed_task ? std::vector<TaskSpec>(std::max<std::size_t>(cfg.eval_tasks, 1), *cfg.fixed_task)
                                      : evaluation_tasks(env, cfg.eval_tasks, cfg.seed);
    std::size_t next_eval = 0, eval_index = 0, episode_counter = 0, model_iteration = 0;

    auto evaluate = [&] {
        auto point = evaluate_agent(env, run, tasks, cfg.seed, eval_index++);
        for (std::size_t k = 0; k < point.curve.episodes; ++k)
            run.learning_curve.push_back({static_cast<double>(run.frames), cfg.seed, to_string(cfg.variant),
                                          cfg.uses_model() ? cfg.beta : 0.0, k + 1, point.curve.episode_return_mean[k],
                                          point.curve.episode_return_std[k]});
        if (observer.on_evaluation) observer.on_evaluation(point);
        run.evaluations.push_back(std::move(point));
    };

    while (run.frames < cfg.total_frames) {
        if (cfg.eval_interval_frames > 0 && run.frames >= next_eval) {
            evaluate();
            next_eval += cfg.eval_interval_frames;
        }
        std::vector<Rng> rngs;
        for (std::size_t i = 0; i < cfg.meta_episodes_per_batch; ++i)
            rngs.push_back(make_rng(cfg.seed, Stream::Rollout, episode_counter++));
        BeliefAgent agent{run.model ? &*run.model : nullptr, &run.policy};
        auto batch = collect_rollouts(env, agent, rngs, ActMode::Sample, cfg.fixed_task);
        run.frames += batch.buffer.size();
        if (observer.on_rollout) observer.on_rollout(run.frames, batch);

        gae(batch.buffer, cfg.ppo.gamma, cfg.ppo.lambda);
        auto stats = ppo_update(run.policy, policy_opt, batch.buffer, cfg.ppo, policy_rng);
        if (observer.on_ppo) observer.on_ppo(run.frames, stats);

        if (run.model && cfg.model_steps > 0) {
            for (auto& tr : batch.trajectories) buffer.add(std::move(tr));
            auto rows = train_model(*run.model, model_opt, buffer, mtc, model_rng, model_iteration);
            model_iteration += rows.size();
            if (observer.on_model_metrics) observer.on_model_metrics(rows);
        }
        ++run.iterations;
    }
    evaluate();
    return run;
}

} // namespace disbelief
