#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "disbelief/core/checkpoint.hpp"
#include "disbelief/core/nn.hpp"
#include "disbelief/envs/trajectory.hpp"

namespace disbelief {

struct HssmConfig {
    std::size_t state_dim = 5;  ///< d_s: local latent width
    std::size_t task_dim = 5;   ///< d_z: global latent width; 0 gives the SSM ablation
    std::size_t encoder_hidden = 32;
    std::size_t decoder_hidden = 32;
    ObservationKind observation_kind = ObservationKind::Binary;
    std::size_t observation_dim = 8;
    std::size_t action_dim = 5;
    /// Lower bound on the reward std. Rewards with a finite support make a
    /// Gaussian density unbounded as the std shrinks; a floor keeps it proper.
    double reward_std_floor = kStdFloor;

    std::size_t encoder_input_dim() const noexcept { return observation_dim + action_dim + 2; }
    std::size_t belief_dim() const noexcept { return 2 * (state_dim + task_dim); }
    bool has_task_latent() const noexcept { return task_dim > 0; }

    void validate() const {
        if (state_dim == 0) throw ValueError("hssm: state latent width must be >= 1");
        if (encoder_hidden == 0 || decoder_hidden == 0) throw ValueError("hssm: hidden widths must be >= 1");
        if (observation_dim == 0 || action_dim == 0) throw ValueError("hssm: observation/action widths must be >= 1");
        if (!(reward_std_floor >= kStdFloor && reward_std_floor < 1.0))
            throw ValueError("hssm: reward std floor must lie in [1e-3, 1)");
    }

    static HssmConfig for_env(const MetaEnv& env, std::size_t d_s, std::size_t d_z, std::size_t hidden = 32,
                              double reward_std_floor = kStdFloor) {
        return {d_s,
                d_z,
                hidden,
                hidden,
                env.observation_kind(),
                env.observation_dim(),
                env.action_space().feature_dim(),
                reward_std_floor};
    }

    bool operator==(const HssmConfig&) const = default;
};

/// Hierarchical state-space model: generative decoders (theta) and a
/// recurrent amortized encoder with state/task heads (phi).
struct Hssm {
    HssmConfig config;
    // phi
    GruCell encoder;
    GaussianHead state_head;
    GaussianHead task_head;
    // theta
    Mlp observation_decoder; ///< (s, z) -> logits, or mean|raw-std for Gaussian observations
    Mlp reward_decoder;      ///< (s, z) -> mean|raw-std of the reward
    Mlp transition;          ///< (s_prev, a_prev, z) -> mean|raw-std of s

    Hssm() = default;
    Hssm(const HssmConfig& cfg, Rng& rng) : config(cfg) {
        cfg.validate();
        const std::size_t sz = cfg.state_dim + cfg.task_dim;
        encoder = GruCell("encoder.gru", cfg.encoder_input_dim(), cfg.encoder_hidden, rng);
        state_head = GaussianHead("encoder.state", cfg.encoder_hidden, cfg.state_dim, rng);
        if (cfg.has_task_latent()) task_head = GaussianHead("encoder.task", cfg.encoder_hidden, cfg.task_dim, rng);
        // Zero heads: the untrained encoder outputs exactly the prior N(0, I).
        std::vector<Parameter*> heads;
        state_head.collect(heads);
        if (cfg.has_task_latent()) task_head.collect(heads);
        zero_parameters(heads);
        const std::size_t obs_out =
            cfg.observation_kind == ObservationKind::Gaussian ? 2 * cfg.observation_dim : cfg.observation_dim;
        observation_decoder = Mlp("decoder.observation", {sz, cfg.decoder_hidden, obs_out}, Activation::Tanh, rng);
        reward_decoder = Mlp("decoder.reward", {sz, cfg.decoder_hidden, 2}, Activation::Tanh, rng);
        transition = Mlp("decoder.transition", {cfg.state_dim + cfg.action_dim + cfg.task_dim, cfg.decoder_hidden,
                                                2 * cfg.state_dim},
                         Activation::Tanh, rng);
    }

    std::vector<Parameter*> encoder_parameters() {
        std::vector<Parameter*> ps;
        encoder.collect(ps);
        state_head.collect(ps);
        if (config.has_task_latent()) task_head.collect(ps);
        return ps;
    }

    std::vector<Parameter*> decoder_parameters() {
        std::vector<Parameter*> ps;
        observation_decoder.collect(ps);
        reward_decoder.collect(ps);
        transition.collect(ps);
        return ps;
    }

    std::vector<Parameter*> parameters() {
        auto ps = encoder_parameters();
        auto ds = decoder_parameters();
        ps.insert(ps.end(), ds.begin(), ds.end());
        return ps;
    }
};

inline std::string to_string(ObservationKind k) {
    switch (k) {
    case ObservationKind::Binary: return "binary";
    case ObservationKind::Categorical: return "categorical";
    case ObservationKind::Gaussian: return "gaussian";
    }
    return "unknown";
}

// Checkpoints store the architecture in an "hssm.config" entry next to the weights.

inline std::vector<NamedTensor> to_checkpoint(Hssm& model) {
    const auto& c = model.config;
    auto entries = snapshot(model.parameters());
    entries.insert(entries.begin(),
                   NamedTensor{"hssm.config", Tensor::vector({double(c.state_dim), double(c.task_dim),
                                                              double(c.encoder_hidden), double(c.decoder_hidden),
                                                              double(static_cast<int>(c.observation_kind)),
                                                              double(c.observation_dim), double(c.action_dim), c.reward_std_floor})});
    return entries;
}

inline Hssm hssm_from_checkpoint(const std::vector<NamedTensor>& entries) {
    const NamedTensor* cfg = find_entry(entries, "hssm.config");
    if (!cfg || cfg->value.size() != 8) throw ParseError("checkpoint has no valid hssm.config entry");
    const auto& v = cfg->value;
    HssmConfig c{static_cast<std::size_t>(v[0]), static_cast<std::size_t>(v[1]), static_cast<std::size_t>(v[2]),
                 static_cast<std::size_t>(v[3]), static_cast<ObservationKind>(static_cast<int>(v[4])),
                 static_cast<std::size_t>(v[5]), static_cast<std::size_t>(v[6]), v[7]};
    Rng unused(0);
    Hssm model(c, unused);
    restore(model.parameters(), entries);
    return model;
}

/// Time-major view of B equal-length trajectories, ready for batched graphs.
struct SequenceBatch {
    std::size_t batch = 0;
    std::size_t steps = 0;
    ObservationKind observation_kind = ObservationKind::Binary;
    std::vector<Tensor> encoder_inputs;   ///< [B, obs + act + 2]: o_t, a_{t-1}, r_{t-1}, boundary_t
    std::vector<Tensor> observations;     ///< [B, obs]
    std::vector<std::vector<std::size_t>> observation_labels; ///< categorical symbols
    std::vector<Tensor> incoming_actions; ///< [B, act]: a_{t-1}
    std::vector<Tensor> rewards;          ///< [B, 1]: r_t, the reward for a_t
    /// Per row: 1 where the generative chain restarts from N(0, I) (t = 0 or boundary).
    std::vector<std::vector<std::uint8_t>> restarts;
};

inline std::vector<double> action_features(const HssmConfig& cfg, const Action& a) {
    std::vector<double> v(cfg.action_dim, 0.0);
    if (cfg.action_dim == 1) {
        v[0] = a.force;
    } else {
        if (a.index < 0 || static_cast<std::size_t>(a.index) >= cfg.action_dim)
            throw ValueError("action index outside the model's action width");
        v[static_cast<std::size_t>(a.index)] = 1.0;
    }
    return v;
}

inline SequenceBatch make_batch(const HssmConfig& cfg, const std::vector<const Trajectory*>& trajs) {
    if (trajs.empty()) throw ValueError("make_batch: no trajectories");
    SequenceBatch b;
    b.batch = trajs.size();
    b.steps = trajs.front()->length();
    b.observation_kind = cfg.observation_kind;
    const std::size_t B = b.batch, od = cfg.observation_dim, ad = cfg.action_dim, in = cfg.encoder_input_dim();
    for (const auto* tr : trajs) {
        if (tr->length() != b.steps) throw ShapeError("make_batch: trajectories differ in length");
        if (tr->observation_dim != od) throw ShapeError("make_batch: observation width does not match the model");
        if (tr->length() == 0) throw ValueError("make_batch: empty trajectory");
    }
    for (std::size_t t = 0; t < b.steps; ++t) {
        Tensor enc = Tensor::zeros(B, in), obs = Tensor::zeros(B, od), act = Tensor::zeros(B, ad), rew = Tensor::zeros(B, 1);
        std::vector<std::size_t> labels(B, 0);
        std::vector<std::uint8_t> restart(B, 0);
        for (std::size_t i = 0; i < B; ++i) {
            const Trajectory& tr = *trajs[i];
            auto o = tr.observation(t);
            for (std::size_t k = 0; k < od; ++k) {
                obs.at(i, k) = o[k];
                enc.at(i, k) = o[k];
            }
            if (cfg.observation_kind == ObservationKind::Categorical) {
                std::size_t sym = od;
                for (std::size_t k = 0; k < od; ++k)
                    if (o[k] == 1.0) sym = k;
                if (sym == od) throw ValueError("make_batch: categorical observation is not one-hot");
                labels[i] = sym;
            }
            const bool boundary = tr.boundary[t] != 0;
            restart[i] = (t == 0 || boundary) ? 1 : 0;
            if (t > 0) {
                const auto af = action_features(cfg, tr.actions[t - 1]);
                for (std::size_t k = 0; k < ad; ++k) {
                    act.at(i, k) = af[k];
                    enc.at(i, od + k) = af[k];
                }
                enc.at(i, od + ad) = tr.rewards[t - 1];
            }
            enc.at(i, od + ad + 1) = boundary ? 1.0 : 0.0;
            rew[i] = tr.rewards[t];
        }
        b.encoder_inputs.push_back(std::move(enc));
        b.observations.push_back(std::move(obs));
        b.observation_labels.push_back(std::move(labels));
        b.incoming_actions.push_back(std::move(act));
        b.rewards.push_back(std::move(rew));
        b.restarts.push_back(std::move(restart));
    }
    return b;
}

inline SequenceBatch make_batch(const HssmConfig& cfg, const Trajectory& tr, std::size_t copies = 1) {
    std::vector<const Trajectory*> ptrs(copies, &tr);
    return make_batch(cfg, ptrs);
}

/// Encoder row for one online step, same layout as SequenceBatch::encoder_inputs.
inline std::vector<double> encoder_input_row(const HssmConfig& cfg, std::span<const double> obs, const Action* prev_action,
                                             double prev_reward, bool boundary) {
    std::vector<double> row(cfg.encoder_input_dim(), 0.0);
    std::copy(obs.begin(), obs.end(), row.begin());
    if (prev_action) {
        const auto af = action_features(cfg, *prev_action);
        std::copy(af.begin(), af.end(), row.begin() + static_cast<std::ptrdiff_t>(cfg.observation_dim));
        row[cfg.observation_dim + cfg.action_dim] = prev_reward;
    }
    row[cfg.observation_dim + cfg.action_dim + 1] = boundary ? 1.0 : 0.0;
    return row;
}

} // namespace disbelief
