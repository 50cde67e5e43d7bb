#pragma once

#include <optional>
#include <vector>

#include "disbelief/core/distributions.hpp"
#include "disbelief/hssm/model.hpp"

namespace disbelief {

// Graph-level building blocks shared by the ELBO, the online encoder and
// evaluation code.

inline Var initial_hidden(Graph& g, const Hssm& m, std::size_t batch) {
    return g.constant(Tensor::zeros(batch, m.config.encoder_hidden));
}

inline Var latent_input(const Hssm& m, const Var& s, const std::optional<Var>& z) {
    if (!m.config.has_task_latent()) return s;
    return ops::concat_cols({s, *z});
}

inline GaussianVar observation_gaussian(Hssm& m, Graph& g, const Var& sz) {
    return split_gaussian(m.observation_decoder(g, sz), m.config.observation_dim);
}

/// Log-likelihood of observations per row, for whichever observation family the model uses.
inline Var observation_log_prob_rows(Hssm& m, Graph& g, const Var& sz, const Tensor& obs,
                                     const std::vector<std::size_t>& labels) {
    switch (m.config.observation_kind) {
    case ObservationKind::Binary: return bernoulli_log_prob_rows(obs, m.observation_decoder(g, sz));
    case ObservationKind::Categorical: return categorical_log_prob_rows(labels, m.observation_decoder(g, sz));
    case ObservationKind::Gaussian: return gaussian_log_prob_rows(g.constant(obs), observation_gaussian(m, g, sz));
    }
    throw ValueError("unknown observation kind");
}

inline GaussianVar reward_gaussian(Hssm& m, Graph& g, const Var& sz) {
    Var out = m.reward_decoder(g, sz);
    return gaussian_from_raw(ops::slice_cols(out, 0, 1), ops::slice_cols(out, 1, 1), m.config.reward_std_floor);
}

inline GaussianVar transition_prior(Hssm& m, Graph& g, const Var& s_prev, const Var& a_prev,
                                    const std::optional<Var>& z) {
    std::vector<Var> parts{s_prev, a_prev};
    if (m.config.has_task_latent()) parts.push_back(*z);
    return split_gaussian(m.transition(g, ops::concat_cols(parts)), m.config.state_dim);
}

/// Belief layout [mu_z, sigma_z, mu_s, sigma_s]; the task half is absent when d_z = 0.
inline Tensor belief_from_posteriors(const GaussianParams& q_s, const std::optional<GaussianParams>& q_z) {
    const std::size_t B = q_s.mean.rows(), ds = q_s.mean.cols(), dz = q_z ? q_z->mean.cols() : 0;
    Tensor out = Tensor::zeros(B, 2 * (ds + dz));
    for (std::size_t i = 0; i < B; ++i) {
        std::size_t c = 0;
        if (q_z) {
            for (std::size_t k = 0; k < dz; ++k) out.at(i, c++) = q_z->mean.at(i, k);
            for (std::size_t k = 0; k < dz; ++k) out.at(i, c++) = q_z->std.at(i, k);
        }
        for (std::size_t k = 0; k < ds; ++k) out.at(i, c++) = q_s.mean.at(i, k);
        for (std::size_t k = 0; k < ds; ++k) out.at(i, c++) = q_s.std.at(i, k);
    }
    return out;
}

struct EncoderStep {
    Tensor hidden;                       ///< h_t, [B, H]
    GaussianParams state;                ///< q(s_t | tau_{0:t})
    std::optional<GaussianParams> task;  ///< q(z | tau_{0:t})
    Tensor belief() const { return belief_from_posteriors(state, task); }
};

inline GaussianParams values_of(const GaussianVar& v) { return {v.mean.value(), v.std.value()}; }

/// Belief vector of a single hidden state h (any batch size).
inline Tensor belief(Hssm& m, const Tensor& hidden) {
    Graph g;
    Var h = g.constant(hidden);
    if (hidden.cols() != m.config.encoder_hidden) throw ShapeError("belief: hidden width mismatch");
    auto qs = values_of(m.state_head(g, h));
    std::optional<GaussianParams> qz;
    if (m.config.has_task_latent()) qz = values_of(m.task_head(g, h));
    return belief_from_posteriors(qs, qz);
}

/// Runs the encoder over every step of a batch and returns h_t with both posteriors.
inline std::vector<EncoderStep> encode_sequence(Hssm& m, const SequenceBatch& batch) {
    std::vector<EncoderStep> out;
    out.reserve(batch.steps);
    Tensor h = Tensor::zeros(batch.batch, m.config.encoder_hidden);
    for (std::size_t t = 0; t < batch.steps; ++t) {
        Graph g;
        Var hv = m.encoder.step(g, g.constant(h), g.constant(batch.encoder_inputs[t]));
        EncoderStep step;
        step.hidden = hv.value();
        step.state = values_of(m.state_head(g, hv));
        if (m.config.has_task_latent()) step.task = values_of(m.task_head(g, hv));
        h = step.hidden;
        out.push_back(std::move(step));
    }
    return out;
}

/// Encoder output after consuming tau_{0:t} (inclusive) of one trajectory.
inline EncoderStep encode_prefix(Hssm& m, const Trajectory& tr, std::size_t t) {
    if (t >= tr.length()) throw ValueError("encode_prefix: step " + std::to_string(t) + " beyond trajectory length");
    Trajectory prefix = tr;
    prefix.observations.resize((t + 1) * tr.observation_dim);
    prefix.actions.resize(t + 1);
    prefix.rewards.resize(t + 1);
    prefix.boundary.resize(t + 1);
    if (!prefix.states.empty()) prefix.states.resize(t + 1);
    auto steps = encode_sequence(m, make_batch(m.config, prefix));
    return steps.back();
}

/// Generative distributions at one step given latent values.
struct DecodeOutput {
    GaussianParams prior;               ///< p(s_t | s_{t-1}, a_{t-1}, z), or N(0, I) on restart
    Tensor observation_logits;          ///< Binary / Categorical observations
    std::optional<GaussianParams> observation; ///< Gaussian observations
    GaussianParams reward;              ///< p(r_t | s_t, z)
};

inline DecodeOutput decode_step(Hssm& m, const Tensor& s, const Tensor& s_prev, const Tensor& a_prev,
                                const std::optional<Tensor>& z, bool restart) {
    const auto& c = m.config;
    if (s.cols() != c.state_dim || s_prev.cols() != c.state_dim) throw ShapeError("decode_step: state width mismatch");
    if (c.has_task_latent() != z.has_value()) throw ShapeError("decode_step: task latent presence mismatch");
    if (z && z->cols() != c.task_dim) throw ShapeError("decode_step: task width mismatch");
    Graph g;
    std::optional<Var> zv;
    if (z) zv = g.constant(*z);
    Var sz = latent_input(m, g.constant(s), zv);
    DecodeOutput out;
    if (restart) {
        out.prior = {Tensor(s.shape(), 0.0), Tensor(s.shape(), 1.0)};
    } else {
        out.prior = values_of(transition_prior(m, g, g.constant(s_prev), g.constant(a_prev), zv));
    }
    if (c.observation_kind == ObservationKind::Gaussian)
        out.observation = values_of(observation_gaussian(m, g, sz));
    else
        out.observation_logits = m.observation_decoder(g, sz).value();
    out.reward = values_of(reward_gaussian(m, g, sz));
    return out;
}

} // namespace disbelief
