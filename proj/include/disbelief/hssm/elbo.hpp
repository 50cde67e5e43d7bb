#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "disbelief/hssm/inference.hpp"

namespace disbelief {

/// Standard-normal noise for every reparameterised sample in one ELBO evaluation.
struct ElboNoise {
    Tensor task;               ///< [B, d_z]
    std::vector<Tensor> state; ///< T x [B, d_s]
};

inline ElboNoise sample_elbo_noise(const HssmConfig& c, std::size_t batch, std::size_t steps, Rng& rng) {
    ElboNoise n;
    if (c.has_task_latent()) n.task = normal_tensor({batch, c.task_dim}, rng);
    for (std::size_t t = 0; t < steps; ++t) n.state.push_back(normal_tensor({batch, c.state_dim}, rng));
    return n;
}

/// Per-trajectory terms, each [B, 1]. The ELBO is obs + rew - kl_s - kl_z.
struct ElboTerms {
    Var recon_obs;
    Var recon_rew;
    Var kl_s;
    Var kl_z;
    Var objective; ///< batch mean of obs + rew - kl_s - beta kl_z
};

/// Scalar summary, averaged over the batch.
struct ElboBreakdown {
    double recon_obs = 0;
    double recon_rew = 0;
    double kl_s = 0;
    double kl_z = 0;
    double elbo = 0;
    double beta_objective = 0;
};

inline void check_beta(double beta) {
    if (!(beta > 0.0) || !std::isfinite(beta))
        throw ValueError("beta must be a finite positive number, got " + std::to_string(beta));
}

inline double compute_beta_objective(const ElboBreakdown& b, double beta) {
    check_beta(beta);
    return b.recon_obs + b.recon_rew - b.kl_s - beta * b.kl_z;
}

namespace detail {

template <class F>
auto labelled(const char* term, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const NumericError& e) {
        throw NumericError(std::string("non-finite value in ") + term + ": " + e.what());
    }
}

inline Var accumulate(const std::optional<Var>& acc, const Var& v) { return acc ? *acc + v : v; }

} // namespace detail

/// Builds the filtering-posterior ELBO of a batch on graph g with fixed noise.
inline ElboTerms build_elbo(Graph& g, Hssm& m, const SequenceBatch& batch, const ElboNoise& noise, double beta) {
    check_beta(beta);
    const auto& c = m.config;
    const std::size_t B = batch.batch, T = batch.steps;
    if (noise.state.size() != T) throw ShapeError("build_elbo: noise covers the wrong number of steps");

    std::vector<Var> hidden;
    hidden.reserve(T);
    std::vector<GaussianVar> q_state;
    q_state.reserve(T);
    detail::labelled("encoder", [&] {
        Var h = initial_hidden(g, m, B);
        for (std::size_t t = 0; t < T; ++t) {
            h = m.encoder.step(g, h, g.constant(batch.encoder_inputs[t]));
            hidden.push_back(h);
            q_state.push_back(m.state_head(g, h));
        }
        return 0;
    });

    std::optional<Var> z;
    Var kl_z;
    if (c.has_task_latent()) {
        GaussianVar qz = detail::labelled("task posterior", [&] { return m.task_head(g, hidden.back()); });
        z = reparam_sample(qz, noise.task);
        kl_z = detail::labelled("task KL", [&] { return standard_normal_kl_rows(qz); });
    } else {
        kl_z = g.constant(Tensor::zeros(B, 1));
    }

    std::optional<Var> obs_acc, rew_acc, kls_acc;
    std::optional<Var> s_prev;
    for (std::size_t t = 0; t < T; ++t) {
        Var s = reparam_sample(q_state[t], noise.state[t]);
        const auto& restart = batch.restarts[t];
        std::size_t n_restart = 0;
        for (auto r : restart) n_restart += r;

        Var kl = detail::labelled("state KL", [&] {
            if (n_restart == B) return standard_normal_kl_rows(q_state[t]);
            GaussianVar prior = transition_prior(m, g, *s_prev, g.constant(batch.incoming_actions[t]), z);
            if (n_restart > 0) {
                Tensor keep(prior.mean.shape(), 1.0), reset(prior.mean.shape(), 0.0);
                for (std::size_t i = 0; i < B; ++i)
                    if (restart[i])
                        for (std::size_t k = 0; k < c.state_dim; ++k) {
                            keep.at(i, k) = 0.0;
                            reset.at(i, k) = 1.0;
                        }
                Var kv = g.constant(keep);
                prior = {prior.mean * kv, prior.std * kv + g.constant(reset)};
            }
            return gaussian_kl_rows(q_state[t], prior);
        });
        kls_acc = detail::accumulate(kls_acc, kl);

        Var sz = latent_input(m, s, z);
        Var lo = detail::labelled("observation reconstruction", [&] {
            return observation_log_prob_rows(m, g, sz, batch.observations[t], batch.observation_labels[t]);
        });
        obs_acc = detail::accumulate(obs_acc, lo);

        Var lr = detail::labelled("reward reconstruction", [&] {
            return gaussian_log_prob_rows(g.constant(batch.rewards[t]), reward_gaussian(m, g, sz));
        });
        rew_acc = detail::accumulate(rew_acc, lr);
        s_prev = s;
    }

    ElboTerms terms;
    terms.recon_obs = *obs_acc;
    terms.recon_rew = *rew_acc;
    terms.kl_s = *kls_acc;
    terms.kl_z = kl_z;
    terms.objective = ops::mean(terms.recon_obs + terms.recon_rew - terms.kl_s - terms.kl_z * beta);
    return terms;
}

/// Per-row ELBO values of built terms.
inline std::vector<double> elbo_rows(const ElboTerms& t) {
    const auto& o = t.recon_obs.value();
    const auto& r = t.recon_rew.value();
    const auto& s = t.kl_s.value();
    const auto& z = t.kl_z.value();
    std::vector<double> out(o.size());
    for (std::size_t i = 0; i < o.size(); ++i) out[i] = o[i] + r[i] - s[i] - z[i];
    return out;
}

inline ElboBreakdown summarize(const ElboTerms& t, double beta) {
    auto mean_of = [](const Var& v) {
        double s = 0;
        for (double x : v.value().data()) s += x;
        return s / static_cast<double>(v.value().size());
    };
    ElboBreakdown b{mean_of(t.recon_obs), mean_of(t.recon_rew), mean_of(t.kl_s), mean_of(t.kl_z), 0, 0};
    b.elbo = b.recon_obs + b.recon_rew - b.kl_s - b.kl_z;
    b.beta_objective = compute_beta_objective(b, beta);
    return b;
}

/// Monte-Carlo ELBO of one trajectory from K posterior samples.
struct ElboEstimate {
    ElboBreakdown mean;
    std::vector<double> samples; ///< single-sample ELBO values
    double standard_error = 0;
};

inline ElboEstimate compute_elbo(Hssm& m, const Trajectory& tr, Rng& rng, std::size_t samples = 1,
                                 double beta = 1.0) {
    if (samples == 0) throw ValueError("compute_elbo: need at least one sample");
    auto batch = make_batch(m.config, tr, samples);
    auto noise = sample_elbo_noise(m.config, samples, batch.steps, rng);
    Graph g;
    auto terms = build_elbo(g, m, batch, noise, beta);
    ElboEstimate est;
    est.mean = summarize(terms, beta);
    est.samples = elbo_rows(terms);
    if (samples > 1) {
        double var = 0;
        for (double v : est.samples) var += (v - est.mean.elbo) * (v - est.mean.elbo);
        var /= static_cast<double>(samples - 1);
        est.standard_error = std::sqrt(var / static_cast<double>(samples));
    }
    return est;
}

} // namespace disbelief
