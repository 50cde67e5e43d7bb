#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "disbelief/hssm.hpp"
#include "support/finite_diff.hpp"
#include "support/iwae.hpp"

using namespace disbelief;
namespace oracle = disbelief::testing;

namespace {

Trajectory random_trajectory(EnvId id, MetaEpisodeConfig cfg, std::uint64_t seed) {
    auto env = make_env(id, cfg);
    Rng rng(seed);
    return collect_explorer_trajectories(*env, 1, 1.0, rng).front();
}

HssmConfig config_for(EnvId id, std::size_t ds, std::size_t dz, std::size_t hidden) {
    auto env = make_env(id, MetaEpisodeConfig{1, 1, 0.99});
    return HssmConfig::for_env(*env, ds, dz, hidden);
}

/// Perturbs every parameter so biases and zero-initialised entries also get exercised.
void jitter(Hssm& m, std::uint64_t seed, double scale = 0.3) {
    Rng rng(seed);
    std::normal_distribution<double> n(0.0, scale);
    for (auto* p : m.parameters())
        for (auto& v : p->value.data()) v += n(rng);
}

oracle::GradCheckReport objective_gradient_check(Hssm& m, const std::vector<const Trajectory*>& trajs, double beta,
                                                  std::uint64_t seed) {
    auto batch = make_batch(m.config, trajs);
    Rng rng(seed);
    auto noise = sample_elbo_noise(m.config, batch.batch, batch.steps, rng);
    auto params = m.parameters();
    zero_grads(params);
    {
        Graph g;
        auto terms = build_elbo(g, m, batch, noise, beta);
        g.backward(terms.objective);
    }
    std::vector<Tensor> analytic;
    for (auto* p : params) analytic.push_back(p->grad);
    auto f = [&] {
        Graph g;
        return build_elbo(g, m, batch, noise, beta).objective.value().item();
    };
    return oracle::check_parameters(params, analytic, f, 1e-5, 1e-6);
}

} // namespace

TEST(hssm, beta_objective_gradient_matches_finite_differences) {
    auto tr = random_trajectory(EnvId::GridWorld, {1, 3, 0.99}, 3);
    Rng init(11);
    Hssm m(config_for(EnvId::GridWorld, 2, 2, 4), init);
    jitter(m, 12);
    auto rep = objective_gradient_check(m, {&tr}, 0.1, 13);
    EXPECT_GT(rep.checked, 300u);
    EXPECT_LT(rep.max_relative_error, 1e-4) << rep.worst;
}

TEST(hssm, gradient_check_covers_boundaries_and_other_likelihoods) {
    Rng init(21);
    auto chain = random_trajectory(EnvId::ChainWorld, {2, 2, 0.99}, 4);
    Hssm cm(config_for(EnvId::ChainWorld, 2, 2, 3), init);
    jitter(cm, 22);
    auto rc = objective_gradient_check(cm, {&chain}, 0.5, 23);
    EXPECT_LT(rc.max_relative_error, 1e-4) << rc.worst;

    auto point = random_trajectory(EnvId::PointMass, {2, 2, 0.99}, 5);
    Hssm pm(config_for(EnvId::PointMass, 2, 1, 3), init);
    jitter(pm, 24);
    auto rp = objective_gradient_check(pm, {&point}, 0.01, 25);
    EXPECT_LT(rp.max_relative_error, 1e-4) << rp.worst;
}

TEST(hssm, gradient_check_ssm_variant) {
    auto tr = random_trajectory(EnvId::GridWorld, {1, 3, 0.99}, 6);
    Rng init(31);
    Hssm m(config_for(EnvId::GridWorld, 3, 0, 4), init);
    jitter(m, 32);
    auto rep = objective_gradient_check(m, {&tr}, 1.0, 33);
    EXPECT_LT(rep.max_relative_error, 1e-4) << rep.worst;
}

TEST(hssm, zero_encoder_belief_is_the_prior) {
    Rng init(1);
    Hssm m(config_for(EnvId::GridWorld, 2, 2, 8), init);
    zero_parameters(m.encoder_parameters());
    auto tr = random_trajectory(EnvId::GridWorld, {2, 3, 0.99}, 1);
    for (std::size_t t = 0; t < tr.length(); ++t) {
        Tensor b = encode_prefix(m, tr, t).belief();
        const std::vector<double> expected{0, 0, 1, 1, 0, 0, 1, 1};
        ASSERT_EQ(b.size(), expected.size());
        for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(b[i], expected[i], 1e-12) << t << ":" << i;
    }
}

TEST(hssm, belief_width) {
    Rng init(2);
    Hssm small(config_for(EnvId::GridWorld, 5, 5, 8), init);
    auto tr = random_trajectory(EnvId::GridWorld, {4, 15, 0.99}, 2);
    EXPECT_EQ(encode_prefix(small, tr, 59).belief().size(), 20u);
    Hssm wide(config_for(EnvId::GridWorld, 64, 32, 8), init);
    EXPECT_EQ(wide.config.belief_dim(), 192u);
    EXPECT_EQ(encode_prefix(wide, tr, 10).belief().size(), 192u);
    Hssm ssm(config_for(EnvId::GridWorld, 10, 0, 8), init);
    EXPECT_EQ(encode_prefix(ssm, tr, 10).belief().size(), 20u);
}

TEST(hssm, belief_layout_puts_task_first) {
    GaussianParams qs{Tensor::matrix(1, 2, {1, 2}), Tensor::matrix(1, 2, {3, 4})};
    GaussianParams qz{Tensor::matrix(1, 1, {5}), Tensor::matrix(1, 1, {6})};
    Tensor b = belief_from_posteriors(qs, qz);
    EXPECT_EQ(b.storage(), (std::vector<double>{5, 6, 1, 2, 3, 4}));
}

TEST(hssm, beta_one_equals_elbo_and_objective_is_linear_in_beta) {
    Rng init(3), rng(4);
    Hssm m(config_for(EnvId::GridWorld, 2, 2, 6), init);
    auto tr = random_trajectory(EnvId::GridWorld, {2, 4, 0.99}, 3);
    auto est = compute_elbo(m, tr, rng, 8, 1.0);
    EXPECT_DOUBLE_EQ(compute_beta_objective(est.mean, 1.0), est.mean.elbo);
    const double a = compute_beta_objective(est.mean, 0.1), b = compute_beta_objective(est.mean, 0.01);
    EXPECT_NEAR(a - b, (0.01 - 0.1) * est.mean.kl_z, 1e-12);
    EXPECT_GE(est.mean.kl_z, 0.0);
    EXPECT_GE(est.mean.kl_s, 0.0);
    EXPECT_GE(compute_beta_objective(est.mean, 0.1), est.mean.elbo);
}

TEST(hssm, nonpositive_beta_rejected) {
    ElboBreakdown b;
    EXPECT_THROW(compute_beta_objective(b, 0.0), ValueError);
    EXPECT_THROW(compute_beta_objective(b, -0.5), ValueError);
    EXPECT_THROW(compute_beta_objective(b, std::nan("")), ValueError);
    Rng init(5), rng(6);
    Hssm m(config_for(EnvId::GridWorld, 2, 2, 4), init);
    auto tr = random_trajectory(EnvId::GridWorld, {1, 3, 0.99}, 3);
    EXPECT_THROW(compute_elbo(m, tr, rng, 1, 0.0), ValueError);
}

TEST(hssm, encoder_is_causal) {
    Rng init(7);
    Hssm m(config_for(EnvId::GridWorld, 3, 3, 8), init);
    jitter(m, 8);
    auto tr = random_trajectory(EnvId::GridWorld, {2, 5, 0.99}, 9);
    auto before = encode_prefix(m, tr, 4).belief();
    auto edited = tr;
    for (std::size_t t = 5; t < tr.length(); ++t) {
        edited.rewards[t] += 3.0;
        edited.actions[t].index = (edited.actions[t].index + 1) % 5;
        for (std::size_t k = 0; k < tr.observation_dim; ++k)
            edited.observations[t * tr.observation_dim + k] = 1.0 - edited.observations[t * tr.observation_dim + k];
    }
    EXPECT_EQ(encode_prefix(m, edited, 4).belief(), before);
    // r_4 and a_4 are first seen at step 5.
    edited.rewards[4] += 1.0;
    EXPECT_EQ(encode_prefix(m, edited, 4).belief(), before);
    EXPECT_NE(encode_prefix(m, edited, 5).belief(), encode_prefix(m, tr, 5).belief());
}

TEST(hssm, online_encoder_matches_sequence_encoder) {
    Rng init(9);
    Hssm m(config_for(EnvId::GridWorld, 3, 2, 8), init);
    jitter(m, 10);
    auto tr = random_trajectory(EnvId::GridWorld, {2, 4, 0.99}, 11);
    auto seq = encode_sequence(m, make_batch(m.config, tr));
    OnlineEncoder online(m, 1);
    for (std::size_t t = 0; t < tr.length(); ++t) {
        auto row = encoder_input_row(m.config, tr.observation(t), t ? &tr.actions[t - 1] : nullptr,
                                     t ? tr.rewards[t - 1] : 0.0, tr.boundary[t] != 0);
        Tensor b = online.step(Tensor::matrix(1, row.size(), row));
        EXPECT_EQ(b, seq[t].belief()) << t;
    }
}

TEST(hssm, zero_decoder_gives_unit_gaussian_observation_model) {
    Rng init(12);
    Hssm m(config_for(EnvId::PointMass, 2, 2, 4), init);
    zero_parameters(m.decoder_parameters());
    auto dec = decode_step(m, Tensor::matrix(1, 2, {0.3, -1}), Tensor::zeros(1, 2), Tensor::zeros(1, 1),
                           Tensor::matrix(1, 2, {2, 2}), false);
    ASSERT_TRUE(dec.observation);
    EXPECT_NEAR(dec.observation->mean[0], 0.0, 1e-15);
    EXPECT_NEAR(dec.observation->std[0], 1.0, 1e-12);
    EXPECT_NEAR(dec.reward.std[0], 1.0, 1e-12);
    EXPECT_NEAR(dec.prior.std[1], 1.0, 1e-12);
    auto restart = decode_step(m, Tensor::zeros(1, 2), Tensor::zeros(1, 2), Tensor::zeros(1, 1), Tensor::zeros(1, 2), true);
    EXPECT_EQ(restart.prior.std.storage(), (std::vector<double>{1, 1}));
}

TEST(hssm, mixed_restart_batch_equals_separate_rows) {
    Rng init(13);
    Hssm m(config_for(EnvId::ChainWorld, 2, 2, 4), init);
    jitter(m, 14);
    auto a = random_trajectory(EnvId::ChainWorld, {2, 2, 0.99}, 15);
    auto b = random_trajectory(EnvId::ChainWorld, {1, 4, 0.99}, 16);
    Rng rng(17);
    auto noise = sample_elbo_noise(m.config, 2, 4, rng);
    Graph g;
    auto joint = elbo_rows(build_elbo(g, m, make_batch(m.config, {&a, &b}), noise, 1.0));
    for (std::size_t i = 0; i < 2; ++i) {
        ElboNoise single;
        single.task = Tensor::matrix(1, 2, {noise.task.at(i, 0), noise.task.at(i, 1)});
        for (auto& s : noise.state) single.state.push_back(Tensor::matrix(1, 2, {s.at(i, 0), s.at(i, 1)}));
        Graph gi;
        auto row = elbo_rows(build_elbo(gi, m, make_batch(m.config, i == 0 ? a : b), single, 1.0));
        EXPECT_NEAR(joint[i], row[0], 1e-12) << i;
    }
}

// A one-step trajectory has no transition term, so the ELBO is
// E_q[log p(o | s, z) + log p(r | s, z)] - KL_s - KL_z. The oracle evaluates the decoder by hand
// and estimates the whole bound with sampled log-density ratios instead of
// analytic KL terms.
TEST(hssm, single_step_elbo_matches_brute_force_monte_carlo) {
    HssmConfig c{1, 1, 1, 1, ObservationKind::Gaussian, 1, 1};
    Rng init(0);
    Hssm m(c, init);
    auto set = [](Parameter& p, std::vector<double> v) { p.value = Tensor(p.value.shape(), std::move(v)); };
    set(m.encoder.w_input, {0.5, -0.3, 0.8, 0.1, 0.2, 0.0, 0.3, 0.4, 0.2, -0.1, 0.5, 0.6});
    set(m.state_head.mean.weight, {1.5});
    set(m.state_head.mean.bias, {0.2});
    set(m.state_head.raw_std.weight, {-1.0});
    set(m.task_head.mean.weight, {-0.7});
    set(m.task_head.raw_std.weight, {0.5});
    auto& l0 = m.observation_decoder.layers[0];
    auto& l1 = m.observation_decoder.layers[1];
    set(l0.weight, {0.9, -0.6});
    set(l0.bias, {0.1});
    set(l1.weight, {1.2, 0.4});
    set(l1.bias, {-0.2, 0.3});
    auto& r0 = m.reward_decoder.layers[0];
    auto& r1 = m.reward_decoder.layers[1];
    set(r0.weight, {0.3, 0.5});
    set(r0.bias, {-0.1});
    set(r1.weight, {0.8, -0.6});
    set(r1.bias, {0.05, 0.2});

    Trajectory tr;
    tr.env = EnvId::PointMass;
    tr.config = {1, 1, 0.99};
    tr.observation_dim = 1;
    tr.observations = {0.7};
    tr.actions = {Action{0, 0.0}};
    tr.rewards = {0.25};
    tr.boundary = {0};

    Rng rng(1);
    auto est = compute_elbo(m, tr, rng, 100000, 1.0);

    auto enc = encode_prefix(m, tr, 0);
    const double ms = enc.state.mean[0], ss = enc.state.std[0], mz = enc.task->mean[0], sz = enc.task->std[0];
    std::normal_distribution<double> n(0, 1);
    Rng orng(2);
    const std::size_t N = 1000000;
    double sum = 0, sum2 = 0;
    for (std::size_t i = 0; i < N; ++i) {
        const double s = ms + ss * n(orng), z = mz + sz * n(orng);
        const double hdn = std::tanh(0.9 * s - 0.6 * z + 0.1);
        const double mean = 1.2 * hdn - 0.2;
        const double std = softplus(0.4 * hdn + 0.3 + kStdShift) + kStdFloor;
        const double hr = std::tanh(0.3 * s + 0.5 * z - 0.1);
        const double r_mean = 0.8 * hr + 0.05;
        const double r_std = softplus(-0.6 * hr + 0.2 + kStdShift) + kStdFloor;
        const double v = oracle::normal_log_density(0.7, mean, std) + oracle::normal_log_density(0.25, r_mean, r_std) +
                         oracle::normal_log_density(s, 0, 1) +
                         oracle::normal_log_density(z, 0, 1) - oracle::normal_log_density(s, ms, ss) -
                         oracle::normal_log_density(z, mz, sz);
        sum += v;
        sum2 += v * v;
    }
    const double oracle = sum / N;
    const double oracle_se = std::sqrt((sum2 / N - oracle * oracle) / N);
    const double se = std::hypot(oracle_se, est.standard_error);
    EXPECT_LT(std::abs(est.mean.elbo - oracle), 3 * se) << est.mean.elbo << " vs " << oracle << " se " << se;
}

TEST(hssm, importance_weighted_bound_is_above_elbo) {
    Rng init(40), rng(41);
    Hssm m(config_for(EnvId::ChainWorld, 2, 2, 6), init);
    jitter(m, 42, 0.2);
    auto tr = random_trajectory(EnvId::ChainWorld, {2, 3, 0.99}, 43);
    auto est = compute_elbo(m, tr, rng, 2000);
    auto lw = oracle::log_importance_weights(m, tr, 2000, rng);
    // The mean log weight is an independent estimate of the same ELBO.
    double mean_lw = 0;
    for (double v : lw) mean_lw += v;
    mean_lw /= lw.size();
    EXPECT_NEAR(mean_lw, est.mean.elbo, 5 * est.standard_error + 0.05);
    EXPECT_GE(oracle::log_mean_exp(lw), est.mean.elbo - 3 * est.standard_error);
}

TEST(hssm, training_increases_objective) {
    Rng init(50), rng(51), data(52);
    Hssm m(config_for(EnvId::ChainWorld, 2, 2, 8), init);
    auto env = make_env(EnvId::ChainWorld, {2, 5, 0.99});
    TrajectoryBuffer buffer(64);
    for (auto& tr : collect_explorer_trajectories(*env, 64, 1.0, data)) buffer.add(std::move(tr));
    ModelTrainConfig cfg;
    cfg.steps = 150;
    cfg.batch_size = 16;
    cfg.beta = 0.5;
    auto opt = make_model_optimizer(cfg);
    auto rows = train_model(m, opt, buffer, cfg, rng);
    ASSERT_EQ(rows.size(), 150u);
    double early = 0, late = 0;
    for (int i = 0; i < 20; ++i) {
        early += rows[i].values.beta_objective;
        late += rows[rows.size() - 1 - i].values.beta_objective;
    }
    EXPECT_GT(late, early + 20.0);
    EXPECT_EQ(rows.back().iteration, 149u);
}

TEST(hssm, training_is_deterministic) {
    auto run = [] {
        Rng init(60), rng(61), data(62);
        Hssm m(config_for(EnvId::GridWorld, 2, 2, 6), init);
        auto env = make_env(EnvId::GridWorld, {2, 5, 0.99});
        TrajectoryBuffer buffer(8);
        for (auto& tr : collect_explorer_trajectories(*env, 8, 1.0, data)) buffer.add(std::move(tr));
        ModelTrainConfig cfg;
        cfg.steps = 5;
        cfg.batch_size = 4;
        auto opt = make_model_optimizer(cfg);
        std::ostringstream os;
        for (auto& r : train_model(m, opt, buffer, cfg, rng)) write_metrics_row(os, r);
        return os.str();
    };
    EXPECT_EQ(run(), run());
}

TEST(hssm, buffer_is_fifo) {
    TrajectoryBuffer buffer(2);
    for (int i = 0; i < 3; ++i) {
        Trajectory tr;
        tr.rewards = {double(i)};
        buffer.add(tr);
    }
    EXPECT_EQ(buffer.size(), 2u);
    EXPECT_EQ(buffer[0].rewards[0], 1.0);
    Trajectory longer;
    longer.rewards = {0, 0};
    EXPECT_THROW(buffer.add(longer), ShapeError);
}

TEST(hssm, checkpoint_round_trip_preserves_outputs) {
    Rng init(70), rng(71);
    Hssm m(config_for(EnvId::GridWorld, 3, 2, 5), init);
    jitter(m, 72);
    auto tr = random_trajectory(EnvId::GridWorld, {1, 4, 0.99}, 73);
    auto bytes = encode_checkpoint(to_checkpoint(m));
    Hssm back = hssm_from_checkpoint(decode_checkpoint(bytes));
    EXPECT_EQ(back.config, m.config);
    EXPECT_EQ(encode_prefix(back, tr, 3).belief(), encode_prefix(m, tr, 3).belief());
}

TEST(hssm, nan_is_reported_with_term) {
    Rng init(80), rng(81);
    Hssm m(config_for(EnvId::PointMass, 2, 2, 4), init);
    m.reward_decoder.layers.back().bias.value[0] = 1e300;
    auto tr = random_trajectory(EnvId::PointMass, {1, 3, 0.99}, 82);
    try {
        compute_elbo(m, tr, rng, 1);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("reward reconstruction"), std::string::npos) << e.what();
    }
}

namespace {

Hssm train_on(EnvId id, MetaEpisodeConfig meta, std::size_t ds, std::size_t dz, std::size_t hidden, double floor,
              const std::vector<Trajectory>& trs, std::size_t steps, double beta, std::uint64_t seed) {
    auto env = make_env(id, meta);
    Rng init(seed), rng(seed + 1);
    Hssm m(HssmConfig::for_env(*env, ds, dz, hidden, floor), init);
    TrajectoryBuffer buffer(trs.size());
    for (const auto& tr : trs) buffer.add(tr);
    ModelTrainConfig cfg;
    cfg.steps = steps;
    cfg.batch_size = std::min<std::size_t>(16, trs.size());
    cfg.beta = beta;
    auto opt = make_model_optimizer(cfg);
    train_model(m, opt, buffer, cfg, rng);
    return m;
}

} // namespace

TEST(hssm, overfits_ten_trajectories) {
    const MetaEpisodeConfig meta{2, 5, 0.99};
    auto env = make_env(EnvId::ChainWorld, meta);
    Rng data(70);
    auto trs = collect_explorer_trajectories(*env, 10, 1.0, data);
    // With a reward std floor of 0.45 every density is below 1, so both
    // reconstruction terms are non-positive and "improve by half" is well posed.
    auto recon = [&](Hssm& m) {
        Rng rng(71);
        double obs = 0, rew = 0;
        for (const auto& tr : trs) {
            auto e = compute_elbo(m, tr, rng, 32);
            obs += e.mean.recon_obs;
            rew += e.mean.recon_rew;
        }
        return std::pair{obs, rew};
    };
    Rng init(72);
    Hssm fresh(HssmConfig::for_env(*env, 4, 2, 16, 0.45), init);
    const auto before = recon(fresh);
    auto trained = train_on(EnvId::ChainWorld, meta, 4, 2, 16, 0.45, trs, 2000, 1.0, 72);
    const auto after = recon(trained);
    ASSERT_LT(before.first, 0);
    ASSERT_LT(before.second, 0);
    EXPECT_GE(after.first, 0.5 * before.first) << before.first << " -> " << after.first;
    EXPECT_GE(after.second, 0.5 * before.second) << before.second << " -> " << after.second;
}

TEST(hssm, trained_reward_likelihood_depends_on_task_latent) {
    const MetaEpisodeConfig meta{2, 8, 0.99};
    auto env = make_env(EnvId::GridWorld, meta);
    Rng data(80);
    auto trs = collect_explorer_trajectories(*env, 200, 0.2, data);
    auto m = train_on(EnvId::GridWorld, meta, 3, 3, 16, 0.3, trs, 400, 0.1, 81);
    // Central finite differences of log p(r | s, z) in each z coordinate.
    Rng rng(82);
    std::normal_distribution<double> n(0.0, 1.0);
    double largest = 0;
    for (int trial = 0; trial < 20; ++trial) {
        Tensor s = Tensor::zeros(1, 3), z = Tensor::zeros(1, 3), a = Tensor::zeros(1, 5);
        for (double& v : s.data()) v = n(rng);
        for (double& v : z.data()) v = n(rng);
        a[static_cast<std::size_t>(trial % 5)] = 1.0;
        const double r = trial % 2 ? GridWorld::kGoalReward : GridWorld::kStepReward;
        auto log_p = [&](const Tensor& zz) {
            auto out = decode_step(m, s, s, a, zz, false);
            const double mu = out.reward.mean[0], sd = out.reward.std[0];
            return -0.5 * std::pow((r - mu) / sd, 2) - std::log(sd) - 0.5 * std::log(2 * M_PI);
        };
        for (std::size_t k = 0; k < 3; ++k) {
            Tensor up = z, down = z;
            up[k] += 1e-5;
            down[k] -= 1e-5;
            largest = std::max(largest, std::abs(log_p(up) - log_p(down)) / 2e-5);
        }
    }
    EXPECT_GT(largest, 1e-3);
}

TEST(hssm, task_uncertainty_shrinks_with_evidence_on_chainworld) {
    const MetaEpisodeConfig meta{2, 5, 0.99};
    auto env = make_env(EnvId::ChainWorld, meta);
    Rng data(90);
    auto trs = collect_explorer_trajectories(*env, 400, 1.0, data);
    auto m = train_on(EnvId::ChainWorld, meta, 4, 4, 16, 0.3, trs, 1500, 0.1, 91);
    Rng fresh_data(92);
    auto test = collect_explorer_trajectories(*env, 200, 1.0, fresh_data);
    std::vector<const Trajectory*> ptrs;
    for (const auto& t : test) ptrs.push_back(&t);
    auto enc = encode_sequence(m, make_batch(m.config, ptrs));
    auto mean_sigma_z = [&](std::size_t step) {
        Tensor b = enc[step].belief();
        double s = 0;
        for (std::size_t i = 0; i < b.rows(); ++i)
            for (std::size_t k = 0; k < 4; ++k) s += b.at(i, 4 + k);
        return s / static_cast<double>(b.rows() * 4);
    };
    EXPECT_LT(mean_sigma_z(meta.horizon - 1), mean_sigma_z(0));
}
