#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "disbelief/belief_oracle.hpp"
#include "support/path_enumeration.hpp"

using namespace disbelief;
namespace oracle = disbelief::testing;

namespace {

std::vector<double> random_rows(std::size_t rows, std::size_t width, Rng& rng, bool sparse = false) {
    std::vector<double> out;
    std::exponential_distribution<double> e(1.0);
    for (std::size_t r = 0; r < rows; ++r) {
        std::vector<double> row(width);
        double sum = 0;
        for (auto& v : row) {
            v = (sparse && uniform01(rng) < 0.3) ? 0.0 : e(rng) + 1e-3;
            sum += v;
        }
        if (sum == 0) {
            row[0] = 1;
            sum = 1;
        }
        for (auto& v : row) out.push_back(v / sum);
        // Exact normalisation so validate() accepts the row.
        double s2 = 0;
        for (std::size_t k = out.size() - width; k < out.size() - 1; ++k) s2 += out[k];
        out.back() = 1.0 - s2;
        if (out.back() < 0) out.back() = 0;
    }
    return out;
}

DiscreteMetaPOMDPSpec random_spec(std::size_t S, std::size_t Z, std::size_t A, std::size_t O, std::size_t Rn, Rng& rng) {
    DiscreteMetaPOMDPSpec s;
    s.states = S;
    s.tasks = Z;
    s.actions = A;
    s.observations = O;
    for (std::size_t r = 0; r < Rn; ++r) s.reward_support.push_back(static_cast<double>(r));
    s.transition = random_rows(Z * S * A, S, rng, true);
    s.emission = random_rows(Z * S, O, rng);
    s.reward = random_rows(Z * S, Rn, rng);
    s.initial = random_rows(1, S, rng, true);
    s.task_prior = random_rows(1, Z, rng);
    s.validate();
    return s;
}

std::size_t draw(const std::vector<double>& p, Rng& rng) {
    double u = uniform01(rng), c = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        c += p[i];
        if (u < c) return i;
    }
    return p.size() - 1;
}

/// Evidence sampled from the model tables themselves, with a reset every `horizon` steps.
std::vector<FilterEvidence> sample_evidence(const DiscreteMetaPOMDPSpec& spec, std::size_t steps, std::size_t horizon,
                                            Rng& rng, std::size_t* task_out = nullptr) {
    const std::size_t z = draw(spec.task_prior, rng);
    if (task_out) *task_out = z;
    auto row = [&](auto f, std::size_t n) {
        std::vector<double> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = f(i);
        return p;
    };
    std::size_t s = draw(spec.initial, rng);
    std::vector<FilterEvidence> ev;
    ev.push_back({std::nullopt, std::nullopt, draw(row([&](std::size_t o) { return spec.F(z, s, o); }, spec.observations), rng), false});
    for (std::size_t t = 1; t < steps; ++t) {
        FilterEvidence e;
        e.action = uniform_index(rng, spec.actions);
        s = draw(row([&](std::size_t n) { return spec.T(z, s, *e.action, n); }, spec.states), rng);
        e.reward = draw(row([&](std::size_t r) { return spec.R(z, s, r); }, spec.rewards()), rng);
        e.boundary = t % horizon == 0;
        if (e.boundary) s = draw(spec.initial, rng);
        e.observation = draw(row([&](std::size_t o) { return spec.F(z, s, o); }, spec.observations), rng);
        ev.push_back(e);
    }
    return ev;
}

double max_abs_diff(const ExactBelief& a, const ExactBelief& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.p.size(); ++i) m = std::max(m, std::abs(a.p[i] - b.p[i]));
    return m;
}

std::vector<ExactBelief> run_filter(const DiscreteMetaPOMDPSpec& spec, const std::vector<FilterEvidence>& ev) {
    std::vector<ExactBelief> out{prior_belief(spec)};
    for (const auto& e : ev) out.push_back(filter_step(spec, out.back(), e));
    return out;
}

} // namespace

TEST(belief_oracle, chainworld_spec_is_valid) {
    auto spec = chainworld_spec();
    EXPECT_NO_THROW(spec.validate());
    EXPECT_EQ(spec.states, 4u);
    EXPECT_EQ(spec.tasks, 2u);
}

TEST(belief_oracle, prior_before_evidence) {
    auto spec = chainworld_spec();
    auto b = prior_belief(spec);
    EXPECT_DOUBLE_EQ(b.at(1, 0), 0.5);
    EXPECT_DOUBLE_EQ(b.at(1, 1), 0.5);
    EXPECT_DOUBLE_EQ(b.at(0, 0), 0.0);
}

TEST(belief_oracle, uninformative_evidence_leaves_prediction) {
    Rng rng(1);
    auto spec = random_spec(3, 2, 2, 3, 2, rng);
    spec.emission.assign(spec.emission.size(), 1.0 / 3);
    spec.reward.assign(spec.reward.size(), 0.5);
    auto b0 = filter_step(spec, prior_belief(spec), {std::nullopt, std::nullopt, 2, false});
    EXPECT_LT(max_abs_diff(b0, prior_belief(spec)), 1e-15);
    auto b1 = filter_step(spec, b0, {1, 0, 0, false});
    for (std::size_t z = 0; z < 2; ++z)
        for (std::size_t n = 0; n < 3; ++n) {
            double pred = 0;
            for (std::size_t s = 0; s < 3; ++s) pred += b0.at(s, z) * spec.T(z, s, 1, n);
            EXPECT_NEAR(b1.at(n, z), pred, 1e-15);
        }
}

TEST(belief_oracle, perfect_observation_gives_point_mass) {
    Rng rng(2);
    auto spec = random_spec(4, 2, 2, 4, 2, rng);
    spec.emission.assign(spec.emission.size(), 0.0);
    for (std::size_t z = 0; z < 2; ++z)
        for (std::size_t s = 0; s < 4; ++s) spec.emission[(z * 4 + s) * 4 + s] = 1.0;
    spec.initial = {0.25, 0.25, 0.25, 0.25};
    auto b = filter_step(spec, prior_belief(spec), {std::nullopt, std::nullopt, 2, false});
    auto m = b.state_marginal();
    EXPECT_DOUBLE_EQ(m[2], 1.0);
}

TEST(belief_oracle, chainworld_three_steps_match_path_enumeration) {
    auto spec = chainworld_spec();
    std::vector<FilterEvidence> ev{{std::nullopt, std::nullopt, 1, false}, {0, 1, 0, false}, {0, 1, 0, false}};
    auto filtered = run_filter(spec, ev);
    for (std::size_t t = 1; t <= ev.size(); ++t) {
        auto expected = oracle::enumerate_posterior(spec, {ev.begin(), ev.begin() + static_cast<std::ptrdiff_t>(t)});
        EXPECT_LT(max_abs_diff(filtered[t], expected), 1e-10) << t;
    }
    // Two rewards at the left end favour task 0.
    EXPECT_GT(filtered[3].task_marginal()[0], 0.9);
}

TEST(belief_oracle, random_instances_match_path_enumeration) {
    Rng rng(3);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t S = 2 + uniform_index(rng, 5), Z = 1 + uniform_index(rng, 3);
        auto spec = random_spec(S, Z, 1 + uniform_index(rng, 3), 2 + uniform_index(rng, 3), 1 + uniform_index(rng, 3), rng);
        const std::size_t steps = 1 + uniform_index(rng, 5), horizon = 1 + uniform_index(rng, 3);
        auto ev = sample_evidence(spec, steps, horizon, rng);
        auto filtered = run_filter(spec, ev);
        auto expected = oracle::enumerate_posterior(spec, ev);
        EXPECT_LT(max_abs_diff(filtered.back(), expected), 1e-10) << "trial " << trial;
        for (const auto& b : filtered) {
            double sum = 0;
            for (double v : b.p) {
                EXPECT_GE(v, 0.0);
                sum += v;
            }
            EXPECT_NEAR(sum, 1.0, 1e-10);
        }
    }
}

TEST(belief_oracle, reward_possible_only_under_one_task_identifies_it) {
    // Task 0 pays 1 with probability 1/2 everywhere, task 1 never pays.
    DiscreteMetaPOMDPSpec spec;
    spec.states = 2;
    spec.tasks = 2;
    spec.actions = 1;
    spec.observations = 1;
    spec.reward_support = {0.0, 1.0};
    spec.transition = {0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5};
    spec.emission = {1, 1, 1, 1};
    spec.reward = {0.5, 0.5, 0.5, 0.5, 1, 0, 1, 0};
    spec.initial = {1, 0};
    spec.task_prior = {0.5, 0.5};
    auto b = filter_step(spec, prior_belief(spec), {std::nullopt, std::nullopt, 0, false});
    // A zero reward: Bayes gives 0.5*0.5 / (0.5*0.5 + 0.5*1) = 1/3 for task 0.
    b = filter_step(spec, b, {0, 0, 0, false});
    EXPECT_NEAR(b.task_marginal()[0], 1.0 / 3.0, 1e-15);
    b = filter_step(spec, b, {0, 1, 0, false});
    EXPECT_DOUBLE_EQ(b.task_marginal()[0], 1.0);
    EXPECT_DOUBLE_EQ(b.task_marginal()[1], 0.0);
}

TEST(belief_oracle, boundary_resets_state_and_keeps_task) {
    Rng rng(4);
    auto spec = random_spec(4, 3, 2, 3, 2, rng);
    spec.emission.assign(spec.emission.size(), 1.0 / 3);
    auto b = filter_step(spec, prior_belief(spec), {std::nullopt, std::nullopt, 0, false});
    b = filter_step(spec, b, {0, 1, 1, false});
    auto no_reset = filter_step(spec, b, {1, 0, 2, false});
    auto reset = filter_step(spec, b, {1, 0, 2, true});
    auto m = reset.state_marginal();
    for (std::size_t s = 0; s < 4; ++s) EXPECT_NEAR(m[s], spec.initial[s], 1e-14);
    auto tk = reset.task_marginal(), tn = no_reset.task_marginal();
    for (std::size_t z = 0; z < 3; ++z) EXPECT_NEAR(tk[z], tn[z], 1e-14);
    for (std::size_t s = 0; s < 4; ++s)
        for (std::size_t z = 0; z < 3; ++z) EXPECT_NEAR(reset.at(s, z), spec.initial[s] * tk[z], 1e-14);
}

TEST(belief_oracle, uninformative_channels_keep_task_prior) {
    Rng rng(5);
    auto spec = random_spec(3, 3, 2, 2, 2, rng);
    spec.emission.assign(spec.emission.size(), 0.5);
    spec.reward.assign(spec.reward.size(), 0.5);
    // Task-independent dynamics so states carry no task information either.
    for (std::size_t z = 1; z < 3; ++z)
        for (std::size_t k = 0; k < 3 * 2 * 3; ++k) spec.transition[z * 18 + k] = spec.transition[k];
    auto ev = sample_evidence(spec, 8, 3, rng);
    for (const auto& b : run_filter(spec, ev)) {
        auto m = b.task_marginal();
        for (std::size_t z = 0; z < 3; ++z) EXPECT_NEAR(m[z], spec.task_prior[z], 1e-12);
    }
}

TEST(belief_oracle, unfiltered_future_does_not_change_past) {
    Rng rng(6);
    auto spec = random_spec(3, 2, 2, 3, 2, rng);
    auto ev = sample_evidence(spec, 6, 3, rng);
    auto a = run_filter(spec, ev);
    std::swap(ev[4], ev[5]);
    auto b = run_filter(spec, ev);
    for (std::size_t t = 0; t <= 4; ++t) EXPECT_EQ(a[t].p, b[t].p);
}

TEST(belief_oracle, task_marginal_is_a_martingale) {
    auto spec = chainworld_spec();
    Rng rng(7);
    const std::size_t N = 20000, T = 8;
    std::vector<double> mean(T + 1, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        auto ev = sample_evidence(spec, T, 4, rng);
        auto f = run_filter(spec, ev);
        for (std::size_t t = 0; t <= T; ++t) mean[t] += f[t].task_marginal()[0] / N;
    }
    // Each average is within a few standard errors (sd <= 0.5) of the prior.
    for (std::size_t t = 0; t <= T; ++t) EXPECT_NEAR(mean[t], 0.5, 4 * 0.5 / std::sqrt(double(N))) << t;
}

TEST(belief_oracle, impossible_evidence_is_an_error) {
    Rng rng(8);
    auto spec = chainworld_spec();
    spec.emission.assign(spec.emission.size(), 0.0);
    for (std::size_t z = 0; z < 2; ++z)
        for (std::size_t s = 0; s < 4; ++s) spec.emission[(z * 4 + s) * 4 + s] = 1.0;
    EXPECT_THROW(filter_step(spec, prior_belief(spec), {std::nullopt, std::nullopt, 3, false}), ValueError);
    EXPECT_THROW(filter_step(spec, prior_belief(spec), {std::nullopt, std::nullopt, 9, false}), ValueError);
}

TEST(belief_oracle, filter_trajectory_on_chainworld_rollouts) {
    auto spec = chainworld_spec();
    ChainWorld env({2, 3, 0.99});
    Rng rng(9);
    auto trs = collect_explorer_trajectories(env, 20, 1.0, rng);
    for (const auto& tr : trs) {
        auto beliefs = filter_trajectory(spec, tr);
        ASSERT_EQ(beliefs.size(), tr.length() + 1);
        auto ev = evidence_of(spec, tr);
        EXPECT_LT(max_abs_diff(beliefs.back(), oracle::enumerate_posterior(spec, ev)), 1e-10);
        EXPECT_TRUE(ev[3].boundary);
    }
}

TEST(belief_oracle, self_comparison_agrees_fully) {
    auto spec = chainworld_spec();
    ChainWorld env;
    Rng rng(10);
    std::vector<std::vector<ExactBelief>> exact;
    std::vector<std::vector<std::vector<double>>> amortized, random_vecs;
    std::vector<std::size_t> tasks;
    for (const auto& tr : collect_explorer_trajectories(env, 400, 1.0, rng)) {
        auto f = filter_trajectory(spec, tr);
        f.erase(f.begin());
        std::vector<std::vector<double>> stats, noise;
        for (const auto& b : f) {
            stats.push_back(b.task_marginal());
            noise.push_back({uniform01(rng), uniform01(rng)});
        }
        exact.push_back(std::move(f));
        amortized.push_back(std::move(stats));
        random_vecs.push_back(std::move(noise));
        tasks.push_back(static_cast<std::size_t>(tr.task.index));
    }
    TaskReadout argmax = [](std::span<const double> v) { return v[1] > v[0] ? std::size_t{1} : std::size_t{0}; };
    auto self = compare_to_amortized(exact, amortized, argmax, tasks);
    for (double a : self.agreement) EXPECT_DOUBLE_EQ(a, 1.0);
    EXPECT_EQ(self.readout_accuracy, self.exact_accuracy);
    auto chance = compare_to_amortized(exact, random_vecs, argmax, tasks);
    EXPECT_NEAR(chance.readout_accuracy.back(), 0.5, 0.1);
    std::ostringstream os;
    write_agreement_rows(os, self);
    EXPECT_EQ(os.str().substr(0, 44), "step,agreement,exact_accuracy,readout_accura");
    amortized[3].pop_back();
    EXPECT_THROW(compare_to_amortized(exact, amortized, argmax, tasks), ShapeError);
}

TEST(belief_oracle, spec_file_round_trip_and_validation) {
    Rng rng(11);
    auto spec = random_spec(3, 2, 2, 4, 3, rng);
    std::stringstream ss;
    write_spec(ss, spec);
    auto back = read_spec(ss);
    EXPECT_EQ(back.transition, spec.transition);
    EXPECT_EQ(back.emission, spec.emission);
    EXPECT_EQ(back.reward_support, spec.reward_support);

    auto j = spec_to_json(spec);
    j["initial"][0] = 2.0;
    EXPECT_THROW(spec_from_json(j), ValueError);
    j = spec_to_json(spec);
    j["extra"] = 1;
    EXPECT_THROW(spec_from_json(j), ParseError);
    std::istringstream bad("{not json");
    EXPECT_THROW(read_spec(bad), ParseError);
}
