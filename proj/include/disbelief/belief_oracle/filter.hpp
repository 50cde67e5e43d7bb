#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "disbelief/envs/trajectory.hpp"
#include "json.hpp"

namespace disbelief {

/// Finite meta-POMDP with per-task tables. Rewards are drawn on entering a state.
struct DiscreteMetaPOMDPSpec {
    std::size_t states = 0;
    std::size_t tasks = 0;
    std::size_t actions = 0;
    std::size_t observations = 0;
    std::vector<double> reward_support;
    std::vector<double> transition; ///< [task][state][action][next]
    std::vector<double> emission;   ///< [task][state][observation]
    std::vector<double> reward;     ///< [task][state][reward index]
    std::vector<double> initial;    ///< [state]
    std::vector<double> task_prior; ///< [task]

    std::size_t rewards() const noexcept { return reward_support.size(); }

    double T(std::size_t z, std::size_t s, std::size_t a, std::size_t next) const {
        return transition[((z * states + s) * actions + a) * states + next];
    }
    double F(std::size_t z, std::size_t s, std::size_t o) const { return emission[(z * states + s) * observations + o]; }
    double R(std::size_t z, std::size_t s, std::size_t r) const { return reward[(z * states + s) * rewards() + r]; }

    void validate() const {
        if (states == 0 || tasks == 0 || actions == 0 || observations == 0 || reward_support.empty())
            throw ValueError("pomdp spec: every support must be nonempty");
        auto check_rows = [](const std::vector<double>& table, std::size_t rows, std::size_t width, const char* what) {
            if (table.size() != rows * width)
                throw ShapeError(std::string("pomdp spec: ") + what + " table has " + std::to_string(table.size()) +
                                 " entries, expected " + std::to_string(rows * width));
            for (std::size_t r = 0; r < rows; ++r) {
                double sum = 0;
                for (std::size_t k = 0; k < width; ++k) {
                    const double p = table[r * width + k];
                    if (!(p >= 0.0) || !std::isfinite(p))
                        throw ValueError(std::string("pomdp spec: negative or non-finite entry in ") + what);
                    sum += p;
                }
                if (std::abs(sum - 1.0) > 1e-12)
                    throw ValueError(std::string("pomdp spec: ") + what + " row " + std::to_string(r) + " sums to " +
                                     std::to_string(sum));
            }
        };
        check_rows(transition, tasks * states * actions, states, "transition");
        check_rows(emission, tasks * states, observations, "emission");
        check_rows(reward, tasks * states, rewards(), "reward");
        check_rows(initial, 1, states, "initial");
        check_rows(task_prior, 1, tasks, "task prior");
    }

    /// Index of a reward value in the support; exact match required.
    std::size_t reward_index(double r) const {
        for (std::size_t i = 0; i < reward_support.size(); ++i)
            if (reward_support[i] == r) return i;
        throw ValueError("reward " + std::to_string(r) + " is outside the finite reward support");
    }
};

inline DiscreteMetaPOMDPSpec chainworld_spec() {
    using C = ChainWorld;
    DiscreteMetaPOMDPSpec s;
    s.states = C::kStates;
    s.tasks = C::kTasks;
    s.actions = 2;
    s.observations = C::kStates;
    s.reward_support = {0.0, 1.0};
    for (int z = 0; z < C::kTasks; ++z) {
        for (int st = 0; st < C::kStates; ++st)
            for (int a = 0; a < 2; ++a)
                for (int n = 0; n < C::kStates; ++n) s.transition.push_back(C::transition_prob(st, a, n));
    }
    for (int z = 0; z < C::kTasks; ++z)
        for (int st = 0; st < C::kStates; ++st)
            for (int o = 0; o < C::kStates; ++o) s.emission.push_back(C::emission_prob(st, o));
    for (int z = 0; z < C::kTasks; ++z)
        for (int st = 0; st < C::kStates; ++st)
            for (int r = 0; r < 2; ++r) s.reward.push_back(C::reward_prob(z, st, r));
    s.initial.assign(C::kStates, 0.0);
    s.initial[C::kStart] = 1.0;
    s.task_prior.assign(C::kTasks, 1.0 / C::kTasks);
    return s;
}

/// Joint posterior over (state, task), stored state-major.
struct ExactBelief {
    std::size_t states = 0;
    std::size_t tasks = 0;
    std::vector<double> p;

    double at(std::size_t s, std::size_t z) const { return p[s * tasks + z]; }
    double& at(std::size_t s, std::size_t z) { return p[s * tasks + z]; }

    std::vector<double> task_marginal() const {
        std::vector<double> m(tasks, 0.0);
        for (std::size_t s = 0; s < states; ++s)
            for (std::size_t z = 0; z < tasks; ++z) m[z] += at(s, z);
        return m;
    }
    std::vector<double> state_marginal() const {
        std::vector<double> m(states, 0.0);
        for (std::size_t s = 0; s < states; ++s)
            for (std::size_t z = 0; z < tasks; ++z) m[s] += at(s, z);
        return m;
    }
    /// Most probable task; ties go to the lower index.
    std::size_t map_task() const {
        auto m = task_marginal();
        return static_cast<std::size_t>(std::max_element(m.begin(), m.end()) - m.begin());
    }
};

inline ExactBelief prior_belief(const DiscreteMetaPOMDPSpec& spec) {
    ExactBelief b{spec.states, spec.tasks, std::vector<double>(spec.states * spec.tasks)};
    for (std::size_t s = 0; s < spec.states; ++s)
        for (std::size_t z = 0; z < spec.tasks; ++z) b.at(s, z) = spec.initial[s] * spec.task_prior[z];
    return b;
}

/// Evidence arriving with o_t: the previous action and reward (absent at t = 0)
/// and whether the environment reset between them.
struct FilterEvidence {
    std::optional<std::size_t> action;
    std::optional<std::size_t> reward;
    std::size_t observation = 0;
    bool boundary = false;
};

inline ExactBelief filter_step(const DiscreteMetaPOMDPSpec& spec, const ExactBelief& belief, const FilterEvidence& e) {
    if (belief.states != spec.states || belief.tasks != spec.tasks) throw ShapeError("filter_step: belief shape mismatch");
    if (e.observation >= spec.observations) throw ValueError("filter_step: observation outside support");
    ExactBelief next = belief;
    if (e.action) {
        if (*e.action >= spec.actions) throw ValueError("filter_step: action outside support");
        if (!e.reward || *e.reward >= spec.rewards()) throw ValueError("filter_step: reward outside support");
        std::fill(next.p.begin(), next.p.end(), 0.0);
        for (std::size_t z = 0; z < spec.tasks; ++z)
            for (std::size_t s = 0; s < spec.states; ++s) {
                const double w = belief.at(s, z);
                if (w == 0.0) continue;
                for (std::size_t n = 0; n < spec.states; ++n) next.at(n, z) += w * spec.T(z, s, *e.action, n);
            }
        for (std::size_t z = 0; z < spec.tasks; ++z)
            for (std::size_t n = 0; n < spec.states; ++n) next.at(n, z) *= spec.R(z, n, *e.reward);
        if (e.boundary) {
            const auto task = next.task_marginal();
            for (std::size_t s = 0; s < spec.states; ++s)
                for (std::size_t z = 0; z < spec.tasks; ++z) next.at(s, z) = spec.initial[s] * task[z];
        }
    }
    double total = 0;
    for (std::size_t s = 0; s < spec.states; ++s)
        for (std::size_t z = 0; z < spec.tasks; ++z) {
            next.at(s, z) *= spec.F(z, s, e.observation);
            total += next.at(s, z);
        }
    if (!(total > 0.0)) throw ValueError("filter_step: evidence has zero likelihood under the model tables");
    for (double& v : next.p) v /= total;
    return next;
}

inline std::vector<FilterEvidence> evidence_of(const DiscreteMetaPOMDPSpec& spec, const Trajectory& tr) {
    if (tr.observation_dim != spec.observations)
        throw ShapeError("filter: trajectory observation width " + std::to_string(tr.observation_dim) +
                         " does not match the tables' " + std::to_string(spec.observations) + " symbols");
    std::vector<FilterEvidence> out;
    for (std::size_t t = 0; t < tr.length(); ++t) {
        FilterEvidence e;
        auto o = tr.observation(t);
        std::size_t sym = spec.observations;
        for (std::size_t k = 0; k < o.size(); ++k)
            if (o[k] == 1.0) sym = k;
        if (sym == spec.observations) throw ValueError("filter: observation at step " + std::to_string(t) + " is not one-hot");
        e.observation = sym;
        if (t > 0) {
            if (tr.actions[t - 1].index < 0) throw ValueError("filter: negative action index");
            e.action = static_cast<std::size_t>(tr.actions[t - 1].index);
            e.reward = spec.reward_index(tr.rewards[t - 1]);
        }
        e.boundary = tr.boundary[t] != 0;
        out.push_back(e);
    }
    return out;
}

/// T+1 beliefs: entry 0 is the prior, entry t+1 has seen o_{0:t}, a_{0:t-1}, r_{0:t-1}
/// (the same information as the encoder at step t).
inline std::vector<ExactBelief> filter_trajectory(const DiscreteMetaPOMDPSpec& spec, const Trajectory& tr) {
    std::vector<ExactBelief> out{prior_belief(spec)};
    for (const auto& e : evidence_of(spec, tr)) out.push_back(filter_step(spec, out.back(), e));
    return out;
}

struct AgreementReport {
    std::vector<double> agreement;        ///< readout MAP == exact MAP, per step
    std::vector<double> exact_accuracy;   ///< exact MAP == true task (the ceiling)
    std::vector<double> readout_accuracy; ///< readout MAP == true task
    std::size_t trajectories = 0;
};

using TaskReadout = std::function<std::size_t(std::span<const double>)>;

/// exact[i][t] and amortized[i][t] must describe the same prefix of trajectory i.
inline AgreementReport compare_to_amortized(const std::vector<std::vector<ExactBelief>>& exact,
                                            const std::vector<std::vector<std::vector<double>>>& amortized,
                                            const TaskReadout& readout, const std::vector<std::size_t>& true_tasks) {
    if (exact.size() != amortized.size() || exact.size() != true_tasks.size())
        throw ShapeError("compare_to_amortized: trajectory counts differ");
    if (exact.empty()) throw ValueError("compare_to_amortized: no trajectories");
    const std::size_t T = exact.front().size();
    AgreementReport rep;
    rep.trajectories = exact.size();
    rep.agreement.assign(T, 0.0);
    rep.exact_accuracy.assign(T, 0.0);
    rep.readout_accuracy.assign(T, 0.0);
    for (std::size_t i = 0; i < exact.size(); ++i) {
        if (exact[i].size() != T || amortized[i].size() != T)
            throw ShapeError("compare_to_amortized: sequence length mismatch in trajectory " + std::to_string(i));
        for (std::size_t t = 0; t < T; ++t) {
            const std::size_t e = exact[i][t].map_task(), r = readout(amortized[i][t]);
            rep.agreement[t] += e == r;
            rep.exact_accuracy[t] += e == true_tasks[i];
            rep.readout_accuracy[t] += r == true_tasks[i];
        }
    }
    const double n = static_cast<double>(exact.size());
    for (std::size_t t = 0; t < T; ++t) {
        rep.agreement[t] /= n;
        rep.exact_accuracy[t] /= n;
        rep.readout_accuracy[t] /= n;
    }
    return rep;
}

inline void write_agreement_rows(std::ostream& os, const AgreementReport& rep) {
    os << "step,agreement,exact_accuracy,readout_accuracy\n";
    for (std::size_t t = 0; t < rep.agreement.size(); ++t)
        os << t << ',' << rep.agreement[t] << ',' << rep.exact_accuracy[t] << ',' << rep.readout_accuracy[t] << '\n';
}

// Spec files are JSON with nested tables, e.g. transition[z][s][a][s'].

inline nlohmann::json spec_to_json(const DiscreteMetaPOMDPSpec& s) {
    using nlohmann::json;
    json t = json::array(), f = json::array(), r = json::array();
    for (std::size_t z = 0; z < s.tasks; ++z) {
        json tz = json::array(), fz = json::array(), rz = json::array();
        for (std::size_t st = 0; st < s.states; ++st) {
            json ts = json::array();
            for (std::size_t a = 0; a < s.actions; ++a) {
                json row = json::array();
                for (std::size_t n = 0; n < s.states; ++n) row.push_back(s.T(z, st, a, n));
                ts.push_back(row);
            }
            tz.push_back(ts);
            json fr = json::array();
            for (std::size_t o = 0; o < s.observations; ++o) fr.push_back(s.F(z, st, o));
            fz.push_back(fr);
            json rr = json::array();
            for (std::size_t k = 0; k < s.rewards(); ++k) rr.push_back(s.R(z, st, k));
            rz.push_back(rr);
        }
        t.push_back(tz);
        f.push_back(fz);
        r.push_back(rz);
    }
    return {{"states", s.states},         {"tasks", s.tasks},       {"actions", s.actions},
            {"observations", s.observations}, {"reward_support", s.reward_support},
            {"transition", t},            {"emission", f},          {"reward", r},
            {"initial", s.initial},       {"task_prior", s.task_prior}};
}

inline DiscreteMetaPOMDPSpec spec_from_json(const nlohmann::json& j) {
    DiscreteMetaPOMDPSpec s;
    try {
        for (auto it = j.begin(); it != j.end(); ++it) {
            static const std::vector<std::string> known{"states", "tasks", "actions", "observations", "reward_support",
                                                        "transition", "emission", "reward", "initial", "task_prior"};
            if (std::find(known.begin(), known.end(), it.key()) == known.end())
                throw ParseError("pomdp spec: unknown key '" + it.key() + "'");
        }
        s.states = j.at("states").get<std::size_t>();
        s.tasks = j.at("tasks").get<std::size_t>();
        s.actions = j.at("actions").get<std::size_t>();
        s.observations = j.at("observations").get<std::size_t>();
        s.reward_support = j.at("reward_support").get<std::vector<double>>();
        auto flatten = [](const nlohmann::json& node, std::vector<double>& out, auto& self) -> void {
            if (node.is_array())
                for (const auto& c : node) self(c, out, self);
            else
                out.push_back(node.get<double>());
        };
        flatten(j.at("transition"), s.transition, flatten);
        flatten(j.at("emission"), s.emission, flatten);
        flatten(j.at("reward"), s.reward, flatten);
        s.initial = j.at("initial").get<std::vector<double>>();
        s.task_prior = j.at("task_prior").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("pomdp spec: ") + e.what());
    }
    s.validate();
    return s;
}

inline void write_spec(std::ostream& os, const DiscreteMetaPOMDPSpec& s) { os << spec_to_json(s).dump(2) << '\n'; }

inline DiscreteMetaPOMDPSpec read_spec(std::istream& is) {
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("pomdp spec: ") + e.what());
    }
    return spec_from_json(j);
}

} // namespace disbelief
