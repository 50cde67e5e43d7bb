#pragma once

#include <cstdio>
#include <deque>
#include <ostream>
#include <vector>

#include "disbelief/core/adam.hpp"
#include "disbelief/hssm/elbo.hpp"

namespace disbelief {

/// FIFO store of recent trajectories; the oldest is evicted once full.
class TrajectoryBuffer {
public:
    explicit TrajectoryBuffer(std::size_t capacity = 1024) : capacity_(capacity) {
        if (capacity == 0) throw ValueError("trajectory buffer capacity must be >= 1");
    }

    void add(Trajectory tr) {
        if (!items_.empty() && tr.length() != items_.front().length())
            throw ShapeError("trajectory buffer: all trajectories must share one length");
        items_.push_back(std::move(tr));
        while (items_.size() > capacity_) items_.pop_front();
    }

    std::size_t size() const noexcept { return items_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }
    bool empty() const noexcept { return items_.empty(); }
    const Trajectory& operator[](std::size_t i) const { return items_.at(i); }

    /// Distinct indices when the buffer is large enough, otherwise with replacement.
    std::vector<const Trajectory*> sample(std::size_t n, Rng& rng) const {
        if (items_.empty()) throw ValueError("trajectory buffer is empty");
        std::vector<const Trajectory*> out;
        if (n <= items_.size()) {
            std::vector<std::size_t> idx(items_.size());
            for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
            for (std::size_t i = 0; i < n; ++i) {
                std::size_t j = i + uniform_index(rng, idx.size() - i);
                std::swap(idx[i], idx[j]);
                out.push_back(&items_[idx[i]]);
            }
        } else {
            for (std::size_t i = 0; i < n; ++i) out.push_back(&items_[uniform_index(rng, items_.size())]);
        }
        return out;
    }

private:
    std::size_t capacity_;
    std::deque<Trajectory> items_;
};

struct ModelTrainConfig {
    std::size_t steps = 50;
    std::size_t batch_size = 16;
    double beta = 1.0;
    AdamConfig adam{1e-3, 0.9, 0.999, 1e-8, 100.0};
};

struct MetricsRow {
    std::size_t iteration = 0;
    ElboBreakdown values;
};

/// One Adam ascent step on the beta-objective of a minibatch.
inline ElboBreakdown model_update(Hssm& m, AdamState& opt, const std::vector<const Trajectory*>& batch_trajs,
                                  double beta, Rng& rng) {
    auto params = m.parameters();
    zero_grads(params);
    auto batch = make_batch(m.config, batch_trajs);
    auto noise = sample_elbo_noise(m.config, batch.batch, batch.steps, rng);
    Graph g;
    auto terms = build_elbo(g, m, batch, noise, beta);
    auto summary = summarize(terms, beta);
    g.backward(-terms.objective);
    adam_step(params, opt);
    return summary;
}

/// Runs cfg.steps minibatch updates; metrics rows are numbered from first_iteration.
inline std::vector<MetricsRow> train_model(Hssm& m, AdamState& opt, const TrajectoryBuffer& buffer,
                                           const ModelTrainConfig& cfg, Rng& rng, std::size_t first_iteration = 0) {
    check_beta(cfg.beta);
    if (cfg.batch_size == 0) throw ValueError("model batch size must be >= 1");
    std::vector<MetricsRow> rows;
    rows.reserve(cfg.steps);
    for (std::size_t i = 0; i < cfg.steps; ++i) {
        auto picked = buffer.sample(cfg.batch_size, rng);
        rows.push_back({first_iteration + i, model_update(m, opt, picked, cfg.beta, rng)});
    }
    return rows;
}

inline AdamState make_model_optimizer(const ModelTrainConfig& cfg) { return AdamState(cfg.adam); }

inline constexpr const char* kMetricsHeader = "iteration,recon_obs,recon_rew,kl_s,kl_z,elbo,beta_objective";

/// Full round-trip precision so reruns can be compared byte for byte.
inline void write_metrics_row(std::ostream& os, const MetricsRow& r) {
    char buf[512];
    const auto& v = r.values;
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.iteration, v.recon_obs, v.recon_rew,
                  v.kl_s, v.kl_z, v.elbo, v.beta_objective);
    os << buf;
}

} // namespace disbelief
