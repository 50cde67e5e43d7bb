#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "disbelief/hssm.hpp"

namespace disbelief {

enum class ProbeFeature { Task, State };

inline const char* to_string(ProbeFeature f) { return f == ProbeFeature::Task ? "z" : "s"; }

/// Posterior means at the final step of each trajectory, with the true task label.
struct ProbeDataset {
    std::vector<std::vector<double>> task_means;  ///< mu_z; empty rows when d_z = 0
    std::vector<std::vector<double>> state_means; ///< mu_s
    std::vector<std::size_t> labels;
    std::size_t classes = 0;
    std::size_t train_count = 800;
    bool has_task_latent = true;

    std::size_t size() const noexcept { return labels.size(); }
    const std::vector<std::vector<double>>& features(ProbeFeature f) const {
        return f == ProbeFeature::Task ? task_means : state_means;
    }
};

inline ProbeDataset probe_dataset_from(Hssm& model, const std::vector<Trajectory>& trajectories, std::size_t classes,
                                       std::size_t train_count) {
    if (classes == 0) throw ValueError("probe dataset: environment has no discrete task labels");
    if (trajectories.empty()) throw ValueError("probe dataset: no trajectories");
    ProbeDataset ds;
    ds.classes = classes;
    ds.train_count = train_count;
    ds.has_task_latent = model.config.has_task_latent();
    const std::size_t chunk = 100;
    for (std::size_t begin = 0; begin < trajectories.size(); begin += chunk) {
        std::vector<const Trajectory*> ptrs;
        for (std::size_t i = begin; i < std::min(trajectories.size(), begin + chunk); ++i) ptrs.push_back(&trajectories[i]);
        auto enc = encode_sequence(model, make_batch(model.config, ptrs));
        const auto& last = enc.back();
        for (std::size_t r = 0; r < ptrs.size(); ++r) {
            auto row = last.state.mean.row(r);
            ds.state_means.emplace_back(row.begin(), row.end());
            if (last.task) {
                auto zr = last.task->mean.row(r);
                ds.task_means.emplace_back(zr.begin(), zr.end());
            } else {
                ds.task_means.emplace_back();
            }
            if (ptrs[r]->task.index < 0 || static_cast<std::size_t>(ptrs[r]->task.index) >= classes)
                throw ValueError("probe dataset: task label out of range");
            ds.labels.push_back(static_cast<std::size_t>(ptrs[r]->task.index));
        }
    }
    return ds;
}

/// Collects n trajectories with the given policy and extracts the final-step posterior means.
inline ProbeDataset build_probe_dataset(Hssm& model, const MetaEnv& env, std::size_t n, const PolicyFn& policy, Rng& rng,
                                        std::size_t train_count = 800) {
    if (env.task_classes() == 0) throw ValueError("probe dataset: environment has no discrete task labels");
    if (train_count >= n) throw ValueError("probe dataset: train split must leave test rows");
    std::vector<Trajectory> trs;
    trs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) trs.push_back(run_meta_episode(env, policy, rng));
    return probe_dataset_from(model, trs, env.task_classes(), train_count);
}

struct ProbeConfig {
    double l2 = 1e-4;
    double gradient_tolerance = 1e-6;
    std::size_t max_iterations = 200000;
};

struct LogisticModel {
    std::size_t features = 0;
    std::size_t classes = 0;
    std::vector<double> weight; ///< [features][classes]
    std::vector<double> bias;   ///< [classes]
    std::vector<double> mean;   ///< feature standardisation from the train split
    std::vector<double> scale;

    std::vector<double> logits(std::span<const double> x) const {
        std::vector<double> out(bias);
        for (std::size_t f = 0; f < features; ++f) {
            const double v = (x[f] - mean[f]) / scale[f];
            for (std::size_t c = 0; c < classes; ++c) out[c] += v * weight[f * classes + c];
        }
        return out;
    }
    std::size_t predict(std::span<const double> x) const {
        auto l = logits(x);
        return static_cast<std::size_t>(std::max_element(l.begin(), l.end()) - l.begin());
    }
};

struct ProbeFit {
    LogisticModel model;
    double train_accuracy = 0;
    double test_accuracy = 0; ///< percent
    double gradient_norm = 0;
    std::size_t iterations = 0;
    bool converged = false;
};

namespace detail {

/// Mean cross-entropy plus (l2/2)|W|^2 on standardised features; fills grad.
inline double logistic_loss(const std::vector<std::vector<double>>& x, const std::vector<std::size_t>& y,
                            const LogisticModel& m, double l2, std::vector<double>& grad) {
    const std::size_t F = m.features, C = m.classes, n = x.size();
    grad.assign(F * C + C, 0.0);
    double loss = 0;
    std::vector<double> p(C);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < C; ++c) p[c] = m.bias[c];
        for (std::size_t f = 0; f < F; ++f)
            for (std::size_t c = 0; c < C; ++c) p[c] += x[i][f] * m.weight[f * C + c];
        const double mx = *std::max_element(p.begin(), p.end());
        double z = 0;
        for (auto& v : p) {
            v = std::exp(v - mx);
            z += v;
        }
        loss -= std::log(p[y[i]] / z);
        for (std::size_t c = 0; c < C; ++c) {
            const double d = p[c] / z - (c == y[i] ? 1.0 : 0.0);
            for (std::size_t f = 0; f < F; ++f) grad[f * C + c] += d * x[i][f];
            grad[F * C + c] += d;
        }
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& g : grad) g *= inv;
    loss *= inv;
    for (std::size_t k = 0; k < F * C; ++k) {
        loss += 0.5 * l2 * m.weight[k] * m.weight[k];
        grad[k] += l2 * m.weight[k];
    }
    return loss;
}

} // namespace detail

/// Multinomial logistic regression by full-batch accelerated gradient descent
/// (Nesterov momentum with adaptive restart) on the first train_count rows.
inline ProbeFit train_logistic_probe(const ProbeDataset& ds, ProbeFeature feature, const ProbeConfig& cfg = {},
                                     const std::vector<double>* initial = nullptr) {
    if (feature == ProbeFeature::Task && !ds.has_task_latent)
        throw ValueError("probe: the model has no task latent, so only the state probe is defined");
    const auto& X = ds.features(feature);
    if (X.size() != ds.labels.size() || ds.train_count == 0 || ds.train_count >= X.size())
        throw ValueError("probe: dataset split is inconsistent");
    {
        std::vector<bool> seen(ds.classes, false);
        std::size_t distinct = 0;
        for (std::size_t i = 0; i < ds.train_count; ++i)
            if (!seen[ds.labels[i]]) {
                seen[ds.labels[i]] = true;
                ++distinct;
            }
        if (distinct < 2) throw ValueError("probe: training split has a single class");
    }
    const std::size_t F = X.front().size(), C = ds.classes, n = ds.train_count;
    if (F == 0) throw ValueError("probe: empty feature vectors");

    ProbeFit fit;
    LogisticModel& m = fit.model;
    m.features = F;
    m.classes = C;
    m.mean.assign(F, 0.0);
    m.scale.assign(F, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t f = 0; f < F; ++f) m.mean[f] += X[i][f] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t f = 0; f < F; ++f) m.scale[f] += std::pow(X[i][f] - m.mean[f], 2) / static_cast<double>(n);
    for (auto& s : m.scale) s = s > 1e-24 ? std::sqrt(s) : 1.0;

    std::vector<std::vector<double>> xs(n, std::vector<double>(F));
    std::vector<std::size_t> ys(ds.labels.begin(), ds.labels.begin() + static_cast<std::ptrdiff_t>(n));
    double feature_sq = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t f = 0; f < F; ++f) {
            xs[i][f] = (X[i][f] - m.mean[f]) / m.scale[f];
            feature_sq += xs[i][f] * xs[i][f];
        }
    // Softmax cross-entropy has Hessian norm <= 1/2 * lambda_max(X'X/n) <= 1/2 * mean(|x|^2 + 1).
    const double lipschitz = 0.5 * (feature_sq / static_cast<double>(n) + 1.0) + cfg.l2;
    const double step = 1.0 / lipschitz;

    const std::size_t P = F * C + C;
    std::vector<double> theta(P, 0.0);
    if (initial) {
        if (initial->size() != P) throw ShapeError("probe: initial parameter vector has the wrong size");
        theta = *initial;
    }
    auto unpack = [&](const std::vector<double>& th) {
        m.weight.assign(th.begin(), th.begin() + static_cast<std::ptrdiff_t>(F * C));
        m.bias.assign(th.begin() + static_cast<std::ptrdiff_t>(F * C), th.end());
    };
    std::vector<double> grad, lookahead = theta;
    double momentum_t = 1.0, prev_loss = INFINITY;
    for (fit.iterations = 0; fit.iterations < cfg.max_iterations; ++fit.iterations) {
        unpack(lookahead);
        detail::logistic_loss(xs, ys, m, cfg.l2, grad);
        std::vector<double> next(P);
        for (std::size_t k = 0; k < P; ++k) next[k] = lookahead[k] - step * grad[k];
        // Convergence is judged on the gradient at the current iterate.
        unpack(next);
        std::vector<double> g_here;
        const double loss_here = detail::logistic_loss(xs, ys, m, cfg.l2, g_here);
        double gn = 0;
        for (double g : g_here) gn += g * g;
        fit.gradient_norm = std::sqrt(gn);
        if (fit.gradient_norm < cfg.gradient_tolerance) {
            theta = next;
            fit.converged = true;
            break;
        }
        if (loss_here > prev_loss) {
            // Restart momentum when the objective goes up.
            momentum_t = 1.0;
            lookahead = theta;
            prev_loss = INFINITY;
            continue;
        }
        prev_loss = loss_here;
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum_t * momentum_t));
        for (std::size_t k = 0; k < P; ++k) lookahead[k] = next[k] + (momentum_t - 1.0) / t_next * (next[k] - theta[k]);
        theta = next;
        momentum_t = t_next;
    }
    unpack(theta);
    auto accuracy = [&](std::size_t lo, std::size_t hi) {
        std::size_t hit = 0;
        for (std::size_t i = lo; i < hi; ++i) hit += m.predict(X[i]) == ds.labels[i];
        return 100.0 * static_cast<double>(hit) / static_cast<double>(hi - lo);
    };
    fit.train_accuracy = accuracy(0, n);
    fit.test_accuracy = accuracy(n, X.size());
    return fit;
}

/// Mean over trajectories of KL[q(z | tau_{0:T}) || N(0, I)], in nats.
inline double z_kl_metric(Hssm& model, const std::vector<Trajectory>& trajectories) {
    if (!model.config.has_task_latent() || trajectories.empty()) return 0.0;
    double total = 0;
    const std::size_t chunk = 100;
    for (std::size_t begin = 0; begin < trajectories.size(); begin += chunk) {
        std::vector<const Trajectory*> ptrs;
        for (std::size_t i = begin; i < std::min(trajectories.size(), begin + chunk); ++i) ptrs.push_back(&trajectories[i]);
        auto enc = encode_sequence(model, make_batch(model.config, ptrs));
        const auto& q = *enc.back().task;
        for (std::size_t r = 0; r < ptrs.size(); ++r)
            for (std::size_t k = 0; k < q.mean.cols(); ++k) {
                const double m = q.mean.at(r, k), s = q.std.at(r, k);
                total += 0.5 * (s * s + m * m) - std::log(s) - 0.5;
            }
    }
    return total / static_cast<double>(trajectories.size());
}

struct ProbeResult {
    double z_accuracy = NAN; ///< percent; NaN for the SSM ablation
    double s_accuracy = 0;   ///< percent
    double z_kl = 0;         ///< nats
};

} // namespace disbelief
