#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "disbelief/core/ops.hpp"

namespace disbelief {

/// Lower bound on every std emitted by a softplus head.
inline constexpr double kStdFloor = 1e-3;

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

/// Diagonal Gaussian as plain values.
struct GaussianParams {
    Tensor mean;
    Tensor std;
};

/// Diagonal Gaussian whose parameters live in a graph; rows are batch items.
struct GaussianVar {
    Var mean;
    Var std;
};

struct KlResult {
    Tensor per_dim;
    double total = 0.0;
};

namespace detail {

inline void check_gaussian(const GaussianParams& d, const char* who) {
    if (d.mean.shape() != d.std.shape())
        throw ShapeError(std::string(who) + ": mean/std shapes differ " + shape_str(d.mean.shape()) + " vs " +
                         shape_str(d.std.shape()));
    for (double s : d.std.data())
        if (!(s > 0.0)) throw ValueError(std::string(who) + ": nonpositive std");
}

inline void check_positive(const Var& std, const char* who) {
    for (double s : std.value().data())
        if (!(s > 0.0)) throw ValueError(std::string(who) + ": nonpositive std");
}

} // namespace detail

/// KL[q || p] per dimension and summed.
inline KlResult gaussian_kl(const GaussianParams& q, const GaussianParams& p) {
    detail::check_gaussian(q, "gaussian_kl(q)");
    detail::check_gaussian(p, "gaussian_kl(p)");
    if (q.mean.shape() != p.mean.shape()) throw ShapeError("gaussian_kl: q and p shapes differ");
    KlResult r{Tensor(q.mean.shape()), 0.0};
    for (std::size_t i = 0; i < q.mean.size(); ++i) {
        const double sq = q.std[i], sp = p.std[i], dm = q.mean[i] - p.mean[i];
        const double kl = std::log(sp / sq) + (sq * sq + dm * dm) / (2.0 * sp * sp) - 0.5;
        r.per_dim[i] = kl;
        r.total += kl;
    }
    return r;
}

inline Tensor reparam_sample(const GaussianParams& dist, const Tensor& noise) {
    detail::check_gaussian(dist, "reparam_sample");
    if (noise.shape() != dist.mean.shape())
        throw ShapeError("reparam_sample: noise shape " + shape_str(noise.shape()) + " vs mean " +
                         shape_str(dist.mean.shape()));
    Tensor out(dist.mean.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = dist.mean[i] + dist.std[i] * noise[i];
    return out;
}

inline double gaussian_log_prob(const Tensor& x, const GaussianParams& dist) {
    detail::check_gaussian(dist, "gaussian_log_prob");
    if (x.shape() != dist.mean.shape()) throw ShapeError("gaussian_log_prob: x shape mismatch");
    double lp = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double z = (x[i] - dist.mean[i]) / dist.std[i];
        lp += -kHalfLog2Pi - std::log(dist.std[i]) - 0.5 * z * z;
    }
    return lp;
}

/// sum x*log(sigmoid(l)) + (1-x)*log(1-sigmoid(l)), written as x*l - softplus(l).
inline double bernoulli_log_prob(const Tensor& x, const Tensor& logits) {
    if (x.shape() != logits.shape()) throw ShapeError("bernoulli_log_prob: shape mismatch");
    double lp = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] != 0.0 && x[i] != 1.0) throw ValueError("bernoulli_log_prob: target is not binary");
        lp += x[i] * logits[i] - softplus(logits[i]);
    }
    return lp;
}

// Graph versions. Each returns per-row sums with shape [rows, 1].

inline Var reparam_sample(const GaussianVar& dist, const Tensor& noise) {
    detail::check_positive(dist.std, "reparam_sample");
    if (noise.size() != dist.mean.value().size() || noise.rows() != dist.mean.rows())
        throw ShapeError("reparam_sample: noise shape mismatch");
    Graph& g = dist.mean.graph();
    return dist.mean + dist.std * g.constant(Tensor(dist.mean.shape(), noise.storage()));
}

inline Var gaussian_kl_rows(const GaussianVar& q, const GaussianVar& p) {
    detail::check_positive(q.std, "gaussian_kl(q)");
    detail::check_positive(p.std, "gaussian_kl(p)");
    Var ratio = q.std / p.std;
    Var dm = (q.mean - p.mean) / p.std;
    Var per_dim = ops::scale(ops::square(ratio) + ops::square(dm), 0.5) - ops::log(ratio) - 0.5;
    return ops::sum_cols(per_dim);
}

/// KL[q || N(0, I)] without building constant prior nodes.
inline Var standard_normal_kl_rows(const GaussianVar& q) {
    detail::check_positive(q.std, "gaussian_kl(q)");
    Var per_dim = ops::scale(ops::square(q.std) + ops::square(q.mean), 0.5) - ops::log(q.std) - 0.5;
    return ops::sum_cols(per_dim);
}

inline Var gaussian_log_prob_rows(const Var& x, const GaussianVar& dist) {
    detail::check_positive(dist.std, "gaussian_log_prob");
    Var z = (x - dist.mean) / dist.std;
    Var per_dim = ops::scale(ops::square(z), -0.5) - ops::log(dist.std) - kHalfLog2Pi;
    return ops::sum_cols(per_dim);
}

inline Var bernoulli_log_prob_rows(const Tensor& x, const Var& logits) {
    if (x.size() != logits.value().size()) throw ShapeError("bernoulli_log_prob: shape mismatch");
    for (double v : x.data())
        if (v != 0.0 && v != 1.0) throw ValueError("bernoulli_log_prob: target is not binary");
    Graph& g = logits.graph();
    Var target = g.constant(Tensor(logits.shape(), x.storage()));
    return ops::sum_cols(target * logits - ops::softplus(logits));
}

inline Var categorical_log_prob_rows(const std::vector<std::size_t>& labels, const Var& logits) {
    return ops::pick_cols(ops::log_softmax_rows(logits), labels);
}

} // namespace disbelief
