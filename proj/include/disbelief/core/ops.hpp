#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "disbelief/core/graph.hpp"

namespace disbelief {

/// Numerically stable log(1 + exp(x)).
inline double softplus(double x) noexcept { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double sigmoid(double x) noexcept {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

namespace ops {
namespace detail {

enum class Broadcast { Same, Row, Scalar };

inline Broadcast broadcast_mode(const Tensor& operand, const Tensor& result, const char* op) {
    if (operand.size() == result.size() && operand.rows() == result.rows()) return Broadcast::Same;
    if (operand.size() == 1) return Broadcast::Scalar;
    if (operand.rows() == 1 && operand.cols() == result.cols()) return Broadcast::Row;
    throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(operand.shape()) + " to " +
                     shape_str(result.shape()));
}

inline std::size_t bindex(Broadcast m, std::size_t i, std::size_t cols) noexcept {
    switch (m) {
    case Broadcast::Same: return i;
    case Broadcast::Row: return i % cols;
    default: return 0;
    }
}

inline Shape result_shape(const Tensor& a, const Tensor& b) {
    if (a.size() > b.size()) return a.shape();
    if (b.size() > a.size()) return b.shape();
    return a.rank() >= b.rank() ? a.shape() : b.shape();
}

/// Elementwise binary op with row/scalar broadcasting.
/// `da(x, y, z)` and `db(x, y, z)` are the partial derivatives of z = f(x, y).
template <class F, class DA, class DB>
Var binary(const char* op, const Var& a, const Var& b, F f, DA da, DB db) {
    Graph& g = a.graph();
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    Tensor out(result_shape(x, y));
    const auto ma = broadcast_mode(x, out, op);
    const auto mb = broadcast_mode(y, out, op);
    const std::size_t cols = out.cols();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[bindex(ma, i, cols)], y[bindex(mb, i, cols)]);
    const std::size_t ia = a.id(), ib = b.id();
    return g.emit(op, std::move(out), {ia, ib}, [=](Graph& gr, std::size_t self) {
        const Tensor& gz = gr.grad(self);
        const Tensor& z = gr.value(self);
        const Tensor& xv = gr.value(ia);
        const Tensor& yv = gr.value(ib);
        if (Tensor* gx = gr.grad_target(ia)) {
            for (std::size_t i = 0; i < z.size(); ++i) {
                const std::size_t ja = bindex(ma, i, cols), jb = bindex(mb, i, cols);
                (*gx)[ja] += gz[i] * da(xv[ja], yv[jb], z[i]);
            }
        }
        if (Tensor* gy = gr.grad_target(ib)) {
            for (std::size_t i = 0; i < z.size(); ++i) {
                const std::size_t ja = bindex(ma, i, cols), jb = bindex(mb, i, cols);
                (*gy)[jb] += gz[i] * db(xv[ja], yv[jb], z[i]);
            }
        }
    });
}

/// Elementwise unary op; `d(x, y)` is dy/dx.
template <class F, class D>
Var unary(const char* op, const Var& a, F f, D d) {
    Graph& g = a.graph();
    const Tensor& x = a.value();
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    const std::size_t ia = a.id();
    return g.emit(op, std::move(out), {ia}, [=](Graph& gr, std::size_t self) {
        Tensor* gx = gr.grad_target(ia);
        if (!gx) return;
        const Tensor& gz = gr.grad(self);
        const Tensor& xv = gr.value(ia);
        const Tensor& z = gr.value(self);
        for (std::size_t i = 0; i < z.size(); ++i) (*gx)[i] += gz[i] * d(xv[i], z[i]);
    });
}

} // namespace detail

inline Var add(const Var& a, const Var& b) {
    return detail::binary(
        "add", a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return 1.0; });
}

inline Var sub(const Var& a, const Var& b) {
    return detail::binary(
        "sub", a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return -1.0; });
}

inline Var mul(const Var& a, const Var& b) {
    return detail::binary(
        "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
        [](double x, double, double) { return x; });
}

inline Var div(const Var& a, const Var& b) {
    return detail::binary(
        "div", a, b, [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
        [](double, double y, double z) { return -z / y; });
}

inline Var minimum(const Var& a, const Var& b) {
    return detail::binary(
        "minimum", a, b, [](double x, double y) { return std::min(x, y); },
        [](double x, double y, double) { return x <= y ? 1.0 : 0.0; },
        [](double x, double y, double) { return x <= y ? 0.0 : 1.0; });
}

inline Var scale(const Var& a, double c) {
    return detail::unary("scale", a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

inline Var shift(const Var& a, double c) {
    return detail::unary("shift", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

inline Var neg(const Var& a) { return scale(a, -1.0); }

inline Var tanh(const Var& a) {
    return detail::unary("tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var sigmoid(const Var& a) {
    return detail::unary(
        "sigmoid", a, [](double x) { return disbelief::sigmoid(x); }, [](double, double y) { return y * (1.0 - y); });
}

inline Var softplus(const Var& a) {
    return detail::unary(
        "softplus", a, [](double x) { return disbelief::softplus(x); },
        [](double x, double) { return disbelief::sigmoid(x); });
}

inline Var exp(const Var& a) {
    return detail::unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(const Var& a) {
    return detail::unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Var square(const Var& a) {
    return detail::unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline Var relu(const Var& a) {
    return detail::unary(
        "relu", a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

/// Elementwise clamp; gradient is zero outside [lo, hi].
inline Var clamp(const Var& a, double lo, double hi) {
    return detail::unary(
        "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

/// [m, k] x [k, n] -> [m, n]. Rank-1 operands are treated as single rows.
inline Var matmul(const Var& a, const Var& b) {
    Graph& g = a.graph();
    const Tensor& x = a.value();
    const Tensor& w = b.value();
    const std::size_t m = x.rows(), k = x.cols(), n = w.cols();
    if (w.rows() != k)
        throw ShapeError("matmul: " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
    Tensor out = Tensor::zeros(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        double* orow = out.data().data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double xv = x[i * k + p];
            if (xv == 0.0) continue;
            const double* wrow = w.data().data() + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += xv * wrow[j];
        }
    }
    const std::size_t ia = a.id(), ib = b.id();
    return g.emit("matmul", std::move(out), {ia, ib}, [=](Graph& gr, std::size_t self) {
        const Tensor& gz = gr.grad(self);
        const Tensor& xv = gr.value(ia);
        const Tensor& wv = gr.value(ib);
        if (Tensor* gx = gr.grad_target(ia)) {
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = gz.data().data() + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const double* wrow = wv.data().data() + p * n;
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += grow[j] * wrow[j];
                    (*gx)[i * k + p] += s;
                }
            }
        }
        if (Tensor* gw = gr.grad_target(ib)) {
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = gz.data().data() + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const double xval = xv[i * k + p];
                    if (xval == 0.0) continue;
                    double* gwrow = gw->data().data() + p * n;
                    for (std::size_t j = 0; j < n; ++j) gwrow[j] += xval * grow[j];
                }
            }
        }
    });
}

/// Sum of all elements -> rank-0.
inline Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    const std::size_t ia = a.id();
    return a.graph().emit("sum", Tensor::scalar(s), {ia}, [ia](Graph& gr, std::size_t self) {
        Tensor* gx = gr.grad_target(ia);
        if (!gx) return;
        const double gz = gr.grad(self)[0];
        for (auto& v : gx->data()) v += gz;
    });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// Row sums: [r, c] -> [r, 1].
inline Var sum_cols(const Var& a) {
    const Tensor& x = a.value();
    const std::size_t r = x.rows(), c = x.cols();
    Tensor out = Tensor::zeros(r, 1);
    for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += x[i * c + j];
        out[i] = s;
    }
    const std::size_t ia = a.id();
    return a.graph().emit("sum_cols", std::move(out), {ia}, [=](Graph& gr, std::size_t self) {
        Tensor* gx = gr.grad_target(ia);
        if (!gx) return;
        const Tensor& gz = gr.grad(self);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) (*gx)[i * c + j] += gz[i];
    });
}

/// Column-wise concatenation of matrices with equal row counts.
inline Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t r = parts.front().rows();
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.rows() != r) throw ShapeError("concat_cols: row mismatch");
        total += p.cols();
    }
    Tensor out = Tensor::zeros(r, total);
    std::vector<std::size_t> ids, offsets, widths;
    std::size_t off = 0;
    for (const auto& p : parts) {
        const Tensor& v = p.value();
        const std::size_t c = v.cols();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out[i * total + off + j] = v[i * c + j];
        ids.push_back(p.id());
        offsets.push_back(off);
        widths.push_back(c);
        off += c;
    }
    return parts.front().graph().emit("concat_cols", std::move(out), ids, [=](Graph& gr, std::size_t self) {
        const Tensor& gz = gr.grad(self);
        for (std::size_t q = 0; q < ids.size(); ++q) {
            Tensor* gx = gr.grad_target(ids[q]);
            if (!gx) continue;
            const std::size_t c = widths[q];
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) (*gx)[i * c + j] += gz[i * total + offsets[q] + j];
        }
    });
}

/// Columns [begin, begin + count) of a matrix.
inline Var slice_cols(const Var& a, std::size_t begin, std::size_t count) {
    const Tensor& x = a.value();
    const std::size_t r = x.rows(), c = x.cols();
    if (begin + count > c) throw ShapeError("slice_cols: range exceeds " + std::to_string(c) + " columns");
    Tensor out = Tensor::zeros(r, count);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < count; ++j) out[i * count + j] = x[i * c + begin + j];
    const std::size_t ia = a.id();
    return a.graph().emit("slice_cols", std::move(out), {ia}, [=](Graph& gr, std::size_t self) {
        Tensor* gx = gr.grad_target(ia);
        if (!gx) return;
        const Tensor& gz = gr.grad(self);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < count; ++j) (*gx)[i * c + begin + j] += gz[i * count + j];
    });
}

/// Row-wise log-softmax.
inline Var log_softmax_rows(const Var& a) {
    const Tensor& x = a.value();
    const std::size_t r = x.rows(), c = x.cols();
    Tensor out(x.shape());
    for (std::size_t i = 0; i < r; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, x[i * c + j]);
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += std::exp(x[i * c + j] - mx);
        const double lse = mx + std::log(s);
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] - lse;
    }
    const std::size_t ia = a.id();
    return a.graph().emit("log_softmax_rows", std::move(out), {ia}, [=](Graph& gr, std::size_t self) {
        Tensor* gx = gr.grad_target(ia);
        if (!gx) return;
        const Tensor& gz = gr.grad(self);
        const Tensor& y = gr.value(self);
        for (std::size_t i = 0; i < r; ++i) {
            double gs = 0.0;
            for (std::size_t j = 0; j < c; ++j) gs += gz[i * c + j];
            for (std::size_t j = 0; j < c; ++j) (*gx)[i * c + j] += gz[i * c + j] - std::exp(y[i * c + j]) * gs;
        }
    });
}

/// Picks one column per row: out[i] = a[i, index[i]], shape [r, 1].
inline Var pick_cols(const Var& a, const std::vector<std::size_t>& index) {
    const Tensor& x = a.value();
    const std::size_t r = x.rows(), c = x.cols();
    if (index.size() != r) throw ShapeError("pick_cols: index count does not match rows");
    Tensor out = Tensor::zeros(r, 1);
    for (std::size_t i = 0; i < r; ++i) {
        if (index[i] >= c) throw ShapeError("pick_cols: index out of range");
        out[i] = x[i * c + index[i]];
    }
    const std::size_t ia = a.id();
    return a.graph().emit("pick_cols", std::move(out), {ia}, [=](Graph& gr, std::size_t self) {
        Tensor* gx = gr.grad_target(ia);
        if (!gx) return;
        const Tensor& gz = gr.grad(self);
        for (std::size_t i = 0; i < r; ++i) (*gx)[i * c + index[i]] += gz[i];
    });
}

} // namespace ops

inline Var operator+(const Var& a, const Var& b) { return ops::add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return ops::sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return ops::mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return ops::div(a, b); }
inline Var operator-(const Var& a) { return ops::neg(a); }
inline Var operator*(const Var& a, double c) { return ops::scale(a, c); }
inline Var operator*(double c, const Var& a) { return ops::scale(a, c); }
inline Var operator+(const Var& a, double c) { return ops::shift(a, c); }
inline Var operator+(double c, const Var& a) { return ops::shift(a, c); }
inline Var operator-(const Var& a, double c) { return ops::shift(a, -c); }

} // namespace disbelief
