#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "gnnaudit/matrix.hpp"
#include "gnnaudit/rng.hpp"

namespace gnnaudit {

constexpr double kProbClamp = 1e-12;

// Row-wise softmax with max subtraction for overflow safety.
inline Matrix softmax_rows(const Matrix& logits) {
    require_finite(logits, "softmax input");
    if (logits.cols == 0) throw std::invalid_argument("softmax: empty rows");
    Matrix out(logits.rows, logits.cols);
    for (int i = 0; i < logits.rows; ++i) {
        const double* in = logits.row(i);
        double* o = out.row(i);
        double mx = in[0];
        for (int j = 1; j < logits.cols; ++j) mx = std::max(mx, in[j]);
        double sum = 0.0;
        for (int j = 0; j < logits.cols; ++j) {
            o[j] = std::exp(in[j] - mx);
            sum += o[j];
        }
        for (int j = 0; j < logits.cols; ++j) o[j] /= sum;
    }
    return out;
}

// Given Y = softmax(logits) and dL/dY, returns dL/dlogits.
inline Matrix softmax_backward(const Matrix& y, const Matrix& dy) {
    if (!y.same_shape(dy)) throw std::invalid_argument("softmax_backward: shape mismatch");
    Matrix dlogits(y.rows, y.cols);
    for (int i = 0; i < y.rows; ++i) {
        const double* yr = y.row(i);
        const double* dr = dy.row(i);
        double dot = 0.0;
        for (int j = 0; j < y.cols; ++j) dot += yr[j] * dr[j];
        double* o = dlogits.row(i);
        for (int j = 0; j < y.cols; ++j) o[j] = yr[j] * (dr[j] - dot);
    }
    return dlogits;
}

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

inline double leaky_relu(double x, double slope = 0.2) { return x > 0.0 ? x : slope * x; }

inline Matrix relu_rows(const Matrix& m) {
    Matrix out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.data.size(); ++i) out.data[i] = relu(m.data[i]);
    return out;
}

// Mean cross-entropy of the given rows against integer labels, probabilities
// clamped at 1e-12 so a confident wrong prediction stays finite.
inline double cross_entropy(const Matrix& probs, const std::vector<std::int32_t>& labels,
                            const std::vector<std::int32_t>* rows = nullptr) {
    const int n = rows ? static_cast<int>(rows->size()) : probs.rows;
    if (!rows && static_cast<int>(labels.size()) != probs.rows)
        throw std::invalid_argument("cross_entropy: one label per row required");
    if (n == 0) throw std::invalid_argument("cross_entropy: empty row set");
    double total = 0.0;
    for (int t = 0; t < n; ++t) {
        const int i = rows ? (*rows)[static_cast<std::size_t>(t)] : t;
        if (i < 0 || i >= probs.rows) throw std::out_of_range("cross_entropy: row index out of range");
        const std::int32_t label = rows ? labels[static_cast<std::size_t>(t)] : labels[static_cast<std::size_t>(i)];
        if (label < 0 || label >= probs.cols) throw std::out_of_range("cross_entropy: label out of range");
        total += -std::log(std::max(probs.at(i, label), kProbClamp));
    }
    return total / n;
}

// Laplace(0, scale) via inverse CDF. scale == 0 returns exactly 0.
inline double laplace_sample(RngStream& rng, double scale) {
    if (scale < 0.0) throw std::invalid_argument("laplace_sample: scale must be non-negative");
    if (scale == 0.0) return 0.0;
    const double u = rng.uniform01() - 0.5;
    const double sgn = u < 0.0 ? -1.0 : 1.0;
    return -scale * sgn * std::log(1.0 - 2.0 * std::abs(u));
}

// Index of the row maximum; ties resolved to the lowest index so label
// decisions are deterministic.
inline int argmax_lowest(const double* row, int n) {
    if (n < 1) throw std::invalid_argument("argmax_lowest: empty row");
    int best = 0;
    for (int i = 1; i < n; ++i)
        if (row[i] > row[best]) best = i;
    return best;
}

// Adam with bias correction; one state per parameter tensor.
struct AdamState {
    Matrix m;
    Matrix v;
    long step = 0;

    AdamState() = default;
    AdamState(int rows, int cols) : m(rows, cols), v(rows, cols) {}
};

struct AdamParams {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

inline void adam_step(Matrix& param, const Matrix& grad, AdamState& state, const AdamParams& hp) {
    if (!param.same_shape(grad)) throw std::invalid_argument("adam_step: gradient shape mismatch");
    if (state.step == 0 && state.m.size() == 0) state = AdamState(param.rows, param.cols);
    if (!state.m.same_shape(param)) throw std::invalid_argument("adam_step: state shape mismatch");
    state.step += 1;
    const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < param.data.size(); ++i) {
        const double g = grad.data[i];
        state.m.data[i] = hp.beta1 * state.m.data[i] + (1.0 - hp.beta1) * g;
        state.v.data[i] = hp.beta2 * state.v.data[i] + (1.0 - hp.beta2) * g * g;
        const double mhat = state.m.data[i] / c1;
        const double vhat = state.v.data[i] / c2;
        param.data[i] -= hp.lr * mhat / (std::sqrt(vhat) + hp.eps);
    }
}

// Central finite difference d f / d x at x.
inline double finite_difference(const std::function<double(double)>& f, double x, double h = 1e-5) {
    if (h <= 0.0) throw std::invalid_argument("finite_difference: h must be positive");
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Central finite-difference gradient of a scalar loss with respect to every
// entry of the given parameter tensors. loss() must read the tensors through
// the same pointers. Used as the independent oracle for analytic backward
// passes.
inline std::vector<Matrix> finite_difference_gradient(const std::function<double()>& loss,
                                                      const std::vector<Matrix*>& params,
                                                      double h = 1e-5) {
    if (h <= 0.0) throw std::invalid_argument("finite_difference_gradient: h must be positive");
    std::vector<Matrix> grads;
    grads.reserve(params.size());
    for (Matrix* p : params) {
        Matrix g(p->rows, p->cols);
        for (std::size_t i = 0; i < p->data.size(); ++i) {
            const double saved = p->data[i];
            p->data[i] = saved + h;
            const double up = loss();
            p->data[i] = saved - h;
            const double down = loss();
            p->data[i] = saved;
            g.data[i] = (up - down) / (2.0 * h);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

// Worst-case elementwise relative error between two gradient sets; the floor
// keeps near-zero entries from dominating with finite-difference noise.
inline double gradient_max_rel_error(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("gradient_max_rel_error: tensor count mismatch");
    double worst = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t) {
        if (!a[t].same_shape(b[t])) throw std::invalid_argument("gradient_max_rel_error: shape mismatch");
        for (std::size_t i = 0; i < a[t].data.size(); ++i) {
            const double x = a[t].data[i];
            const double y = b[t].data[i];
            const double denom = std::max({std::abs(x), std::abs(y), 1e-6});
            worst = std::max(worst, std::abs(x - y) / denom);
        }
    }
    return worst;
}

}  // namespace gnnaudit
