#pragma once

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gnnaudit/graph.hpp"
#include "gnnaudit/matrix.hpp"
#include "gnnaudit/models.hpp"
#include "gnnaudit/numerics.hpp"
#include "gnnaudit/rng.hpp"

namespace gnnaudit {

enum class TrainMode { normal, overfit };

inline const char* train_mode_name(TrainMode m) { return m == TrainMode::normal ? "normal" : "overfit"; }

inline TrainMode train_mode_from_name(const std::string& s) {
    if (s == "normal") return TrainMode::normal;
    if (s == "overfit") return TrainMode::overfit;
    throw std::invalid_argument("unknown train mode '" + s + "'");
}

struct TrainConfig {
    int epochs = 200;
    double lr = 0.01;
    TrainMode mode = TrainMode::normal;
    double early_stop_train_loss = 0.01; // overfit mode target
    int eval_every = 10;
    int batch_size = 64;   // sage mini-batches
    std::string log_path;  // when set, per-epoch loss/accuracy CSV
};

inline void validate_train_config(const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (!(cfg.lr >= 1e-5 && cfg.lr <= 1e-1)) throw std::invalid_argument("TrainConfig: lr must lie in [1e-5, 1e-1]");
    if (cfg.early_stop_train_loss < 0.0) throw std::invalid_argument("TrainConfig: negative loss target");
    if (cfg.eval_every < 1) throw std::invalid_argument("TrainConfig: eval_every must be >= 1");
    if (cfg.batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
}

struct TrainedModel {
    GnnModel model;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    std::vector<double> loss_curve; // one entry per epoch actually run
    bool overfit_reached = false;
    int epochs_run = 0;
};

// Fraction of rows whose argmax (lowest-index tie-break) equals the label.
inline double accuracy(const Matrix& posteriors, const std::vector<int>& labels, const NodeSet* rows = nullptr) {
    const std::size_t count = rows ? rows->size() : static_cast<std::size_t>(posteriors.rows);
    if (count == 0) throw std::invalid_argument("accuracy: empty evaluation set");
    int hits = 0;
    for (std::size_t t = 0; t < count; ++t) {
        const int r = rows ? static_cast<int>((*rows)[t]) : static_cast<int>(t);
        const int label = rows ? labels[static_cast<std::size_t>(t)] : labels[static_cast<std::size_t>(r)];
        if (argmax_lowest(posteriors.row(r), posteriors.cols) == label) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(count);
}

// Fraction of rows whose maximum entry exceeds the threshold.
inline double max_posterior_fraction(const Matrix& posteriors, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("max_posterior_fraction: threshold must lie in (0,1)");
    if (posteriors.rows == 0) throw std::invalid_argument("max_posterior_fraction: empty posterior matrix");
    int hits = 0;
    for (int r = 0; r < posteriors.rows; ++r) {
        const double* row = posteriors.row(r);
        double mx = row[0];
        for (int c = 1; c < posteriors.cols; ++c) mx = std::max(mx, row[c]);
        if (mx > threshold) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(posteriors.rows);
}

namespace detail {

// Gradient of mean cross-entropy w.r.t. the posteriors; zero outside the
// evaluated rows. Matches the clamped loss cross_entropy computes, so the
// finite-difference oracle sees a consistent function.
inline Matrix ce_posterior_gradient(const Matrix& posteriors, const std::vector<int>& labels, const NodeSet* rows) {
    Matrix dy(posteriors.rows, posteriors.cols);
    const std::size_t count = rows ? rows->size() : static_cast<std::size_t>(posteriors.rows);
    if (count == 0) throw std::invalid_argument("ce_posterior_gradient: empty row set");
    const double inv = 1.0 / static_cast<double>(count);
    for (std::size_t t = 0; t < count; ++t) {
        const int r = rows ? static_cast<int>((*rows)[t]) : static_cast<int>(t);
        const int label = rows ? labels[static_cast<std::size_t>(t)] : labels[static_cast<std::size_t>(r)];
        if (label < 0 || label >= posteriors.cols) throw std::out_of_range("ce_posterior_gradient: label out of range");
        const double p = posteriors.at(r, label);
        if (p > kProbClamp) dy.at(r, label) = -inv / p;
    }
    return dy;
}

struct EpochLogger {
    std::ofstream out;
    explicit EpochLogger(const std::string& path) {
        if (!path.empty()) {
            out.open(path);
            if (!out) throw std::runtime_error("train_model: cannot open log path " + path);
            out << "epoch,loss,train_accuracy\n";
        }
    }
    void log(int epoch, double loss, double acc) {
        if (out.is_open()) out << epoch << ',' << loss << ',' << acc << '\n';
    }
};

}  // namespace detail

// Cross-entropy training on train_nodes only: full-batch Adam for gcn/sgc/gat,
// mini-batch with per-batch neighbor resampling for sage. Throws on divergence
// (non-finite loss). Deterministic for a fixed rng stream state.
inline TrainedModel train_model(const Graph& g, const NodeSet& train_nodes, GnnModel model, const TrainConfig& cfg,
                                RngStream& rng) {
    validate_train_config(cfg);
    if (train_nodes.empty()) throw std::invalid_argument("train_model: empty train set");
    std::vector<int> train_labels;
    train_labels.reserve(train_nodes.size());
    for (NodeId v : train_nodes) {
        g.check_node(v);
        train_labels.push_back(g.labels[static_cast<std::size_t>(v)]);
    }

    TrainedModel out;
    out.model = std::move(model);
    auto params = out.model.params();
    std::vector<AdamState> states(params.size());
    AdamParams hp;
    hp.lr = cfg.lr;

    const int hard_cap = cfg.mode == TrainMode::overfit ? cfg.epochs * 10 : cfg.epochs;
    detail::EpochLogger logger(cfg.log_path);

    for (int epoch = 0; epoch < hard_cap; ++epoch) {
        double epoch_loss = 0.0;
        double epoch_acc = 0.0;
        if (out.model.kind == ModelKind::sage) {
            NodeSet order = train_nodes;
            rng.shuffle(order);
            double weighted_loss = 0.0;
            int correct = 0;
            for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
                const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
                NodeSet batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                              order.begin() + static_cast<std::ptrdiff_t>(stop));
                std::vector<int> batch_labels;
                batch_labels.reserve(batch.size());
                for (NodeId v : batch) batch_labels.push_back(g.labels[static_cast<std::size_t>(v)]);
                ForwardTrace trace;
                Matrix y = sage_forward(g, out.model, batch, rng, &trace);
                const double loss = cross_entropy(y, batch_labels);
                if (!std::isfinite(loss)) throw std::runtime_error("train_model: training diverged (non-finite loss)");
                weighted_loss += loss * static_cast<double>(batch.size());
                for (int r = 0; r < y.rows; ++r)
                    if (argmax_lowest(y.row(r), y.cols) == batch_labels[static_cast<std::size_t>(r)]) ++correct;
                Matrix dy = detail::ce_posterior_gradient(y, batch_labels, nullptr);
                auto grads = model_backward(out.model, trace, dy);
                for (std::size_t t = 0; t < params.size(); ++t) adam_step(*params[t], grads[t], states[t], hp);
            }
            epoch_loss = weighted_loss / static_cast<double>(order.size());
            epoch_acc = static_cast<double>(correct) / static_cast<double>(order.size());
        } else {
            ForwardTrace trace;
            Matrix y = model_forward(g, out.model, &trace);
            epoch_loss = cross_entropy(y, train_labels, &train_nodes);
            if (!std::isfinite(epoch_loss)) throw std::runtime_error("train_model: training diverged (non-finite loss)");
            epoch_acc = accuracy(y, train_labels, &train_nodes);
            Matrix dy = detail::ce_posterior_gradient(y, train_labels, &train_nodes);
            auto grads = model_backward(out.model, trace, dy);
            for (std::size_t t = 0; t < params.size(); ++t) adam_step(*params[t], grads[t], states[t], hp);
        }
        out.loss_curve.push_back(epoch_loss);
        out.epochs_run = epoch + 1;
        logger.log(epoch, epoch_loss, epoch_acc);
        if (cfg.mode == TrainMode::overfit && epoch_loss <= cfg.early_stop_train_loss) {
            out.overfit_reached = true;
            break;
        }
    }
    if (cfg.mode == TrainMode::overfit && !out.overfit_reached)
        out.overfit_reached = out.loss_curve.back() <= cfg.early_stop_train_loss;

    // Final train accuracy from a clean evaluation pass.
    if (out.model.kind == ModelKind::sage) {
        Matrix y = sage_forward(g, out.model, train_nodes, rng);
        out.train_accuracy = accuracy(y, train_labels, nullptr);
    } else {
        Matrix y = model_forward(g, out.model);
        out.train_accuracy = accuracy(y, train_labels, &train_nodes);
    }
    return out;
}

// Posteriors computed with the query graph's neighborhoods, rows ordered by
// the given node list. sage consumes the rng stream for neighbor sampling.
inline Matrix predict_posteriors(const GnnModel& model, const Graph& query_graph, const NodeSet& nodes,
                                 RngStream* rng = nullptr) {
    if (nodes.empty()) throw std::invalid_argument("predict_posteriors: empty node list");
    for (NodeId v : nodes) query_graph.check_node(v);
    if (model.kind == ModelKind::sage) {
        if (!rng) throw std::invalid_argument("predict_posteriors: sage requires an rng stream");
        return sage_forward(query_graph, model, nodes, *rng);
    }
    Matrix full = model_forward(query_graph, model);
    Matrix out(static_cast<int>(nodes.size()), full.cols);
    for (std::size_t t = 0; t < nodes.size(); ++t) {
        const double* src = full.row(nodes[t]);
        std::copy(src, src + full.cols, out.row(static_cast<int>(t)));
    }
    return out;
}

inline Matrix predict_posteriors(const TrainedModel& trained, const Graph& query_graph, const NodeSet& nodes,
                                 RngStream* rng = nullptr) {
    return predict_posteriors(trained.model, query_graph, nodes, rng);
}

}  // namespace gnnaudit
