#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "gnnaudit/graph.hpp"
#include "gnnaudit/matrix.hpp"
#include "gnnaudit/numerics.hpp"

namespace gnnaudit {

// Probability that a random positive outranks a random negative, ties counted
// one half (Mann-Whitney average-rank form). Exactly equal to the brute-force
// all-pairs count: rank sums of halves stay below 2^53 at these sizes, so the
// arithmetic is exact.
inline double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auroc: size mismatch");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw std::invalid_argument("auroc: labels must be 0/1");
        n_pos += static_cast<std::size_t>(l);
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("auroc: both classes must be present");
    for (double s : scores)
        if (!std::isfinite(s)) throw std::invalid_argument("auroc: non-finite score");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // double rank = 2x the 1-based rank, so tie averages stay integral
    double pos_double_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double double_rank = static_cast<double>(i + 1 + j); // (i+1 + j) = 2 * average 1-based rank
        for (std::size_t t = i; t < j; ++t)
            if (labels[order[t]] == 1) pos_double_rank_sum += double_rank;
        i = j;
    }
    const double np = static_cast<double>(n_pos);
    const double nn = static_cast<double>(n_neg);
    return (pos_double_rank_sum / 2.0 - np * (np + 1.0) / 2.0) / (np * nn);
}

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
};

inline PrecisionRecall precision_recall(const std::vector<int>& predicted, const std::vector<int>& labels) {
    if (predicted.size() != labels.size()) throw std::invalid_argument("precision_recall: size mismatch");
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i] != 0 && predicted[i] != 1) throw std::invalid_argument("precision_recall: predictions must be 0/1");
        if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("precision_recall: labels must be 0/1");
        if (predicted[i] == 1 && labels[i] == 1) ++tp;
        else if (predicted[i] == 1) ++fp;
        else if (labels[i] == 1) ++fn;
    }
    PrecisionRecall pr;
    pr.precision = (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    pr.recall = (tp + fn) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    return pr;
}

// Fraction of rows whose argmax class changes between the true and released
// posteriors; argmax ties broken to the lowest class index on both sides.
inline double label_loss(const Matrix& true_posteriors, const Matrix& released_posteriors) {
    if (!true_posteriors.same_shape(released_posteriors)) throw std::invalid_argument("label_loss: shape mismatch");
    if (true_posteriors.rows == 0) throw std::invalid_argument("label_loss: empty input");
    int changed = 0;
    for (int r = 0; r < true_posteriors.rows; ++r)
        if (argmax_lowest(true_posteriors.row(r), true_posteriors.cols) !=
            argmax_lowest(released_posteriors.row(r), released_posteriors.cols))
            ++changed;
    return static_cast<double>(changed) / static_cast<double>(true_posteriors.rows);
}

namespace detail {
inline void check_distribution(const double* row, int n, const char* what) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!(row[i] >= 0.0)) throw std::invalid_argument(std::string(what) + ": negative or NaN entry");
        sum += row[i];
    }
    if (std::abs(sum - 1.0) > 1e-6) throw std::invalid_argument(std::string(what) + ": row does not sum to 1");
}
}  // namespace detail

// Jensen-Shannon distance with base-2 logs: sqrt of the JS divergence, so the
// value lies in [0,1] with 1 reached by disjoint one-hot distributions.
inline double js_distance(const double* p, const double* q, int n) {
    detail::check_distribution(p, n, "js_distance");
    detail::check_distribution(q, n, "js_distance");
    double div = 0.0;
    for (int i = 0; i < n; ++i) {
        const double m = 0.5 * (p[i] + q[i]);
        if (p[i] > 0.0) div += 0.5 * p[i] * std::log2(p[i] / m);
        if (q[i] > 0.0) div += 0.5 * q[i] * std::log2(q[i] / m);
    }
    if (div < 0.0) div = 0.0; // guard rounding
    if (div > 1.0) div = 1.0;
    return std::sqrt(div);
}

// Mean Jensen-Shannon distance between matching rows.
inline double confidence_distortion(const Matrix& true_posteriors, const Matrix& released_posteriors) {
    if (!true_posteriors.same_shape(released_posteriors)) throw std::invalid_argument("confidence_distortion: shape mismatch");
    if (true_posteriors.rows == 0) throw std::invalid_argument("confidence_distortion: empty input");
    double total = 0.0;
    for (int r = 0; r < true_posteriors.rows; ++r)
        total += js_distance(true_posteriors.row(r), released_posteriors.row(r), true_posteriors.cols);
    return total / static_cast<double>(true_posteriors.rows);
}

// Fraction of v's one-hop neighbors sharing v's membership label; undefined
// (throws) for isolated nodes — histogram builders must exclude them.
inline double homophily(const Graph& adversary_graph, const std::vector<int>& membership, NodeId v) {
    adversary_graph.check_node(v);
    if (membership.size() != static_cast<std::size_t>(adversary_graph.num_nodes))
        throw std::invalid_argument("homophily: membership size mismatch");
    const auto& nbrs = adversary_graph.neighbors(v);
    if (nbrs.empty()) throw std::domain_error("homophily: undefined for isolated node");
    const int mine = membership[static_cast<std::size_t>(v)];
    int same = 0;
    for (NodeId u : nbrs)
        if (membership[static_cast<std::size_t>(u)] == mine) ++same;
    return static_cast<double>(same) / static_cast<double>(nbrs.size());
}

struct HomophilyHistogram {
    // [true homophily bin][predicted homophily bin], 10 bins over [0,1]
    std::array<std::array<std::int64_t, 10>, 10> correct{};
    std::array<std::array<std::int64_t, 10>, 10> incorrect{};
    std::int64_t excluded_isolated = 0;

    std::int64_t total_mass() const {
        std::int64_t total = 0;
        for (const auto& h : {correct, incorrect})
            for (const auto& row : h)
                for (std::int64_t c : row) total += c;
        return total;
    }
    bool operator==(const HomophilyHistogram& o) const {
        return correct == o.correct && incorrect == o.incorrect && excluded_isolated == o.excluded_isolated;
    }
};

inline int homophily_bin(double h) {
    int b = static_cast<int>(h * 10.0);
    if (b > 9) b = 9;
    if (b < 0) b = 0;
    return b;
}

// Joint (true, predicted) homophily histograms over the evaluated nodes,
// split by whether the attack's membership call at the node was correct.
inline HomophilyHistogram homophily_joint_histogram(const Graph& adversary_graph, const std::vector<int>& true_membership,
                                                    const std::vector<int>& predicted_membership,
                                                    const NodeSet& evaluated_nodes) {
    HomophilyHistogram out;
    for (NodeId v : evaluated_nodes) {
        adversary_graph.check_node(v);
        if (adversary_graph.degree(v) == 0) {
            ++out.excluded_isolated;
            continue;
        }
        const double ht = homophily(adversary_graph, true_membership, v);
        const double hp = homophily(adversary_graph, predicted_membership, v);
        const bool correct = true_membership[static_cast<std::size_t>(v)] == predicted_membership[static_cast<std::size_t>(v)];
        auto& hist = correct ? out.correct : out.incorrect;
        ++hist[static_cast<std::size_t>(homophily_bin(ht))][static_cast<std::size_t>(homophily_bin(hp))];
    }
    return out;
}

struct MetricsReport {
    double attack_auroc = 0.0;
    double attack_precision = 0.0;
    double attack_recall = 0.0;
    double target_train_acc = 0.0;
    double target_test_acc = 0.0;
    double label_loss = 0.0;
    double confidence_distortion = 0.0;
    HomophilyHistogram homophily_joint;

    bool operator==(const MetricsReport& o) const {
        return attack_auroc == o.attack_auroc && attack_precision == o.attack_precision &&
               attack_recall == o.attack_recall && target_train_acc == o.target_train_acc &&
               target_test_acc == o.target_test_acc && label_loss == o.label_loss &&
               confidence_distortion == o.confidence_distortion && homophily_joint == o.homophily_joint;
    }
};

struct MetricsAggregate {
    MetricsReport mean; // histograms are summed, not averaged
    MetricsReport stddev;
    int count = 0;
};

// Per-metric mean and population standard deviation; histograms accumulate by
// summation into the mean slot (stddev histograms stay empty).
inline MetricsAggregate aggregate(const std::vector<MetricsReport>& reports) {
    if (reports.empty()) throw std::invalid_argument("aggregate: empty report list");
    const double n = static_cast<double>(reports.size());
    auto fields = [](MetricsReport& r) {
        return std::array<double*, 7>{&r.attack_auroc, &r.attack_precision, &r.attack_recall,
                                      &r.target_train_acc, &r.target_test_acc, &r.label_loss,
                                      &r.confidence_distortion};
    };
    auto fields_const = [](const MetricsReport& r) {
        return std::array<const double*, 7>{&r.attack_auroc, &r.attack_precision, &r.attack_recall,
                                            &r.target_train_acc, &r.target_test_acc, &r.label_loss,
                                            &r.confidence_distortion};
    };
    MetricsAggregate agg;
    agg.count = static_cast<int>(reports.size());
    auto mean_fields = fields(agg.mean);
    for (const auto& r : reports) {
        auto src = fields_const(r);
        for (std::size_t f = 0; f < src.size(); ++f) *mean_fields[f] += *src[f];
    }
    for (double* f : mean_fields) *f /= n;
    auto std_fields = fields(agg.stddev);
    for (const auto& r : reports) {
        auto src = fields_const(r);
        for (std::size_t f = 0; f < src.size(); ++f) {
            const double d = *src[f] - *mean_fields[f];
            *std_fields[f] += d * d;
        }
    }
    for (double* f : std_fields) *f = std::sqrt(*f / n);
    for (const auto& r : reports) {
        for (std::size_t i = 0; i < 10; ++i)
            for (std::size_t j = 0; j < 10; ++j) {
                agg.mean.homophily_joint.correct[i][j] += r.homophily_joint.correct[i][j];
                agg.mean.homophily_joint.incorrect[i][j] += r.homophily_joint.incorrect[i][j];
            }
        agg.mean.homophily_joint.excluded_isolated += r.homophily_joint.excluded_isolated;
    }
    return agg;
}

}  // namespace gnnaudit
