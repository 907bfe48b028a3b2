#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "gnnaudit/defense.hpp"
#include "gnnaudit/graph.hpp"
#include "gnnaudit/matrix.hpp"
#include "gnnaudit/models.hpp"
#include "gnnaudit/numerics.hpp"
#include "gnnaudit/rng.hpp"
#include "gnnaudit/trainer.hpp"

namespace gnnaudit {

enum class Setting { tstf, tsts };

inline const char* setting_name(Setting s) { return s == Setting::tstf ? "tstf" : "tsts"; }

inline Setting setting_from_name(const std::string& s) {
    if (s == "tstf") return Setting::tstf;
    if (s == "tsts") return Setting::tsts;
    throw std::invalid_argument("unknown setting '" + s + "'");
}

enum class ShadowSupervision { query_target, ground_truth };

inline const char* shadow_supervision_name(ShadowSupervision s) {
    return s == ShadowSupervision::query_target ? "query_target" : "ground_truth";
}

inline ShadowSupervision shadow_supervision_from_name(const std::string& s) {
    if (s == "query_target") return ShadowSupervision::query_target;
    if (s == "ground_truth") return ShadowSupervision::ground_truth;
    throw std::invalid_argument("unknown shadow supervision '" + s + "'");
}

struct SplitSizes {
    int target_train = 0;
    int shadow_train = 0;
    int shadow_out = 0;
    int attack_eval = 0;
    int target_out = 0;
};

// Table-1-style proportions scaled to the graph: four equal sets of roughly
// 630/2708 of the nodes each, with the held-out target test set taking
// whatever remains (capped at the common size).
inline SplitSizes default_split_sizes(const Graph& g) {
    const double proportion = 630.0 / 2708.0;
    int s = static_cast<int>(std::lround(static_cast<double>(g.num_nodes) * proportion));
    s = std::max(1, std::min(s, (g.num_nodes - 1) / 4));
    SplitSizes sizes;
    sizes.target_train = sizes.shadow_train = sizes.shadow_out = sizes.attack_eval = s;
    sizes.target_out = std::min(s, static_cast<int>(g.num_nodes) - 4 * s);
    return sizes;
}

// A full experimental split. The shadow-side graph pointers equal the target
// side's except in data-transfer mode, where the shadow model lives on a
// different dataset.
struct SplitSpec {
    Setting setting = Setting::tstf;
    NodeSet target_train, target_out, shadow_train, shadow_out, attack_eval;

    std::shared_ptr<const Graph> full_graph;          // target-side G
    std::shared_ptr<const Graph> adversary_graph;     // tstf: G itself; tsts: cross-edge-deleted copy
    std::shared_ptr<const Graph> target_train_graph;  // induced_subgraph(G, target_train)

    std::shared_ptr<const Graph> shadow_full_graph;
    std::shared_ptr<const Graph> shadow_adversary_graph;
    std::shared_ptr<const Graph> shadow_train_graph;  // induced_subgraph(shadow G, shadow_train)
};

namespace detail {

// Deletes every edge whose endpoints lie in different sets; unassigned nodes
// count as one further set, so only cross-set edges disappear.
inline Graph delete_cross_edges(const Graph& g, const std::vector<int>& set_id) {
    Graph out = g;
    for (NodeId v = 0; v < g.num_nodes; ++v) {
        auto& nbrs = out.adj[static_cast<std::size_t>(v)];
        nbrs.erase(std::remove_if(nbrs.begin(), nbrs.end(),
                                  [&](NodeId u) {
                                      return set_id[static_cast<std::size_t>(u)] != set_id[static_cast<std::size_t>(v)];
                                  }),
                   nbrs.end());
    }
    return out;
}

inline NodeSet take_slice(const NodeSet& pool, std::size_t& cursor, int count) {
    NodeSet out(pool.begin() + static_cast<std::ptrdiff_t>(cursor),
                pool.begin() + static_cast<std::ptrdiff_t>(cursor) + count);
    cursor += static_cast<std::size_t>(count);
    std::sort(out.begin(), out.end());
    return out;
}

inline void mark_set(std::vector<int>& set_id, const NodeSet& nodes, int id) {
    for (NodeId v : nodes) set_id[static_cast<std::size_t>(v)] = id;
}

}  // namespace detail

// Disjoint uniform node sets plus the setting's adversary graph. tsts keeps
// an edge only when both endpoints share a set (members and non-members end
// up in separate components); tstf hands the adversary the full graph.
inline SplitSpec make_splits(std::shared_ptr<const Graph> g, Setting setting, const SplitSizes& sizes,
                             RngStream& rng) {
    if (!g) throw std::invalid_argument("make_splits: null graph");
    const long total = static_cast<long>(sizes.target_train) + sizes.shadow_train + sizes.shadow_out +
                       sizes.attack_eval + sizes.target_out;
    if (sizes.target_train < 1 || sizes.shadow_train < 1 || sizes.shadow_out < 1 || sizes.attack_eval < 1 ||
        sizes.target_out < 1)
        throw std::invalid_argument("make_splits: every split size must be >= 1");
    if (total > g->num_nodes) throw std::invalid_argument("make_splits: split sizes exceed node count");

    NodeSet pool = all_nodes(*g);
    rng.shuffle(pool);
    std::size_t cursor = 0;
    SplitSpec split;
    split.setting = setting;
    split.target_train = detail::take_slice(pool, cursor, sizes.target_train);
    split.shadow_train = detail::take_slice(pool, cursor, sizes.shadow_train);
    split.shadow_out = detail::take_slice(pool, cursor, sizes.shadow_out);
    split.attack_eval = detail::take_slice(pool, cursor, sizes.attack_eval);
    split.target_out = detail::take_slice(pool, cursor, sizes.target_out);

    split.full_graph = g;
    if (setting == Setting::tstf) {
        split.adversary_graph = g;
    } else {
        std::vector<int> set_id(static_cast<std::size_t>(g->num_nodes), 5);
        detail::mark_set(set_id, split.target_train, 0);
        detail::mark_set(set_id, split.target_out, 1);
        detail::mark_set(set_id, split.shadow_train, 2);
        detail::mark_set(set_id, split.shadow_out, 3);
        detail::mark_set(set_id, split.attack_eval, 4);
        split.adversary_graph = std::make_shared<const Graph>(detail::delete_cross_edges(*g, set_id));
    }
    split.target_train_graph =
        std::make_shared<const Graph>(induced_subgraph(*split.full_graph, split.target_train).graph);

    split.shadow_full_graph = split.full_graph;
    split.shadow_adversary_graph = split.adversary_graph;
    split.shadow_train_graph =
        std::make_shared<const Graph>(induced_subgraph(*split.shadow_full_graph, split.shadow_train).graph);
    return split;
}

// Data-transfer variant: target sets drawn from g_target, shadow sets from a
// different graph g_shadow; the chosen setting applies to each side.
inline SplitSpec make_splits_transfer(std::shared_ptr<const Graph> g_target, std::shared_ptr<const Graph> g_shadow,
                                      Setting setting, const SplitSizes& target_sizes, const SplitSizes& shadow_sizes,
                                      RngStream& rng) {
    if (!g_target || !g_shadow) throw std::invalid_argument("make_splits_transfer: null graph");
    if (static_cast<long>(target_sizes.target_train) + target_sizes.attack_eval + target_sizes.target_out >
        g_target->num_nodes)
        throw std::invalid_argument("make_splits_transfer: target sizes exceed node count");
    if (static_cast<long>(shadow_sizes.shadow_train) + shadow_sizes.shadow_out > g_shadow->num_nodes)
        throw std::invalid_argument("make_splits_transfer: shadow sizes exceed node count");

    SplitSpec split;
    split.setting = setting;
    {
        NodeSet pool = all_nodes(*g_target);
        rng.shuffle(pool);
        std::size_t cursor = 0;
        split.target_train = detail::take_slice(pool, cursor, target_sizes.target_train);
        split.attack_eval = detail::take_slice(pool, cursor, target_sizes.attack_eval);
        split.target_out = detail::take_slice(pool, cursor, target_sizes.target_out);
    }
    {
        NodeSet pool = all_nodes(*g_shadow);
        rng.shuffle(pool);
        std::size_t cursor = 0;
        split.shadow_train = detail::take_slice(pool, cursor, shadow_sizes.shadow_train);
        split.shadow_out = detail::take_slice(pool, cursor, shadow_sizes.shadow_out);
    }

    split.full_graph = g_target;
    split.shadow_full_graph = g_shadow;
    if (setting == Setting::tstf) {
        split.adversary_graph = g_target;
        split.shadow_adversary_graph = g_shadow;
    } else {
        std::vector<int> target_ids(static_cast<std::size_t>(g_target->num_nodes), 5);
        detail::mark_set(target_ids, split.target_train, 0);
        detail::mark_set(target_ids, split.attack_eval, 4);
        detail::mark_set(target_ids, split.target_out, 1);
        split.adversary_graph = std::make_shared<const Graph>(detail::delete_cross_edges(*g_target, target_ids));
        std::vector<int> shadow_ids(static_cast<std::size_t>(g_shadow->num_nodes), 5);
        detail::mark_set(shadow_ids, split.shadow_train, 2);
        detail::mark_set(shadow_ids, split.shadow_out, 3);
        split.shadow_adversary_graph = std::make_shared<const Graph>(detail::delete_cross_edges(*g_shadow, shadow_ids));
    }
    split.target_train_graph =
        std::make_shared<const Graph>(induced_subgraph(*split.full_graph, split.target_train).graph);
    split.shadow_train_graph =
        std::make_shared<const Graph>(induced_subgraph(*split.shadow_full_graph, split.shadow_train).graph);
    return split;
}

struct QueryCounter {
    long long count = 0;
};

// Trains the shadow model on its induced subgraph. ground_truth uses the true
// labels and never touches the target; query_target queries the target once
// per shadow-train node (through the adversary graph) and trains toward the
// argmax class of each answer.
inline TrainedModel train_shadow(const SplitSpec& split, ShadowSupervision supervision, const TrainedModel* target,
                                 const ModelConfig& shadow_cfg, const TrainConfig& train_cfg, RngStream& init_rng,
                                 RngStream& train_rng, RngStream* query_rng = nullptr,
                                 QueryCounter* counter = nullptr) {
    if (!split.shadow_train_graph) throw std::invalid_argument("train_shadow: split has no shadow graph");
    Graph shadow_graph = *split.shadow_train_graph; // local copy: labels may be replaced in query mode

    if (supervision == ShadowSupervision::query_target) {
        if (!target) throw std::invalid_argument("train_shadow: query_target supervision requires a target model");
        const Matrix answers =
            predict_posteriors(*target, *split.shadow_adversary_graph, split.shadow_train, query_rng);
        if (counter) counter->count += static_cast<long long>(split.shadow_train.size());
        shadow_graph.num_classes = target->model.num_classes;
        for (int r = 0; r < answers.rows; ++r)
            shadow_graph.labels[static_cast<std::size_t>(r)] = argmax_lowest(answers.row(r), answers.cols);
    }

    GnnModel model = init_model(shadow_cfg, shadow_graph.feature_dim(), shadow_graph.num_classes, init_rng);
    return train_model(shadow_graph, all_nodes(shadow_graph), std::move(model), train_cfg, train_rng);
}

// The n largest posterior entries arranged in ascending order; used whenever
// shadow and target class counts differ.
inline std::vector<double> align_posteriors_topn(const std::vector<double>& p, int n) {
    if (n < 1) throw std::invalid_argument("align_posteriors_topn: n must be >= 1");
    if (static_cast<std::size_t>(n) > p.size()) throw std::invalid_argument("align_posteriors_topn: n exceeds dimension");
    std::vector<double> sorted = p;
    std::sort(sorted.begin(), sorted.end());
    return std::vector<double>(sorted.end() - n, sorted.end());
}

struct AttackDataset {
    Matrix features;         // one aligned posterior per row
    std::vector<int> labels; // 1 = member (shadow train), 0 = non-member
};

namespace detail {

inline void append_aligned_rows(Matrix& dst, int& row_cursor, const Matrix& posteriors, int count, int topn) {
    for (int r = 0; r < count; ++r) {
        if (topn > 0) {
            const std::vector<double> aligned = align_posteriors_topn(
                std::vector<double>(posteriors.row(r), posteriors.row(r) + posteriors.cols), topn);
            std::copy(aligned.begin(), aligned.end(), dst.row(row_cursor));
        } else {
            std::copy(posteriors.row(r), posteriors.row(r) + posteriors.cols, dst.row(row_cursor));
        }
        ++row_cursor;
    }
}

}  // namespace detail

// Shadow posteriors on the shadow adversary graph: shadow-train nodes labeled
// 1, shadow-out nodes labeled 0, balanced by truncating the larger class.
// topn > 0 selects top-n ascending alignment; 0 keeps raw posteriors.
inline AttackDataset build_attack_dataset(const TrainedModel& shadow, const SplitSpec& split, int topn = 0,
                                          RngStream* query_rng = nullptr) {
    if (split.shadow_train.empty() || split.shadow_out.empty())
        throw std::invalid_argument("build_attack_dataset: empty shadow sets");
    const Matrix member_post =
        predict_posteriors(shadow, *split.shadow_adversary_graph, split.shadow_train, query_rng);
    const Matrix out_post = predict_posteriors(shadow, *split.shadow_adversary_graph, split.shadow_out, query_rng);
    const int per_class = static_cast<int>(std::min(split.shadow_train.size(), split.shadow_out.size()));
    const int dim = topn > 0 ? topn : member_post.cols;
    if (topn > member_post.cols) throw std::invalid_argument("build_attack_dataset: topn exceeds posterior dimension");

    AttackDataset ds;
    ds.features = Matrix(2 * per_class, dim);
    ds.labels.assign(static_cast<std::size_t>(2 * per_class), 0);
    int cursor = 0;
    detail::append_aligned_rows(ds.features, cursor, member_post, per_class, topn);
    detail::append_aligned_rows(ds.features, cursor, out_post, per_class, topn);
    for (int i = 0; i < per_class; ++i) ds.labels[static_cast<std::size_t>(i)] = 1;
    return ds;
}

// ---------------------------------------------------------------------------
// 3-layer MLP attack model.
// ---------------------------------------------------------------------------

struct AttackModel {
    Matrix w1, b1; // input -> hidden1
    Matrix w2, b2; // hidden1 -> hidden2
    Matrix w3, b3; // hidden2 -> 2 classes
    int input_dim = 0;
};

struct AttackTrainConfig {
    int hidden1 = 64;
    int hidden2 = 32;
    int epochs = 150;
    double lr = 0.01;
};

namespace detail {

inline Matrix add_row_bias(Matrix m, const Matrix& bias) {
    for (int r = 0; r < m.rows; ++r) {
        double* row = m.row(r);
        const double* b = bias.row(0);
        for (int c = 0; c < m.cols; ++c) row[c] += b[c];
    }
    return m;
}

inline Matrix col_sums(const Matrix& m) {
    Matrix out(1, m.cols);
    for (int r = 0; r < m.rows; ++r) {
        const double* row = m.row(r);
        for (int c = 0; c < m.cols; ++c) out.at(0, c) += row[c];
    }
    return out;
}

struct AttackForward {
    Matrix h1pre, h1, h2pre, h2, y;
};

inline AttackForward attack_forward(const AttackModel& m, const Matrix& x) {
    if (x.cols != m.input_dim) throw std::invalid_argument("attack model: input dimension mismatch");
    AttackForward f;
    f.h1pre = add_row_bias(mat_mul(x, m.w1), m.b1);
    f.h1 = relu_rows(f.h1pre);
    f.h2pre = add_row_bias(mat_mul(f.h1, m.w2), m.b2);
    f.h2 = relu_rows(f.h2pre);
    f.y = softmax_rows(add_row_bias(mat_mul(f.h2, m.w3), m.b3));
    return f;
}

}  // namespace detail

inline Matrix attack_predict(const AttackModel& m, const Matrix& features) {
    return detail::attack_forward(m, features).y;
}

// Full-batch Adam on cross-entropy; deterministic for a fixed stream state.
inline AttackModel train_attack_mlp(const AttackDataset& data, const AttackTrainConfig& cfg, RngStream& rng) {
    if (cfg.hidden1 < 1 || cfg.hidden2 < 1 || cfg.epochs < 1) throw std::invalid_argument("train_attack_mlp: bad config");
    int per_class[2] = {0, 0};
    for (int l : data.labels) {
        if (l != 0 && l != 1) throw std::invalid_argument("train_attack_mlp: labels must be 0/1");
        ++per_class[l];
    }
    if (per_class[0] < 2 || per_class[1] < 2)
        throw std::invalid_argument("train_attack_mlp: need at least two examples per class");

    AttackModel m;
    m.input_dim = data.features.cols;
    m.w1 = detail::glorot(m.input_dim, cfg.hidden1, rng);
    m.w2 = detail::glorot(cfg.hidden1, cfg.hidden2, rng);
    m.w3 = detail::glorot(cfg.hidden2, 2, rng);
    m.b1 = Matrix(1, cfg.hidden1);
    m.b2 = Matrix(1, cfg.hidden2);
    m.b3 = Matrix(1, 2);

    std::vector<Matrix*> params{&m.w1, &m.b1, &m.w2, &m.b2, &m.w3, &m.b3};
    std::vector<AdamState> states(params.size());
    AdamParams hp;
    hp.lr = cfg.lr;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        detail::AttackForward f = detail::attack_forward(m, data.features);
        const double loss = cross_entropy(f.y, data.labels);
        if (!std::isfinite(loss)) throw std::runtime_error("train_attack_mlp: training diverged (non-finite loss)");
        Matrix dy = detail::ce_posterior_gradient(f.y, data.labels, nullptr);
        Matrix dlogits = softmax_backward(f.y, dy);
        Matrix dw3 = mat_mul_tn(f.h2, dlogits);
        Matrix db3 = detail::col_sums(dlogits);
        Matrix dh2 = detail::relu_mask_mul(mat_mul_nt(dlogits, m.w3), f.h2pre);
        Matrix dw2 = mat_mul_tn(f.h1, dh2);
        Matrix db2 = detail::col_sums(dh2);
        Matrix dh1 = detail::relu_mask_mul(mat_mul_nt(dh2, m.w2), f.h1pre);
        Matrix dw1 = mat_mul_tn(data.features, dh1);
        Matrix db1 = detail::col_sums(dh1);
        Matrix* grads[6] = {&dw1, &db1, &dw2, &db2, &dw3, &db3};
        for (std::size_t t = 0; t < params.size(); ++t) adam_step(*params[t], *grads[t], states[t], hp);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Membership inference on the evaluation set.
// ---------------------------------------------------------------------------

struct MembershipResult {
    NodeSet eval_nodes;               // members first, then non-members
    std::vector<int> labels;          // ground-truth membership, balanced
    std::vector<double> scores;       // attack member-class probability
    Matrix true_posteriors;           // undefended target posteriors
    Matrix released_posteriors;       // what the defense actually released
};

// Queries the target for every evaluation node through the adversary graph
// (and through the defense when configured), then scores each released
// posterior with the attack model. Half the nodes are members from V_t, half
// non-members from the attack-eval set.
inline MembershipResult infer_membership(const AttackModel& attack, const TrainedModel& target, const SplitSpec& split,
                                         const DefenseConfig& defense, int topn, RngStream& defense_rng,
                                         RngStream* query_rng = nullptr) {
    if (split.target_train.empty() || split.attack_eval.empty())
        throw std::invalid_argument("infer_membership: empty evaluation sets");
    const int per_class = static_cast<int>(std::min(split.target_train.size(), split.attack_eval.size()));
    MembershipResult res;
    res.eval_nodes.reserve(static_cast<std::size_t>(2 * per_class));
    res.eval_nodes.insert(res.eval_nodes.end(), split.target_train.begin(), split.target_train.begin() + per_class);
    res.eval_nodes.insert(res.eval_nodes.end(), split.attack_eval.begin(), split.attack_eval.begin() + per_class);
    res.labels.assign(static_cast<std::size_t>(2 * per_class), 0);
    for (int i = 0; i < per_class; ++i) res.labels[static_cast<std::size_t>(i)] = 1;

    const Graph& adversary = *split.adversary_graph;
    res.true_posteriors = predict_posteriors(target, adversary, res.eval_nodes, query_rng);

    const int classes = res.true_posteriors.cols;
    res.released_posteriors = Matrix(res.true_posteriors.rows, classes);
    for (int r = 0; r < res.true_posteriors.rows; ++r) {
        const double* src = res.true_posteriors.row(r);
        std::vector<double> released;
        switch (defense.kind) {
            case DefenseKind::none:
                released.assign(src, src + classes);
                break;
            case DefenseKind::vanpd:
            case DefenseKind::lbp:
                released = apply_output_defense(std::vector<double>(src, src + classes), defense, defense_rng);
                break;
            case DefenseKind::nsd:
                released = nsd_posterior_row(adversary, target.model, res.eval_nodes[static_cast<std::size_t>(r)],
                                             defense.k, defense_rng, query_rng, src);
                break;
        }
        std::copy(released.begin(), released.end(), res.released_posteriors.row(r));
    }

    Matrix features(res.released_posteriors.rows, topn > 0 ? topn : classes);
    int cursor = 0;
    detail::append_aligned_rows(features, cursor, res.released_posteriors, res.released_posteriors.rows, topn);
    if (features.cols != attack.input_dim)
        throw std::invalid_argument("infer_membership: aligned posterior dimension does not match attack model");
    const Matrix y = attack_predict(attack, features);
    res.scores.resize(static_cast<std::size_t>(y.rows));
    for (int r = 0; r < y.rows; ++r) res.scores[static_cast<std::size_t>(r)] = y.at(r, 1);
    return res;
}

}  // namespace gnnaudit
