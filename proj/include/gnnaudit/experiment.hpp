#pragma once

#include <atomic>
#include <chrono>
#include <exception>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "gnnaudit/attack.hpp"
#include "gnnaudit/config.hpp"
#include "gnnaudit/dataset.hpp"
#include "gnnaudit/defense.hpp"
#include "gnnaudit/graph.hpp"
#include "gnnaudit/metrics.hpp"
#include "gnnaudit/models.hpp"
#include "gnnaudit/report.hpp"
#include "gnnaudit/rng.hpp"
#include "gnnaudit/trainer.hpp"

namespace gnnaudit {

// One repetition's results at every evaluated defense point; per_point[0] is
// the primary defense from the config. Each point's membership scores ride
// along so the utility metrics can be re-derived from the raw results.
struct RepetitionOutcome {
    std::vector<MetricsReport> per_point;
    std::vector<MembershipResult> per_point_membership;
    long long target_queries = 0;
};

namespace detail {

inline Graph build_dataset(const DatasetSpec& ds, std::uint64_t seed) {
    if (ds.kind == "path") return load_dataset(ds.path, ds.declared_classes);
    if (ds.kind == "sbm") return generate_sbm(ds.sbm, seed);
    if (ds.kind == "cora_replica") return generate_citation_replica(cora_replica_params(), seed);
    if (ds.kind == "citeseer_replica") return generate_citation_replica(citeseer_replica_params(), seed);
    throw std::invalid_argument("unknown dataset kind '" + ds.kind + "'");
}

}  // namespace detail

// Every defense point a run evaluates: the primary defense first, then an
// automatic undefended baseline when the primary is itself a defense, then
// the configured sweep points. Report-wise, points[0] populates
// splits/aggregate and points[1:] become the sweep table.
inline std::vector<DefenseConfig> evaluation_points(const ExperimentConfig& cfg) {
    std::vector<DefenseConfig> points;
    points.push_back(cfg.defense);
    if (cfg.defense.kind != DefenseKind::none) points.emplace_back();
    points.insert(points.end(), cfg.sweep.begin(), cfg.sweep.end());
    return points;
}

// topn = 0 in the config means: raw posteriors when target and shadow agree on
// the class count, otherwise the smaller class count.
inline int resolve_topn(const ExperimentConfig& cfg, int target_classes, int shadow_output_classes) {
    if (cfg.topn > 0) return cfg.topn;
    if (target_classes == shadow_output_classes) return 0;
    return std::min(target_classes, shadow_output_classes);
}

// Runs one full repetition: split, target + shadow training, attack training,
// and membership inference at every defense point. All randomness comes from
// streams indexed by the repetition, so repetitions are order-independent.
inline RepetitionOutcome run_repetition(const ExperimentConfig& cfg, const std::vector<DefenseConfig>& points,
                                        std::shared_ptr<const Graph> g_target, std::shared_ptr<const Graph> g_shadow,
                                        int rep) {
    const auto r = static_cast<std::uint64_t>(rep);
    RngStream split_rng(cfg.master_seed, StreamId::split, r);
    const SplitSizes target_sizes = cfg.sizes_set ? cfg.sizes : default_split_sizes(*g_target);
    SplitSpec split;
    if (cfg.transfer) {
        const SplitSizes shadow_sizes =
            cfg.shadow_sizes_set ? cfg.shadow_sizes
                                 : (g_shadow == g_target ? target_sizes : default_split_sizes(*g_shadow));
        split = make_splits_transfer(g_target, g_shadow, cfg.setting, target_sizes, shadow_sizes, split_rng);
    } else {
        split = make_splits(g_target, cfg.setting, target_sizes, split_rng);
    }

    RngStream query_rng(cfg.master_seed, StreamId::query, r);

    RngStream target_init(cfg.master_seed, StreamId::init, 2 * r);
    RngStream target_train_rng(cfg.master_seed, StreamId::train, 2 * r);
    GnnModel target_model = init_model(cfg.target_model, split.target_train_graph->feature_dim(),
                                       split.target_train_graph->num_classes, target_init);
    TrainedModel target =
        train_model(*split.target_train_graph, all_nodes(*split.target_train_graph), std::move(target_model),
                    cfg.train, target_train_rng);
    {
        const Matrix y = predict_posteriors(target, *split.adversary_graph, split.target_out, &query_rng);
        std::vector<int> out_labels;
        out_labels.reserve(split.target_out.size());
        for (NodeId v : split.target_out) out_labels.push_back(split.full_graph->labels[static_cast<std::size_t>(v)]);
        target.test_accuracy = accuracy(y, out_labels);
    }

    RngStream shadow_init(cfg.master_seed, StreamId::init, 2 * r + 1);
    RngStream shadow_train_rng(cfg.master_seed, StreamId::train, 2 * r + 1);
    QueryCounter queries;
    const TrainedModel shadow = train_shadow(split, cfg.supervision, &target, cfg.shadow_model, cfg.train, shadow_init,
                                             shadow_train_rng, &query_rng, &queries);

    const int shadow_output_classes = cfg.supervision == ShadowSupervision::query_target
                                          ? split.full_graph->num_classes
                                          : split.shadow_full_graph->num_classes;
    const int topn = resolve_topn(cfg, split.full_graph->num_classes, shadow_output_classes);

    const AttackDataset attack_data = build_attack_dataset(shadow, split, topn, &query_rng);
    RngStream attack_rng(cfg.master_seed, StreamId::attack, r);
    const AttackModel attack = train_attack_mlp(attack_data, cfg.attack, attack_rng);

    RepetitionOutcome out;
    out.target_queries = queries.count;
    out.per_point.reserve(points.size());
    out.per_point_membership.reserve(points.size());
    for (std::size_t pi = 0; pi < points.size(); ++pi) {
        RngStream defense_rng(cfg.master_seed, StreamId::defense, r * 4096 + pi);
        MembershipResult mem = infer_membership(attack, target, split, points[pi], topn, defense_rng, &query_rng);

        std::vector<int> predicted(mem.scores.size());
        for (std::size_t i = 0; i < mem.scores.size(); ++i) predicted[i] = mem.scores[i] >= 0.5 ? 1 : 0;

        MetricsReport m;
        m.attack_auroc = auroc(mem.scores, mem.labels);
        const PrecisionRecall pr = precision_recall(predicted, mem.labels);
        m.attack_precision = pr.precision;
        m.attack_recall = pr.recall;
        m.target_train_acc = target.train_accuracy;
        m.target_test_acc = target.test_accuracy;
        m.label_loss = label_loss(mem.true_posteriors, mem.released_posteriors);
        m.confidence_distortion = confidence_distortion(mem.true_posteriors, mem.released_posteriors);
        {
            std::vector<int> true_membership(static_cast<std::size_t>(split.adversary_graph->num_nodes), 0);
            std::vector<int> predicted_membership = true_membership;
            for (std::size_t i = 0; i < mem.eval_nodes.size(); ++i) {
                true_membership[static_cast<std::size_t>(mem.eval_nodes[i])] = mem.labels[i];
                predicted_membership[static_cast<std::size_t>(mem.eval_nodes[i])] = predicted[i];
            }
            m.homophily_joint =
                homophily_joint_histogram(*split.adversary_graph, true_membership, predicted_membership, mem.eval_nodes);
        }
        out.per_point.push_back(std::move(m));
        out.per_point_membership.push_back(std::move(mem));
    }
    return out;
}

// Full experiment: builds the dataset(s) once, runs every repetition (up to
// cfg.workers in parallel; results are identical for any worker count), and
// assembles the report.
inline RunReport run_experiment(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto g_target = std::make_shared<const Graph>(detail::build_dataset(cfg.dataset, cfg.master_seed));
    const auto g_shadow = cfg.transfer
                              ? std::make_shared<const Graph>(detail::build_dataset(cfg.shadow_dataset, cfg.master_seed + 1))
                              : g_target;

    const std::vector<DefenseConfig> points = evaluation_points(cfg);
    for (const DefenseConfig& d : points) validate_defense_config(d, g_target->num_classes);

    std::vector<RepetitionOutcome> reps(static_cast<std::size_t>(cfg.repetitions));
    {
        std::atomic<int> next{0};
        std::mutex error_mutex;
        std::exception_ptr first_error;
        auto work = [&] {
            while (true) {
                const int rep = next.fetch_add(1);
                if (rep >= cfg.repetitions) return;
                try {
                    reps[static_cast<std::size_t>(rep)] = run_repetition(cfg, points, g_target, g_shadow, rep);
                } catch (...) {
                    const std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        };
        const int n_threads = std::min(cfg.workers, cfg.repetitions);
        if (n_threads <= 1) {
            work();
        } else {
            std::vector<std::thread> pool;
            pool.reserve(static_cast<std::size_t>(n_threads));
            for (int t = 0; t < n_threads; ++t) pool.emplace_back(work);
            for (auto& t : pool) t.join();
        }
        if (first_error) std::rethrow_exception(first_error);
    }

    RunReport report;
    report.config_echo = canonical_config_echo(cfg);
    for (const RepetitionOutcome& rep : reps) report.splits.push_back(rep.per_point[0]);
    report.aggregate = aggregate(report.splits);
    for (std::size_t pi = 1; pi < points.size(); ++pi) {
        SweepPointResult sp;
        sp.defense = points[pi];
        for (const RepetitionOutcome& rep : reps) sp.per_split.push_back(rep.per_point[pi]);
        sp.agg = aggregate(sp.per_split);
        report.sweep.push_back(std::move(sp));
    }
    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace gnnaudit
