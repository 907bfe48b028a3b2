#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <memory>
#include <set>
#include <vector>

#include "gnnaudit/attack.hpp"
#include "gnnaudit/dataset.hpp"
#include "gnnaudit/graph.hpp"
#include "gnnaudit/metrics.hpp"
#include "gnnaudit/trainer.hpp"

namespace {

using namespace gnnaudit;

std::shared_ptr<const Graph> attack_sbm(std::uint64_t seed) {
    SbmParams p;
    p.num_classes = 2;
    p.nodes_per_class = 60;
    p.intra_p = 0.15;
    p.inter_p = 0.02;
    p.feature_dim = 8;
    p.class_mean_separation = 1.5;
    p.feature_noise_std = 1.0;
    return std::make_shared<const Graph>(generate_sbm(p, seed));
}

SplitSizes tight_sizes() {
    SplitSizes s;
    s.target_train = s.shadow_train = s.shadow_out = s.attack_eval = 25;
    s.target_out = 20;
    return s;
}

// A sparse, nearly feature-free blockmodel: the target can only fit the
// training nodes by memorising their neighbourhood mixtures, which is what the
// membership attack picks up on.
std::shared_ptr<const Graph> leaky_sbm(std::uint64_t seed) {
    SbmParams p;
    p.num_classes = 2;
    p.nodes_per_class = 150;
    p.intra_p = 0.07;
    p.inter_p = 0.008;
    p.feature_dim = 128;
    p.class_mean_separation = 0.1;
    p.feature_noise_std = 1.0;
    return std::make_shared<const Graph>(generate_sbm(p, seed));
}

ModelConfig leaky_model() {
    ModelConfig mc;
    mc.kind = ModelKind::gcn;
    mc.hidden_dim = 128;
    return mc;
}

TrainConfig leaky_train() {
    TrainConfig cfg;
    cfg.epochs = 500;
    cfg.lr = 0.01;
    return cfg;
}

ModelConfig gcn_config() {
    ModelConfig mc;
    mc.kind = ModelKind::gcn;
    mc.hidden_dim = 64;
    return mc;
}

TrainConfig overfitting_train() {
    TrainConfig cfg;
    cfg.epochs = 150;
    cfg.lr = 0.01;
    return cfg;
}

// Target model trained on the induced member subgraph, as the pipeline does.
TrainedModel train_target(const SplitSpec& split, std::uint64_t seed) {
    RngStream init_rng(seed, StreamId::init, 0);
    GnnModel model =
        init_model(gcn_config(), split.full_graph->feature_dim(), split.full_graph->num_classes, init_rng);
    RngStream train_rng(seed, StreamId::train, 0);
    return train_model(*split.target_train_graph, all_nodes(*split.target_train_graph), std::move(model),
                       overfitting_train(), train_rng);
}

bool disjoint(const NodeSet& a, const NodeSet& b) {
    NodeSet out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out.empty();
}

} // namespace

TEST_CASE("default split sizes follow the published proportions", "[attack]") {
    const Graph big = make_graph(2708, {}, Matrix(2708, 1), std::vector<std::int32_t>(2708, 0), 1);
    const SplitSizes sizes = default_split_sizes(big);
    CHECK(sizes.target_train == 630);
    CHECK(sizes.shadow_train == 630);
    CHECK(sizes.shadow_out == 630);
    CHECK(sizes.attack_eval == 630);
    CHECK(sizes.target_out == 188);

    const Graph small = make_graph(10, {}, Matrix(10, 1), std::vector<std::int32_t>(10, 0), 1);
    const SplitSizes tiny = default_split_sizes(small);
    CHECK(tiny.target_train == 2);
    CHECK(tiny.target_out == 2);
    CHECK(4 * tiny.target_train + tiny.target_out <= 10);
}

TEST_CASE("splits are disjoint, sorted and reproducible", "[attack]") {
    auto g = attack_sbm(1);
    RngStream rng(9, StreamId::split, 0);
    const SplitSpec split = make_splits(g, Setting::tstf, tight_sizes(), rng);

    const NodeSet* sets[] = {&split.target_train, &split.shadow_train, &split.shadow_out, &split.attack_eval,
                             &split.target_out};
    std::set<NodeId> all;
    std::size_t total = 0;
    for (const NodeSet* s : sets) {
        CHECK(std::is_sorted(s->begin(), s->end()));
        all.insert(s->begin(), s->end());
        total += s->size();
    }
    CHECK(all.size() == total); // pairwise disjoint
    CHECK(split.target_train.size() == 25);
    CHECK(split.target_out.size() == 20);
    CHECK(split.target_train_graph->num_nodes == 25);
    CHECK(split.shadow_train_graph->num_nodes == 25);
    CHECK(split.adversary_graph.get() == split.full_graph.get()); // tstf hands over the full graph

    RngStream rng2(9, StreamId::split, 0);
    const SplitSpec again = make_splits(g, Setting::tstf, tight_sizes(), rng2);
    CHECK(again.target_train == split.target_train);
    CHECK(again.shadow_out == split.shadow_out);
    CHECK(again.attack_eval == split.attack_eval);

    SplitSizes huge = tight_sizes();
    huge.target_train = 200;
    RngStream rng3(9, StreamId::split, 0);
    CHECK_THROWS_AS(make_splits(g, Setting::tstf, huge, rng3), std::invalid_argument);
    SplitSizes zero = tight_sizes();
    zero.shadow_out = 0;
    CHECK_THROWS_AS(make_splits(g, Setting::tstf, zero, rng3), std::invalid_argument);
}

TEST_CASE("tsts setting removes exactly the cross-set edges", "[attack]") {
    auto g = attack_sbm(2);
    RngStream rng(10, StreamId::split, 0);
    const SplitSpec split = make_splits(g, Setting::tsts, tight_sizes(), rng);
    REQUIRE(split.adversary_graph.get() != split.full_graph.get());

    std::vector<int> set_id(static_cast<std::size_t>(g->num_nodes), 5);
    const NodeSet* sets[] = {&split.target_train, &split.target_out, &split.shadow_train, &split.shadow_out,
                             &split.attack_eval};
    for (int s = 0; s < 5; ++s)
        for (NodeId v : *sets[s]) set_id[static_cast<std::size_t>(v)] = s;

    const Graph& adv = *split.adversary_graph;
    long long cross_in_adversary = 0;
    for (NodeId v = 0; v < adv.num_nodes; ++v)
        for (NodeId u : adv.neighbors(v))
            if (set_id[static_cast<std::size_t>(u)] != set_id[static_cast<std::size_t>(v)]) ++cross_in_adversary;
    CHECK(cross_in_adversary == 0);

    // every same-set edge of the full graph survives
    for (NodeId v = 0; v < g->num_nodes; ++v)
        for (NodeId u : g->neighbors(v))
            if (set_id[static_cast<std::size_t>(u)] == set_id[static_cast<std::size_t>(v)]) {
                const auto& nbrs = adv.neighbors(v);
                REQUIRE(std::binary_search(nbrs.begin(), nbrs.end(), u));
            }
}

TEST_CASE("shadow supervision modes and their query budgets", "[attack]") {
    auto g = attack_sbm(3);
    RngStream rng(11, StreamId::split, 0);
    const SplitSpec split = make_splits(g, Setting::tstf, tight_sizes(), rng);
    const TrainedModel target = train_target(split, 21);

    TrainConfig shadow_train_cfg = overfitting_train();
    shadow_train_cfg.epochs = 40;

    SECTION("ground truth mode never queries the target") {
        QueryCounter counter;
        RngStream init_rng(12, StreamId::init, 1), train_rng(12, StreamId::train, 1);
        const TrainedModel shadow = train_shadow(split, ShadowSupervision::ground_truth, nullptr, gcn_config(),
                                                 shadow_train_cfg, init_rng, train_rng, nullptr, &counter);
        CHECK(counter.count == 0);
        CHECK(shadow.model.num_classes == g->num_classes);
        CHECK(shadow.epochs_run == 40);
    }
    SECTION("query mode issues one query per shadow-train node") {
        QueryCounter counter;
        RngStream init_rng(13, StreamId::init, 1), train_rng(13, StreamId::train, 1);
        const TrainedModel shadow = train_shadow(split, ShadowSupervision::query_target, &target, gcn_config(),
                                                 shadow_train_cfg, init_rng, train_rng, nullptr, &counter);
        CHECK(counter.count == static_cast<long long>(split.shadow_train.size()));
        CHECK(shadow.model.num_classes == target.model.num_classes);
    }
    SECTION("query mode without a target is an error") {
        RngStream init_rng(14, StreamId::init, 1), train_rng(14, StreamId::train, 1);
        CHECK_THROWS_AS(train_shadow(split, ShadowSupervision::query_target, nullptr, gcn_config(), shadow_train_cfg,
                                     init_rng, train_rng),
                        std::invalid_argument);
    }
}

TEST_CASE("top-n alignment keeps the n largest entries ascending", "[attack]") {
    CHECK(align_posteriors_topn({0.5, 0.3, 0.2}, 2) == std::vector<double>{0.3, 0.5});
    CHECK(align_posteriors_topn({0.5, 0.3, 0.2}, 3) == std::vector<double>{0.2, 0.3, 0.5});
    CHECK(align_posteriors_topn({0.1, 0.7, 0.2}, 1) == std::vector<double>{0.7});

    // permutation invariance
    CHECK(align_posteriors_topn({0.2, 0.5, 0.3}, 2) == align_posteriors_topn({0.5, 0.3, 0.2}, 2));
    CHECK_THROWS_AS(align_posteriors_topn({0.5, 0.5}, 0), std::invalid_argument);
    CHECK_THROWS_AS(align_posteriors_topn({0.5, 0.5}, 3), std::invalid_argument);
}

TEST_CASE("attack datasets are balanced rows of released posteriors", "[attack]") {
    auto g = attack_sbm(4);
    RngStream rng(15, StreamId::split, 0);
    SplitSizes sizes = tight_sizes();
    sizes.shadow_out = 18; // unbalanced shadow sets; truncation balances them
    const SplitSpec split = make_splits(g, Setting::tstf, sizes, rng);

    RngStream init_rng(16, StreamId::init, 1), train_rng(16, StreamId::train, 1);
    TrainConfig cfg = overfitting_train();
    cfg.epochs = 30;
    const TrainedModel shadow =
        train_shadow(split, ShadowSupervision::ground_truth, nullptr, gcn_config(), cfg, init_rng, train_rng);

    SECTION("raw posteriors at topn = 0") {
        const AttackDataset data = build_attack_dataset(shadow, split);
        REQUIRE(data.features.rows == 36); // 2 * min(25, 18)
        REQUIRE(data.features.cols == g->num_classes);
        REQUIRE(data.labels.size() == 36);
        for (int i = 0; i < 18; ++i) CHECK(data.labels[static_cast<std::size_t>(i)] == 1);
        for (int i = 18; i < 36; ++i) CHECK(data.labels[static_cast<std::size_t>(i)] == 0);
        for (int r = 0; r < data.features.rows; ++r) {
            double sum = 0.0;
            for (int c = 0; c < data.features.cols; ++c) sum += data.features.at(r, c);
            CHECK(sum == Catch::Approx(1.0).margin(1e-9));
        }
    }
    SECTION("aligned features at topn = 1") {
        const AttackDataset data = build_attack_dataset(shadow, split, 1);
        REQUIRE(data.features.cols == 1);
        for (int r = 0; r < data.features.rows; ++r) CHECK(data.features.at(r, 0) >= 0.5); // max of a 2-class row
    }
    SECTION("topn beyond the class count is rejected") {
        CHECK_THROWS_AS(build_attack_dataset(shadow, split, 3), std::invalid_argument);
    }
    SECTION("empty shadow sets are rejected") {
        SplitSpec empty;
        CHECK_THROWS_AS(build_attack_dataset(shadow, empty), std::invalid_argument);
    }
}

TEST_CASE("attack MLP separates obvious membership signal", "[attack]") {
    AttackDataset data;
    data.features = Matrix(40, 2);
    data.labels.assign(40, 0);
    RngStream noise(17, StreamId::data, 0);
    for (int i = 0; i < 20; ++i) { // members: confident posteriors
        const double jitter = noise.uniform(0.0, 0.04);
        data.features.at(i, 0) = 0.95 - jitter;
        data.features.at(i, 1) = 0.05 + jitter;
        data.labels[static_cast<std::size_t>(i)] = 1;
    }
    for (int i = 20; i < 40; ++i) { // non-members: near-uniform posteriors
        const double jitter = noise.uniform(0.0, 0.04);
        data.features.at(i, 0) = 0.55 - jitter;
        data.features.at(i, 1) = 0.45 + jitter;
    }
    RngStream rng(18, StreamId::attack, 0);
    const AttackModel attack = train_attack_mlp(data, AttackTrainConfig{}, rng);
    const Matrix y = attack_predict(attack, data.features);
    int correct = 0;
    for (int r = 0; r < y.rows; ++r)
        if ((y.at(r, 1) >= 0.5 ? 1 : 0) == data.labels[static_cast<std::size_t>(r)]) ++correct;
    CHECK(static_cast<double>(correct) / 40.0 >= 0.95);
}

TEST_CASE("attack MLP finds nothing when classes share a distribution", "[attack]") {
    // A single run of 200 iid rows leaves sampling noise of a few hundredths
    // in the AUROC, so average a handful of independent draws.
    double mean = 0.0;
    const int draws = 8;
    for (int d = 0; d < draws; ++d) {
        RngStream gen(19 + 100 * static_cast<std::uint64_t>(d), StreamId::data, 0);
        auto sample_rows = [&](int n) {
            Matrix m(n, 3);
            for (int r = 0; r < n; ++r) {
                double a = gen.uniform01(), b = gen.uniform01(), c = gen.uniform01();
                const double s = a + b + c;
                m.at(r, 0) = a / s;
                m.at(r, 1) = b / s;
                m.at(r, 2) = c / s;
            }
            return m;
        };
        AttackDataset train_data;
        train_data.features = sample_rows(200);
        train_data.labels.assign(200, 0);
        for (int i = 0; i < 100; ++i) train_data.labels[static_cast<std::size_t>(i)] = 1;

        RngStream rng(20 + 100 * static_cast<std::uint64_t>(d), StreamId::attack, 0);
        const AttackModel attack = train_attack_mlp(train_data, AttackTrainConfig{}, rng);

        const Matrix held_out = sample_rows(200);
        const Matrix y = attack_predict(attack, held_out);
        std::vector<double> scores(200);
        std::vector<int> labels(200, 0);
        for (int r = 0; r < 200; ++r) scores[static_cast<std::size_t>(r)] = y.at(r, 1);
        for (int r = 0; r < 100; ++r) labels[static_cast<std::size_t>(r)] = 1; // arbitrary split of iid rows
        mean += auroc(scores, labels) / static_cast<double>(draws);
    }
    CHECK(mean == Catch::Approx(0.5).margin(0.05));
}

TEST_CASE("attack MLP training is reproducible and validates its input", "[attack]") {
    AttackDataset data;
    data.features = Matrix(8, 2);
    data.labels = {1, 1, 1, 1, 0, 0, 0, 0};
    RngStream fill(21, StreamId::data, 0);
    for (double& v : data.features.data) v = fill.uniform01();

    SECTION("same stream, same weights") {
        RngStream a(22, StreamId::attack, 0), b(22, StreamId::attack, 0);
        AttackTrainConfig cfg;
        cfg.epochs = 25;
        const AttackModel ma = train_attack_mlp(data, cfg, a);
        const AttackModel mb = train_attack_mlp(data, cfg, b);
        CHECK(ma.w1 == mb.w1);
        CHECK(ma.w2 == mb.w2);
        CHECK(ma.w3 == mb.w3);
        CHECK(ma.b1 == mb.b1);
        CHECK(ma.b2 == mb.b2);
        CHECK(ma.b3 == mb.b3);
    }
    SECTION("row order barely moves the trained attack") {
        AttackTrainConfig cfg;
        cfg.epochs = 60;
        RngStream a(23, StreamId::attack, 0), b(23, StreamId::attack, 0);
        AttackDataset permuted;
        permuted.features = Matrix(8, 2);
        permuted.labels.resize(8);
        const int perm[8] = {5, 2, 7, 0, 3, 6, 1, 4};
        for (int r = 0; r < 8; ++r) {
            for (int c = 0; c < 2; ++c) permuted.features.at(r, c) = data.features.at(perm[r], c);
            permuted.labels[static_cast<std::size_t>(r)] = data.labels[static_cast<std::size_t>(perm[r])];
        }
        const AttackModel ma = train_attack_mlp(data, cfg, a);
        const AttackModel mb = train_attack_mlp(permuted, cfg, b);
        const Matrix ya = attack_predict(ma, data.features);
        const Matrix yb = attack_predict(mb, data.features);
        std::vector<double> sa(8), sb(8);
        for (int r = 0; r < 8; ++r) {
            sa[static_cast<std::size_t>(r)] = ya.at(r, 1);
            sb[static_cast<std::size_t>(r)] = yb.at(r, 1);
        }
        CHECK(std::abs(auroc(sa, data.labels) - auroc(sb, data.labels)) <= 0.02);
    }
    SECTION("degenerate label sets are rejected") {
        AttackDataset single = data;
        single.labels = {1, 1, 1, 1, 1, 1, 1, 1};
        RngStream rng(24, StreamId::attack, 0);
        CHECK_THROWS_AS(train_attack_mlp(single, AttackTrainConfig{}, rng), std::invalid_argument);
        AttackDataset sparse = data;
        sparse.labels = {1, 0, 0, 0, 0, 0, 0, 0};
        CHECK_THROWS_AS(train_attack_mlp(sparse, AttackTrainConfig{}, rng), std::invalid_argument);
        AttackDataset bad = data;
        bad.labels[0] = 2;
        CHECK_THROWS_AS(train_attack_mlp(bad, AttackTrainConfig{}, rng), std::invalid_argument);
    }
}

TEST_CASE("membership inference works end to end on an overfit target", "[attack]") {
    double mean_auroc = 0.0;
    const int reps = 3;
    for (int rep = 0; rep < reps; ++rep) {
        const auto r = static_cast<std::uint64_t>(rep);
        auto g = leaky_sbm(5 + r);
        RngStream rng(25 + r, StreamId::split, 0);
        const SplitSpec split = make_splits(g, Setting::tstf, default_split_sizes(*g), rng);

        RngStream t_init(26 + r, StreamId::init, 0), t_train(26 + r, StreamId::train, 0);
        GnnModel tm = init_model(leaky_model(), g->feature_dim(), g->num_classes, t_init);
        const TrainedModel target = train_model(*split.target_train_graph, all_nodes(*split.target_train_graph),
                                                std::move(tm), leaky_train(), t_train);

        RngStream s_init(27 + r, StreamId::init, 1), s_train(27 + r, StreamId::train, 1);
        const TrainedModel shadow = train_shadow(split, ShadowSupervision::ground_truth, nullptr, leaky_model(),
                                                 leaky_train(), s_init, s_train);

        const AttackDataset data = build_attack_dataset(shadow, split);
        RngStream a_rng(28 + r, StreamId::attack, 0);
        const AttackModel attack = train_attack_mlp(data, AttackTrainConfig{}, a_rng);

        DefenseConfig none;
        RngStream d_rng(29 + r, StreamId::defense, 0);
        const MembershipResult res = infer_membership(attack, target, split, none, 0, d_rng);

        // 300 nodes -> 70-node member and evaluation sets under the default proportions
        REQUIRE(res.labels.size() == 140);
        REQUIRE(res.scores.size() == 140);
        REQUIRE(res.eval_nodes.size() == 140);
        long members = 0;
        for (int l : res.labels) members += l;
        CHECK(members == 70);
        for (double s : res.scores) {
            CHECK(s >= 0.0);
            CHECK(s <= 1.0);
        }
        // evaluation never touches shadow nodes
        NodeSet sorted_eval = res.eval_nodes;
        std::sort(sorted_eval.begin(), sorted_eval.end());
        CHECK(disjoint(sorted_eval, split.shadow_train));
        CHECK(disjoint(sorted_eval, split.shadow_out));
        // released equals true posteriors without a defense
        CHECK(res.released_posteriors == res.true_posteriors);

        mean_auroc += auroc(res.scores, res.labels) / static_cast<double>(reps);
    }
    INFO("undefended attack AUROC (mean of " << reps << " runs) " << mean_auroc);
    CHECK(mean_auroc > 0.6);
}

TEST_CASE("attack input dimension must match the alignment", "[attack]") {
    auto g = attack_sbm(6);
    RngStream rng(30, StreamId::split, 0);
    const SplitSpec split = make_splits(g, Setting::tstf, tight_sizes(), rng);
    const TrainedModel target = train_target(split, 31);

    TrainConfig shadow_cfg = overfitting_train();
    shadow_cfg.epochs = 30;
    RngStream s_init(32, StreamId::init, 1), s_train(32, StreamId::train, 1);
    const TrainedModel shadow =
        train_shadow(split, ShadowSupervision::ground_truth, nullptr, gcn_config(), shadow_cfg, s_init, s_train);

    const AttackDataset data = build_attack_dataset(shadow, split, 1); // 1-dim aligned features
    RngStream a_rng(33, StreamId::attack, 0);
    const AttackModel attack = train_attack_mlp(data, AttackTrainConfig{}, a_rng);

    DefenseConfig none;
    RngStream d_rng(34, StreamId::defense, 0);
    CHECK_THROWS_AS(infer_membership(attack, target, split, none, 0, d_rng), std::invalid_argument);
    CHECK_NOTHROW(infer_membership(attack, target, split, none, 1, d_rng));
}

TEST_CASE("both shadow supervision modes mount comparable attacks", "[attack]") {
    double mean_auroc[2] = {0.0, 0.0};
    const ShadowSupervision modes[2] = {ShadowSupervision::ground_truth, ShadowSupervision::query_target};
    const int reps = 3;
    for (int rep = 0; rep < reps; ++rep) {
        const auto r = static_cast<std::uint64_t>(rep);
        auto g = leaky_sbm(40 + r);
        RngStream rng(40 + r, StreamId::split, 0);
        const SplitSpec split = make_splits(g, Setting::tstf, default_split_sizes(*g), rng);

        RngStream t_init(50 + r, StreamId::init, 0), t_train(50 + r, StreamId::train, 0);
        GnnModel tm = init_model(leaky_model(), g->feature_dim(), g->num_classes, t_init);
        const TrainedModel target = train_model(*split.target_train_graph, all_nodes(*split.target_train_graph),
                                                std::move(tm), leaky_train(), t_train);
        for (int m = 0; m < 2; ++m) {
            RngStream s_init(60 + r, StreamId::init, static_cast<std::uint64_t>(m));
            RngStream s_train(60 + r, StreamId::train, static_cast<std::uint64_t>(m));
            const TrainedModel shadow = train_shadow(split, modes[m], &target, leaky_model(), leaky_train(),
                                                     s_init, s_train);
            const AttackDataset data = build_attack_dataset(shadow, split);
            RngStream a_rng(70 + r, StreamId::attack, static_cast<std::uint64_t>(m));
            const AttackModel attack = train_attack_mlp(data, AttackTrainConfig{}, a_rng);
            DefenseConfig none;
            RngStream d_rng(80, StreamId::defense, 0);
            const MembershipResult res = infer_membership(attack, target, split, none, 0, d_rng);
            mean_auroc[m] += auroc(res.scores, res.labels) / static_cast<double>(reps);
        }
    }
    INFO("ground_truth mean " << mean_auroc[0] << " query_target mean " << mean_auroc[1]);
    CHECK(std::abs(mean_auroc[0] - mean_auroc[1]) <= 0.05);
}
