#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <vector>

#include "gnnaudit/defense.hpp"
#include "gnnaudit/experiment.hpp"
#include "gnnaudit/graph.hpp"
#include "gnnaudit/models.hpp"
#include "gnnaudit/rng.hpp"

namespace {

using namespace gnnaudit;

Graph defense_test_graph(std::uint64_t seed, int num_classes = 3, int feature_dim = 4) {
    RngStream rng(seed, StreamId::data, 55);
    const int n = 10;
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (NodeId u = 0; u < n; ++u)
        for (NodeId v = u + 1; v < n; ++v)
            if (rng.bernoulli(0.4)) edges.emplace_back(u, v);
    Matrix features(n, feature_dim);
    for (double& x : features.data) x = rng.uniform(-1.0, 1.0);
    std::vector<std::int32_t> labels(static_cast<std::size_t>(n));
    for (auto& l : labels) l = static_cast<std::int32_t>(rng.uniform_int(static_cast<std::uint64_t>(num_classes)));
    return make_graph(n, edges, std::move(features), std::move(labels), num_classes);
}

GnnModel make_model(ModelKind kind, const Graph& g, std::uint64_t seed) {
    ModelConfig cfg;
    cfg.kind = kind;
    cfg.hidden_dim = 8;
    cfg.num_heads = 4;
    cfg.sample_sizes = {3, 2};
    RngStream rng(seed, StreamId::init, 0);
    return init_model(cfg, g.feature_dim(), g.num_classes, rng);
}

std::vector<double> posterior_row(std::initializer_list<double> vals) { return std::vector<double>(vals); }

const ModelKind kAllKinds[] = {ModelKind::gcn, ModelKind::sgc, ModelKind::gat, ModelKind::sage};

} // namespace

TEST_CASE("release normalization clamps, rescales and falls back to uniform", "[defense]") {
    const auto unchanged = normalize_released(posterior_row({0.5, 0.5}));
    CHECK(unchanged == std::vector<double>{0.5, 0.5});

    const auto clamped = normalize_released(posterior_row({-0.2, 0.4, 0.4}));
    REQUIRE(clamped.size() == 3);
    CHECK(clamped[0] == 0.0);
    CHECK(clamped[1] == Catch::Approx(0.5));
    CHECK(clamped[2] == Catch::Approx(0.5));

    const auto uniform = normalize_released(posterior_row({-0.3, -0.1, 0.0}));
    for (double v : uniform) CHECK(v == Catch::Approx(1.0 / 3.0));

    CHECK_THROWS_AS(normalize_released({}), std::invalid_argument);
    CHECK_THROWS_AS(normalize_released(posterior_row({std::numeric_limits<double>::quiet_NaN(), 0.5})),
                    std::invalid_argument);
}

TEST_CASE("vanpd perturbs posteriors per coordinate", "[defense]") {
    const std::vector<double> p{0.6, 0.3, 0.1};

    SECTION("beta zero is the bitwise identity") {
        RngStream rng(1, StreamId::defense, 0);
        CHECK(vanpd(p, 0.0, rng) == p);
        CHECK(rng.next_u64() == RngStream(1, StreamId::defense, 0).next_u64()); // no draws consumed
    }
    SECTION("released rows are distributions") {
        RngStream rng(2, StreamId::defense, 0);
        for (int t = 0; t < 200; ++t) {
            const auto out = vanpd(p, 0.8, rng);
            double sum = 0.0;
            for (double v : out) {
                CHECK(v >= 0.0);
                sum += v;
            }
            CHECK(sum == Catch::Approx(1.0).margin(1e-9));
        }
    }
    SECTION("strong noise flips the argmax often") {
        RngStream rng(3, StreamId::defense, 0);
        const std::vector<double> sharp{0.9, 0.02, 0.02, 0.02, 0.02, 0.01, 0.01};
        int flips = 0;
        for (int t = 0; t < 1000; ++t) {
            const auto out = vanpd(sharp, 5.0, rng);
            if (argmax_lowest(out.data(), static_cast<int>(out.size())) != 0) ++flips;
        }
        CHECK(flips > 500);
    }
    SECTION("unnormalized releases keep the raw noisy values") {
        RngStream rng(4, StreamId::defense, 0);
        const auto out = vanpd(p, 0.5, rng, false);
        double sum = 0.0;
        for (double v : out) sum += v;
        CHECK(sum != Catch::Approx(1.0).margin(1e-9)); // unnormalized with probability one
    }
    SECTION("input validation") {
        RngStream rng(5, StreamId::defense, 0);
        CHECK_THROWS_AS(vanpd(p, -0.1, rng), std::invalid_argument);
        CHECK_THROWS_AS(vanpd({}, 0.5, rng), std::invalid_argument);
    }
}

TEST_CASE("lbp shares one noise draw within each bin", "[defense]") {
    const std::vector<double> p{0.30, 0.25, 0.15, 0.12, 0.10, 0.05, 0.03};
    const int dim = static_cast<int>(p.size());

    SECTION("beta zero is the identity for any psi") {
        RngStream rng(6, StreamId::defense, 0);
        for (int psi : {1, 3, 7}) CHECK(lbp(p, 0.0, psi, rng) == p);
    }
    SECTION("the number of distinct offsets equals the bin count") {
        // (p[i] + x) - p[i] wobbles in the last ulp, so offsets within one
        // bin coincide only up to rounding; count groups with a tolerance.
        for (int psi : {1, 2, 3, 7}) {
            RngStream rng(7, StreamId::defense, static_cast<std::uint64_t>(psi));
            const auto out = lbp(p, 0.5, psi, rng, false);
            std::vector<double> offsets(static_cast<std::size_t>(dim));
            for (int i = 0; i < dim; ++i)
                offsets[static_cast<std::size_t>(i)] = out[static_cast<std::size_t>(i)] - p[static_cast<std::size_t>(i)];
            std::sort(offsets.begin(), offsets.end());
            int groups = 1;
            for (int i = 1; i < dim; ++i)
                if (offsets[static_cast<std::size_t>(i)] - offsets[static_cast<std::size_t>(i - 1)] > 1e-9) ++groups;
            CHECK(groups == psi);
        }
    }
    SECTION("a single bin preserves the released argmax") {
        RngStream rng(8, StreamId::defense, 0);
        for (int t = 0; t < 200; ++t) {
            const auto out = lbp(p, 0.7, 1, rng);
            CHECK(argmax_lowest(out.data(), dim) == 0);
        }
    }
    SECTION("per-coordinate bins match vanpd noise variance") {
        const std::vector<double> base{0.5, 0.3, 0.2};
        const double beta = 0.4;
        const double want = 2.0 * beta * beta; // Laplace variance
        auto empirical_var = [&](auto&& mechanism) {
            double sum = 0.0, sq = 0.0;
            long n = 0;
            RngStream rng(9, StreamId::defense, 0);
            for (int t = 0; t < 10000; ++t) {
                const auto out = mechanism(rng);
                for (std::size_t i = 0; i < base.size(); ++i) {
                    const double d = out[i] - base[i];
                    sum += d;
                    sq += d * d;
                    ++n;
                }
            }
            const double mean = sum / static_cast<double>(n);
            return sq / static_cast<double>(n) - mean * mean;
        };
        const double var_vanpd = empirical_var([&](RngStream& r) { return vanpd(base, beta, r, false); });
        const double var_lbp = empirical_var([&](RngStream& r) { return lbp(base, beta, 3, r, false); });
        CHECK(var_vanpd == Catch::Approx(want).epsilon(0.05));
        CHECK(var_lbp == Catch::Approx(want).epsilon(0.05));
    }
    SECTION("psi bounds are enforced") {
        RngStream rng(10, StreamId::defense, 0);
        CHECK_THROWS_AS(lbp(p, 0.5, 0, rng), std::invalid_argument);
        CHECK_THROWS_AS(lbp(p, 0.5, dim + 1, rng), std::invalid_argument);
        CHECK_THROWS_AS(lbp(p, -0.5, 1, rng), std::invalid_argument);
    }
}

TEST_CASE("apply_output_defense dispatches by kind", "[defense]") {
    const std::vector<double> p{0.7, 0.2, 0.1};
    RngStream rng(11, StreamId::defense, 0);

    DefenseConfig none;
    CHECK(apply_output_defense(p, none, rng) == p);

    DefenseConfig nsd;
    nsd.kind = DefenseKind::nsd;
    nsd.k = 2;
    CHECK_THROWS_AS(apply_output_defense(p, nsd, rng), std::invalid_argument);

    DefenseConfig van;
    van.kind = DefenseKind::vanpd;
    van.beta = 0.3;
    const auto released = apply_output_defense(p, van, rng);
    double sum = 0.0;
    for (double v : released) sum += v;
    CHECK(sum == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("defense configuration validation", "[defense]") {
    DefenseConfig cfg;
    CHECK_NOTHROW(validate_defense_config(cfg, 7));

    cfg.kind = DefenseKind::lbp;
    cfg.psi = 0;
    CHECK_THROWS_AS(validate_defense_config(cfg, 7), std::invalid_argument);
    cfg.psi = 8;
    CHECK_THROWS_AS(validate_defense_config(cfg, 7), std::invalid_argument);
    cfg.psi = 7;
    CHECK_NOTHROW(validate_defense_config(cfg, 7));

    cfg = DefenseConfig{};
    cfg.beta = -1.0;
    CHECK_THROWS_AS(validate_defense_config(cfg, 7), std::invalid_argument);
    cfg = DefenseConfig{};
    cfg.kind = DefenseKind::nsd;
    cfg.k = -1;
    CHECK_THROWS_AS(validate_defense_config(cfg, 7), std::invalid_argument);

    // psi only constrains lbp
    cfg = DefenseConfig{};
    cfg.kind = DefenseKind::vanpd;
    cfg.psi = 99;
    CHECK_NOTHROW(validate_defense_config(cfg, 7));
}

TEST_CASE("nsd edits one node's first hop and nothing else", "[defense]") {
    const Graph g = defense_test_graph(20);

    SECTION("k = 0 isolates the queried node") {
        RngStream rng(12, StreamId::defense, 0);
        NodeSet retained;
        const Graph defended = nsd_query(g, 0, 0, rng, &retained);
        CHECK(retained.empty());
        CHECK(defended.degree(0) == 0);
        for (NodeId u = 1; u < g.num_nodes; ++u) {
            NodeSet expect;
            for (NodeId w : g.neighbors(u))
                if (w != 0) expect.push_back(w);
            CHECK(defended.neighbors(u) == expect);
        }
    }
    SECTION("a star keeps exactly one leaf at k = 1") {
        const Graph star = make_graph(6, {{0, 1}, {0, 2}, {0, 3}, {0, 4}, {0, 5}}, Matrix(6, 2),
                                      {0, 0, 0, 0, 0, 0}, 1);
        std::set<NodeId> seen;
        for (std::uint64_t s = 0; s < 20; ++s) {
            RngStream rng(s, StreamId::defense, 0);
            NodeSet retained;
            const Graph defended = nsd_query(star, 0, 1, rng, &retained);
            REQUIRE(retained.size() == 1);
            CHECK(defended.degree(0) == 1);
            CHECK(defended.neighbors(0) == retained);
            CHECK(defended.degree(retained[0]) == 1);
            seen.insert(retained[0]);
            for (NodeId leaf = 1; leaf < 6; ++leaf)
                if (leaf != retained[0]) CHECK(defended.degree(leaf) == 0);
        }
        CHECK(seen.size() > 1); // the retained leaf varies with the stream
    }
    SECTION("the input graph is never mutated") {
        const std::vector<std::vector<NodeId>> before = g.adj;
        RngStream rng(13, StreamId::defense, 0);
        (void)nsd_query(g, 1, 1, rng);
        CHECK(g.adj == before);
    }
    SECTION("retained nodes must be actual neighbors") {
        CHECK_THROWS_AS(nsd_query_graph(g, 0, NodeSet{NodeId{-1}}), std::out_of_range);
        // a non-neighbor valid node
        NodeId non_neighbor = -1;
        for (NodeId u = 1; u < g.num_nodes && non_neighbor < 0; ++u) {
            const auto& nbrs = g.neighbors(0);
            if (!std::binary_search(nbrs.begin(), nbrs.end(), u)) non_neighbor = u;
        }
        if (non_neighbor >= 0)
            CHECK_THROWS_AS(nsd_query_graph(g, 0, NodeSet{non_neighbor}), std::invalid_argument);
    }
}

TEST_CASE("nsd local extraction agrees bitwise with the materialized graph", "[defense]") {
    const Graph g = defense_test_graph(21);
    for (ModelKind kind : kAllKinds) {
        const GnnModel model = make_model(kind, g, 30);
        for (NodeId v : {NodeId{0}, NodeId{3}, NodeId{7}}) {
            for (int k : {0, 1, 2, 64}) {
                INFO("kind " << model_kind_name(kind) << " v " << v << " k " << k);
                RngStream d_full(40, StreamId::defense, static_cast<std::uint64_t>(v * 100 + k));
                RngStream d_local(40, StreamId::defense, static_cast<std::uint64_t>(v * 100 + k));
                NodeSet retained;
                const Graph defended = nsd_query(g, v, k, d_full, &retained);

                std::vector<double> full_row;
                RngStream q_full(41, StreamId::query, 9), q_local(41, StreamId::query, 9);
                if (kind == ModelKind::sage) {
                    const Matrix y = sage_forward(defended, model, NodeSet{v}, q_full);
                    full_row.assign(y.row(0), y.row(0) + y.cols);
                } else {
                    const Matrix y = model_forward(defended, model);
                    full_row.assign(y.row(v), y.row(v) + y.cols);
                }

                const std::vector<double> local_row =
                    nsd_posterior_row(g, model, v, k, d_local, &q_local, nullptr);
                REQUIRE(local_row.size() == full_row.size());
                for (std::size_t c = 0; c < full_row.size(); ++c) {
                    REQUIRE(local_row[c] == full_row[c]); // bitwise
                }
            }
        }
    }
}

TEST_CASE("nsd with k at least the max degree releases undefended posteriors bitwise", "[defense]") {
    const Graph g = defense_test_graph(22);
    NodeId max_deg = 0;
    for (NodeId v = 0; v < g.num_nodes; ++v) max_deg = std::max(max_deg, g.degree(v));

    for (ModelKind kind : kAllKinds) {
        INFO("kind " << model_kind_name(kind));
        const GnnModel model = make_model(kind, g, 31);
        for (NodeId v = 0; v < g.num_nodes; ++v) {
            RngStream d(50, StreamId::defense, static_cast<std::uint64_t>(v));
            if (kind == ModelKind::sage) {
                RngStream qa(51, StreamId::query, static_cast<std::uint64_t>(v));
                RngStream qb(51, StreamId::query, static_cast<std::uint64_t>(v));
                const Matrix clean = sage_forward(g, model, NodeSet{v}, qa);
                const auto defended = nsd_posterior_row(g, model, v, max_deg, d, &qb, nullptr);
                for (int c = 0; c < clean.cols; ++c) REQUIRE(defended[static_cast<std::size_t>(c)] == clean.at(0, c));
            } else {
                const Matrix clean = model_forward(g, model);
                const auto defended = nsd_posterior_row(g, model, v, max_deg, d, nullptr, clean.row(v));
                for (int c = 0; c < clean.cols; ++c) REQUIRE(defended[static_cast<std::size_t>(c)] == clean.at(v, c));
            }
        }
    }
}

TEST_CASE("stronger output noise cannot help the attacker", "[defense]") {
    // Separated-subgraph setting on a dense blockmodel: members are queried in
    // their training context, so the undefended attack is strong and the noise
    // scale is the only thing that varies across the sweep.
    ExperimentConfig cfg;
    cfg.dataset.kind = "sbm";
    cfg.dataset.sbm.num_classes = 2;
    cfg.dataset.sbm.nodes_per_class = 150;
    cfg.dataset.sbm.intra_p = 0.25;
    cfg.dataset.sbm.inter_p = 0.02;
    cfg.dataset.sbm.feature_dim = 32;
    cfg.dataset.sbm.class_mean_separation = 0.5;
    cfg.setting = Setting::tsts;
    cfg.target_model.kind = ModelKind::gcn;
    cfg.shadow_model.kind = ModelKind::gcn;
    cfg.target_model.hidden_dim = cfg.shadow_model.hidden_dim = 64;
    cfg.train.epochs = 150;
    cfg.repetitions = 6;
    cfg.master_seed = 77;

    DefenseConfig strong_van, weak_van, strong_lbp, weak_lbp;
    strong_van.kind = weak_van.kind = DefenseKind::vanpd;
    strong_lbp.kind = weak_lbp.kind = DefenseKind::lbp;
    strong_van.beta = strong_lbp.beta = 2.0;
    weak_van.beta = weak_lbp.beta = 0.01;
    strong_lbp.psi = weak_lbp.psi = 2;
    cfg.sweep = {strong_van, weak_van, strong_lbp, weak_lbp};

    const RunReport report = run_experiment(cfg);
    REQUIRE(report.sweep.size() == 4);
    const double auroc_strong_van = report.sweep[0].agg.mean.attack_auroc;
    const double auroc_weak_van = report.sweep[1].agg.mean.attack_auroc;
    const double auroc_strong_lbp = report.sweep[2].agg.mean.attack_auroc;
    const double auroc_weak_lbp = report.sweep[3].agg.mean.attack_auroc;
    INFO("vanpd strong " << auroc_strong_van << " weak " << auroc_weak_van);
    INFO("lbp strong " << auroc_strong_lbp << " weak " << auroc_weak_lbp);
    CHECK(auroc_strong_van <= auroc_weak_van);
    CHECK(auroc_strong_lbp <= auroc_weak_lbp);
    // heavy noise pushes the attack towards chance level
    CHECK(auroc_strong_van < 0.62);
    CHECK(auroc_strong_lbp < 0.62);
}
