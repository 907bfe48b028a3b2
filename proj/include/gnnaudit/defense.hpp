#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "gnnaudit/graph.hpp"
#include "gnnaudit/matrix.hpp"
#include "gnnaudit/models.hpp"
#include "gnnaudit/numerics.hpp"
#include "gnnaudit/rng.hpp"

namespace gnnaudit {

enum class DefenseKind { none, vanpd, lbp, nsd };

inline const char* defense_kind_name(DefenseKind k) {
    switch (k) {
        case DefenseKind::none: return "none";
        case DefenseKind::vanpd: return "vanpd";
        case DefenseKind::lbp: return "lbp";
        case DefenseKind::nsd: return "nsd";
    }
    throw std::invalid_argument("unknown defense kind");
}

inline DefenseKind defense_kind_from_name(const std::string& s) {
    if (s == "none") return DefenseKind::none;
    if (s == "vanpd") return DefenseKind::vanpd;
    if (s == "lbp") return DefenseKind::lbp;
    if (s == "nsd") return DefenseKind::nsd;
    throw std::invalid_argument("unknown defense kind '" + s + "'");
}

struct DefenseConfig {
    DefenseKind kind = DefenseKind::none;
    double beta = 0.0;     // vanpd/lbp Laplace scale
    int psi = 1;           // lbp bin count
    int k = 0;             // nsd retained neighbors
    bool normalize = true; // release normalization toggle (documented choice)

    bool operator==(const DefenseConfig& o) const {
        return kind == o.kind && beta == o.beta && psi == o.psi && k == o.k && normalize == o.normalize;
    }
};

inline void validate_defense_config(const DefenseConfig& cfg, int num_classes) {
    if (cfg.beta < 0.0) throw std::invalid_argument("DefenseConfig: beta must be >= 0");
    if (cfg.kind == DefenseKind::lbp && (cfg.psi < 1 || cfg.psi > num_classes))
        throw std::invalid_argument("DefenseConfig: psi must lie in [1, num_classes]");
    if (cfg.k < 0) throw std::invalid_argument("DefenseConfig: k must be >= 0");
}

// Clamp negatives to zero and rescale to sum 1; all-zero input falls back to
// the uniform distribution. NaN input is an error.
inline std::vector<double> normalize_released(const std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("normalize_released: empty vector");
    std::vector<double> out(v.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (std::isnan(v[i])) throw std::invalid_argument("normalize_released: NaN entry");
        out[i] = v[i] > 0.0 ? v[i] : 0.0;
        sum += out[i];
    }
    if (sum > 0.0) {
        for (double& x : out) x /= sum;
    } else {
        std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(out.size()));
    }
    return out;
}

namespace detail {

inline bool has_positive_after_clamp(const std::vector<double>& v) {
    for (double x : v)
        if (x > 0.0) return true;
    return false;
}

constexpr int kDefenseResampleLimit = 1000;

}  // namespace detail

// Independent Laplace(beta) noise per coordinate, then release normalization.
// beta = 0 returns the input bitwise. When normalizing, noise vectors whose
// clamped result would be all-zero are rejected and redrawn (bounded retries):
// a release must keep at least one surviving coordinate, which also preserves
// the argmax under a shared shift (see lbp psi=1).
inline std::vector<double> vanpd(const std::vector<double>& p, double beta, RngStream& rng, bool normalize = true) {
    if (beta < 0.0) throw std::invalid_argument("vanpd: negative beta");
    if (p.empty()) throw std::invalid_argument("vanpd: empty posterior");
    if (beta == 0.0) return p;
    std::vector<double> noisy(p.size());
    for (int attempt = 0; attempt < detail::kDefenseResampleLimit; ++attempt) {
        for (std::size_t i = 0; i < p.size(); ++i) noisy[i] = p[i] + laplace_sample(rng, beta);
        if (!normalize) return noisy;
        if (detail::has_positive_after_clamp(noisy)) return normalize_released(noisy);
    }
    return normalize_released(noisy); // unreachable in practice; uniform fallback
}

// Shuffle coordinates, split into psi near-equal contiguous bins, add ONE
// Laplace(beta) draw to every element of a bin, restore original positions,
// then release normalization. beta = 0 is the identity for any psi.
inline std::vector<double> lbp(const std::vector<double>& p, double beta, int psi, RngStream& rng,
                               bool normalize = true) {
    if (beta < 0.0) throw std::invalid_argument("lbp: negative beta");
    const int dim = static_cast<int>(p.size());
    if (dim == 0) throw std::invalid_argument("lbp: empty posterior");
    if (psi < 1 || psi > dim) throw std::invalid_argument("lbp: psi out of range");
    if (beta == 0.0) return p;

    std::vector<int> perm(static_cast<std::size_t>(dim));
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);

    // bin sizes differ by at most one: the first (dim mod psi) bins get one extra
    const int base = dim / psi;
    const int extra = dim % psi;
    std::vector<int> bin_of(static_cast<std::size_t>(dim));
    {
        int t = 0;
        for (int b = 0; b < psi; ++b) {
            const int size = base + (b < extra ? 1 : 0);
            for (int s = 0; s < size; ++s) bin_of[static_cast<std::size_t>(t++)] = b;
        }
    }

    std::vector<double> noise(static_cast<std::size_t>(psi));
    std::vector<double> noisy(p.size());
    for (int attempt = 0; attempt < detail::kDefenseResampleLimit; ++attempt) {
        for (double& x : noise) x = laplace_sample(rng, beta);
        for (int t = 0; t < dim; ++t)
            noisy[static_cast<std::size_t>(perm[static_cast<std::size_t>(t)])] =
                p[static_cast<std::size_t>(perm[static_cast<std::size_t>(t)])] + noise[static_cast<std::size_t>(bin_of[static_cast<std::size_t>(t)])];
        if (!normalize) return noisy;
        if (detail::has_positive_after_clamp(noisy)) return normalize_released(noisy);
    }
    return normalize_released(noisy);
}

// Applies an output-perturbation defense to one posterior row; nsd is a query
// transformation and is not handled here.
inline std::vector<double> apply_output_defense(const std::vector<double>& p, const DefenseConfig& cfg,
                                                RngStream& rng) {
    switch (cfg.kind) {
        case DefenseKind::none: return p;
        case DefenseKind::vanpd: return vanpd(p, cfg.beta, rng, cfg.normalize);
        case DefenseKind::lbp: return lbp(p, cfg.beta, cfg.psi, rng, cfg.normalize);
        case DefenseKind::nsd: throw std::invalid_argument("apply_output_defense: nsd is a query defense");
    }
    throw std::invalid_argument("apply_output_defense: unknown kind");
}

// min(k, d(v)) uniformly chosen neighbors of v, returned sorted.
inline NodeSet nsd_retained(const Graph& g, NodeId v, int k, RngStream& rng) {
    if (k < 0) throw std::invalid_argument("nsd_retained: k must be >= 0");
    return sample_neighbors(g, v, k, rng);
}

// Materialized defended graph: identical to g except that v keeps only the
// retained first-hop neighbors; the survivors' own neighborhoods stay intact
// and the input graph is never mutated.
inline Graph nsd_query_graph(const Graph& g, NodeId v, const NodeSet& retained) {
    g.check_node(v);
    for (NodeId u : retained) {
        g.check_node(u);
        const auto& nbrs = g.neighbors(v);
        if (!std::binary_search(nbrs.begin(), nbrs.end(), u))
            throw std::invalid_argument("nsd_query_graph: retained node is not a neighbor of v");
    }
    Graph out = g;
    out.adj[static_cast<std::size_t>(v)] = retained;
    const auto& original = g.neighbors(v);
    for (NodeId w : original) {
        if (std::binary_search(retained.begin(), retained.end(), w)) continue;
        auto& wl = out.adj[static_cast<std::size_t>(w)];
        wl.erase(std::lower_bound(wl.begin(), wl.end(), v));
    }
    return out;
}

inline Graph nsd_query(const Graph& g, NodeId v, int k, RngStream& rng, NodeSet* retained_out = nullptr) {
    const NodeSet retained = nsd_retained(g, v, k, rng);
    if (retained_out) *retained_out = retained;
    return nsd_query_graph(g, v, retained);
}

// The part of the defended graph a 2-round model actually reads when queried
// at v: v, the retained neighbors, and their full neighborhoods, with the
// defended full-graph degrees carried alongside so gcn/sgc normalization
// matches the materialized graph exactly.
struct NsdLocalQuery {
    Graph graph;
    NodeSet original_ids;            // sorted; local id -> original id
    std::vector<NodeId> degree_override; // per local node: degree in the defended FULL graph
    NodeId local_v = -1;
};

inline NsdLocalQuery nsd_local_query(const Graph& g, NodeId v, const NodeSet& retained) {
    g.check_node(v);
    NodeSet nodes;
    nodes.push_back(v);
    for (NodeId u : retained) {
        nodes.push_back(u);
        const auto& nbrs = g.neighbors(u);
        nodes.insert(nodes.end(), nbrs.begin(), nbrs.end());
    }
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());

    auto is_retained = [&](NodeId u) { return std::binary_search(retained.begin(), retained.end(), u); };

    NsdLocalQuery out;
    out.original_ids = nodes;
    const int local_n = static_cast<int>(nodes.size());
    Graph local;
    local.num_nodes = local_n;
    local.num_classes = g.num_classes;
    local.adj.resize(static_cast<std::size_t>(local_n));
    local.features = Matrix(local_n, g.features.cols);
    local.labels.resize(static_cast<std::size_t>(local_n));
    out.degree_override.resize(static_cast<std::size_t>(local_n));

    for (int t = 0; t < local_n; ++t) {
        const NodeId orig = nodes[static_cast<std::size_t>(t)];
        const double* src = g.features.row(orig);
        std::copy(src, src + g.features.cols, local.features.row(t));
        local.labels[static_cast<std::size_t>(t)] = g.labels[static_cast<std::size_t>(orig)];
        if (orig == v) {
            out.local_v = static_cast<NodeId>(t);
            out.degree_override[static_cast<std::size_t>(t)] = static_cast<NodeId>(retained.size());
        } else if (is_retained(orig)) {
            out.degree_override[static_cast<std::size_t>(t)] = static_cast<NodeId>(g.degree(orig));
        } else {
            const auto& vnbrs = g.neighbors(v);
            const bool touches_v = std::binary_search(vnbrs.begin(), vnbrs.end(), orig);
            out.degree_override[static_cast<std::size_t>(t)] =
                static_cast<NodeId>(g.degree(orig) - (touches_v ? 1 : 0));
        }
        // neighbors within the local node set, per the DEFENDED graph
        for (NodeId u : g.neighbors(orig)) {
            if ((orig == v && !is_retained(u)) || (u == v && !is_retained(orig))) continue;
            const auto it = std::lower_bound(nodes.begin(), nodes.end(), u);
            if (it != nodes.end() && *it == u)
                local.adj[static_cast<std::size_t>(t)].push_back(static_cast<NodeId>(it - nodes.begin()));
        }
        // g's neighbor lists are ascending and the remap preserves order, so
        // the local lists are already sorted
    }
    out.graph = std::move(local);
    return out;
}

// Released posterior for one nsd-defended query. Reuses the undefended row
// bitwise when nothing is removed; otherwise runs the model on the local
// defended graph, which agrees bitwise with a full defended-graph forward.
inline std::vector<double> nsd_posterior_row(const Graph& g, const GnnModel& model, NodeId v, int k,
                                             RngStream& defense_rng, RngStream* query_rng = nullptr,
                                             const double* undefended_row = nullptr) {
    const NodeSet retained = nsd_retained(g, v, k, defense_rng);
    if (undefended_row && static_cast<int>(retained.size()) == g.degree(v))
        return std::vector<double>(undefended_row, undefended_row + model.num_classes);
    const NsdLocalQuery local = nsd_local_query(g, v, retained);
    Matrix y;
    if (model.kind == ModelKind::sage) {
        if (!query_rng) throw std::invalid_argument("nsd_posterior_row: sage requires a query rng");
        y = sage_forward(local.graph, model, NodeSet{local.local_v}, *query_rng);
        return std::vector<double>(y.row(0), y.row(0) + y.cols);
    }
    ForwardOptions opt;
    opt.degree_override = &local.degree_override;
    y = model_forward(local.graph, model, nullptr, opt);
    const double* row = y.row(local.local_v);
    return std::vector<double>(row, row + y.cols);
}

}  // namespace gnnaudit
