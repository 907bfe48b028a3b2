#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <queue>
#include <stdexcept>
#include <vector>

#include "gnnaudit/matrix.hpp"
#include "gnnaudit/rng.hpp"

namespace gnnaudit {

using NodeId = std::int32_t;
using NodeSet = std::vector<NodeId>;

// Undirected attributed graph. Neighbor lists are kept sorted with no
// self-loops and no duplicates; instances are treated as immutable once built.
struct Graph {
    NodeId num_nodes = 0;
    std::int32_t num_classes = 0;
    std::vector<std::vector<NodeId>> adj;
    Matrix features;                  // num_nodes x feature_dim
    std::vector<std::int32_t> labels; // one class id per node

    NodeId degree(NodeId v) const { return static_cast<NodeId>(adj[static_cast<std::size_t>(v)].size()); }
    int feature_dim() const { return features.cols; }
    const std::vector<NodeId>& neighbors(NodeId v) const { return adj[static_cast<std::size_t>(v)]; }

    std::int64_t num_edges() const {
        std::int64_t twice = 0;
        for (const auto& nbrs : adj) twice += static_cast<std::int64_t>(nbrs.size());
        return twice / 2;
    }

    void check_node(NodeId v) const {
        if (v < 0 || v >= num_nodes) throw std::out_of_range("node does not exist");
    }
};

// Builds a validated graph from an undirected edge list. Duplicate and
// reversed edge entries collapse to one edge; self-loops are rejected.
inline Graph make_graph(NodeId num_nodes, const std::vector<std::pair<NodeId, NodeId>>& edges,
                        Matrix features, std::vector<std::int32_t> labels, std::int32_t num_classes) {
    if (num_nodes < 0) throw std::invalid_argument("make_graph: negative node count");
    if (features.rows != num_nodes) throw std::invalid_argument("make_graph: one feature row per node required");
    if (static_cast<NodeId>(labels.size()) != num_nodes)
        throw std::invalid_argument("make_graph: one label per node required");
    if (num_classes <= 0) throw std::invalid_argument("make_graph: class count must be positive");
    for (std::int32_t label : labels)
        if (label < 0 || label >= num_classes) throw std::out_of_range("make_graph: label out of class range");

    Graph g;
    g.num_nodes = num_nodes;
    g.num_classes = num_classes;
    g.features = std::move(features);
    g.labels = std::move(labels);
    g.adj.assign(static_cast<std::size_t>(num_nodes), {});
    for (const auto& [u, v] : edges) {
        if (u < 0 || u >= num_nodes || v < 0 || v >= num_nodes)
            throw std::out_of_range("make_graph: edge endpoint out of range");
        if (u == v) throw std::invalid_argument("make_graph: self loops are not allowed");
        g.adj[static_cast<std::size_t>(u)].push_back(v);
        g.adj[static_cast<std::size_t>(v)].push_back(u);
    }
    for (auto& nbrs : g.adj) {
        std::sort(nbrs.begin(), nbrs.end());
        nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    }
    return g;
}

struct DegreeStats {
    double average = 0.0;
    NodeId min_degree = 0;
    NodeId max_degree = 0;
    NodeId isolated_count = 0;
};

// Degree statistics of the queried nodes as measured in g: pass the full
// graph to measure full-neighborhood degrees, or an induced subgraph to
// measure degrees inside that subgraph. With nodes = all of g the average
// equals 2|E|/|V|.
inline DegreeStats degree_stats(const Graph& g, const NodeSet& nodes) {
    if (nodes.empty()) throw std::invalid_argument("degree_stats: empty node set");
    DegreeStats st;
    st.min_degree = std::numeric_limits<NodeId>::max();
    double total = 0.0;
    for (NodeId v : nodes) {
        g.check_node(v);
        const NodeId d = g.degree(v);
        total += d;
        st.min_degree = std::min(st.min_degree, d);
        st.max_degree = std::max(st.max_degree, d);
        if (d == 0) st.isolated_count += 1;
    }
    st.average = total / static_cast<double>(nodes.size());
    return st;
}

inline NodeSet all_nodes(const Graph& g) {
    NodeSet nodes(static_cast<std::size_t>(g.num_nodes));
    for (NodeId i = 0; i < g.num_nodes; ++i) nodes[static_cast<std::size_t>(i)] = i;
    return nodes;
}

// Induced subgraph with a compact, sorted node remap.
struct SubgraphResult {
    Graph graph;
    NodeSet original_ids; // new id -> old id, ascending

    NodeId to_new(NodeId old_id) const {
        const auto it = std::lower_bound(original_ids.begin(), original_ids.end(), old_id);
        if (it == original_ids.end() || *it != old_id)
            throw std::out_of_range("subgraph: node not present");
        return static_cast<NodeId>(it - original_ids.begin());
    }
};

inline SubgraphResult induced_subgraph(const Graph& g, const NodeSet& nodes) {
    SubgraphResult out;
    out.original_ids = nodes;
    std::sort(out.original_ids.begin(), out.original_ids.end());
    if (std::adjacent_find(out.original_ids.begin(), out.original_ids.end()) != out.original_ids.end())
        throw std::invalid_argument("induced_subgraph: duplicate node ids");
    for (NodeId v : out.original_ids) g.check_node(v);

    const NodeId n = static_cast<NodeId>(out.original_ids.size());
    std::vector<NodeId> remap(static_cast<std::size_t>(g.num_nodes), -1);
    for (NodeId i = 0; i < n; ++i) remap[static_cast<std::size_t>(out.original_ids[static_cast<std::size_t>(i)])] = i;

    Graph& sub = out.graph;
    sub.num_nodes = n;
    sub.num_classes = g.num_classes;
    sub.adj.assign(static_cast<std::size_t>(n), {});
    sub.features = Matrix(n, g.features.cols);
    sub.labels.resize(static_cast<std::size_t>(n));
    for (NodeId i = 0; i < n; ++i) {
        const NodeId old_id = out.original_ids[static_cast<std::size_t>(i)];
        const double* src = g.features.row(old_id);
        std::copy(src, src + g.features.cols, sub.features.row(i));
        sub.labels[static_cast<std::size_t>(i)] = g.labels[static_cast<std::size_t>(old_id)];
        for (NodeId u : g.neighbors(old_id)) {
            const NodeId nu = remap[static_cast<std::size_t>(u)];
            if (nu >= 0) sub.adj[static_cast<std::size_t>(i)].push_back(nu);
        }
        // source list was sorted and the remap is order-preserving
    }
    return out;
}

// Nodes within L hops of v (BFS), returned as an induced subgraph.
inline SubgraphResult l_hop_neighborhood(const Graph& g, NodeId v, int l) {
    g.check_node(v);
    if (l < 0) throw std::invalid_argument("l_hop_neighborhood: negative hop count");
    std::vector<int> dist(static_cast<std::size_t>(g.num_nodes), -1);
    std::queue<NodeId> frontier;
    dist[static_cast<std::size_t>(v)] = 0;
    frontier.push(v);
    NodeSet reached{v};
    while (!frontier.empty()) {
        const NodeId u = frontier.front();
        frontier.pop();
        if (dist[static_cast<std::size_t>(u)] == l) continue;
        for (NodeId w : g.neighbors(u)) {
            if (dist[static_cast<std::size_t>(w)] < 0) {
                dist[static_cast<std::size_t>(w)] = dist[static_cast<std::size_t>(u)] + 1;
                reached.push_back(w);
                frontier.push(w);
            }
        }
    }
    return induced_subgraph(g, reached);
}

// s neighbors of v drawn uniformly without replacement; all of them when
// s >= degree. The result is sorted so downstream accumulation order is
// deterministic.
inline NodeSet sample_neighbors(const Graph& g, NodeId v, std::int32_t s, RngStream& rng) {
    g.check_node(v);
    if (s < 0) throw std::invalid_argument("sample_neighbors: negative sample size");
    const auto& nbrs = g.neighbors(v);
    const NodeId d = static_cast<NodeId>(nbrs.size());
    if (s >= d) return nbrs;
    const auto picks = rng.sample_without_replacement(d, s);
    NodeSet out(static_cast<std::size_t>(s));
    for (std::int32_t i = 0; i < s; ++i) out[static_cast<std::size_t>(i)] = nbrs[static_cast<std::size_t>(picks[static_cast<std::size_t>(i)])];
    std::sort(out.begin(), out.end());
    return out;
}

// Symmetric-normalized edge weights with an implicit self-loop:
// w_ij = 1 / sqrt((d_i + 1)(d_j + 1)), w_ii = 1 / (d_i + 1).
// degree_override supplies each node's true degree when g is a local
// extraction of a larger query graph (frontier nodes keep their full-graph
// degrees so locally computed posteriors match a full-graph pass bitwise).
struct EdgeWeights {
    std::vector<double> self;              // w_ii per node
    std::vector<std::vector<double>> nbr;  // aligned with Graph::adj
};

inline EdgeWeights normalized_edge_weights(const Graph& g,
                                           const std::vector<NodeId>* degree_override = nullptr) {
    if (degree_override && static_cast<NodeId>(degree_override->size()) != g.num_nodes)
        throw std::invalid_argument("normalized_edge_weights: override size mismatch");
    std::vector<double> inv_sqrt(static_cast<std::size_t>(g.num_nodes));
    for (NodeId i = 0; i < g.num_nodes; ++i) {
        const NodeId d = degree_override ? (*degree_override)[static_cast<std::size_t>(i)] : g.degree(i);
        if (d < g.degree(i)) throw std::invalid_argument("normalized_edge_weights: override below local degree");
        inv_sqrt[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(static_cast<double>(d) + 1.0);
    }
    EdgeWeights w;
    w.self.resize(static_cast<std::size_t>(g.num_nodes));
    w.nbr.resize(static_cast<std::size_t>(g.num_nodes));
    for (NodeId i = 0; i < g.num_nodes; ++i) {
        const double si = inv_sqrt[static_cast<std::size_t>(i)];
        w.self[static_cast<std::size_t>(i)] = si * si;
        const auto& nbrs = g.neighbors(i);
        auto& row = w.nbr[static_cast<std::size_t>(i)];
        row.resize(nbrs.size());
        for (std::size_t t = 0; t < nbrs.size(); ++t)
            row[t] = si * inv_sqrt[static_cast<std::size_t>(nbrs[t])];
    }
    return w;
}

}  // namespace gnnaudit
