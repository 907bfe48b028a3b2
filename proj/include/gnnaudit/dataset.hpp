#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "gnnaudit/graph.hpp"
#include "gnnaudit/matrix.hpp"
#include "gnnaudit/rng.hpp"

namespace gnnaudit {

// Dataset directory layout:
//   edges.txt    one undirected edge per line, two whitespace-separated node ids
//   features.csv one comma-separated row of reals per node
//   labels.csv   lines "node_id,label"
// Node count comes from features.csv; class count is max(label)+1 unless a
// count is declared by the caller.

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

inline double parse_real(const std::string& s, const char* where) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        if (pos != s.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument(std::string(where) + ": malformed number '" + s + "'");
    }
}

inline long parse_int(const std::string& s, const char* where) {
    long v = 0;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(*begin))) ++begin;
    auto [ptr, ec] = std::from_chars(begin, end, v);
    while (ptr < end && (std::isspace(static_cast<unsigned char>(*ptr)) || *ptr == '\r')) ++ptr;
    if (ec != std::errc() || ptr != end)
        throw std::invalid_argument(std::string(where) + ": malformed integer '" + s + "'");
    return v;
}

}  // namespace detail

inline Graph load_dataset(const std::string& dir, std::int32_t declared_classes = -1) {
    namespace fs = std::filesystem;
    const fs::path root(dir);
    const fs::path features_path = root / "features.csv";
    const fs::path edges_path = root / "edges.txt";
    const fs::path labels_path = root / "labels.csv";
    for (const fs::path& p : {features_path, edges_path, labels_path})
        if (!fs::exists(p)) throw std::runtime_error("load_dataset: missing file " + p.string());

    // features.csv defines the node count and feature dimension
    std::vector<std::vector<double>> rows;
    {
        std::ifstream in(features_path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line == "\r") continue;
            const auto fields = detail::split_csv_line(line);
            std::vector<double> row(fields.size());
            for (std::size_t i = 0; i < fields.size(); ++i)
                row[i] = detail::parse_real(fields[i], "features.csv");
            if (!rows.empty() && rows.front().size() != row.size())
                throw std::invalid_argument("load_dataset: ragged feature rows");
            rows.push_back(std::move(row));
        }
    }
    if (rows.empty()) throw std::invalid_argument("load_dataset: empty features.csv");
    const NodeId n = static_cast<NodeId>(rows.size());
    Matrix features(n, static_cast<int>(rows.front().size()));
    for (NodeId i = 0; i < n; ++i)
        std::copy(rows[static_cast<std::size_t>(i)].begin(), rows[static_cast<std::size_t>(i)].end(), features.row(i));

    std::vector<std::int32_t> labels(static_cast<std::size_t>(n), -1);
    {
        std::ifstream in(labels_path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line == "\r") continue;
            const auto fields = detail::split_csv_line(line);
            if (fields.size() != 2) throw std::invalid_argument("load_dataset: labels.csv lines must be node_id,label");
            const long v = detail::parse_int(fields[0], "labels.csv node_id");
            const long label = detail::parse_int(fields[1], "labels.csv label");
            if (v < 0 || v >= n) throw std::out_of_range("load_dataset: label node id out of range");
            if (label < 0) throw std::out_of_range("load_dataset: negative label");
            if (labels[static_cast<std::size_t>(v)] != -1)
                throw std::invalid_argument("load_dataset: duplicate label line for node " + std::to_string(v));
            labels[static_cast<std::size_t>(v)] = static_cast<std::int32_t>(label);
        }
    }
    std::int32_t max_label = -1;
    for (NodeId i = 0; i < n; ++i) {
        if (labels[static_cast<std::size_t>(i)] < 0)
            throw std::invalid_argument("load_dataset: missing label for node " + std::to_string(i));
        max_label = std::max(max_label, labels[static_cast<std::size_t>(i)]);
    }
    const std::int32_t num_classes = declared_classes > 0 ? declared_classes : max_label + 1;
    if (max_label >= num_classes) throw std::out_of_range("load_dataset: label exceeds declared class count");

    std::vector<std::pair<NodeId, NodeId>> edges;
    {
        std::ifstream in(edges_path);
        std::string line;
        while (std::getline(in, line)) {
            std::istringstream ls(line);
            long u, v;
            if (!(ls >> u)) continue; // blank line
            if (!(ls >> v)) throw std::invalid_argument("load_dataset: edge line needs two node ids");
            std::string rest;
            if (ls >> rest) throw std::invalid_argument("load_dataset: edge line has extra fields");
            if (u < 0 || u >= n || v < 0 || v >= n) throw std::out_of_range("load_dataset: edge endpoint out of range");
            if (u == v) throw std::invalid_argument("load_dataset: self-loop edge rejected");
            edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
        }
    }
    return make_graph(n, edges, std::move(features), std::move(labels), num_classes);
}

// Writes the three dataset files; doubles are printed with %.17g so a
// save/load round trip reproduces the graph bitwise.
inline void save_dataset(const Graph& g, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
        std::ofstream out(fs::path(dir) / "edges.txt");
        for (NodeId u = 0; u < g.num_nodes; ++u)
            for (NodeId v : g.neighbors(u))
                if (u < v) out << u << ' ' << v << '\n';
        if (!out) throw std::runtime_error("save_dataset: failed writing edges.txt");
    }
    {
        std::ofstream out(fs::path(dir) / "features.csv");
        char buf[32];
        for (NodeId i = 0; i < g.num_nodes; ++i) {
            const double* row = g.features.row(i);
            for (int j = 0; j < g.features.cols; ++j) {
                std::snprintf(buf, sizeof(buf), "%.17g", row[j]);
                if (j) out << ',';
                out << buf;
            }
            out << '\n';
        }
        if (!out) throw std::runtime_error("save_dataset: failed writing features.csv");
    }
    {
        std::ofstream out(fs::path(dir) / "labels.csv");
        for (NodeId i = 0; i < g.num_nodes; ++i) out << i << ',' << g.labels[static_cast<std::size_t>(i)] << '\n';
        if (!out) throw std::runtime_error("save_dataset: failed writing labels.csv");
    }
}

// Stochastic block model with Gaussian features around separated class means.
struct SbmParams {
    std::int32_t num_classes = 2;
    std::int32_t nodes_per_class = 50;
    double intra_p = 0.1;   // edge probability within a class
    double inter_p = 0.01;  // edge probability across classes
    std::int32_t feature_dim = 16;
    double class_mean_separation = 1.0; // pairwise distance between class means
    double feature_noise_std = 1.0;
};

inline Graph generate_sbm(const SbmParams& p, std::uint64_t seed) {
    if (p.num_classes < 1 || p.nodes_per_class < 1) throw std::invalid_argument("generate_sbm: empty blocks");
    if (p.feature_dim < p.num_classes)
        throw std::invalid_argument("generate_sbm: feature_dim must be at least num_classes");
    if (p.intra_p < 0 || p.intra_p > 1 || p.inter_p < 0 || p.inter_p > 1)
        throw std::invalid_argument("generate_sbm: probabilities must lie in [0,1]");
    RngStream rng(seed, StreamId::data);
    const NodeId n = p.num_classes * p.nodes_per_class;

    std::vector<std::int32_t> labels(static_cast<std::size_t>(n));
    for (NodeId i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i / p.nodes_per_class;

    // class c's mean sits on axis c at distance class_mean_separation/sqrt(2)
    // from the origin, so means are pairwise class_mean_separation apart
    const double radius = p.class_mean_separation / std::sqrt(2.0);
    Matrix features(n, p.feature_dim);
    for (NodeId i = 0; i < n; ++i) {
        double* row = features.row(i);
        for (int j = 0; j < p.feature_dim; ++j) row[j] = rng.normal(0.0, p.feature_noise_std);
        row[labels[static_cast<std::size_t>(i)]] += radius;
    }

    std::vector<std::pair<NodeId, NodeId>> edges;
    for (NodeId i = 0; i < n; ++i)
        for (NodeId j = i + 1; j < n; ++j) {
            const double prob = labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)] ? p.intra_p : p.inter_p;
            if (rng.bernoulli(prob)) edges.emplace_back(i, j);
        }
    return make_graph(n, edges, std::move(features), std::move(labels), p.num_classes);
}

// Citation-style replica: a block-model graph with an exact edge count and
// sparse bag-of-words features tied to per-class topic blocks. Matches the
// shape statistics (node/edge/feature/class counts) of the citation datasets
// this toolkit is benchmarked against.
struct CitationReplicaParams {
    std::vector<std::int32_t> class_sizes;
    std::int64_t num_edges = 0;
    double intra_fraction = 0.8;        // fraction of edges inside a class
    std::int32_t feature_dim = 0;
    std::int32_t active_per_node = 18;  // active word count per node row
    double topic_purity = 0.8;          // chance an active word comes from the class topic block
    double hard_fraction = 0.0;         // fraction of nodes with background-only words
};

// Preset replicas matching the published shape statistics of the two small
// citation benchmarks (node/edge/feature/class counts and per-class sizes).
inline CitationReplicaParams cora_replica_params() {
    CitationReplicaParams p;
    p.class_sizes = {298, 418, 818, 426, 217, 180, 351};
    p.num_edges = 5429;
    p.feature_dim = 1433;
    p.active_per_node = 18;
    p.intra_fraction = 0.81;
    // Low purity keeps most words shared across classes, which caps held-out
    // accuracy near the published level while a trained model still memorises
    // the near-unique member signatures -- the regime the audit probes.
    p.topic_purity = 0.15;
    return p;
}

inline CitationReplicaParams citeseer_replica_params() {
    CitationReplicaParams p;
    p.class_sizes = {596, 264, 701, 668, 590, 493};
    p.num_edges = 4715;
    p.feature_dim = 3703;
    p.active_per_node = 32;
    p.intra_fraction = 0.74;
    // Same leaky-text regime as the sibling preset above, so a shadow model
    // trained here produces confidence geometry an attack can carry across.
    p.topic_purity = 0.25;
    return p;
}

inline Graph generate_citation_replica(const CitationReplicaParams& p, std::uint64_t seed) {
    const std::int32_t num_classes = static_cast<std::int32_t>(p.class_sizes.size());
    if (num_classes < 2) throw std::invalid_argument("citation replica: need at least two classes");
    NodeId n = 0;
    for (std::int32_t s : p.class_sizes) {
        if (s < 2) throw std::invalid_argument("citation replica: class sizes must be >= 2");
        n += s;
    }
    if (p.feature_dim < num_classes) throw std::invalid_argument("citation replica: feature_dim too small");
    if (p.intra_fraction < 0 || p.intra_fraction > 1)
        throw std::invalid_argument("citation replica: intra_fraction must lie in [0,1]");

    RngStream rng(seed, StreamId::data);
    std::vector<std::int32_t> labels(static_cast<std::size_t>(n));
    std::vector<NodeId> class_start(static_cast<std::size_t>(num_classes) + 1, 0);
    {
        NodeId at = 0;
        for (std::int32_t c = 0; c < num_classes; ++c) {
            class_start[static_cast<std::size_t>(c)] = at;
            for (std::int32_t t = 0; t < p.class_sizes[static_cast<std::size_t>(c)]; ++t)
                labels[static_cast<std::size_t>(at++)] = c;
        }
        class_start[static_cast<std::size_t>(num_classes)] = at;
    }

    // Sparse binary features: per-class contiguous topic block + background.
    // A `hard_fraction` slice of nodes draws background-only words, mirroring
    // short or off-topic documents whose class is not readable from the text.
    const std::int32_t block = p.feature_dim / num_classes;
    Matrix features(n, p.feature_dim);
    for (NodeId i = 0; i < n; ++i) {
        const std::int32_t c = labels[static_cast<std::size_t>(i)];
        const bool hard = rng.uniform01() < p.hard_fraction;
        double* row = features.row(i);
        for (std::int32_t t = 0; t < p.active_per_node; ++t) {
            std::int32_t dim;
            if (!hard && rng.uniform01() < p.topic_purity)
                dim = c * block + static_cast<std::int32_t>(rng.uniform_int(static_cast<std::uint64_t>(block)));
            else
                dim = static_cast<std::int32_t>(rng.uniform_int(static_cast<std::uint64_t>(p.feature_dim)));
            row[dim] = 1.0;
        }
    }

    // exact edge count: intra edges inside uniformly chosen classes, the rest
    // across classes, all distinct, sampled by rejection
    const std::int64_t m_intra = std::llround(p.intra_fraction * static_cast<double>(p.num_edges));
    std::unordered_set<std::int64_t> seen;
    seen.reserve(static_cast<std::size_t>(p.num_edges) * 2);
    std::vector<std::pair<NodeId, NodeId>> edges;
    edges.reserve(static_cast<std::size_t>(p.num_edges));
    auto try_add = [&](NodeId u, NodeId v) {
        if (u == v) return false;
        if (u > v) std::swap(u, v);
        const std::int64_t key = static_cast<std::int64_t>(u) * n + v;
        if (!seen.insert(key).second) return false;
        edges.emplace_back(u, v);
        return true;
    };
    while (static_cast<std::int64_t>(edges.size()) < m_intra) {
        const NodeId u = static_cast<NodeId>(rng.uniform_int(static_cast<std::uint64_t>(n)));
        const std::int32_t c = labels[static_cast<std::size_t>(u)];
        const NodeId lo = class_start[static_cast<std::size_t>(c)];
        const NodeId hi = class_start[static_cast<std::size_t>(c) + 1];
        const NodeId v = lo + static_cast<NodeId>(rng.uniform_int(static_cast<std::uint64_t>(hi - lo)));
        try_add(u, v);
    }
    while (static_cast<std::int64_t>(edges.size()) < p.num_edges) {
        const NodeId u = static_cast<NodeId>(rng.uniform_int(static_cast<std::uint64_t>(n)));
        const NodeId v = static_cast<NodeId>(rng.uniform_int(static_cast<std::uint64_t>(n)));
        if (labels[static_cast<std::size_t>(u)] == labels[static_cast<std::size_t>(v)]) continue;
        try_add(u, v);
    }
    return make_graph(n, edges, std::move(features), std::move(labels), num_classes);
}

}  // namespace gnnaudit
