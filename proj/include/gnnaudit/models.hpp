#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "gnnaudit/graph.hpp"
#include "gnnaudit/matrix.hpp"
#include "gnnaudit/numerics.hpp"
#include "gnnaudit/rng.hpp"

namespace gnnaudit {

enum class ModelKind { gcn, sgc, gat, sage };

inline const char* model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::gcn: return "gcn";
        case ModelKind::sgc: return "sgc";
        case ModelKind::gat: return "gat";
        case ModelKind::sage: return "sage";
    }
    throw std::invalid_argument("unknown model kind");
}

inline ModelKind model_kind_from_name(const std::string& s) {
    if (s == "gcn") return ModelKind::gcn;
    if (s == "sgc") return ModelKind::sgc;
    if (s == "gat") return ModelKind::gat;
    if (s == "sage") return ModelKind::sage;
    throw std::invalid_argument("unknown model kind '" + s + "'");
}

constexpr double kLeakySlope = 0.2;

struct ModelConfig {
    ModelKind kind = ModelKind::gcn;
    int hidden_dim = 256;
    int num_heads = 4;                       // gat only
    std::array<int, 2> sample_sizes{25, 10}; // sage fanouts, layer 1 and 2
};

// Two-round message-passing classifier. All kinds share the final linear +
// softmax prediction over the last aggregation; only the aggregation and the
// hidden transformation differ:
//   gcn  : z1 = A_hat X, x1 = relu(z1 W1), z2 = A_hat x1, y = softmax(z2 Wf)
//   sgc  : z2 = A_hat A_hat X,                            y = softmax(z2 Wf)
//   gat  : per-head attention aggregation of raw inputs, per-head relu(z W)
//          concatenated at layer 1, heads averaged at layer 2, then Wf
//   sage : z = [x_v || mean of sampled neighbor x], relu(z W1) at layer 1,
//          concat again at layer 2, then Wf; mini-batch with sampled trees
struct GnnModel {
    ModelKind kind = ModelKind::gcn;
    int feature_dim = 0;
    int num_classes = 0;
    int hidden_dim = 0;
    int num_heads = 0;
    std::array<int, 2> sample_sizes{25, 10};

    std::vector<Matrix> layer_weights; // gcn: [F x H]; sage: [2F x H]; gat: per-head [F x H/P]; sgc: none
    std::vector<Matrix> attn_l1;       // gat: per-head 1 x 2(H/P)
    std::vector<Matrix> attn_l2;       // gat: per-head 1 x 2H
    Matrix final_weights;              // gcn/gat: H x C; sgc: F x C; sage: 2H x C

    int head_dim() const { return num_heads > 0 ? hidden_dim / num_heads : 0; }

    std::vector<Matrix*> params() {
        std::vector<Matrix*> out;
        for (auto& w : layer_weights) out.push_back(&w);
        for (auto& a : attn_l1) out.push_back(&a);
        for (auto& a : attn_l2) out.push_back(&a);
        out.push_back(&final_weights);
        return out;
    }
    std::vector<const Matrix*> params() const {
        std::vector<const Matrix*> out;
        for (auto& w : layer_weights) out.push_back(&w);
        for (auto& a : attn_l1) out.push_back(&a);
        for (auto& a : attn_l2) out.push_back(&a);
        out.push_back(&final_weights);
        return out;
    }
    std::vector<std::string> param_names() const {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < layer_weights.size(); ++i) out.push_back("layer_weights." + std::to_string(i));
        for (std::size_t i = 0; i < attn_l1.size(); ++i) out.push_back("attn_l1." + std::to_string(i));
        for (std::size_t i = 0; i < attn_l2.size(); ++i) out.push_back("attn_l2." + std::to_string(i));
        out.push_back("final_weights");
        return out;
    }
};

namespace detail {
inline Matrix glorot(int rows, int cols, RngStream& rng) {
    Matrix m(rows, cols);
    const double limit = std::sqrt(6.0 / (static_cast<double>(rows) + static_cast<double>(cols)));
    for (double& v : m.data) v = rng.uniform(-limit, limit);
    return m;
}
}  // namespace detail

inline GnnModel init_model(const ModelConfig& cfg, int feature_dim, int num_classes, RngStream& rng) {
    if (feature_dim < 1 || num_classes < 2) throw std::invalid_argument("init_model: bad problem dimensions");
    if (cfg.hidden_dim < 1) throw std::invalid_argument("init_model: hidden_dim must be positive");
    GnnModel m;
    m.kind = cfg.kind;
    m.feature_dim = feature_dim;
    m.num_classes = num_classes;
    m.hidden_dim = cfg.hidden_dim;
    m.sample_sizes = cfg.sample_sizes;
    switch (cfg.kind) {
        case ModelKind::gcn:
            m.layer_weights.push_back(detail::glorot(feature_dim, cfg.hidden_dim, rng));
            m.final_weights = detail::glorot(cfg.hidden_dim, num_classes, rng);
            break;
        case ModelKind::sgc:
            m.final_weights = detail::glorot(feature_dim, num_classes, rng);
            break;
        case ModelKind::gat: {
            if (cfg.num_heads < 1 || cfg.hidden_dim % cfg.num_heads != 0)
                throw std::invalid_argument("init_model: hidden_dim must be divisible by num_heads");
            m.num_heads = cfg.num_heads;
            const int hd = cfg.hidden_dim / cfg.num_heads;
            for (int p = 0; p < cfg.num_heads; ++p) m.layer_weights.push_back(detail::glorot(feature_dim, hd, rng));
            for (int p = 0; p < cfg.num_heads; ++p) m.attn_l1.push_back(detail::glorot(1, 2 * hd, rng));
            for (int p = 0; p < cfg.num_heads; ++p) m.attn_l2.push_back(detail::glorot(1, 2 * cfg.hidden_dim, rng));
            m.final_weights = detail::glorot(cfg.hidden_dim, num_classes, rng);
            break;
        }
        case ModelKind::sage:
            if (cfg.sample_sizes[0] < 0 || cfg.sample_sizes[1] < 0)
                throw std::invalid_argument("init_model: negative sample sizes");
            m.layer_weights.push_back(detail::glorot(2 * feature_dim, cfg.hidden_dim, rng));
            m.final_weights = detail::glorot(2 * cfg.hidden_dim, num_classes, rng);
            break;
    }
    return m;
}

// ---------------------------------------------------------------------------
// Forward traces: everything the matching backward pass needs, nothing more.
// Traces hold a pointer to the graph they were computed on and are only valid
// while that graph is alive and unchanged.
// ---------------------------------------------------------------------------

struct GcnTrace {
    const Graph* g = nullptr;
    EdgeWeights w;
    Matrix z1;    // A_hat X
    Matrix h1pre; // z1 W1
    Matrix z2;    // A_hat relu(h1pre)
};

struct SgcTrace {
    const Graph* g = nullptr;
    Matrix z2; // A_hat A_hat X
};

struct GatTrace {
    const Graph* g = nullptr;
    std::vector<Matrix> t1;                            // per head: X W_p
    std::vector<std::vector<std::vector<double>>> s1;  // per head / node / [self + nbrs] pre-activation logits
    std::vector<std::vector<std::vector<double>>> a1;  // attention coefficients
    std::vector<Matrix> z1;                            // per head: attention-weighted raw inputs (n x F)
    std::vector<Matrix> h1pre;                         // per head: z1 W_p
    Matrix x1;                                         // concat of relu(h1pre) (n x H)
    std::vector<std::vector<std::vector<double>>> s2;
    std::vector<std::vector<std::vector<double>>> a2;
    Matrix z2;                                         // head-averaged layer-2 aggregation (n x H)
};

struct SageTrace {
    const Graph* g = nullptr;
    NodeSet batch;
    NodeSet frontier;                  // layer-1 nodes: batch plus sampled neighbors
    std::vector<NodeId> frontier_pos;  // graph node id -> frontier row (-1 when absent)
    std::vector<NodeSet> nbr1;         // per frontier row: sampled layer-1 neighbors
    std::vector<NodeSet> nbr2;         // per batch row: sampled layer-2 neighbors
    Matrix z1cat;                      // frontier x 2F
    Matrix h1pre;                      // frontier x H
    Matrix x1;                         // frontier x H
    Matrix z2cat;                      // batch x 2H
};

struct ForwardTrace {
    ModelKind kind = ModelKind::gcn;
    int feature_dim = 0;
    int num_classes = 0;
    int hidden_dim = 0;
    Matrix y; // posteriors the forward returned
    std::variant<GcnTrace, SgcTrace, GatTrace, SageTrace> data;
};

struct ForwardOptions {
    // gcn/sgc: per-node true degrees of the query graph when g is a local
    // extraction (see normalized_edge_weights)
    const std::vector<NodeId>* degree_override = nullptr;
};

namespace detail {

// out = A_hat * m with self-first accumulation order (kept identical between
// full-graph and local-extraction passes so results agree bitwise)
inline Matrix aggregate(const Graph& g, const EdgeWeights& w, const Matrix& m) {
    Matrix out(m.rows, m.cols);
    const int cols = m.cols;
    for (NodeId i = 0; i < g.num_nodes; ++i) {
        double* orow = out.row(i);
        const double* self = m.row(i);
        const double ws = w.self[static_cast<std::size_t>(i)];
        for (int c = 0; c < cols; ++c) orow[c] = ws * self[c];
        const auto& nbrs = g.neighbors(i);
        const auto& wn = w.nbr[static_cast<std::size_t>(i)];
        for (std::size_t t = 0; t < nbrs.size(); ++t) {
            const double* nrow = m.row(nbrs[t]);
            const double wv = wn[t];
            for (int c = 0; c < cols; ++c) orow[c] += wv * nrow[c];
        }
    }
    return out;
}

inline void check_graph_model(const Graph& g, const GnnModel& m) {
    if (g.features.cols != m.feature_dim) throw std::invalid_argument("forward: feature dimension mismatch");
    if (g.num_classes != m.num_classes) throw std::invalid_argument("forward: class count mismatch");
}

}  // namespace detail

inline Matrix gcn_forward(const Graph& g, const GnnModel& m, ForwardTrace* trace = nullptr,
                          const ForwardOptions& opt = {}) {
    if (m.kind != ModelKind::gcn) throw std::invalid_argument("gcn_forward: wrong model kind");
    detail::check_graph_model(g, m);
    const EdgeWeights w = normalized_edge_weights(g, opt.degree_override);
    Matrix z1 = detail::aggregate(g, w, g.features);
    Matrix h1pre = mat_mul(z1, m.layer_weights[0]);
    Matrix h1 = relu_rows(h1pre);
    Matrix z2 = detail::aggregate(g, w, h1);
    Matrix y = softmax_rows(mat_mul(z2, m.final_weights));
    if (trace) {
        trace->kind = ModelKind::gcn;
        trace->feature_dim = m.feature_dim;
        trace->num_classes = m.num_classes;
        trace->hidden_dim = m.hidden_dim;
        trace->y = y;
        trace->data = GcnTrace{&g, std::move(w), std::move(z1), std::move(h1pre), std::move(z2)};
    }
    return y;
}

inline Matrix sgc_forward(const Graph& g, const GnnModel& m, ForwardTrace* trace = nullptr,
                          const ForwardOptions& opt = {}) {
    if (m.kind != ModelKind::sgc) throw std::invalid_argument("sgc_forward: wrong model kind");
    detail::check_graph_model(g, m);
    const EdgeWeights w = normalized_edge_weights(g, opt.degree_override);
    Matrix z2 = detail::aggregate(g, w, detail::aggregate(g, w, g.features));
    Matrix y = softmax_rows(mat_mul(z2, m.final_weights));
    if (trace) {
        trace->kind = ModelKind::sgc;
        trace->feature_dim = m.feature_dim;
        trace->num_classes = m.num_classes;
        trace->hidden_dim = m.hidden_dim;
        trace->y = y;
        trace->data = SgcTrace{&g, std::move(z2)};
    }
    return y;
}

namespace detail {

// Attention coefficients for one head at one node over [self + neighbors].
// src/dst are the two halves of the head's attention vector applied to the
// attention inputs u (u = X W_p at layer 1, u = x1 at layer 2).
inline void attention_row(const Matrix& u, NodeId i, const std::vector<NodeId>& nbrs, const double* a_src,
                          const double* a_dst, int dim, std::vector<double>& s_out, std::vector<double>& a_out) {
    const std::size_t count = nbrs.size() + 1;
    s_out.resize(count);
    a_out.resize(count);
    const double* ui = u.row(i);
    double src = 0.0;
    for (int c = 0; c < dim; ++c) src += a_src[c] * ui[c];
    for (std::size_t t = 0; t < count; ++t) {
        const double* uj = u.row(t == 0 ? i : nbrs[t - 1]);
        double dst = 0.0;
        for (int c = 0; c < dim; ++c) dst += a_dst[c] * uj[c];
        s_out[t] = leaky_relu(src + dst, kLeakySlope);
    }
    double mx = s_out[0];
    for (double v : s_out) mx = std::max(mx, v);
    double sum = 0.0;
    for (std::size_t t = 0; t < count; ++t) {
        a_out[t] = std::exp(s_out[t] - mx);
        sum += a_out[t];
    }
    for (double& v : a_out) v /= sum;
}

}  // namespace detail

inline Matrix gat_forward(const Graph& g, const GnnModel& m, ForwardTrace* trace = nullptr) {
    if (m.kind != ModelKind::gat) throw std::invalid_argument("gat_forward: wrong model kind");
    detail::check_graph_model(g, m);
    const int n = g.num_nodes;
    const int hd = m.head_dim();
    const int H = m.hidden_dim;
    const int P = m.num_heads;

    GatTrace tr;
    tr.g = &g;
    tr.t1.resize(static_cast<std::size_t>(P));
    tr.s1.resize(static_cast<std::size_t>(P));
    tr.a1.resize(static_cast<std::size_t>(P));
    tr.z1.resize(static_cast<std::size_t>(P));
    tr.h1pre.resize(static_cast<std::size_t>(P));
    tr.s2.resize(static_cast<std::size_t>(P));
    tr.a2.resize(static_cast<std::size_t>(P));

    Matrix x1(n, H);
    for (int p = 0; p < P; ++p) {
        Matrix t1 = mat_mul(g.features, m.layer_weights[static_cast<std::size_t>(p)]);
        const double* a_src = m.attn_l1[static_cast<std::size_t>(p)].row(0);
        const double* a_dst = a_src + hd;
        Matrix z1(n, m.feature_dim);
        auto& s_head = tr.s1[static_cast<std::size_t>(p)];
        auto& a_head = tr.a1[static_cast<std::size_t>(p)];
        s_head.resize(static_cast<std::size_t>(n));
        a_head.resize(static_cast<std::size_t>(n));
        for (NodeId i = 0; i < n; ++i) {
            const auto& nbrs = g.neighbors(i);
            detail::attention_row(t1, i, nbrs, a_src, a_dst, hd, s_head[static_cast<std::size_t>(i)],
                                  a_head[static_cast<std::size_t>(i)]);
            const auto& alpha = a_head[static_cast<std::size_t>(i)];
            double* zrow = z1.row(i);
            const double* self = g.features.row(i);
            for (int c = 0; c < m.feature_dim; ++c) zrow[c] = alpha[0] * self[c];
            for (std::size_t t = 0; t < nbrs.size(); ++t) {
                const double* xr = g.features.row(nbrs[t]);
                const double av = alpha[t + 1];
                for (int c = 0; c < m.feature_dim; ++c) zrow[c] += av * xr[c];
            }
        }
        Matrix h1pre = mat_mul(z1, m.layer_weights[static_cast<std::size_t>(p)]);
        for (NodeId i = 0; i < n; ++i) {
            const double* hrow = h1pre.row(i);
            double* xrow = x1.row(i) + static_cast<std::size_t>(p) * hd;
            for (int c = 0; c < hd; ++c) xrow[c] = relu(hrow[c]);
        }
        tr.t1[static_cast<std::size_t>(p)] = std::move(t1);
        tr.z1[static_cast<std::size_t>(p)] = std::move(z1);
        tr.h1pre[static_cast<std::size_t>(p)] = std::move(h1pre);
    }

    Matrix z2(n, H);
    for (int p = 0; p < P; ++p) {
        const double* a_src = m.attn_l2[static_cast<std::size_t>(p)].row(0);
        const double* a_dst = a_src + H;
        auto& s_head = tr.s2[static_cast<std::size_t>(p)];
        auto& a_head = tr.a2[static_cast<std::size_t>(p)];
        s_head.resize(static_cast<std::size_t>(n));
        a_head.resize(static_cast<std::size_t>(n));
        for (NodeId i = 0; i < n; ++i) {
            const auto& nbrs = g.neighbors(i);
            detail::attention_row(x1, i, nbrs, a_src, a_dst, H, s_head[static_cast<std::size_t>(i)],
                                  a_head[static_cast<std::size_t>(i)]);
            const auto& alpha = a_head[static_cast<std::size_t>(i)];
            double* zrow = z2.row(i);
            const double* self = x1.row(i);
            for (int c = 0; c < H; ++c) zrow[c] += alpha[0] * self[c] / P;
            for (std::size_t t = 0; t < nbrs.size(); ++t) {
                const double* xr = x1.row(nbrs[t]);
                const double av = alpha[t + 1] / P;
                for (int c = 0; c < H; ++c) zrow[c] += av * xr[c];
            }
        }
    }
    Matrix y = softmax_rows(mat_mul(z2, m.final_weights));
    if (trace) {
        trace->kind = ModelKind::gat;
        trace->feature_dim = m.feature_dim;
        trace->num_classes = m.num_classes;
        trace->hidden_dim = m.hidden_dim;
        trace->y = y;
        tr.x1 = std::move(x1);
        tr.z2 = std::move(z2);
        trace->data = std::move(tr);
    }
    return y;
}

// Mini-batch forward over sampled neighborhood trees. Output rows follow
// batch order. Sampling draws from rng in a fixed order (batch fanouts, then
// frontier fanouts), so a fixed stream state reproduces posteriors exactly.
inline Matrix sage_forward(const Graph& g, const GnnModel& m, const NodeSet& batch, RngStream& rng,
                           ForwardTrace* trace = nullptr) {
    if (m.kind != ModelKind::sage) throw std::invalid_argument("sage_forward: wrong model kind");
    detail::check_graph_model(g, m);
    if (batch.empty()) throw std::invalid_argument("sage_forward: empty batch");
    for (NodeId v : batch) g.check_node(v);

    SageTrace tr;
    tr.g = &g;
    tr.batch = batch;
    const int nb = static_cast<int>(batch.size());
    tr.nbr2.resize(static_cast<std::size_t>(nb));
    for (int t = 0; t < nb; ++t)
        tr.nbr2[static_cast<std::size_t>(t)] = sample_neighbors(g, batch[static_cast<std::size_t>(t)], m.sample_sizes[1], rng);

    tr.frontier_pos.assign(static_cast<std::size_t>(g.num_nodes), -1);
    auto touch = [&](NodeId v) {
        if (tr.frontier_pos[static_cast<std::size_t>(v)] < 0) {
            tr.frontier_pos[static_cast<std::size_t>(v)] = static_cast<NodeId>(tr.frontier.size());
            tr.frontier.push_back(v);
        }
    };
    for (NodeId v : batch) touch(v);
    for (const auto& nbrs : tr.nbr2)
        for (NodeId u : nbrs) touch(u);

    const int nf = static_cast<int>(tr.frontier.size());
    tr.nbr1.resize(static_cast<std::size_t>(nf));
    for (int t = 0; t < nf; ++t)
        tr.nbr1[static_cast<std::size_t>(t)] = sample_neighbors(g, tr.frontier[static_cast<std::size_t>(t)], m.sample_sizes[0], rng);

    const int F = m.feature_dim;
    tr.z1cat = Matrix(nf, 2 * F);
    for (int t = 0; t < nf; ++t) {
        const NodeId u = tr.frontier[static_cast<std::size_t>(t)];
        double* row = tr.z1cat.row(t);
        const double* self = g.features.row(u);
        std::copy(self, self + F, row);
        const auto& sampled = tr.nbr1[static_cast<std::size_t>(t)];
        if (!sampled.empty()) {
            double* mean = row + F;
            for (NodeId j : sampled) {
                const double* xr = g.features.row(j);
                for (int c = 0; c < F; ++c) mean[c] += xr[c];
            }
            const double inv = 1.0 / static_cast<double>(sampled.size());
            for (int c = 0; c < F; ++c) mean[c] *= inv;
        } // empty neighborhoods contribute a zero mean vector
    }
    tr.h1pre = mat_mul(tr.z1cat, m.layer_weights[0]);
    tr.x1 = relu_rows(tr.h1pre);

    const int H = m.hidden_dim;
    tr.z2cat = Matrix(nb, 2 * H);
    for (int t = 0; t < nb; ++t) {
        const NodeId v = batch[static_cast<std::size_t>(t)];
        double* row = tr.z2cat.row(t);
        const double* self = tr.x1.row(tr.frontier_pos[static_cast<std::size_t>(v)]);
        std::copy(self, self + H, row);
        const auto& sampled = tr.nbr2[static_cast<std::size_t>(t)];
        if (!sampled.empty()) {
            double* mean = row + H;
            for (NodeId u : sampled) {
                const double* xr = tr.x1.row(tr.frontier_pos[static_cast<std::size_t>(u)]);
                for (int c = 0; c < H; ++c) mean[c] += xr[c];
            }
            const double inv = 1.0 / static_cast<double>(sampled.size());
            for (int c = 0; c < H; ++c) mean[c] *= inv;
        }
    }
    Matrix y = softmax_rows(mat_mul(tr.z2cat, m.final_weights));
    if (trace) {
        trace->kind = ModelKind::sage;
        trace->feature_dim = m.feature_dim;
        trace->num_classes = m.num_classes;
        trace->hidden_dim = m.hidden_dim;
        trace->y = y;
        trace->data = std::move(tr);
    }
    return y;
}

// Kind dispatch used by code that treats models uniformly. sage requires rng.
inline Matrix model_forward(const Graph& g, const GnnModel& m, ForwardTrace* trace = nullptr,
                            const ForwardOptions& opt = {}, const NodeSet* batch = nullptr,
                            RngStream* rng = nullptr) {
    switch (m.kind) {
        case ModelKind::gcn: return gcn_forward(g, m, trace, opt);
        case ModelKind::sgc: return sgc_forward(g, m, trace, opt);
        case ModelKind::gat: return gat_forward(g, m, trace);
        case ModelKind::sage: {
            if (!rng) throw std::invalid_argument("model_forward: sage requires an rng stream");
            const NodeSet nodes = batch ? *batch : all_nodes(g);
            return sage_forward(g, m, nodes, *rng, trace);
        }
    }
    throw std::invalid_argument("model_forward: unknown kind");
}

// ---------------------------------------------------------------------------
// Reverse-mode gradients. dY is the loss gradient at the posteriors returned
// by the matching forward call; the result is aligned with model.params().
// ---------------------------------------------------------------------------

namespace detail {

inline void check_trace(const GnnModel& m, const ForwardTrace& tr, const Matrix& dy) {
    if (tr.kind != m.kind || tr.feature_dim != m.feature_dim || tr.num_classes != m.num_classes ||
        tr.hidden_dim != m.hidden_dim)
        throw std::invalid_argument("model_backward: stale or mismatched trace");
    if (!dy.same_shape(tr.y)) throw std::invalid_argument("model_backward: dY shape mismatch");
}

inline Matrix relu_mask_mul(const Matrix& upstream, const Matrix& pre) {
    if (!upstream.same_shape(pre)) throw std::invalid_argument("relu backward: shape mismatch");
    Matrix out(upstream.rows, upstream.cols);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = pre.data[i] > 0.0 ? upstream.data[i] : 0.0;
    return out;
}

// Backward through one attention neighborhood: given d z (the gradient at the
// attention-weighted sum of rows of `values`), accumulates gradients into the
// attention vector halves and into d_values / d_attn_inputs.
inline void attention_backward_row(const Graph& g, NodeId i, const std::vector<double>& s,
                                   const std::vector<double>& alpha, const Matrix& values, const Matrix& attn_in,
                                   const double* dz_row, int value_dim, int attn_dim, const double* a_src,
                                   const double* a_dst, double scale, Matrix& d_values, Matrix& d_attn_in,
                                   double* da_src, double* da_dst) {
    const auto& nbrs = g.neighbors(i);
    const std::size_t count = nbrs.size() + 1;
    // d alpha and aggregation path
    std::vector<double> dalpha(count);
    for (std::size_t t = 0; t < count; ++t) {
        const NodeId j = t == 0 ? i : nbrs[t - 1];
        const double* vj = values.row(j);
        double dot = 0.0;
        for (int c = 0; c < value_dim; ++c) dot += dz_row[c] * vj[c];
        dalpha[t] = scale * dot;
        double* dvj = d_values.row(j);
        const double av = scale * alpha[t];
        for (int c = 0; c < value_dim; ++c) dvj[c] += av * dz_row[c];
    }
    // softmax backward over the neighborhood
    double inner = 0.0;
    for (std::size_t t = 0; t < count; ++t) inner += alpha[t] * dalpha[t];
    for (std::size_t t = 0; t < count; ++t) {
        const double ds = alpha[t] * (dalpha[t] - inner);
        const double dpre = s[t] > 0.0 ? ds : ds * kLeakySlope;
        if (dpre == 0.0) continue;
        const NodeId j = t == 0 ? i : nbrs[t - 1];
        const double* ui = attn_in.row(i);
        const double* uj = attn_in.row(j);
        double* dui = d_attn_in.row(i);
        double* duj = d_attn_in.row(j);
        for (int c = 0; c < attn_dim; ++c) {
            da_src[c] += dpre * ui[c];
            da_dst[c] += dpre * uj[c];
            dui[c] += dpre * a_src[c];
            duj[c] += dpre * a_dst[c];
        }
    }
}

}  // namespace detail

inline std::vector<Matrix> model_backward(const GnnModel& m, const ForwardTrace& trace, const Matrix& dy) {
    detail::check_trace(m, trace, dy);
    const Matrix dlogits = softmax_backward(trace.y, dy);

    switch (m.kind) {
        case ModelKind::gcn: {
            const auto& tr = std::get<GcnTrace>(trace.data);
            Matrix dWf = mat_mul_tn(tr.z2, dlogits);
            Matrix dz2 = mat_mul_nt(dlogits, m.final_weights);
            Matrix dh1 = detail::aggregate(*tr.g, tr.w, dz2); // A_hat is symmetric
            Matrix dh1pre = detail::relu_mask_mul(dh1, tr.h1pre);
            Matrix dW1 = mat_mul_tn(tr.z1, dh1pre);
            std::vector<Matrix> grads;
            grads.push_back(std::move(dW1));
            grads.push_back(std::move(dWf));
            return grads;
        }
        case ModelKind::sgc: {
            const auto& tr = std::get<SgcTrace>(trace.data);
            std::vector<Matrix> grads;
            grads.push_back(mat_mul_tn(tr.z2, dlogits));
            return grads;
        }
        case ModelKind::gat: {
            const auto& tr = std::get<GatTrace>(trace.data);
            const Graph& g = *tr.g;
            const int n = g.num_nodes;
            const int P = m.num_heads;
            const int hd = m.head_dim();
            const int H = m.hidden_dim;
            const int F = m.feature_dim;

            Matrix dWf = mat_mul_tn(tr.z2, dlogits);
            Matrix dz2 = mat_mul_nt(dlogits, m.final_weights);

            std::vector<Matrix> dW(static_cast<std::size_t>(P));
            std::vector<Matrix> da1(static_cast<std::size_t>(P));
            std::vector<Matrix> da2(static_cast<std::size_t>(P));
            for (int p = 0; p < P; ++p) {
                dW[static_cast<std::size_t>(p)] = Matrix(F, hd);
                da1[static_cast<std::size_t>(p)] = Matrix(1, 2 * hd);
                da2[static_cast<std::size_t>(p)] = Matrix(1, 2 * H);
            }

            // layer 2: z2 = (1/P) sum_p sum_j alpha2_ij x1_j
            Matrix dx1(n, H);
            const double scale = 1.0 / static_cast<double>(P);
            for (int p = 0; p < P; ++p) {
                const double* a_src = m.attn_l2[static_cast<std::size_t>(p)].row(0);
                const double* a_dst = a_src + H;
                double* da_src = da2[static_cast<std::size_t>(p)].row(0);
                double* da_dst = da_src + H;
                const auto& s_head = tr.s2[static_cast<std::size_t>(p)];
                const auto& a_head = tr.a2[static_cast<std::size_t>(p)];
                for (NodeId i = 0; i < n; ++i)
                    detail::attention_backward_row(g, i, s_head[static_cast<std::size_t>(i)],
                                                   a_head[static_cast<std::size_t>(i)], tr.x1, tr.x1, dz2.row(i), H,
                                                   H, a_src, a_dst, scale, dx1, dx1, da_src, da_dst);
            }

            // layer 1 per head: x1 slice -> relu -> z1 W_p, with z1 an
            // attention-weighted sum of raw features and logits on t1 = X W_p
            for (int p = 0; p < P; ++p) {
                Matrix dh1(n, hd);
                for (NodeId i = 0; i < n; ++i) {
                    const double* src = dx1.row(i) + static_cast<std::size_t>(p) * hd;
                    std::copy(src, src + hd, dh1.row(i));
                }
                Matrix dh1pre = detail::relu_mask_mul(dh1, tr.h1pre[static_cast<std::size_t>(p)]);
                // transformation path
                add_inplace(dW[static_cast<std::size_t>(p)], mat_mul_tn(tr.z1[static_cast<std::size_t>(p)], dh1pre));
                Matrix dz1 = mat_mul_nt(dh1pre, m.layer_weights[static_cast<std::size_t>(p)]);
                // attention path
                Matrix dXunused(n, F);
                Matrix dt1(n, hd);
                const double* a_src = m.attn_l1[static_cast<std::size_t>(p)].row(0);
                const double* a_dst = a_src + hd;
                double* da_src = da1[static_cast<std::size_t>(p)].row(0);
                double* da_dst = da_src + hd;
                const auto& s_head = tr.s1[static_cast<std::size_t>(p)];
                const auto& a_head = tr.a1[static_cast<std::size_t>(p)];
                for (NodeId i = 0; i < n; ++i)
                    detail::attention_backward_row(g, i, s_head[static_cast<std::size_t>(i)],
                                                   a_head[static_cast<std::size_t>(i)], g.features,
                                                   tr.t1[static_cast<std::size_t>(p)], dz1.row(i), F, hd, a_src,
                                                   a_dst, 1.0, dXunused, dt1, da_src, da_dst);
                add_inplace(dW[static_cast<std::size_t>(p)], mat_mul_tn(g.features, dt1));
            }

            std::vector<Matrix> grads;
            for (int p = 0; p < P; ++p) grads.push_back(std::move(dW[static_cast<std::size_t>(p)]));
            for (int p = 0; p < P; ++p) grads.push_back(std::move(da1[static_cast<std::size_t>(p)]));
            for (int p = 0; p < P; ++p) grads.push_back(std::move(da2[static_cast<std::size_t>(p)]));
            grads.push_back(std::move(dWf));
            return grads;
        }
        case ModelKind::sage: {
            const auto& tr = std::get<SageTrace>(trace.data);
            const int nb = static_cast<int>(tr.batch.size());
            const int nf = static_cast<int>(tr.frontier.size());
            const int H = m.hidden_dim;

            Matrix dWf = mat_mul_tn(tr.z2cat, dlogits);
            Matrix dz2cat = mat_mul_nt(dlogits, m.final_weights);

            Matrix dx1(nf, H);
            for (int t = 0; t < nb; ++t) {
                const NodeId v = tr.batch[static_cast<std::size_t>(t)];
                const double* drow = dz2cat.row(t);
                double* dself = dx1.row(tr.frontier_pos[static_cast<std::size_t>(v)]);
                for (int c = 0; c < H; ++c) dself[c] += drow[c];
                const auto& sampled = tr.nbr2[static_cast<std::size_t>(t)];
                if (!sampled.empty()) {
                    const double inv = 1.0 / static_cast<double>(sampled.size());
                    for (NodeId u : sampled) {
                        double* du = dx1.row(tr.frontier_pos[static_cast<std::size_t>(u)]);
                        for (int c = 0; c < H; ++c) du[c] += inv * drow[H + c];
                    }
                }
            }
            Matrix dh1pre = detail::relu_mask_mul(dx1, tr.h1pre);
            Matrix dW1 = mat_mul_tn(tr.z1cat, dh1pre);
            std::vector<Matrix> grads;
            grads.push_back(std::move(dW1));
            grads.push_back(std::move(dWf));
            return grads;
        }
    }
    throw std::invalid_argument("model_backward: unknown kind");
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned text format, doubles in hexfloat so round trips are
// bit-stable.
// ---------------------------------------------------------------------------

inline void save_checkpoint(const GnnModel& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out << "gnnaudit-checkpoint v1\n";
    out << "kind " << model_kind_name(m.kind) << '\n';
    out << "dims " << m.feature_dim << ' ' << m.num_classes << ' ' << m.hidden_dim << ' ' << m.num_heads << '\n';
    out << "sample_sizes " << m.sample_sizes[0] << ' ' << m.sample_sizes[1] << '\n';
    const auto tensors = m.params();
    const auto names = m.param_names();
    out << "tensors " << tensors.size() << '\n';
    char buf[40];
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        const Matrix& mat = *tensors[t];
        out << "tensor " << names[t] << ' ' << mat.rows << ' ' << mat.cols << '\n';
        for (int i = 0; i < mat.rows; ++i) {
            const double* row = mat.row(i);
            for (int j = 0; j < mat.cols; ++j) {
                std::snprintf(buf, sizeof(buf), "%a", row[j]);
                if (j) out << ' ';
                out << buf;
            }
            out << '\n';
        }
    }
    if (!out) throw std::runtime_error("save_checkpoint: write failure");
}

inline GnnModel load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "gnnaudit-checkpoint v1")
        throw std::runtime_error("load_checkpoint: unsupported format header");
    std::string word, kind_name;
    in >> word >> kind_name;
    if (word != "kind") throw std::runtime_error("load_checkpoint: malformed kind line");
    GnnModel m;
    m.kind = model_kind_from_name(kind_name);
    in >> word >> m.feature_dim >> m.num_classes >> m.hidden_dim >> m.num_heads;
    if (word != "dims") throw std::runtime_error("load_checkpoint: malformed dims line");
    in >> word >> m.sample_sizes[0] >> m.sample_sizes[1];
    if (word != "sample_sizes") throw std::runtime_error("load_checkpoint: malformed sample_sizes line");
    std::size_t tensor_count = 0;
    in >> word >> tensor_count;
    if (word != "tensors") throw std::runtime_error("load_checkpoint: malformed tensors line");
    for (std::size_t t = 0; t < tensor_count; ++t) {
        std::string name;
        int rows = 0, cols = 0;
        in >> word >> name >> rows >> cols;
        if (word != "tensor" || rows < 0 || cols < 0) throw std::runtime_error("load_checkpoint: malformed tensor header");
        Matrix mat(rows, cols);
        for (double& v : mat.data) {
            std::string tok;
            if (!(in >> tok)) throw std::runtime_error("load_checkpoint: truncated tensor data");
            char* end = nullptr;
            v = std::strtod(tok.c_str(), &end);
            if (end == tok.c_str()) throw std::runtime_error("load_checkpoint: malformed value '" + tok + "'");
        }
        if (name == "final_weights") m.final_weights = std::move(mat);
        else if (name.rfind("layer_weights.", 0) == 0) m.layer_weights.push_back(std::move(mat));
        else if (name.rfind("attn_l1.", 0) == 0) m.attn_l1.push_back(std::move(mat));
        else if (name.rfind("attn_l2.", 0) == 0) m.attn_l2.push_back(std::move(mat));
        else throw std::runtime_error("load_checkpoint: unknown tensor '" + name + "'");
    }
    if (m.final_weights.size() == 0) throw std::runtime_error("load_checkpoint: missing final_weights");
    return m;
}

}  // namespace gnnaudit
