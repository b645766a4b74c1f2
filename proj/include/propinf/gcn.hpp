#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "propinf/common.hpp"
#include "propinf/model.hpp"
#include "propinf/synthetic.hpp"

namespace propinf {

// ---------------------------------------------------------------------------
// Symmetric-normalized adjacency with self-loops, stored sparse:
// A_hat = D^{-1/2} (A + I) D^{-1/2}. Self-loops keep isolated nodes well
// defined (degree >= 1, no division by zero).
// ---------------------------------------------------------------------------

struct NormalizedAdjacency {
    std::size_t n = 0;
    std::vector<std::size_t> row_ptr;  // CSR
    std::vector<std::size_t> col;
    std::vector<double> w;

    // y = A_hat * x, where x is n x c row-major.
    Matrix multiply(const Matrix& x) const {
        Matrix out(n, x.cols);
        for (std::size_t i = 0; i < n; ++i) {
            double* dst = out.row(i);
            for (std::size_t e = row_ptr[i]; e < row_ptr[i + 1]; ++e) {
                const double* src = x.row(col[e]);
                double weight = w[e];
                for (std::size_t j = 0; j < x.cols; ++j) dst[j] += weight * src[j];
            }
        }
        return out;
    }

    double at(std::size_t i, std::size_t j) const {
        for (std::size_t e = row_ptr[i]; e < row_ptr[i + 1]; ++e)
            if (col[e] == j) return w[e];
        return 0.0;
    }
};

inline NormalizedAdjacency normalized_adjacency(const GraphDataset& g) {
    g.validate();
    std::size_t n = g.n_nodes;
    std::vector<std::vector<std::size_t>> neighbors(n);
    for (auto [u, v] : g.edges) {
        neighbors[u].push_back(v);
        neighbors[v].push_back(u);
    }
    std::vector<double> deg(n);
    for (std::size_t i = 0; i < n; ++i) deg[i] = static_cast<double>(neighbors[i].size()) + 1.0;

    NormalizedAdjacency adj;
    adj.n = n;
    adj.row_ptr.resize(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) adj.row_ptr[i + 1] = adj.row_ptr[i] + neighbors[i].size() + 1;
    adj.col.resize(adj.row_ptr[n]);
    adj.w.resize(adj.row_ptr[n]);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t e = adj.row_ptr[i];
        adj.col[e] = i;  // self-loop
        adj.w[e] = 1.0 / deg[i];
        ++e;
        for (std::size_t v : neighbors[i]) {
            adj.col[e] = v;
            adj.w[e] = 1.0 / std::sqrt(deg[i] * deg[v]);
            ++e;
        }
    }
    return adj;
}

// ---------------------------------------------------------------------------
// Two-layer GCN: Z = softmax(A_hat * ReLU(A_hat * X * W0) * W1), trained
// transductively with the loss restricted to the supervised node mask.
// ---------------------------------------------------------------------------

namespace detail {

inline Matrix matmul(const Matrix& a, const Tensor& w) {
    Matrix out(a.rows, w.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t k = 0; k < a.cols; ++k) {
            double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* wrow = w.v.data() + k * w.cols;
            double* dst = out.row(i);
            for (std::size_t j = 0; j < w.cols; ++j) dst[j] += aik * wrow[j];
        }
    return out;
}

}  // namespace detail

// Full-graph posteriors (every node).
inline Matrix gcn_forward(const TrainedModel& m, const NormalizedAdjacency& adj,
                          const Matrix& features) {
    if (m.arch != Arch::Gcn) throw Error("gcn_forward: not a GCN model");
    if (features.cols != m.input_width) throw Error("gcn_forward: feature width mismatch");
    Matrix h = adj.multiply(detail::matmul(features, m.params[0]));
    for (auto& x : h.v) x = x > 0.0 ? x : 0.0;
    Matrix z = adj.multiply(detail::matmul(h, m.params[1]));
    for (std::size_t i = 0; i < z.rows; ++i) detail::softmax_row(z.row(i), z.cols);
    return z;
}

inline Matrix gcn_predict(const TrainedModel& m, const GraphDataset& g,
                          const std::vector<std::size_t>& node_ids) {
    NormalizedAdjacency adj = normalized_adjacency(g);
    Matrix all = gcn_forward(m, adj, g.node_features);
    Matrix out(node_ids.size(), all.cols);
    for (std::size_t i = 0; i < node_ids.size(); ++i) {
        if (node_ids[i] >= g.n_nodes) throw Error("gcn_predict: node id out of range");
        std::copy(all.row(node_ids[i]), all.row(node_ids[i]) + all.cols, out.row(i));
    }
    return out;
}

// Loss (mean cross-entropy over mask nodes + L2) and gradients for W0, W1.
inline double gcn_loss_and_grad(const TrainedModel& m, const NormalizedAdjacency& adj,
                                const Matrix& features, const std::vector<int>& labels,
                                const std::vector<std::size_t>& mask, double weight_decay,
                                std::vector<Tensor>& grads) {
    if (mask.empty()) throw Error("gcn: empty training mask");
    const Tensor& w0 = m.params[0];
    const Tensor& w1 = m.params[1];

    Matrix xw0 = detail::matmul(features, w0);
    Matrix pre = adj.multiply(xw0);
    Matrix h = pre;
    for (auto& x : h.v) x = x > 0.0 ? x : 0.0;
    Matrix hw1 = detail::matmul(h, w1);
    Matrix z = adj.multiply(hw1);
    for (std::size_t i = 0; i < z.rows; ++i) detail::softmax_row(z.row(i), z.cols);

    double loss = 0.0;
    Matrix delta(z.rows, z.cols);  // zero outside the mask
    double inv = 1.0 / static_cast<double>(mask.size());
    for (std::size_t node : mask) {
        int lab = labels[node];
        loss -= std::log(std::max(z(node, static_cast<std::size_t>(lab)), 1e-300));
        for (std::size_t j = 0; j < z.cols; ++j)
            delta(node, j) = (z(node, j) - (static_cast<std::size_t>(lab) == j ? 1.0 : 0.0)) * inv;
    }
    loss *= inv;

    grads.clear();
    grads.emplace_back(w0.name, w0.rows, w0.cols);
    grads.emplace_back(w1.name, w1.rows, w1.cols);

    // A_hat is symmetric, so the adjoint of multiply is multiply itself.
    Matrix back = adj.multiply(delta);  // d loss / d (H W1)
    // gW1 = H^T back
    for (std::size_t i = 0; i < h.rows; ++i)
        for (std::size_t k = 0; k < h.cols; ++k) {
            double hik = h(i, k);
            if (hik == 0.0) continue;
            for (std::size_t j = 0; j < back.cols; ++j) grads[1](k, j) += hik * back(i, j);
        }
    // dH = back W1^T, masked by ReLU
    Matrix dpre(h.rows, h.cols);
    for (std::size_t i = 0; i < h.rows; ++i)
        for (std::size_t k = 0; k < h.cols; ++k) {
            if (pre(i, k) <= 0.0) continue;
            double s = 0.0;
            for (std::size_t j = 0; j < back.cols; ++j) s += back(i, j) * w1(k, j);
            dpre(i, k) = s;
        }
    Matrix dxw0 = adj.multiply(dpre);
    for (std::size_t i = 0; i < features.rows; ++i)
        for (std::size_t k = 0; k < features.cols; ++k) {
            double f = features(i, k);
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < dxw0.cols; ++j) grads[0](k, j) += f * dxw0(i, j);
        }

    if (weight_decay > 0.0) {
        double sq = 0.0;
        for (std::size_t t = 0; t < 2; ++t)
            for (std::size_t i = 0; i < m.params[t].size(); ++i) {
                double p = m.params[t].v[i];
                sq += p * p;
                grads[t].v[i] += weight_decay * p;
            }
        loss += 0.5 * weight_decay * sq;
    }
    return loss;
}

inline TrainedModel train_gcn(const GraphDataset& g, std::size_t hidden,
                              const Hyperparameters& hp, const std::vector<std::size_t>& train_mask,
                              TrainStats* stats = nullptr) {
    hp.validate();
    if (train_mask.empty()) throw Error("train_gcn: empty training mask");
    for (std::size_t node : train_mask)
        if (node >= g.n_nodes) throw Error("train_gcn: mask node out of range");

    TrainedModel m;
    m.arch = Arch::Gcn;
    m.input_width = g.node_features.cols;
    m.n_classes = g.n_classes;
    m.hidden = {hidden};
    m.hp = hp;
    Rng rng(hp.seed);
    auto init = [&](const std::string& name, std::size_t in, std::size_t out) {
        Tensor t(name, in, out);
        double bound = std::sqrt(6.0 / static_cast<double>(in + out));
        for (auto& x : t.v) x = rng.uniform(-bound, bound);
        return t;
    };
    m.params.push_back(init("W0", m.input_width, hidden));
    m.params.push_back(init("W1", hidden, g.n_classes));

    NormalizedAdjacency adj = normalized_adjacency(g);
    Adam opt(m.params, hp.learning_rate);
    std::vector<Tensor> grads;
    for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
        double loss = gcn_loss_and_grad(m, adj, g.node_features, g.node_labels, train_mask,
                                        hp.weight_decay, grads);
        if (!std::isfinite(loss)) throw Error("train_gcn: non-finite loss (divergence)");
        opt.step(m.params, grads);
        if (stats) {
            if (epoch == 0) stats->first_epoch_loss = loss;
            stats->last_epoch_loss = loss;
        }
    }
    return m;
}

}  // namespace propinf
