#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "propinf/common.hpp"
#include "propinf/dataset.hpp"

namespace propinf {

// ---------------------------------------------------------------------------
// Correlation-controlled tabular generator.
//
// Each record has m numeric features, a numeric sensitive column A, and a
// binary target Y. A is drawn in two strata, uniform on [0,5) ("<5") or on
// (5,10] (">5"), with an exact stratified count per the configured ratio.
//
// The label is generated from latent feature values: logit = sum of weights
// over a fixed signal set of columns, plus strength*1[A>5] when Y~A. When
// X~A, the observed values of the correlated columns X' are the latent values
// plus a conditional mean shift of `strength` in the ">5" stratum. Because Y
// is a function of the latent values only, Y stays exactly independent of A
// unless the explicit A term is present, while the observed X' columns carry
// signal about both A and Y.
// ---------------------------------------------------------------------------

enum class Scenario {
    XcorrYcorr,  // X~A, Y~A
    XindepYcorr, // X⊥A, Y~A
    XcorrYindep, // X~A, Y⊥A
    XindepYindep // X⊥A, Y⊥A
};

inline bool scenario_x_corr(Scenario s) {
    return s == Scenario::XcorrYcorr || s == Scenario::XcorrYindep;
}
inline bool scenario_y_corr(Scenario s) {
    return s == Scenario::XcorrYcorr || s == Scenario::XindepYcorr;
}

inline std::string scenario_name(Scenario s) {
    switch (s) {
        case Scenario::XcorrYcorr: return "X~A,Y~A";
        case Scenario::XindepYcorr: return "X|A,Y~A";
        case Scenario::XcorrYindep: return "X~A,Y|A";
        default: return "X|A,Y|A";
    }
}

inline Scenario scenario_of(bool x_corr, bool y_corr) {
    if (x_corr) return y_corr ? Scenario::XcorrYcorr : Scenario::XcorrYindep;
    return y_corr ? Scenario::XindepYcorr : Scenario::XindepYindep;
}

struct SyntheticConfig {
    Scenario scenario = Scenario::XindepYcorr;
    std::size_t n_features = 10;                       // feature columns f0..f{m-1}
    std::vector<std::string> correlated_columns = {};  // X'; must be nonempty iff X~A
    double correlation_strength = 1.0;                 // in (0,1]
    double a_ratio = 0.5;                              // fraction of records in stratum "<5"
    std::size_t n_records = 1000;
    bool reduced = false;  // keep only 3 training features (f0,f1,f2)

    // Columns whose latent values drive the label, with unit weights.
    std::vector<std::string> signal_columns = {"f0", "f1", "f2"};

    void validate() const {
        bool xc = scenario_x_corr(scenario);
        if (xc && correlated_columns.empty())
            throw Error("synthetic: X~A scenario requires a nonempty correlated column set");
        if (!xc && !correlated_columns.empty())
            throw Error("synthetic: X|A scenario must not declare correlated columns");
        for (const auto& c : correlated_columns)
            if (c == "A" || c == "Y") throw Error("synthetic: X' may not contain A or Y");
        if (correlation_strength <= 0.0 || correlation_strength > 1.0)
            throw Error("synthetic: correlation strength must be in (0,1]");
        if (a_ratio < 0.0 || a_ratio > 1.0) throw Error("synthetic: a_ratio must be in [0,1]");
        if (n_records < 1) throw Error("synthetic: n_records must be >= 1");
        std::size_t m = reduced ? 3 : n_features;
        for (const auto& c : correlated_columns) {
            if (c.size() < 2 || c[0] != 'f') throw Error("synthetic: bad column name " + c);
            std::size_t j = std::stoul(c.substr(1));
            if (j >= m) throw Error("synthetic: correlated column " + c + " out of range");
        }
    }
};

inline TabularDataset synth_generate(const SyntheticConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::size_t m = cfg.reduced ? 3 : cfg.n_features;
    std::size_t n = cfg.n_records;

    AttributeSchema schema;
    for (std::size_t j = 0; j < m; ++j) schema.columns.push_back(Column::numeric("f" + std::to_string(j)));
    schema.columns.push_back(Column::numeric("A"));
    schema.columns.push_back(Column::cat("Y", {"0", "1"}));
    schema.sensitive = "A";
    schema.target = "Y";
    schema.validate();

    std::vector<bool> shifted(m, false);
    if (scenario_x_corr(cfg.scenario))
        for (const auto& c : cfg.correlated_columns) shifted[std::stoul(c.substr(1))] = true;
    std::vector<bool> signal(m, false);
    for (const auto& c : cfg.signal_columns) {
        std::size_t j = std::stoul(c.substr(1));
        if (j < m) signal[j] = true;
    }

    // Exact stratified assignment: round(ratio*n) records in "<5".
    std::size_t n_lt = static_cast<std::size_t>(round_half_up(cfg.a_ratio * static_cast<double>(n)));
    std::vector<int> stratum(n, 1);
    std::fill(stratum.begin(), stratum.begin() + static_cast<std::ptrdiff_t>(n_lt), 0);
    Rng rng(seed);
    rng.shuffle(stratum);

    TabularDataset ds;
    ds.schema = schema;
    ds.n_records = n;
    ds.cells.resize(n * (m + 2));

    bool y_corr = scenario_y_corr(cfg.scenario);
    for (std::size_t i = 0; i < n; ++i) {
        bool gt5 = stratum[i] == 1;
        double logit = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            double latent = rng.normal();
            if (signal[j]) logit += latent;
            double observed = latent;
            if (shifted[j] && gt5) observed += cfg.correlation_strength;
            ds.at(i, j) = observed;
        }
        double a = gt5 ? rng.uniform(5.0, 10.0) : rng.uniform(0.0, 5.0);
        if (a == 5.0) a = gt5 ? 5.0000001 : 4.9999999;  // keep strata strict
        ds.at(i, m) = a;
        if (y_corr && gt5) logit += cfg.correlation_strength;
        double p = 1.0 / (1.0 + std::exp(-logit));
        ds.at(i, m + 1) = rng.uniform() < p ? 1.0 : 0.0;
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Synthetic graph: a stochastic-block-style co-purchase stand-in. Nodes carry
// a product type (the sensitive attribute, one-hot in node features) and a
// class label whose distribution depends on the type with configurable
// strength, planting both X~A (homophily) and Y~A (label signal).
// ---------------------------------------------------------------------------

struct GraphDataset {
    std::size_t n_nodes = 0;
    std::vector<std::pair<std::size_t, std::size_t>> edges;  // undirected, no self-loops
    std::size_t n_types = 0;
    std::vector<int> node_types;   // the sensitive attribute A per node
    Matrix node_features;          // n_nodes x d (one-hot type, or constant when A is dropped)
    std::vector<int> node_labels;  // class ids in [0, n_classes)
    std::size_t n_classes = 0;

    void validate() const {
        for (auto [u, v] : edges) {
            if (u == v) throw Error("graph: self-loop");
            if (u >= n_nodes || v >= n_nodes) throw Error("graph: edge endpoint out of range");
        }
        for (int lab : node_labels)
            if (lab < 0 || static_cast<std::size_t>(lab) >= n_classes)
                throw Error("graph: label out of range");
    }
};

struct SyntheticGraphConfig {
    std::size_t n_nodes = 1000;
    std::size_t n_types = 2;
    double type_ratio = 0.5;  // fraction of nodes with type 0 (the distinguished type)
    std::size_t n_classes = 2;
    double homophily = 0.5;     // 0 => intra-type and inter-type edge rates coincide
    double label_signal = 0.8;  // probability a node's label is drawn from its type's class block
    double avg_degree = 8.0;

    void validate() const {
        if (n_types < 2) throw Error("graph: n_types must be >= 2");
        if (homophily < 0.0 || homophily > 1.0) throw Error("graph: homophily must be in [0,1]");
        if (label_signal < 0.0 || label_signal > 1.0)
            throw Error("graph: label_signal must be in [0,1]");
        if (type_ratio < 0.0 || type_ratio > 1.0) throw Error("graph: type_ratio must be in [0,1]");
        if (n_classes < 2) throw Error("graph: n_classes must be >= 2");
    }
};

inline GraphDataset synth_graph_generate(const SyntheticGraphConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::size_t n = cfg.n_nodes;
    Rng rng(seed);

    GraphDataset g;
    g.n_nodes = n;
    g.n_types = cfg.n_types;
    g.n_classes = cfg.n_classes;

    // Exact count of the distinguished type; remaining nodes spread uniformly
    // over the other types.
    std::size_t n_type0 = static_cast<std::size_t>(round_half_up(cfg.type_ratio * static_cast<double>(n)));
    g.node_types.assign(n, 0);
    for (std::size_t i = n_type0; i < n; ++i)
        g.node_types[i] = 1 + static_cast<int>((i - n_type0) % (cfg.n_types - 1));
    rng.shuffle(g.node_types);

    // Edge probabilities: inter-type rate q, intra-type rate q*(1+4h), scaled
    // so the expected degree stays near avg_degree.
    double h = cfg.homophily;
    double q = cfg.avg_degree / static_cast<double>(n - 1);
    double norm = 1.0 + 4.0 * h * 0.5;  // rough within/between mix at balanced types
    double p_inter = q / norm;
    double p_intra = p_inter * (1.0 + 4.0 * h);
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = u + 1; v < n; ++v) {
            double p = g.node_types[u] == g.node_types[v] ? p_intra : p_inter;
            if (rng.uniform() < p) g.edges.emplace_back(u, v);
        }

    // Labels: with probability label_signal, draw from the node type's
    // contiguous class block; otherwise uniform over all classes.
    g.node_labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t t = static_cast<std::size_t>(g.node_types[i]);
        if (rng.uniform() < cfg.label_signal) {
            std::size_t lo = t * cfg.n_classes / cfg.n_types;
            std::size_t hi = (t + 1) * cfg.n_classes / cfg.n_types;
            if (hi <= lo) hi = lo + 1;
            hi = std::min(hi, cfg.n_classes);
            g.node_labels[i] = static_cast<int>(lo + rng.below(hi - lo));
        } else {
            g.node_labels[i] = static_cast<int>(rng.below(cfg.n_classes));
        }
    }

    // One-hot product type as node features.
    g.node_features = Matrix(n, cfg.n_types);
    for (std::size_t i = 0; i < n; ++i)
        g.node_features(i, static_cast<std::size_t>(g.node_types[i])) = 1.0;
    return g;
}

// The Ā variant for graphs: hide the type from the feature matrix, leaving a
// single constant column so leakage can only flow through the structure.
inline GraphDataset drop_graph_types(const GraphDataset& g) {
    GraphDataset out = g;
    out.node_features = Matrix(g.n_nodes, 1, 1.0);
    return out;
}

}  // namespace propinf
