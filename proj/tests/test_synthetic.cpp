#include <catch_amalgamated.hpp>

#include <set>

#include "propinf/stats.hpp"
#include "propinf/synthetic.hpp"

using namespace propinf;
using Catch::Approx;

TEST_CASE("tabular generator: exact stratified attribute counts", "[synthetic]") {
    SyntheticConfig cfg;
    cfg.n_records = 2000;
    cfg.a_ratio = 0.33;
    TabularDataset ds = synth_generate(cfg, 4);
    std::size_t lt = 0;
    std::vector<double> a = ds.column("A");
    for (double v : a) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 10.0);
        if (v < 5.0) ++lt;
    }
    CHECK(lt == 660);  // round(0.33 * 2000)
}

TEST_CASE("tabular generator: determinism and shape", "[synthetic]") {
    SyntheticConfig cfg;
    cfg.scenario = Scenario::XcorrYcorr;
    cfg.correlated_columns = {"f0", "f1"};
    cfg.n_records = 300;
    TabularDataset a = synth_generate(cfg, 99);
    TabularDataset b = synth_generate(cfg, 99);
    TabularDataset c = synth_generate(cfg, 100);
    CHECK(a.cells == b.cells);
    CHECK(a.cells != c.cells);
    CHECK(a.n_columns() == cfg.n_features + 2);
    CHECK(a.schema.sensitive == "A");
    CHECK(a.schema.target == "Y");
    CHECK(a.n_classes() == 2);
}

TEST_CASE("reduced mode keeps only three features", "[synthetic]") {
    SyntheticConfig cfg;
    cfg.reduced = true;
    cfg.scenario = Scenario::XcorrYindep;
    cfg.correlated_columns = {"f0", "f1"};
    cfg.n_records = 100;
    TabularDataset ds = synth_generate(cfg, 5);
    CHECK(ds.n_columns() == 5);  // f0 f1 f2 A Y
    CHECK(ds.schema.has("f2"));
    CHECK_FALSE(ds.schema.has("f3"));
}

TEST_CASE("independent scenario is statistically clean at n=10000", "[synthetic]") {
    SyntheticConfig cfg;
    cfg.scenario = Scenario::XindepYindep;
    cfg.n_records = 10000;
    TabularDataset ds = synth_generate(cfg, 8);
    std::vector<double> a = ds.column("A");
    for (std::size_t j = 0; j < cfg.n_features; ++j) {
        double r = *pearson(a, ds.column("f" + std::to_string(j)));
        CHECK(std::fabs(r) < 0.05);
    }
    std::vector<std::vector<double>> groups(2);
    std::vector<double> y = ds.column("Y");
    for (std::size_t i = 0; i < a.size(); ++i) groups[a[i] < 5.0 ? 0 : 1].push_back(y[i]);
    CHECK(anova_pvalue(groups) > 0.1);
}

TEST_CASE("X~A plants strong attribute-feature correlation", "[synthetic]") {
    SyntheticConfig cfg;
    cfg.scenario = Scenario::XcorrYindep;
    cfg.correlated_columns = {"f0", "f1"};
    cfg.n_records = 10000;
    cfg.correlation_strength = 1.0;
    TabularDataset ds = synth_generate(cfg, 12);
    std::vector<double> a = ds.column("A");
    double best = 0.0;
    for (const auto& c : cfg.correlated_columns)
        best = std::max(best, std::fabs(*pearson(a, ds.column(c))));
    CHECK(best > 0.3);
    // Untouched columns stay clean.
    CHECK(std::fabs(*pearson(a, ds.column("f5"))) < 0.05);
}

TEST_CASE("Y~A plants label dependence; Y stays binary", "[synthetic]") {
    SyntheticConfig cfg;
    cfg.scenario = Scenario::XindepYcorr;
    cfg.n_records = 10000;
    TabularDataset ds = synth_generate(cfg, 14);
    std::vector<double> a = ds.column("A");
    std::vector<double> y = ds.column("Y");
    std::vector<std::vector<double>> groups(2);
    for (std::size_t i = 0; i < a.size(); ++i) groups[a[i] < 5.0 ? 0 : 1].push_back(y[i]);
    CHECK(anova_pvalue(groups) < 0.05);
    for (double v : y) CHECK((v == 0.0 || v == 1.0));
}

TEST_CASE("generator config validation", "[synthetic]") {
    SyntheticConfig cfg;
    cfg.scenario = Scenario::XcorrYcorr;  // X~A but no correlated columns
    CHECK_THROWS_AS(synth_generate(cfg, 1), Error);
    cfg.correlated_columns = {"A"};
    CHECK_THROWS_AS(synth_generate(cfg, 1), Error);
    cfg.correlated_columns = {"f99"};
    CHECK_THROWS_AS(synth_generate(cfg, 1), Error);
    cfg.correlated_columns = {"f0"};
    cfg.correlation_strength = 0.0;
    CHECK_THROWS_AS(synth_generate(cfg, 1), Error);
    cfg.correlation_strength = 1.0;
    cfg.a_ratio = 1.5;
    CHECK_THROWS_AS(synth_generate(cfg, 1), Error);

    SyntheticConfig indep;  // X|A with declared correlated columns is an error
    indep.scenario = Scenario::XindepYcorr;
    indep.correlated_columns = {"f0"};
    CHECK_THROWS_AS(synth_generate(indep, 1), Error);
}

TEST_CASE("graph generator: shapes, types, labels", "[synthetic]") {
    SyntheticGraphConfig cfg;
    cfg.n_nodes = 400;
    cfg.n_classes = 11;
    GraphDataset g = synth_graph_generate(cfg, 6);
    CHECK(g.n_nodes == 400);
    CHECK(g.node_types.size() == 400);
    CHECK(g.node_labels.size() == 400);
    CHECK_NOTHROW(g.validate());
    std::set<int> labels(g.node_labels.begin(), g.node_labels.end());
    CHECK(labels.size() == 11);  // full domain appears at this size
    std::size_t type0 = 0;
    for (int t : g.node_types)
        if (t == 0) ++type0;
    CHECK(type0 == 200);  // exact split at ratio 0.5
    CHECK(g.node_features.rows == 400);
    CHECK(g.node_features.cols == 2);
}

TEST_CASE("graph generator: type_ratio 0 means no distinguished-type nodes", "[synthetic]") {
    SyntheticGraphConfig cfg;
    cfg.n_nodes = 100;
    cfg.type_ratio = 0.0;
    GraphDataset g = synth_graph_generate(cfg, 2);
    for (int t : g.node_types) CHECK(t == 1);
}

TEST_CASE("graph generator: homophily 0 equalizes edge rates (3 sigma)", "[synthetic]") {
    SyntheticGraphConfig cfg;
    cfg.n_nodes = 1500;
    cfg.homophily = 0.0;
    cfg.label_signal = 0.0;
    GraphDataset g = synth_graph_generate(cfg, 10);

    double intra_pairs = 0, inter_pairs = 0, intra_edges = 0, inter_edges = 0;
    std::vector<std::vector<bool>> adj(g.n_nodes, std::vector<bool>(g.n_nodes, false));
    for (auto [u, v] : g.edges) adj[u][v] = adj[v][u] = true;
    for (std::size_t u = 0; u < g.n_nodes; ++u)
        for (std::size_t v = u + 1; v < g.n_nodes; ++v) {
            bool same = g.node_types[u] == g.node_types[v];
            (same ? intra_pairs : inter_pairs) += 1;
            if (adj[u][v]) (same ? intra_edges : inter_edges) += 1;
        }
    double p_intra = intra_edges / intra_pairs;
    double p_inter = inter_edges / inter_pairs;
    double p = (intra_edges + inter_edges) / (intra_pairs + inter_pairs);
    double sigma = std::sqrt(p * (1 - p) * (1.0 / intra_pairs + 1.0 / inter_pairs));
    CHECK(std::fabs(p_intra - p_inter) < 3.0 * sigma);
}

TEST_CASE("graph generator: homophily raises the intra-type rate", "[synthetic]") {
    SyntheticGraphConfig cfg;
    cfg.n_nodes = 1500;
    cfg.homophily = 0.8;
    GraphDataset g = synth_graph_generate(cfg, 10);
    double intra = 0, inter = 0;
    for (auto [u, v] : g.edges) (g.node_types[u] == g.node_types[v] ? intra : inter) += 1;
    CHECK(intra > 2.0 * inter);

    // Average degree lands near the configured value.
    double avg_deg = 2.0 * static_cast<double>(g.edges.size()) / static_cast<double>(g.n_nodes);
    CHECK(avg_deg == Approx(cfg.avg_degree).epsilon(0.15));
}

TEST_CASE("graph generator: label_signal ties labels to types", "[synthetic]") {
    SyntheticGraphConfig cfg;
    cfg.n_nodes = 2000;
    cfg.label_signal = 0.9;
    cfg.n_classes = 2;
    GraphDataset g = synth_graph_generate(cfg, 3);
    std::size_t match = 0;
    for (std::size_t i = 0; i < g.n_nodes; ++i)
        if (g.node_labels[i] == g.node_types[i]) ++match;
    // 0.9 signal + 0.1 uniform over 2 classes => ~95% agreement.
    CHECK(match > 1800);
}

TEST_CASE("drop_graph_types hides the attribute from features only", "[synthetic]") {
    SyntheticGraphConfig cfg;
    cfg.n_nodes = 50;
    GraphDataset g = synth_graph_generate(cfg, 1);
    GraphDataset bare = drop_graph_types(g);
    CHECK(bare.node_features.cols == 1);
    for (double v : bare.node_features.v) CHECK(v == 1.0);
    CHECK(bare.edges == g.edges);
    CHECK(bare.node_labels == g.node_labels);
}

TEST_CASE("graph generator determinism", "[synthetic]") {
    SyntheticGraphConfig cfg;
    cfg.n_nodes = 300;
    GraphDataset a = synth_graph_generate(cfg, 42);
    GraphDataset b = synth_graph_generate(cfg, 42);
    CHECK(a.edges == b.edges);
    CHECK(a.node_types == b.node_types);
    CHECK(a.node_labels == b.node_labels);
}
