#include <catch_amalgamated.hpp>

#include "propinf/gcn.hpp"

using namespace propinf;
using Catch::Approx;

namespace {

GraphDataset tiny_graph() {
    GraphDataset g;
    g.n_nodes = 4;
    g.edges = {{0, 1}, {1, 2}, {2, 3}};
    g.n_types = 2;
    g.node_types = {0, 0, 1, 1};
    g.node_features = Matrix(4, 3);
    Rng rng(3);
    for (auto& v : g.node_features.v) v = rng.normal();
    g.node_labels = {0, 0, 1, 1};
    g.n_classes = 2;
    return g;
}

}  // namespace

TEST_CASE("normalized adjacency: single isolated node", "[gcn]") {
    GraphDataset g;
    g.n_nodes = 1;
    g.n_types = 2;
    g.node_types = {0};
    g.node_features = Matrix(1, 1, 1.0);
    g.node_labels = {0};
    g.n_classes = 2;
    NormalizedAdjacency adj = normalized_adjacency(g);
    CHECK(adj.at(0, 0) == Approx(1.0).margin(1e-12));
}

TEST_CASE("normalized adjacency: two connected nodes", "[gcn]") {
    GraphDataset g;
    g.n_nodes = 2;
    g.edges = {{0, 1}};
    g.n_types = 2;
    g.node_types = {0, 1};
    g.node_features = Matrix(2, 1, 1.0);
    g.node_labels = {0, 1};
    g.n_classes = 2;
    NormalizedAdjacency adj = normalized_adjacency(g);
    // degrees (with self-loop) are 2, so every entry is 1/2.
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) CHECK(adj.at(i, j) == Approx(0.5).margin(1e-12));
}

TEST_CASE("normalized adjacency is symmetric and rows act as averages", "[gcn]") {
    SyntheticGraphConfig cfg;
    cfg.n_nodes = 120;
    GraphDataset g = synth_graph_generate(cfg, 17);
    NormalizedAdjacency adj = normalized_adjacency(g);
    for (std::size_t i = 0; i < g.n_nodes; i += 7)
        for (std::size_t j = 0; j < g.n_nodes; j += 11)
            CHECK(adj.at(i, j) == Approx(adj.at(j, i)).margin(1e-12));

    // multiply() agrees with summing at() across each row.
    Matrix ones(g.n_nodes, 1, 1.0);
    Matrix mixed = adj.multiply(ones);
    for (std::size_t i = 0; i < g.n_nodes; i += 13) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j < g.n_nodes; ++j) row_sum += adj.at(i, j);
        CHECK(mixed(i, 0) == Approx(row_sum).margin(1e-12));
        CHECK(mixed(i, 0) > 0.0);
    }
}

TEST_CASE("graph validation rejects bad edges and labels", "[gcn]") {
    GraphDataset g = tiny_graph();
    g.edges.push_back({2, 2});
    CHECK_THROWS_AS(g.validate(), Error);
    g = tiny_graph();
    g.edges.push_back({0, 9});
    CHECK_THROWS_AS(g.validate(), Error);
    g = tiny_graph();
    g.node_labels[0] = 5;
    CHECK_THROWS_AS(g.validate(), Error);
}

TEST_CASE("gcn gradients match finite differences", "[gcn]") {
    GraphDataset g = tiny_graph();
    NormalizedAdjacency adj = normalized_adjacency(g);
    std::vector<std::size_t> mask = {0, 1, 3};
    const double eps = 1e-5;

    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Hyperparameters hp;
        hp.seed = seed;
        hp.epochs = 0;
        TrainedModel m = train_gcn(g, 4, hp, mask);  // zero epochs: initialization only
        std::vector<Tensor> grads;
        gcn_loss_and_grad(m, adj, g.node_features, g.node_labels, mask, 5e-4, grads);
        std::vector<double> flat = flatten_params(m);
        double worst = 0.0;
        std::size_t off = 0;
        for (std::size_t t = 0; t < m.params.size(); ++t)
            for (std::size_t i = 0; i < m.params[t].size(); ++i, ++off) {
                std::vector<double> plus = flat, minus = flat;
                plus[off] += eps;
                minus[off] -= eps;
                std::vector<Tensor> scratch;
                unflatten_params(m, plus);
                double lp = gcn_loss_and_grad(m, adj, g.node_features, g.node_labels, mask, 5e-4,
                                              scratch);
                unflatten_params(m, minus);
                double lm = gcn_loss_and_grad(m, adj, g.node_features, g.node_labels, mask, 5e-4,
                                              scratch);
                unflatten_params(m, flat);
                double fd = (lp - lm) / (2.0 * eps);
                double ga = grads[t].v[i];
                worst = std::max(worst,
                                 std::fabs(ga - fd) / std::max(1e-6, std::fabs(ga) + std::fabs(fd)));
            }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("gcn fits a planted partition graph", "[gcn][slow]") {
    SyntheticGraphConfig cfg;
    cfg.n_nodes = 600;
    cfg.homophily = 0.9;
    cfg.label_signal = 0.95;
    cfg.n_classes = 2;
    GraphDataset g = synth_graph_generate(cfg, 29);

    std::vector<std::size_t> train_mask, test_nodes;
    for (std::size_t i = 0; i < g.n_nodes; ++i) (i % 3 == 0 ? train_mask : test_nodes).push_back(i);

    Hyperparameters hp;
    hp.seed = 7;
    hp.epochs = 150;
    hp.weight_decay = 5e-4;
    TrainedModel m = train_gcn(g, 16, hp, train_mask);
    Matrix probs = gcn_predict(m, g, test_nodes);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test_nodes.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < probs.cols; ++j)
            if (probs(i, j) > probs(i, best)) best = j;
        if (static_cast<int>(best) == g.node_labels[test_nodes[i]]) ++correct;
    }
    double acc = static_cast<double>(correct) / static_cast<double>(test_nodes.size());
    CHECK(acc >= 0.8);

    // Posterior simplex on every node.
    for (std::size_t i = 0; i < probs.rows; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < probs.cols; ++j) sum += probs(i, j);
        CHECK(sum == Approx(1.0).margin(1e-6));
    }
}

TEST_CASE("gcn training is deterministic; masks are validated", "[gcn]") {
    GraphDataset g = tiny_graph();
    Hyperparameters hp;
    hp.seed = 5;
    hp.epochs = 30;
    TrainedModel a = train_gcn(g, 4, hp, {0, 1, 2});
    TrainedModel b = train_gcn(g, 4, hp, {0, 1, 2});
    CHECK(flatten_params(a) == flatten_params(b));

    CHECK_THROWS_AS(train_gcn(g, 4, hp, {}), Error);
    CHECK_THROWS_AS(train_gcn(g, 4, hp, {0, 17}), Error);
    CHECK_THROWS_AS(gcn_predict(a, g, {99}), Error);
    CHECK_THROWS_AS(predict_proba(a, g.node_features), Error);
}
