// Acceptance suite: one test case per gate, each printing a single
// PASS/FAIL line with the measured numbers. Heavier than the unit tests;
// every case stays within a desk-scale runtime budget.

#include <catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "propinf/harness.hpp"
#include "propinf/wire.hpp"

using namespace propinf;

#ifndef PROPINF_CONFIG_DIR
#define PROPINF_CONFIG_DIR "configs"
#endif

namespace {

ExperimentConfig load_cfg(const std::string& name) {
    return load_experiment_config(std::string(PROPINF_CONFIG_DIR) + "/" + name);
}

void verdict(int criterion, bool pass, const std::string& detail) {
    std::printf("[criterion %d] %s — %s\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    CHECK(pass);
}

std::string pct(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", x);
    return buf;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

TEST_CASE("binary attack accuracy, label-correlated scenarios", "[criterion1]") {
    ExperimentResult lr_indep = run_experiment(load_cfg("multi_party_lr.conf"));
    ExperimentResult lr_corr = run_experiment(load_cfg("multi_party_lr_xcorr.conf"));
    ExperimentResult mlp = run_experiment(load_cfg("multi_party_mlp.conf"));
    double a1 = lr_indep.accuracy(), a2 = lr_corr.accuracy(), a3 = mlp.accuracy();
    double slowest = std::max({lr_indep.wall_time_s, lr_corr.wall_time_s, mlp.wall_time_s});
    bool pass = a1 >= 0.90 && a2 >= 0.90 && a3 >= 0.70 && slowest < 600.0;
    verdict(1, pass,
            "LR accuracy " + pct(a1) + " / " + pct(a2) + " (gate 0.90), MLP " + pct(a3) +
                " (gate 0.70), slowest run " + pct(slowest) + "s (gate 600)");
}

TEST_CASE("chance floor with no planted dependence", "[criterion2]") {
    ExperimentResult r = run_experiment(load_cfg("chance_floor.conf"));
    double a = r.accuracy();
    verdict(2, a >= 0.35 && a <= 0.65, "accuracy " + pct(a) + " within [0.35, 0.65]");
}

TEST_CASE("reduced-feature mode amplifies feature-only leakage", "[criterion3]") {
    ExperimentResult full = run_experiment(load_cfg("features_full.conf"));
    ExperimentResult reduced = run_experiment(load_cfg("features_reduced.conf"));
    double gap = reduced.accuracy() - full.accuracy();
    verdict(3, gap >= 0.05,
            "reduced " + pct(reduced.accuracy()) + " vs full " + pct(full.accuracy()) + ", gap " +
                pct(gap) + " (gate 0.05)");
}

TEST_CASE("single-party attack is at least as strong", "[criterion4]") {
    // Matched seeds: identical config except for the attacker data in training.
    ExperimentConfig multi = load_cfg("multi_party_lr.conf");
    ExperimentConfig single = multi;
    single.family = Family::SingleParty;
    single.raw.set("family", "single-party");
    ExperimentResult rm = run_experiment(multi);
    ExperimentResult rs = run_experiment(single);
    bool pass = rs.accuracy() >= rm.accuracy() - 0.02 && rs.accuracy() >= 0.90;
    verdict(4, pass,
            "single-party " + pct(rs.accuracy()) + " vs multi-party " + pct(rm.accuracy()) +
                " (gates: >= multi - 0.02 and >= 0.90)");
}

TEST_CASE("fine-grained attack recovers the ratio class", "[criterion5]") {
    ExperimentConfig cfg = load_cfg("fine_grained.conf");
    ExperimentResult r = run_experiment(cfg);
    std::vector<std::size_t> per_total(cfg.fine_ratios.size(), 0), per_hit(cfg.fine_ratios.size(), 0);
    for (std::size_t i = 0; i < r.truths.size(); ++i) {
        if (r.truths[i] < 0) continue;
        ++per_total[static_cast<std::size_t>(r.truths[i])];
        if (r.predictions[i] == r.truths[i]) ++per_hit[static_cast<std::size_t>(r.truths[i])];
    }
    bool pass = true;
    std::string detail = "per-class accuracy";
    for (std::size_t c = 0; c < per_total.size(); ++c) {
        double acc = per_total[c] ? static_cast<double>(per_hit[c]) / per_total[c] : 0.0;
        if (acc < 0.80) pass = false;
        detail += " " + pct(acc);
    }
    verdict(5, pass, detail + " (gate 0.80 each)");
}

TEST_CASE("model-update attack tracks the dominant side", "[criterion6]") {
    bool pass = true;
    std::string detail;
    for (double h1 : {0.3, 0.7})
        for (double h2 : {0.3, 0.7}) {
            ExperimentConfig cfg = load_cfg("model_update.conf");
            cfg.update_honest1 = h1;
            cfg.update_honest2 = h2;
            cfg.raw.set("update.honest1", format_double(h1));
            cfg.raw.set("update.honest2", format_double(h2));
            ExperimentResult r = run_experiment(cfg);
            if (r.accuracy() < 0.90) pass = false;
            if (!detail.empty()) detail += ", ";
            detail += pct(h1) + "/" + pct(h2) + ": " + pct(r.accuracy());
        }
    verdict(6, pass, detail + " (gate 0.90 each)");
}

TEST_CASE("white-box parameter attack", "[criterion7]") {
    ExperimentResult lr = run_experiment(load_cfg("white_box_lr.conf"));

    // MLP white-box is reported but not gated.
    ExperimentConfig mlp_cfg = load_cfg("white_box_lr.conf");
    mlp_cfg.target.arch = Arch::Mlp;
    mlp_cfg.target.hidden = {12};
    mlp_cfg.target.hp.epochs = 100;
    mlp_cfg.repetitions = 20;
    mlp_cfg.raw.set("target.arch", "mlp");
    mlp_cfg.raw.set("repetitions", "20");
    ExperimentResult mlp = run_experiment(mlp_cfg);

    verdict(7, lr.accuracy() >= 0.80,
            "LR white-box " + pct(lr.accuracy()) + " (gate 0.80); MLP white-box " +
                pct(mlp.accuracy()) + " (reported, not gated)");
}

TEST_CASE("query-count ablation on the graph attack", "[criterion8]") {
    ExperimentConfig extreme = load_cfg("graph_queries.conf");
    std::vector<ExperimentResult> e = run_sweep(extreme, "k", {"50", "200", "800"});

    ExperimentConfig moderate = load_cfg("graph_queries.conf");
    moderate.graph_split = 0.3;
    moderate.raw.set("graph.split", "0.3");
    std::vector<ExperimentResult> m = run_sweep(moderate, "k", {"50", "800"});

    double e50 = e[0].accuracy(), e200 = e[1].accuracy(), e800 = e[2].accuracy();
    double m50 = m[0].accuracy(), m800 = m[1].accuracy();
    bool pass = e800 >= e50 - 0.02 && m800 >= m50 - 0.02 && e200 >= 0.70;
    verdict(8, pass,
            "0:100 split k=50/200/800: " + pct(e50) + "/" + pct(e200) + "/" + pct(e800) +
                "; 30:70 split k=50/800: " + pct(m50) + "/" + pct(m800) +
                " (gates: k=800 >= k=50 - 0.02; k=200 at 0:100 >= 0.70)");
}

TEST_CASE("output-class ablation on matched graphs", "[criterion9]") {
    ExperimentConfig cfg = load_cfg("graph_classes.conf");
    std::vector<ExperimentResult> r = run_sweep(cfg, "classes", {"2", "11"});
    double two = r[0].accuracy(), eleven = r[1].accuracy();
    bool pass = two >= eleven && two > 0.50 && eleven > 0.50;
    verdict(9, pass,
            "2-class " + pct(two) + " vs 11-class " + pct(eleven) +
                " (gates: 2-class >= 11-class, both > 0.50)");
}

TEST_CASE("numerical oracles", "[criterion10]") {
    bool pass = true;
    std::string detail;

    // Gradient checks against central finite differences.
    auto check_tabular = [&](Arch arch, const std::vector<std::size_t>& hidden) {
        Rng rng(101);
        Matrix X(20, 5);
        for (auto& v : X.v) v = rng.normal();
        std::vector<int> y(20);
        for (auto& lab : y) lab = static_cast<int>(rng.below(3));
        Hyperparameters hp;
        hp.seed = 102;
        TrainedModel m = make_tabular_model(arch, 5, 3, hidden, hp);
        std::vector<Tensor> grads;
        tabular_loss_and_grad(m, X, y, 1e-4, grads);
        std::vector<double> flat = flatten_params(m);
        double worst = 0.0;
        std::size_t off = 0;
        for (std::size_t t = 0; t < m.params.size(); ++t)
            for (std::size_t i = 0; i < m.params[t].size(); ++i, ++off) {
                std::vector<double> plus = flat, minus = flat;
                plus[off] += 1e-5;
                minus[off] -= 1e-5;
                std::vector<Tensor> scratch;
                unflatten_params(m, plus);
                double lp = tabular_loss_and_grad(m, X, y, 1e-4, scratch);
                unflatten_params(m, minus);
                double lm = tabular_loss_and_grad(m, X, y, 1e-4, scratch);
                unflatten_params(m, flat);
                double fd = (lp - lm) / 2e-5;
                double g = grads[t].v[i];
                worst = std::max(worst,
                                 std::fabs(g - fd) / std::max(1e-6, std::fabs(g) + std::fabs(fd)));
            }
        return worst;
    };
    double lr_err = check_tabular(Arch::LogReg, {});
    double mlp_err = check_tabular(Arch::Mlp, {12});

    SyntheticGraphConfig gcfg;
    gcfg.n_nodes = 20;
    GraphDataset g = synth_graph_generate(gcfg, 103);
    NormalizedAdjacency adj = normalized_adjacency(g);
    std::vector<std::size_t> mask = {0, 3, 7, 11, 15};
    Hyperparameters ghp;
    ghp.seed = 104;
    ghp.epochs = 0;
    TrainedModel gm = train_gcn(g, 4, ghp, mask);
    std::vector<Tensor> ggrads;
    gcn_loss_and_grad(gm, adj, g.node_features, g.node_labels, mask, 5e-4, ggrads);
    std::vector<double> gflat = flatten_params(gm);
    double gcn_err = 0.0;
    std::size_t off = 0;
    for (std::size_t t = 0; t < gm.params.size(); ++t)
        for (std::size_t i = 0; i < gm.params[t].size(); ++i, ++off) {
            std::vector<double> plus = gflat, minus = gflat;
            plus[off] += 1e-5;
            minus[off] -= 1e-5;
            std::vector<Tensor> scratch;
            unflatten_params(gm, plus);
            double lp = gcn_loss_and_grad(gm, adj, g.node_features, g.node_labels, mask, 5e-4,
                                          scratch);
            unflatten_params(gm, minus);
            double lm = gcn_loss_and_grad(gm, adj, g.node_features, g.node_labels, mask, 5e-4,
                                          scratch);
            unflatten_params(gm, gflat);
            double fd = (lp - lm) / 2e-5;
            double ga = ggrads[t].v[i];
            gcn_err = std::max(gcn_err,
                               std::fabs(ga - fd) / std::max(1e-6, std::fabs(ga) + std::fabs(fd)));
        }
    if (lr_err >= 1e-4 || mlp_err >= 1e-4 || gcn_err >= 1e-4) pass = false;

    // Hand-computed statistics.
    std::vector<int> a, b;
    auto fill = [&](int ca, int cb, int count) {
        for (int i = 0; i < count; ++i) {
            a.push_back(ca);
            b.push_back(cb);
        }
    };
    fill(0, 0, 20);
    fill(0, 1, 10);
    fill(1, 0, 10);
    fill(1, 1, 20);
    double v = *cramers_v(a, b);
    if (std::fabs(v - 1.0 / 3.0) >= 1e-9) pass = false;

    double p = *pearson({1, 2, 3, 4}, {1, 3, 2, 4});
    if (std::fabs(p - 0.8) >= 1e-9) pass = false;

    // F(1,6) upper tail at F=2.0 has the exact dyadic value 0.20703125.
    double ftail = f_upper_tail(2.0, 1, 6);
    if (std::fabs(ftail - 0.20703125) >= 1e-9) pass = false;
    AnovaResult an = anova({{1, 2, 3, 4}, {2, 3, 4, 5}});
    if (std::fabs(an.f_statistic - 1.2) >= 1e-9) pass = false;

    // Posterior simplex.
    Rng rng(105);
    Matrix X(50, 4);
    for (auto& x : X.v) x = rng.normal();
    std::vector<int> y(50);
    for (auto& lab : y) lab = static_cast<int>(rng.below(2));
    Hyperparameters hp;
    hp.seed = 106;
    hp.epochs = 20;
    TrainedModel m = train_mlp(X, y, {12}, 2, hp);
    Matrix probs = predict_proba(m, X);
    for (std::size_t i = 0; i < probs.rows && pass; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < probs.cols; ++j) {
            if (probs(i, j) < 0.0) pass = false;
            sum += probs(i, j);
        }
        if (std::fabs(sum - 1.0) > 1e-6) pass = false;
    }

    // Loopback server equivalence.
    Matrix local = predict_proba(m, X);
    double worst_wire = 0.0;
    {
        InferenceServer server(m, "127.0.0.1", 0);
        RemoteModel remote("127.0.0.1", server.port());
        Matrix wire = remote.query(X);
        for (std::size_t i = 0; i < local.v.size(); ++i)
            worst_wire = std::max(worst_wire, std::fabs(wire.v[i] - local.v[i]));
    }
    if (worst_wire >= 1e-9) pass = false;

    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "grad rel-err lr/mlp/gcn %.2e/%.2e/%.2e (gate 1e-4); V, r, F, p exact; wire max "
                  "delta %.2e (gate 1e-9)",
                  lr_err, mlp_err, gcn_err, worst_wire);
    verdict(10, pass, buf);
}

TEST_CASE("byte-identical reports under a fixed master seed", "[criterion11]") {
    bool pass = true;
    std::string detail;
    for (const std::string name : {"multi_party_lr.conf", "graph_queries.conf"}) {
        ExperimentConfig cfg = load_cfg(name);
        std::string d1 = "/tmp/propinf_accept_rep1_" + name;
        std::string d2 = "/tmp/propinf_accept_rep2_" + name;
        emit_report({run_experiment(cfg)}, d1);
        emit_report({run_experiment(cfg)}, d2);
        bool same = read_file(d1 + "/results.csv") == read_file(d2 + "/results.csv") &&
                    read_file(d1 + "/results.txt") == read_file(d2 + "/results.txt");
        if (!same) pass = false;
        if (!detail.empty()) detail += "; ";
        detail += name + (same ? " identical" : " DIFFERS");
        std::filesystem::remove_all(d1);
        std::filesystem::remove_all(d2);
    }
    verdict(11, pass, detail);
}
