// Command-line front end: run experiments, sweep ablation axes, render
// reports, serve a trained model over TCP, and attack a remote endpoint.
//
// Exit codes: 0 success, 2 configuration/usage error, 3 runtime failure.

#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "propinf/harness.hpp"
#include "propinf/wire.hpp"

using namespace propinf;

namespace {

int cmd_run(const std::string& config_path, const std::string& out_dir) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    ExperimentResult res = run_experiment(cfg);
    std::vector<ExperimentResult> results{res};
    emit_report_text(results, std::cout);
    std::cout << "wall time: " << res.wall_time_s << " s\n";
    std::string dir = !out_dir.empty() ? out_dir : cfg.out_dir;
    if (!dir.empty()) {
        emit_report(results, dir);
        std::cout << "report written to " << dir << "/results.{csv,txt}\n";
    }
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& axis,
              const std::vector<std::string>& values, const std::string& out_dir) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    std::vector<ExperimentResult> results = run_sweep(cfg, axis, values);
    emit_report_text(results, std::cout);
    double wall = 0.0;
    for (const auto& r : results) wall += r.wall_time_s;
    std::cout << "wall time: " << wall << " s\n";
    std::string dir = !out_dir.empty() ? out_dir : cfg.out_dir;
    if (!dir.empty()) {
        emit_report(results, dir);
        std::cout << "report written to " << dir << "/results.{csv,txt}\n";
    }
    return 0;
}

// Rebuilds result rows from results.csv files and prints the merged table.
int cmd_report(const std::vector<std::string>& paths) {
    std::vector<ExperimentResult> results;
    for (const auto& path : paths) {
        std::ifstream in(path);
        if (!in) throw Error("report: cannot open " + path);
        std::string line;
        if (!std::getline(in, line) || line.rfind("digest,", 0) != 0)
            throw Error("report: " + path + " is not a results csv");
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::vector<std::string> cells;
            std::istringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) cells.push_back(cell);
            if (cells.size() < 9) throw Error("report: malformed row in " + path);
            ExperimentResult r;
            r.config_digest = std::stoull(cells[0], nullptr, 16);
            r.family = cells[1];
            r.axis = cells[2];
            r.value = cells[3];
            r.repetitions = std::stoul(cells[4]);
            r.correct = std::stoul(cells[5]);
            r.failed = std::stoul(cells[6]);
            results.push_back(std::move(r));
        }
    }
    emit_report_text(results, std::cout);
    return 0;
}

int cmd_serve(const std::string& model_path, const std::string& host, int port,
              const std::string& graph_config) {
    TrainedModel model = load_model(model_path);
    std::unique_ptr<InferenceServer> server;
    if (!graph_config.empty()) {
        ExperimentConfig cfg = load_experiment_config(graph_config);
        GraphDataset g = synth_graph_generate(cfg.graph, derive_seed(cfg.seed, 301));
        if (!cfg.with_a) g = drop_graph_types(g);
        server = std::make_unique<InferenceServer>(std::move(model), std::move(g), host, port);
    } else {
        server = std::make_unique<InferenceServer>(std::move(model), host, port);
    }
    std::cout << "serving on " << host << ":" << server->port() << std::endl;
    // Block until interrupted.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    int sig = 0;
    sigwait(&set, &sig);
    std::cout << "shutting down\n";
    server->stop();
    return 0;
}

// Black-box attack against a live endpoint: shadow models and the meta are
// trained locally from the config; the target is only queried over the wire.
int cmd_attack_remote(const std::string& config_path, const std::string& endpoint,
                      int timeout_ms) {
    std::size_t colon = endpoint.rfind(':');
    if (colon == std::string::npos) throw Error("endpoint must be host:port");
    std::string host = endpoint.substr(0, colon);
    int port = std::stoi(endpoint.substr(colon + 1));

    ExperimentConfig cfg = load_experiment_config(config_path);
    if (cfg.data_kind == DataKind::Graph)
        throw Error("attack-remote: tabular configs only");

    detail::TabularPools pools = detail::build_tabular_pools(cfg);
    std::vector<double> ratios = cfg.family == Family::FineGrained
                                     ? cfg.fine_ratios
                                     : std::vector<double>{cfg.ratio_p, cfg.ratio_q};
    detail::TrainedAttack attack = detail::train_tabular_attack(
        cfg, pools, ratios, cfg.family != Family::SingleParty, false);

    RemoteModel remote(host, port, timeout_ms);
    AttackVector f = build_attack_vector(remote.as_query_fn(), attack.attack_encoded);
    AttackPrediction pred = run_attack(attack.meta, f);
    std::string name = static_cast<std::size_t>(pred.label) < attack.meta.class_names.size()
                           ? attack.meta.class_names[static_cast<std::size_t>(pred.label)]
                           : std::to_string(pred.label);
    std::cout << "predicted property ratio: " << name << " (confidence "
              << format_double(pred.confidence) << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dataset-property inference experiments"};
    app.require_subcommand(1);

    std::string config_path, out_dir, axis, model_path, graph_config, endpoint;
    std::string host = "127.0.0.1";
    std::vector<std::string> values, report_paths;
    int port = 0;
    int timeout_ms = 10000;

    auto* run = app.add_subcommand("run", "run one experiment from a config file");
    run->add_option("config", config_path)->required();
    run->add_option("--out", out_dir, "report directory");

    auto* sweep = app.add_subcommand("sweep", "sweep one ablation axis");
    sweep->add_option("config", config_path)->required();
    sweep->add_option("--axis", axis, "k | split | classes | with_a")->required();
    sweep->add_option("--values", values, "axis values")->required()->delimiter(',');
    sweep->add_option("--out", out_dir, "report directory");

    auto* report = app.add_subcommand("report", "render result csv files as a table");
    report->add_option("results", report_paths)->required();

    auto* serve = app.add_subcommand("serve", "serve a trained model over TCP");
    serve->add_option("--model", model_path)->required();
    serve->add_option("--host", host);
    serve->add_option("--port", port, "0 picks an ephemeral port");
    serve->add_option("--graph-config", graph_config,
                      "serve node-id queries for this synthetic graph config");

    auto* attack = app.add_subcommand("attack-remote", "attack a live inference endpoint");
    attack->add_option("config", config_path)->required();
    attack->add_option("--endpoint", endpoint, "host:port")->required();
    attack->add_option("--timeout-ms", timeout_ms);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*run) return cmd_run(config_path, out_dir);
        if (*sweep) return cmd_sweep(config_path, axis, values, out_dir);
        if (*report) return cmd_report(report_paths);
        if (*serve) return cmd_serve(model_path, host, port, graph_config);
        if (*attack) return cmd_attack_remote(config_path, endpoint, timeout_ms);
    } catch (const Error& e) {
        std::string msg = e.what();
        std::cerr << "error: " << msg << "\n";
        return msg.rfind("config", 0) == 0 ? 2 : 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
