#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "propinf/attack.hpp"
#include "propinf/dataset.hpp"
#include "propinf/gcn.hpp"
#include "propinf/model.hpp"
#include "propinf/stats.hpp"
#include "propinf/synthetic.hpp"

namespace propinf {

// ---------------------------------------------------------------------------
// Flat dotted-key config files: `attack.n_shadow = 100`, '#' comments, one
// experiment per file.
// ---------------------------------------------------------------------------

class ConfigMap {
public:
    static ConfigMap parse(std::istream& in) {
        ConfigMap cfg;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            auto trim = [](std::string s) {
                std::size_t b = s.find_first_not_of(" \t\r");
                if (b == std::string::npos) return std::string();
                std::size_t e = s.find_last_not_of(" \t\r");
                return s.substr(b, e - b + 1);
            };
            std::string t = trim(line);
            if (t.empty()) continue;
            std::size_t eq = t.find('=');
            if (eq == std::string::npos)
                throw Error("config: missing '=' at line " + std::to_string(line_no));
            std::string key = trim(t.substr(0, eq));
            std::string value = trim(t.substr(eq + 1));
            if (key.empty()) throw Error("config: empty key at line " + std::to_string(line_no));
            cfg.kv_[key] = value;
        }
        return cfg;
    }

    static ConfigMap parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error("config: cannot open " + path);
        return parse(in);
    }

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::string get(const std::string& key, const std::string& fallback) const {
        auto it = kv_.find(key);
        return it == kv_.end() ? fallback : it->second;
    }

    std::string require(const std::string& key) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) throw Error("config: missing required key " + key);
        return it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = kv_.find(key);
        return it == kv_.end() ? fallback : std::stod(it->second);
    }

    long get_long(const std::string& key, long fallback) const {
        auto it = kv_.find(key);
        return it == kv_.end() ? fallback : std::stol(it->second);
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw Error("config: bad boolean for " + key + ": " + it->second);
    }

    std::vector<std::string> get_list(const std::string& key) const {
        std::vector<std::string> out;
        auto it = kv_.find(key);
        if (it == kv_.end()) return out;
        std::istringstream ss(it->second);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            std::size_t b = tok.find_first_not_of(" \t");
            std::size_t e = tok.find_last_not_of(" \t");
            if (b != std::string::npos) out.push_back(tok.substr(b, e - b + 1));
        }
        return out;
    }

    void set(const std::string& key, const std::string& value) { kv_[key] = value; }

    // Canonical serialization (sorted keys) used for the config digest.
    std::string canonical() const {
        std::string out;
        for (const auto& [k, v] : kv_) out += k + "=" + v + "\n";
        return out;
    }

    std::uint64_t digest() const { return fnv1a(canonical()); }

private:
    std::map<std::string, std::string> kv_;
};

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

enum class Family {
    MultiParty,
    SingleParty,
    FineGrained,
    ModelUpdate,
    WhiteBox,
    AblationQueries,
    AblationSplit,
    AblationClasses
};

inline std::string family_name(Family f) {
    switch (f) {
        case Family::MultiParty: return "multi-party";
        case Family::SingleParty: return "single-party";
        case Family::FineGrained: return "fine-grained";
        case Family::ModelUpdate: return "model-update";
        case Family::WhiteBox: return "white-box";
        case Family::AblationQueries: return "ablation-queries";
        case Family::AblationSplit: return "ablation-split";
        default: return "ablation-classes";
    }
}

inline Family family_from_name(const std::string& s) {
    for (Family f : {Family::MultiParty, Family::SingleParty, Family::FineGrained,
                     Family::ModelUpdate, Family::WhiteBox, Family::AblationQueries,
                     Family::AblationSplit, Family::AblationClasses})
        if (family_name(f) == s) return f;
    throw Error("config: unknown family " + s);
}

enum class DataKind { Synthetic, Csv, Graph };

struct ExperimentConfig {
    Family family = Family::MultiParty;
    DataKind data_kind = DataKind::Synthetic;
    std::uint64_t seed = 1;
    std::size_t repetitions = 100;
    bool with_a = false;  // A vs Ā pipeline mode

    SyntheticConfig synth;  // n_records is per-use; a_ratio per party

    std::string csv_path;
    std::string csv_schema_path;

    SyntheticGraphConfig graph;
    double graph_split = 0.0;  // honest type ratio for the binary graph attack

    SplitSizes sizes{2000, 2000, 10000, 1000};

    TargetRecipe target;

    std::size_t n_shadow = 100;
    std::size_t shadow_size = 0;  // 0 => |D_honest|
    std::string meta_kind = "auto";
    double ratio_p = 0.33;  // property pair for the binary attack
    double ratio_q = 0.67;
    double adv_ratio = 0.33;  // attribute split in D_adv
    std::vector<double> fine_ratios = {0.1, 0.3, 0.5, 0.7, 0.9};
    double update_honest1 = 0.3;
    double update_honest2 = 0.7;

    // CSV mode: the property under attack.
    PropertySpec csv_property;

    std::string out_dir;
    ConfigMap raw;

    std::uint64_t digest() const { return raw.digest(); }
};

inline ExperimentConfig parse_experiment_config(const ConfigMap& cfg) {
    std::vector<std::string> errors;
    ExperimentConfig e;
    e.raw = cfg;
    try {
        e.family = family_from_name(cfg.require("family"));
    } catch (const Error& err) {
        errors.push_back(err.what());
    }
    std::string kind = cfg.get("data.kind", "synthetic");
    if (kind == "synthetic") {
        e.data_kind = DataKind::Synthetic;
    } else if (kind == "csv") {
        e.data_kind = DataKind::Csv;
    } else if (kind == "graph") {
        e.data_kind = DataKind::Graph;
    } else {
        errors.push_back("config: unknown data.kind " + kind);
    }

    e.seed = static_cast<std::uint64_t>(cfg.get_long("seed", 1));
    long reps = cfg.get_long("repetitions", 100);
    if (reps < 1) errors.push_back("config: repetitions must be >= 1");
    e.repetitions = static_cast<std::size_t>(std::max(1L, reps));
    e.with_a = cfg.get_bool("with_a", false);

    e.synth.scenario = scenario_of(cfg.get_bool("synthetic.x_corr", false),
                                   cfg.get_bool("synthetic.y_corr", true));
    e.synth.n_features = static_cast<std::size_t>(cfg.get_long("synthetic.n_features", 10));
    e.synth.correlation_strength = cfg.get_double("synthetic.strength", 1.0);
    e.synth.reduced = cfg.get_bool("synthetic.reduced", false);
    auto corr = cfg.get_list("synthetic.correlated");
    if (!corr.empty()) e.synth.correlated_columns = corr;
    else if (scenario_x_corr(e.synth.scenario)) e.synth.correlated_columns = {"f0", "f1"};

    e.csv_path = cfg.get("csv.path", "");
    e.csv_schema_path = cfg.get("csv.schema", "");

    e.graph.n_nodes = static_cast<std::size_t>(cfg.get_long("graph.n_nodes", 3200));
    e.graph.n_types = static_cast<std::size_t>(cfg.get_long("graph.n_types", 2));
    e.graph.n_classes = static_cast<std::size_t>(cfg.get_long("graph.n_classes", 2));
    e.graph.homophily = cfg.get_double("graph.homophily", 0.5);
    e.graph.label_signal = cfg.get_double("graph.label_signal", 0.8);
    e.graph.avg_degree = cfg.get_double("graph.avg_degree", 8.0);
    e.graph.type_ratio = 0.5;  // generation is balanced; party masks set the splits
    e.graph_split = cfg.get_double("graph.split", 0.0);

    e.sizes.n_adv = static_cast<std::size_t>(cfg.get_long("data.n_adv", 2000));
    e.sizes.n_honest = static_cast<std::size_t>(cfg.get_long("data.n_honest", 2000));
    e.sizes.n_aux = static_cast<std::size_t>(cfg.get_long("data.n_aux", 10000));
    e.sizes.n_attack = static_cast<std::size_t>(cfg.get_long("data.n_attack", 1000));

    std::string arch = cfg.get("target.arch", e.data_kind == DataKind::Graph ? "gcn" : "logreg");
    try {
        e.target.arch = arch_from_name(arch);
    } catch (const Error& err) {
        errors.push_back(err.what());
    }
    if (e.target.arch == Arch::Mlp) {
        e.target.hidden.clear();
        for (const auto& h : cfg.get_list("target.hidden"))
            e.target.hidden.push_back(static_cast<std::size_t>(std::stol(h)));
        if (e.target.hidden.empty()) e.target.hidden = {12};
    } else if (e.target.arch == Arch::Gcn) {
        e.target.hidden = {static_cast<std::size_t>(cfg.get_long("target.hidden", 16))};
    }
    e.target.hp.learning_rate = cfg.get_double("target.lr", 0.01);
    e.target.hp.weight_decay =
        cfg.get_double("target.weight_decay", e.target.arch == Arch::Gcn ? 5e-4 : 1e-4);
    e.target.hp.epochs = static_cast<std::size_t>(
        cfg.get_long("target.epochs", e.target.arch == Arch::Gcn ? 100 : 200));
    e.target.hp.batch_size = static_cast<std::size_t>(cfg.get_long("target.batch", 64));
    if (e.target.hp.learning_rate <= 0.0) errors.push_back("config: target.lr must be > 0");
    if (e.target.hp.weight_decay < 0.0) errors.push_back("config: target.weight_decay must be >= 0");

    e.n_shadow = static_cast<std::size_t>(
        cfg.get_long("attack.n_shadow", e.family == Family::FineGrained ||
                                                e.family == Family::ModelUpdate
                                            ? 500
                                            : 100));
    e.shadow_size = static_cast<std::size_t>(cfg.get_long("attack.shadow_size", 0));
    e.meta_kind = cfg.get("attack.meta", "auto");
    if (e.meta_kind != "auto" && e.meta_kind != "logreg" && e.meta_kind != "mlp20x8" &&
        e.meta_kind != "mlp200x50")
        errors.push_back("config: unknown attack.meta " + e.meta_kind);
    e.ratio_p = cfg.get_double("attack.ratio_p", 0.33);
    e.ratio_q = cfg.get_double("attack.ratio_q", 0.67);
    e.adv_ratio = cfg.get_double("attack.adv_ratio",
                                 e.family == Family::ModelUpdate ? 0.5 : 0.33);
    auto fr = cfg.get_list("attack.fine_ratios");
    if (!fr.empty()) {
        e.fine_ratios.clear();
        for (const auto& s : fr) e.fine_ratios.push_back(std::stod(s));
    }
    e.update_honest1 = cfg.get_double("update.honest1", 0.3);
    e.update_honest2 = cfg.get_double("update.honest2", 0.7);

    e.csv_property.attribute = cfg.get("property.attribute", "A");
    e.csv_property.value = cfg.get("property.value", "<5");
    e.out_dir = cfg.get("output.dir", "");

    if (e.data_kind == DataKind::Csv) {
        if (e.csv_path.empty()) errors.push_back("config: csv.path required for csv data");
        if (e.csv_schema_path.empty()) errors.push_back("config: csv.schema required for csv data");
    }
    if (e.data_kind == DataKind::Graph && e.family != Family::MultiParty &&
        e.family != Family::SingleParty && e.family != Family::AblationQueries &&
        e.family != Family::AblationSplit && e.family != Family::AblationClasses)
        errors.push_back("config: family " + family_name(e.family) + " needs tabular data");
    if ((e.family == Family::AblationQueries || e.family == Family::AblationSplit ||
         e.family == Family::AblationClasses) &&
        e.data_kind != DataKind::Graph)
        errors.push_back("config: ablation families run on graph data");
    if (e.ratio_p == e.ratio_q) errors.push_back("config: attack.ratio_p must differ from ratio_q");
    if (e.data_kind == DataKind::Graph &&
        e.graph.n_nodes < 2 * e.sizes.n_adv + e.sizes.n_aux + e.sizes.n_attack + 2 * e.sizes.n_honest)
        errors.push_back("config: graph.n_nodes too small for the requested party sizes");

    try {
        if (e.data_kind == DataKind::Synthetic) {
            SyntheticConfig probe = e.synth;
            probe.n_records = 1;
            probe.validate();
        }
        if (e.data_kind == DataKind::Graph) e.graph.validate();
    } catch (const Error& err) {
        errors.push_back(err.what());
    }

    if (!errors.empty()) {
        std::string joined = "config validation failed:";
        for (const auto& err : errors) joined += "\n  - " + err;
        throw Error(joined);
    }
    return e;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    return parse_experiment_config(ConfigMap::parse_file(path));
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

struct ExperimentResult {
    std::uint64_t config_digest = 0;
    std::string family;
    std::string axis;   // sweep axis, empty for plain runs
    std::string value;  // sweep value
    std::size_t repetitions = 0;
    std::size_t correct = 0;
    std::size_t failed = 0;
    std::vector<int> predictions;
    std::vector<int> truths;
    double wall_time_s = 0.0;  // console-only; never written to report files

    double accuracy() const {
        std::size_t valid = repetitions - failed;
        return valid == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(valid);
    }

    // Normal-approximation 95% binomial half-width.
    double ci_half_width() const {
        std::size_t valid = repetitions - failed;
        if (valid == 0) return 0.0;
        double p = accuracy();
        return 1.96 * std::sqrt(p * (1.0 - p) / static_cast<double>(valid));
    }
};

inline void emit_report_csv(const std::vector<ExperimentResult>& results, std::ostream& out) {
    if (results.empty()) throw Error("report: no results");
    out << "digest,family,axis,value,repetitions,correct,failed,accuracy,ci95\n";
    for (const auto& r : results) {
        char acc[32], ci[32];
        std::snprintf(acc, sizeof(acc), "%.4f", r.accuracy());
        std::snprintf(ci, sizeof(ci), "%.4f", r.ci_half_width());
        out << std::hex << r.config_digest << std::dec << "," << r.family << "," << r.axis << ","
            << r.value << "," << r.repetitions << "," << r.correct << "," << r.failed << "," << acc
            << "," << ci << "\n";
    }
}

inline void emit_report_text(const std::vector<ExperimentResult>& results, std::ostream& out) {
    if (results.empty()) throw Error("report: no results");
    out << "family            axis        value     reps  acc    ci95\n";
    out << "-----------------------------------------------------------\n";
    for (const auto& r : results) {
        char line[160];
        std::snprintf(line, sizeof(line), "%-17s %-11s %-9s %-5zu %.3f  +/-%.3f\n", r.family.c_str(),
                      r.axis.empty() ? "-" : r.axis.c_str(), r.value.empty() ? "-" : r.value.c_str(),
                      r.repetitions, r.accuracy(), r.ci_half_width());
        out << line;
    }
}

inline void emit_report(const std::vector<ExperimentResult>& results, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream csv(dir + "/results.csv");
    if (!csv) throw Error("report: cannot write " + dir + "/results.csv");
    emit_report_csv(results, csv);
    std::ofstream txt(dir + "/results.txt");
    if (!txt) throw Error("report: cannot write " + dir + "/results.txt");
    emit_report_text(results, txt);
}

// ---------------------------------------------------------------------------
// Tabular experiment machinery
// ---------------------------------------------------------------------------

namespace detail {

inline TabularDataset maybe_drop_a(const TabularDataset& ds, bool with_a) {
    if (with_a || ds.schema.sensitive.empty()) return ds;
    return drop_attribute(ds, ds.schema.sensitive);
}

inline MetaKind resolve_meta_kind(const ExperimentConfig& cfg) {
    if (cfg.meta_kind == "logreg") return MetaKind::BinaryLogReg;
    if (cfg.meta_kind == "mlp20x8") return MetaKind::TwoLayer20x8;
    if (cfg.meta_kind == "mlp200x50") return MetaKind::TwoLayer200x50;
    if (cfg.family == Family::WhiteBox) return MetaKind::TwoLayer200x50;
    return cfg.target.arch == Arch::Mlp ? MetaKind::TwoLayer20x8 : MetaKind::BinaryLogReg;
}

// Source pools shared by every tabular family. The property is always over
// the sensitive column; for synthetic data the strata are "<5" / ">5".
struct TabularPools {
    TabularDataset adv;        // fixed attacker data (with A; dropped downstream)
    TabularDataset aux;        // resampling pool (with A)
    TabularDataset attack;     // probe records, disjoint from aux
    TabularDataset honest_pool;  // csv mode only: pool for per-rep honest draws
    PropertySpec property;     // value/attribute; ratio filled per use
    std::size_t n_classes = 0;
};

inline TabularPools build_synthetic_pools(const ExperimentConfig& cfg) {
    TabularPools pools;
    pools.property = PropertySpec{"A", "<5", 0.0};

    SyntheticConfig adv_cfg = cfg.synth;
    adv_cfg.n_records = cfg.sizes.n_adv;
    adv_cfg.a_ratio = cfg.adv_ratio;
    pools.adv = synth_generate(adv_cfg, derive_seed(cfg.seed, 101));

    SyntheticConfig pool_cfg = cfg.synth;
    pool_cfg.n_records = cfg.sizes.n_aux + cfg.sizes.n_attack;
    pool_cfg.a_ratio = 0.5;  // balanced strata so any resample ratio is feasible
    TabularDataset pool = synth_generate(pool_cfg, derive_seed(cfg.seed, 102));
    DatasetSplits s = make_splits(pool, {0, 0, cfg.sizes.n_aux, cfg.sizes.n_attack},
                                  derive_seed(cfg.seed, 103));
    pools.aux = std::move(s.aux);
    pools.attack = std::move(s.attack);
    pools.n_classes = pools.adv.n_classes();
    return pools;
}

inline TabularPools build_csv_pools(const ExperimentConfig& cfg) {
    TabularDataset schema_holder = load_dataset(cfg.csv_schema_path);
    CsvLoadResult loaded = load_csv(cfg.csv_path, schema_holder.schema);
    DatasetSplits s = make_splits(loaded.dataset, cfg.sizes, derive_seed(cfg.seed, 104));
    TabularPools pools;
    pools.adv = resample_with_ratio(
        s.adv, PropertySpec{cfg.csv_property.attribute, cfg.csv_property.value, cfg.adv_ratio},
        s.adv.n_records, derive_seed(cfg.seed, 105));
    pools.aux = std::move(s.aux);
    pools.attack = std::move(s.attack);
    pools.honest_pool = std::move(s.honest);
    pools.property = cfg.csv_property;
    pools.n_classes = pools.adv.n_classes();
    return pools;
}

inline TabularPools build_tabular_pools(const ExperimentConfig& cfg) {
    return cfg.data_kind == DataKind::Csv ? build_csv_pools(cfg) : build_synthetic_pools(cfg);
}

// Fresh honest dataset with the requested attribute ratio.
inline TabularDataset draw_honest(const ExperimentConfig& cfg, const TabularPools& pools,
                                  double ratio, std::uint64_t seed) {
    if (cfg.data_kind == DataKind::Synthetic) {
        SyntheticConfig h = cfg.synth;
        h.n_records = cfg.sizes.n_honest;
        h.a_ratio = ratio;
        return synth_generate(h, seed);
    }
    PropertySpec spec = pools.property;
    spec.ratio = ratio;
    std::size_t size = std::min(cfg.sizes.n_adv, pools.honest_pool.n_records);
    return resample_with_ratio(pools.honest_pool, spec, size, seed);
}

// Everything needed to score one trained target model.
struct TrainedAttack {
    MetaClassifier meta;
    Encoder encoder;
    Matrix attack_encoded;
    std::size_t failed_shadows = 0;
};

inline TrainedAttack train_tabular_attack(const ExperimentConfig& cfg, const TabularPools& pools,
                                          const std::vector<double>& ratios, bool include_adv,
                                          bool white_box, std::size_t shadow_size_override = 0,
                                          std::uint64_t seed_salt = 0) {
    ShadowConfig shadow_cfg;
    shadow_cfg.n_shadow = cfg.n_shadow;
    shadow_cfg.shadow_size = shadow_size_override != 0
                                 ? shadow_size_override
                                 : (cfg.shadow_size == 0 ? cfg.sizes.n_honest : cfg.shadow_size);
    shadow_cfg.include_adv_data = include_adv;
    for (double r : ratios) {
        PropertySpec p = pools.property;
        p.ratio = r;
        shadow_cfg.properties.push_back(p);
    }
    auto shadow_sets =
        generate_shadow_datasets(pools.aux, shadow_cfg, derive_seed(cfg.seed, 201 + seed_salt));

    TrainedAttack out;
    std::vector<LabeledDataset> prepared;
    prepared.reserve(shadow_sets.size());
    for (auto& s : shadow_sets) prepared.push_back({maybe_drop_a(s.data, cfg.with_a), s.label});
    TabularDataset adv = maybe_drop_a(pools.adv, cfg.with_a);
    TabularDataset aux = maybe_drop_a(pools.aux, cfg.with_a);
    TabularDataset attack = maybe_drop_a(pools.attack, cfg.with_a);
    out.encoder = Encoder::fit(aux);
    out.attack_encoded = out.encoder.transform(attack);

    EnsembleResult ens =
        train_shadow_ensemble(prepared, include_adv ? &adv : nullptr, cfg.target, out.encoder,
                              out.attack_encoded, derive_seed(cfg.seed, 202 + seed_salt), white_box);
    out.failed_shadows = ens.failed;

    std::vector<std::string> names;
    for (double r : ratios) names.push_back(format_double(r));
    out.meta = train_meta(ens.pairs, resolve_meta_kind(cfg), derive_seed(cfg.seed, 203 + seed_salt),
                          std::move(names));
    return out;
}

inline TrainedModel train_target_on(const ExperimentConfig& cfg, const Encoder& encoder,
                                    const TabularDataset& data, std::size_t n_classes,
                                    std::uint64_t seed) {
    Matrix x = encoder.transform(data);
    Hyperparameters hp = cfg.target.hp;
    hp.seed = seed;
    return train_tabular(cfg.target.arch, x, data.labels(), cfg.target.hidden, n_classes, hp);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// run_experiment
// ---------------------------------------------------------------------------

inline ExperimentResult run_experiment(const ExperimentConfig& cfg);

namespace detail {

// Binary / fine-grained / white-box tabular families share one evaluation
// loop: fresh honest data per repetition, target trained per the family,
// meta-classifier scored against the known ratio class.
inline ExperimentResult run_tabular_family(const ExperimentConfig& cfg) {
    bool include_adv = cfg.family != Family::SingleParty;
    bool white_box = cfg.family == Family::WhiteBox;
    bool fine = cfg.family == Family::FineGrained;

    TabularPools pools = build_tabular_pools(cfg);
    std::vector<double> ratios =
        fine ? cfg.fine_ratios : std::vector<double>{cfg.ratio_p, cfg.ratio_q};
    TrainedAttack attack = train_tabular_attack(cfg, pools, ratios, include_adv, white_box);

    TabularDataset adv = maybe_drop_a(pools.adv, cfg.with_a);

    ExperimentResult res;
    res.config_digest = cfg.digest();
    res.family = family_name(cfg.family);
    res.repetitions = cfg.repetitions;
    res.predictions.assign(cfg.repetitions, -1);
    res.truths.assign(cfg.repetitions, -1);

    std::vector<char> ok(cfg.repetitions, 0);
    parallel_for(cfg.repetitions, [&](std::size_t rep) {
        int truth = static_cast<int>(rep % ratios.size());
        TabularDataset honest = maybe_drop_a(
            draw_honest(cfg, pools, ratios[static_cast<std::size_t>(truth)],
                        derive_seed(cfg.seed, 1000 + rep)),
            cfg.with_a);
        TabularDataset train_data = include_adv ? concat(honest, adv) : honest;
        try {
            TrainedModel target = train_target_on(cfg, attack.encoder, train_data, pools.n_classes,
                                                  derive_seed(cfg.seed, 2000 + rep));
            AttackVector f = white_box
                                 ? white_box_vector(target)
                                 : build_attack_vector(predict_proba(target, attack.attack_encoded));
            AttackPrediction pred = run_attack(attack.meta, f);
            res.predictions[rep] = pred.label;
            res.truths[rep] = truth;
            ok[rep] = 1;
        } catch (const Error&) {
            // divergence counts as a failed repetition
        }
    });
    for (std::size_t rep = 0; rep < cfg.repetitions; ++rep) {
        if (!ok[rep]) {
            ++res.failed;
            continue;
        }
        if (res.predictions[rep] == res.truths[rep]) ++res.correct;
    }
    return res;
}

// Model-update family: the attacker sees the model before and after a third
// party joins and predicts whether the newcomer's dominant attribute value
// matches the incumbent's. Truth label 1 = same dominant value.
inline ExperimentResult run_model_update(const ExperimentConfig& cfg) {
    TabularPools pools = build_tabular_pools(cfg);
    TrainedAttack attack = train_tabular_attack(cfg, pools, cfg.fine_ratios, true, false);
    // The post-update model trains on two honest sets, so score it with a
    // meta whose shadows match that larger dataset size.
    std::size_t base_size = cfg.shadow_size == 0 ? cfg.sizes.n_honest : cfg.shadow_size;
    TrainedAttack attack_after =
        train_tabular_attack(cfg, pools, cfg.fine_ratios, true, false, 2 * base_size, 10);
    TabularDataset adv = maybe_drop_a(pools.adv, cfg.with_a);

    int side1 = dominant_side(cfg.update_honest1);
    int side2 = dominant_side(cfg.update_honest2);
    bool truth_same = side1 != 0 && side1 == side2;

    ExperimentResult res;
    res.config_digest = cfg.digest();
    res.family = family_name(cfg.family);
    res.repetitions = cfg.repetitions;
    res.predictions.assign(cfg.repetitions, -1);
    res.truths.assign(cfg.repetitions, truth_same ? 1 : 0);

    std::vector<char> ok(cfg.repetitions, 0);
    parallel_for(cfg.repetitions, [&](std::size_t rep) {
        try {
            TabularDataset honest1 = maybe_drop_a(
                draw_honest(cfg, pools, cfg.update_honest1, derive_seed(cfg.seed, 3000 + rep)),
                cfg.with_a);
            TabularDataset honest2 = maybe_drop_a(
                draw_honest(cfg, pools, cfg.update_honest2, derive_seed(cfg.seed, 4000 + rep)),
                cfg.with_a);
            TrainedModel m1 = train_target_on(cfg, attack.encoder, concat(honest1, adv),
                                              pools.n_classes, derive_seed(cfg.seed, 5000 + rep));
            TrainedModel m2 =
                train_target_on(cfg, attack.encoder, concat(concat(honest1, honest2), adv),
                                pools.n_classes, derive_seed(cfg.seed, 6000 + rep));
            AttackVector f1 = build_attack_vector(predict_proba(m1, attack.attack_encoded));
            AttackVector f2 = build_attack_vector(predict_proba(m2, attack.attack_encoded));
            UpdateOutcome outcome =
                model_update_attack(attack.meta, attack_after.meta, cfg.fine_ratios, f1, f2);
            res.predictions[rep] = outcome == UpdateOutcome::SameDominant ? 1 : 0;
            ok[rep] = 1;
        } catch (const Error&) {
        }
    });
    for (std::size_t rep = 0; rep < cfg.repetitions; ++rep) {
        if (!ok[rep]) {
            ++res.failed;
            continue;
        }
        if (res.predictions[rep] == res.truths[rep]) ++res.correct;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Graph experiments. One transductive graph; party masks select supervised
// nodes. Shadow and honest masks are node subsets drawn with a controlled
// type ratio. Shadow vectors are cached at full probe length so query-count
// sweeps reuse the trained models with a probe-prefix.
// ---------------------------------------------------------------------------

struct GraphAttackRun {
    GraphDataset graph;                    // features per A/Ā mode
    std::vector<std::size_t> attack_nodes; // probe nodes (maximum k)
    std::vector<LabeledVector> shadow_vectors;
    std::vector<AttackVector> eval_vectors;  // one per repetition
    std::vector<int> eval_truths;
    std::size_t failed_shadows = 0;
    std::size_t failed_reps = 0;
    std::uint64_t config_digest = 0;
    std::string family;
};

inline std::vector<std::size_t> sample_nodes_with_ratio(const std::vector<std::size_t>& pool,
                                                        const std::vector<int>& types,
                                                        double ratio, std::size_t size,
                                                        std::uint64_t seed) {
    std::vector<std::size_t> with, without;
    for (std::size_t node : pool) (types[node] == 0 ? with : without).push_back(node);
    std::size_t n_with = static_cast<std::size_t>(round_half_up(ratio * static_cast<double>(size)));
    std::size_t n_without = size - n_with;
    if (n_with > with.size() || n_without > without.size())
        throw Error("graph: node pool stratum too small for ratio " + format_double(ratio));
    Rng rng(seed);
    rng.shuffle(with);
    rng.shuffle(without);
    std::vector<std::size_t> out(with.begin(), with.begin() + static_cast<std::ptrdiff_t>(n_with));
    out.insert(out.end(), without.begin(), without.begin() + static_cast<std::ptrdiff_t>(n_without));
    rng.shuffle(out);
    return out;
}

inline GraphAttackRun run_graph_attack(const ExperimentConfig& cfg) {
    GraphAttackRun run;
    run.config_digest = cfg.digest();
    run.family = family_name(cfg.family);

    GraphDataset full = synth_graph_generate(cfg.graph, derive_seed(cfg.seed, 301));
    run.graph = cfg.with_a ? full : drop_graph_types(full);
    run.graph.node_types = full.node_types;  // kept for mask sampling only

    // Node pools: [attack | aux | adv | honest pool]
    std::vector<std::size_t> ids(full.n_nodes);
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    Rng rng(derive_seed(cfg.seed, 302));
    rng.shuffle(ids);
    std::size_t off = 0;
    auto take = [&](std::size_t n) {
        std::vector<std::size_t> out(ids.begin() + static_cast<std::ptrdiff_t>(off),
                                     ids.begin() + static_cast<std::ptrdiff_t>(off + n));
        off += n;
        return out;
    };
    run.attack_nodes = take(cfg.sizes.n_attack);
    std::vector<std::size_t> aux_pool = take(cfg.sizes.n_aux);
    // Carve twice the needed size so the stratified 50/50 draw below cannot
    // run out of either type by sampling chance.
    std::vector<std::size_t> adv_pool = take(2 * cfg.sizes.n_adv);
    std::vector<std::size_t> honest_pool = take(full.n_nodes - off);

    // The attacker's own nodes: balanced types.
    std::vector<std::size_t> adv_mask = sample_nodes_with_ratio(
        adv_pool, full.node_types, 0.5, cfg.sizes.n_adv, derive_seed(cfg.seed, 303));
    bool include_adv = cfg.family != Family::SingleParty;

    double p = cfg.graph_split;
    double q = 1.0 - cfg.graph_split;
    std::size_t per_class = cfg.n_shadow / 2;
    if (cfg.n_shadow % 2 != 0) throw Error("graph attack: n_shadow must be even");
    std::size_t shadow_size = cfg.shadow_size == 0 ? cfg.sizes.n_honest : cfg.shadow_size;

    NormalizedAdjacency adj = normalized_adjacency(run.graph);
    auto train_and_probe = [&](const std::vector<std::size_t>& mask, std::uint64_t seed) {
        Hyperparameters hp = cfg.target.hp;
        hp.seed = seed;
        hp.batch_size = 0;
        TrainedModel m = train_gcn(run.graph, cfg.target.hidden.empty() ? 16 : cfg.target.hidden[0],
                                   hp, mask);
        Matrix all = gcn_forward(m, adj, run.graph.node_features);
        Matrix probe(run.attack_nodes.size(), all.cols);
        for (std::size_t i = 0; i < run.attack_nodes.size(); ++i)
            std::copy(all.row(run.attack_nodes[i]), all.row(run.attack_nodes[i]) + all.cols,
                      probe.row(i));
        return build_attack_vector(probe);
    };

    // Shadow ensemble.
    std::vector<std::optional<LabeledVector>> slots(cfg.n_shadow);
    std::atomic<std::size_t> failed{0};
    parallel_for(cfg.n_shadow, [&](std::size_t i) {
        int label = i < per_class ? 0 : 1;
        double ratio = label == 0 ? p : q;
        try {
            std::vector<std::size_t> mask = sample_nodes_with_ratio(
                aux_pool, full.node_types, ratio, shadow_size, derive_seed(cfg.seed, 400 + i));
            if (include_adv) mask.insert(mask.end(), adv_mask.begin(), adv_mask.end());
            LabeledVector lv;
            lv.label = label;
            lv.vector = train_and_probe(mask, derive_seed(cfg.seed, 7000 + i));
            slots[i] = std::move(lv);
        } catch (const Error&) {
            failed.fetch_add(1);
        }
    });
    run.failed_shadows = failed.load();
    if (run.failed_shadows * 20 > cfg.n_shadow)
        throw Error("graph attack: > 5% of shadow trainings failed");
    for (auto& s : slots)
        if (s) run.shadow_vectors.push_back(std::move(*s));

    // Evaluation targets.
    run.eval_vectors.resize(cfg.repetitions);
    run.eval_truths.assign(cfg.repetitions, -1);
    std::atomic<std::size_t> rep_failed{0};
    parallel_for(cfg.repetitions, [&](std::size_t rep) {
        int truth = static_cast<int>(rep % 2);
        double ratio = truth == 0 ? p : q;
        try {
            std::vector<std::size_t> mask =
                sample_nodes_with_ratio(honest_pool, full.node_types, ratio, cfg.sizes.n_honest,
                                        derive_seed(cfg.seed, 8000 + rep));
            if (include_adv) mask.insert(mask.end(), adv_mask.begin(), adv_mask.end());
            run.eval_vectors[rep] = train_and_probe(mask, derive_seed(cfg.seed, 9000 + rep));
            run.eval_truths[rep] = truth;
        } catch (const Error&) {
            rep_failed.fetch_add(1);
        }
    });
    run.failed_reps = rep_failed.load();
    return run;
}

// Scores a cached graph run with a k-query prefix of the probe set.
inline ExperimentResult score_graph_run(const GraphAttackRun& run, const ExperimentConfig& cfg,
                                        std::size_t k) {
    std::vector<LabeledVector> pairs;
    pairs.reserve(run.shadow_vectors.size());
    for (const auto& lv : run.shadow_vectors)
        pairs.push_back({truncate_vector(lv.vector, k), lv.label});
    MetaClassifier meta =
        train_meta(pairs, resolve_meta_kind(cfg), derive_seed(cfg.seed, 500 + k));

    ExperimentResult res;
    res.config_digest = run.config_digest;
    res.family = run.family;
    res.repetitions = run.eval_truths.size();
    res.failed = run.failed_reps;
    for (std::size_t rep = 0; rep < run.eval_truths.size(); ++rep) {
        if (run.eval_truths[rep] < 0) {
            res.predictions.push_back(-1);
            res.truths.push_back(-1);
            continue;
        }
        AttackPrediction pred = run_attack(meta, truncate_vector(run.eval_vectors[rep], k));
        res.predictions.push_back(pred.label);
        res.truths.push_back(run.eval_truths[rep]);
        if (pred.label == run.eval_truths[rep]) ++res.correct;
    }
    return res;
}

inline ExperimentResult run_graph_family(const ExperimentConfig& cfg) {
    GraphAttackRun run = run_graph_attack(cfg);
    return score_graph_run(run, cfg, cfg.sizes.n_attack);
}

}  // namespace detail

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    auto start = std::chrono::steady_clock::now();
    ExperimentResult res;
    if (cfg.data_kind == DataKind::Graph) {
        res = detail::run_graph_family(cfg);
    } else {
        switch (cfg.family) {
            case Family::MultiParty:
            case Family::SingleParty:
            case Family::FineGrained:
            case Family::WhiteBox:
                res = detail::run_tabular_family(cfg);
                break;
            case Family::ModelUpdate:
                res = detail::run_model_update(cfg);
                break;
            default:
                throw Error("run_experiment: family " + family_name(cfg.family) +
                            " requires graph data");
        }
    }
    res.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

// ---------------------------------------------------------------------------
// Sweeps. Axis "k" reuses the trained models with probe prefixes (the k-query
// attack vector is a prefix of the full one); other axes re-run the full
// experiment with the master seed offset by the value index.
// ---------------------------------------------------------------------------

inline std::vector<ExperimentResult> run_sweep(const ExperimentConfig& base,
                                               const std::string& axis,
                                               const std::vector<std::string>& values) {
    if (values.empty()) throw Error("sweep: no values");
    std::vector<ExperimentResult> results;

    if (axis == "k") {
        if (base.data_kind != DataKind::Graph)
            throw Error("sweep: axis k currently runs on graph experiments");
        detail::GraphAttackRun run = detail::run_graph_attack(base);
        for (const auto& v : values) {
            std::size_t k = static_cast<std::size_t>(std::stoul(v));
            if (k == 0 || k > base.sizes.n_attack)
                throw Error("sweep: k must be in [1, data.n_attack]");
            ExperimentResult r = detail::score_graph_run(run, base, k);
            r.axis = axis;
            r.value = v;
            results.push_back(std::move(r));
        }
        return results;
    }

    for (std::size_t i = 0; i < values.size(); ++i) {
        ExperimentConfig cfg = base;
        cfg.seed = base.seed + i;
        cfg.raw.set("seed", std::to_string(cfg.seed));
        if (axis == "split") {
            cfg.graph_split = std::stod(values[i]);
            cfg.raw.set("graph.split", values[i]);
        } else if (axis == "classes") {
            cfg.graph.n_classes = static_cast<std::size_t>(std::stoul(values[i]));
            cfg.raw.set("graph.n_classes", values[i]);
        } else if (axis == "with_a") {
            cfg.with_a = values[i] == "true" || values[i] == "1";
            cfg.raw.set("with_a", values[i]);
        } else {
            throw Error("sweep: unknown axis " + axis);
        }
        ExperimentResult r = run_experiment(cfg);
        r.axis = axis;
        r.value = values[i];
        results.push_back(std::move(r));
    }
    return results;
}

}  // namespace propinf
