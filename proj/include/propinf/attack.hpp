#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "propinf/common.hpp"
#include "propinf/dataset.hpp"
#include "propinf/model.hpp"

namespace propinf {

// ---------------------------------------------------------------------------
// Attack vector: concatenated posterior vectors over the k probe records
// (black-box), or a flattened parameter vector (white-box).
// ---------------------------------------------------------------------------

struct AttackVector {
    std::vector<double> values;
    std::size_t k = 0;  // query count (0 in white-box mode)
    std::size_t l = 0;  // class count (0 in white-box mode)
    bool white_box = false;

    std::size_t length() const { return values.size(); }
};

inline AttackVector build_attack_vector(const Matrix& posteriors) {
    AttackVector f;
    f.k = posteriors.rows;
    f.l = posteriors.cols;
    if (f.k == 0) throw Error("attack vector: empty query set");
    f.values.reserve(f.k * f.l);
    for (std::size_t i = 0; i < posteriors.rows; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < posteriors.cols; ++j) {
            double p = posteriors(i, j);
            if (p < -1e-9 || p > 1.0 + 1e-9)
                throw Error("attack vector: posterior entry out of [0,1] at query " + std::to_string(i));
            sum += p;
            f.values.push_back(p);
        }
        if (std::fabs(sum - 1.0) > 1e-6)
            throw Error("attack vector: posterior row " + std::to_string(i) + " does not sum to 1");
    }
    return f;
}

// Model query interface; local prediction and the remote client both satisfy it.
using QueryFn = std::function<Matrix(const Matrix&)>;

inline AttackVector build_attack_vector(const QueryFn& query, const Matrix& d_attack) {
    return build_attack_vector(query(d_attack));
}

inline AttackVector white_box_vector(const TrainedModel& m) {
    AttackVector f;
    f.white_box = true;
    f.values = flatten_params(m);
    return f;
}

// Truncation to the first k queries; probe sets are sampled once at maximum
// size, so the k-query attack uses a prefix of the full probe set.
inline AttackVector truncate_vector(const AttackVector& f, std::size_t k) {
    if (f.white_box) throw Error("truncate: white-box vectors have no query axis");
    if (k > f.k) throw Error("truncate: k exceeds vector query count");
    AttackVector out;
    out.k = k;
    out.l = f.l;
    out.values.assign(f.values.begin(), f.values.begin() + static_cast<std::ptrdiff_t>(k * f.l));
    return out;
}

// ---------------------------------------------------------------------------
// Shadow dataset generation
// ---------------------------------------------------------------------------

struct ShadowConfig {
    std::size_t n_shadow = 100;
    std::size_t shadow_size = 0;  // 0 => caller supplies |D_honest|
    // Binary mode: {p, p_bar}. Fine-grained mode: one spec per ratio class.
    std::vector<PropertySpec> properties;
    bool include_adv_data = true;  // multi-party vs single-party

    void validate() const {
        if (properties.size() < 2) throw Error("shadow: need at least 2 property classes");
        if (n_shadow % properties.size() != 0)
            throw Error("shadow: n_shadow must be divisible by the number of property classes");
        for (std::size_t i = 0; i < properties.size(); ++i)
            for (std::size_t j = i + 1; j < properties.size(); ++j)
                if (properties[i].ratio == properties[j].ratio)
                    throw Error("shadow: property ratios must be distinct");
    }
};

struct LabeledDataset {
    TabularDataset data;
    int label = 0;
};

// Exactly n_shadow datasets, balanced over the property classes, each drawn
// by resample_with_ratio under a per-index derived seed.
inline std::vector<LabeledDataset> generate_shadow_datasets(const TabularDataset& d_aux,
                                                            const ShadowConfig& cfg,
                                                            std::uint64_t seed) {
    cfg.validate();
    if (cfg.shadow_size == 0) throw Error("shadow: shadow_size must be set");
    std::vector<LabeledDataset> out;
    out.reserve(cfg.n_shadow);
    std::size_t per_class = cfg.n_shadow / cfg.properties.size();
    for (std::size_t c = 0; c < cfg.properties.size(); ++c)
        for (std::size_t i = 0; i < per_class; ++i) {
            std::uint64_t s = derive_seed(seed, c * per_class + i);
            out.push_back({resample_with_ratio(d_aux, cfg.properties[c], cfg.shadow_size, s),
                           static_cast<int>(c)});
        }
    return out;
}

// ---------------------------------------------------------------------------
// Shadow ensemble training
// ---------------------------------------------------------------------------

// The target model's training recipe; shadow models reuse it verbatim.
struct TargetRecipe {
    Arch arch = Arch::LogReg;
    std::vector<std::size_t> hidden;  // for MLP
    Hyperparameters hp;
};

struct LabeledVector {
    AttackVector vector;
    int label = 0;
};

struct EnsembleResult {
    std::vector<LabeledVector> pairs;
    std::size_t failed = 0;  // shadow trainings excluded for divergence
};

// Trains one shadow model per shadow set (on shadow ∪ D_adv in multi-party
// mode), queries it on the encoded probe set, and carries the property label
// through. Shadow trainings run in parallel; each draws its seed from
// (master, index) so the result is schedule-independent. Runs abort when more
// than 5% of shadows diverge.
inline EnsembleResult train_shadow_ensemble(const std::vector<LabeledDataset>& shadow_sets,
                                            const TabularDataset* d_adv, const TargetRecipe& recipe,
                                            const Encoder& encoder, const Matrix& d_attack_encoded,
                                            std::uint64_t seed, bool white_box = false) {
    std::size_t n = shadow_sets.size();
    std::vector<std::optional<LabeledVector>> slots(n);
    std::atomic<std::size_t> failed{0};

    parallel_for(n, [&](std::size_t i) {
        TabularDataset train = d_adv ? concat(shadow_sets[i].data, *d_adv) : shadow_sets[i].data;
        Matrix x = encoder.transform(train);
        std::vector<int> y = train.labels();
        Hyperparameters hp = recipe.hp;
        hp.seed = derive_seed(seed, i);
        try {
            TrainedModel m = train_tabular(recipe.arch, x, y, recipe.hidden, train.n_classes(), hp);
            LabeledVector lv;
            lv.label = shadow_sets[i].label;
            lv.vector = white_box ? white_box_vector(m)
                                  : build_attack_vector(predict_proba(m, d_attack_encoded));
            slots[i] = std::move(lv);
        } catch (const Error&) {
            failed.fetch_add(1);
        }
    });

    EnsembleResult res;
    res.failed = failed.load();
    if (res.failed * 20 > n)
        throw Error("shadow ensemble: " + std::to_string(res.failed) + "/" + std::to_string(n) +
                    " trainings diverged (> 5%)");
    for (auto& s : slots)
        if (s) res.pairs.push_back(std::move(*s));
    return res;
}

// ---------------------------------------------------------------------------
// Meta-classifier
// ---------------------------------------------------------------------------

enum class MetaKind {
    BinaryLogReg,   // LR / GCN targets
    TwoLayer20x8,   // MLP targets, lr 0.01
    TwoLayer200x50  // white-box, lr 0.001
};

struct MetaClassifier {
    MetaKind kind = MetaKind::BinaryLogReg;
    TrainedModel model;
    std::size_t input_length = 0;
    std::vector<std::string> class_names;
};

struct AttackPrediction {
    int label = 0;
    double confidence = 0.0;
};

inline MetaClassifier train_meta(const std::vector<LabeledVector>& pairs, MetaKind kind,
                                 std::uint64_t seed, std::vector<std::string> class_names = {}) {
    if (pairs.empty()) throw Error("meta: no training pairs");
    std::size_t len = pairs[0].vector.length();
    int max_label = 0;
    for (const auto& p : pairs) {
        if (p.vector.length() != len) throw Error("meta: mixed attack-vector lengths");
        max_label = std::max(max_label, p.label);
    }
    std::size_t n_classes = static_cast<std::size_t>(max_label) + 1;
    if (n_classes < 2) throw Error("meta: need at least 2 label classes");
    std::vector<bool> present(n_classes, false);
    for (const auto& p : pairs) present[static_cast<std::size_t>(p.label)] = true;
    for (bool b : present)
        if (!b) throw Error("meta: a label class has no training pairs");

    Matrix x(pairs.size(), len);
    std::vector<int> y(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        std::copy(pairs[i].vector.values.begin(), pairs[i].vector.values.end(), x.row(i));
        y[i] = pairs[i].label;
    }

    Hyperparameters hp;  // models-module defaults; lr per meta kind
    hp.seed = seed;
    MetaClassifier meta;
    meta.kind = kind;
    meta.input_length = len;
    meta.class_names = std::move(class_names);
    switch (kind) {
        case MetaKind::BinaryLogReg:
            meta.model = train_logreg(x, y, n_classes, hp);
            break;
        case MetaKind::TwoLayer20x8:
            hp.learning_rate = 0.01;
            meta.model = train_mlp(x, y, {20, 8}, n_classes, hp);
            break;
        case MetaKind::TwoLayer200x50:
            // Parameter-space inputs overfit easily: regularize hard and give
            // the small learning rate enough steps to converge.
            hp.learning_rate = 0.001;
            hp.weight_decay = 1e-2;
            hp.epochs = 1000;
            meta.model = train_mlp(x, y, {200, 50}, n_classes, hp);
            break;
    }
    return meta;
}

inline AttackPrediction run_attack(const MetaClassifier& meta, const AttackVector& f) {
    if (f.length() != meta.input_length)
        throw Error("run_attack: vector length " + std::to_string(f.length()) +
                    " != meta input length " + std::to_string(meta.input_length));
    Matrix x(1, f.length());
    std::copy(f.values.begin(), f.values.end(), x.row(0));
    Matrix post = predict_proba(meta.model, x);
    AttackPrediction pred;
    for (std::size_t j = 0; j < post.cols; ++j)
        if (post(0, j) > post(0, static_cast<std::size_t>(pred.label))) pred.label = static_cast<int>(j);
    pred.confidence = post(0, static_cast<std::size_t>(pred.label));
    return pred;
}

// Fine-grained variant: same execution path, multi-class meta.
inline AttackPrediction fine_grained_attack(const MetaClassifier& meta, const AttackVector& f) {
    return run_attack(meta, f);
}

// ---------------------------------------------------------------------------
// White-box attack: meta-classifier over flattened model parameters.
// ---------------------------------------------------------------------------

struct LabeledModel {
    TrainedModel model;
    int label = 0;
};

inline AttackPrediction white_box_attack(const std::vector<LabeledModel>& shadows,
                                         const TrainedModel& target, MetaKind kind,
                                         std::uint64_t seed) {
    if (shadows.empty()) throw Error("white-box: no shadow models");
    std::size_t count = target.parameter_count();
    std::vector<LabeledVector> pairs;
    pairs.reserve(shadows.size());
    for (const auto& s : shadows) {
        if (s.model.parameter_count() != count)
            throw Error("white-box: shadow parameter shape differs from target");
        pairs.push_back({white_box_vector(s.model), s.label});
    }
    MetaClassifier meta = train_meta(pairs, kind, seed);
    return run_attack(meta, white_box_vector(target));
}

// ---------------------------------------------------------------------------
// Model-update attack: run the fine-grained attack on the model before and
// after a new party joins; if the dominant side of the predicted split is
// unchanged, the newcomer's dominant attribute value matches the incumbent's.
// ---------------------------------------------------------------------------

enum class UpdateOutcome { SameDominant, Flipped };

// Ratio classes are fractions of the distinguished value; > 0.5 means that
// value dominates, 0.5 is a tie (never "same").
inline int dominant_side(double ratio) {
    if (ratio > 0.5) return 1;
    if (ratio < 0.5) return -1;
    return 0;
}

// Two-meta variant: the pre- and post-update models train on different
// dataset sizes, so each is scored by a meta whose shadows match that size.
inline UpdateOutcome model_update_attack(const MetaClassifier& meta_original,
                                         const MetaClassifier& meta_updated,
                                         const std::vector<double>& ratio_classes,
                                         const AttackVector& f_original,
                                         const AttackVector& f_updated,
                                         AttackPrediction* original_pred = nullptr,
                                         AttackPrediction* updated_pred = nullptr) {
    AttackPrediction before = fine_grained_attack(meta_original, f_original);
    AttackPrediction after = fine_grained_attack(meta_updated, f_updated);
    if (original_pred) *original_pred = before;
    if (updated_pred) *updated_pred = after;
    int side_before = dominant_side(ratio_classes.at(static_cast<std::size_t>(before.label)));
    int side_after = dominant_side(ratio_classes.at(static_cast<std::size_t>(after.label)));
    return (side_before != 0 && side_before == side_after) ? UpdateOutcome::SameDominant
                                                           : UpdateOutcome::Flipped;
}

inline UpdateOutcome model_update_attack(const MetaClassifier& meta,
                                         const std::vector<double>& ratio_classes,
                                         const AttackVector& f_original,
                                         const AttackVector& f_updated,
                                         AttackPrediction* original_pred = nullptr,
                                         AttackPrediction* updated_pred = nullptr) {
    return model_update_attack(meta, meta, ratio_classes, f_original, f_updated, original_pred,
                               updated_pred);
}

// ---------------------------------------------------------------------------
// Attack-vector dump: one vector per line, label first, comma-separated
// decimals. Enables offline meta training and cross-implementation checks.
// ---------------------------------------------------------------------------

inline void dump_attack_vectors(const std::vector<LabeledVector>& pairs, std::ostream& out) {
    for (const auto& p : pairs) {
        out << p.label;
        for (double v : p.vector.values) out << "," << format_double(v);
        out << "\n";
    }
}

inline std::vector<LabeledVector> load_attack_vectors(std::istream& in, std::size_t k,
                                                      std::size_t l) {
    std::vector<LabeledVector> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        LabeledVector lv;
        std::size_t pos = line.find(',');
        if (pos == std::string::npos) throw Error("attack-vector dump: malformed line");
        lv.label = std::stoi(line.substr(0, pos));
        lv.vector.k = k;
        lv.vector.l = l;
        std::size_t start = pos + 1;
        while (start <= line.size()) {
            std::size_t next = line.find(',', start);
            std::string tok = line.substr(start, next == std::string::npos ? next : next - start);
            lv.vector.values.push_back(std::stod(tok));
            if (next == std::string::npos) break;
            start = next + 1;
        }
        if (lv.vector.values.size() != k * l)
            throw Error("attack-vector dump: expected " + std::to_string(k * l) + " values");
        out.push_back(std::move(lv));
    }
    return out;
}

}  // namespace propinf
