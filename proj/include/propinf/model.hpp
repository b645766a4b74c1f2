#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "propinf/common.hpp"

namespace propinf {

// ---------------------------------------------------------------------------
// Named parameter tensors; ordering is fixed by construction and defines the
// flattening used by the white-box attack.
// ---------------------------------------------------------------------------

struct Tensor {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(std::string n, std::size_t r, std::size_t c)
        : name(std::move(n)), rows(r), cols(c), v(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return v[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
    std::size_t size() const { return v.size(); }
};

enum class Arch { LogReg, Mlp, Gcn };

inline std::string arch_name(Arch a) {
    switch (a) {
        case Arch::LogReg: return "logreg";
        case Arch::Mlp: return "mlp";
        default: return "gcn";
    }
}

inline Arch arch_from_name(const std::string& s) {
    if (s == "logreg") return Arch::LogReg;
    if (s == "mlp") return Arch::Mlp;
    if (s == "gcn") return Arch::Gcn;
    throw Error("unknown architecture " + s);
}

struct Hyperparameters {
    double learning_rate = 0.01;
    double weight_decay = 1e-4;
    std::size_t epochs = 200;
    std::size_t batch_size = 64;  // 0 => full batch; graphs always train full batch
    std::uint64_t seed = 0;

    void validate() const {
        if (learning_rate <= 0.0) throw Error("hyperparameters: learning_rate must be > 0");
        if (weight_decay < 0.0) throw Error("hyperparameters: weight_decay must be >= 0");
    }
};

struct TrainedModel {
    Arch arch = Arch::LogReg;
    std::size_t input_width = 0;
    std::size_t n_classes = 0;
    std::vector<std::size_t> hidden;  // empty for logistic regression
    std::vector<Tensor> params;
    Hyperparameters hp;

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& t : params) n += t.size();
        return n;
    }
};

// ---------------------------------------------------------------------------
// Parameter flattening: layer order, row-major within each tensor.
// ---------------------------------------------------------------------------

inline std::vector<double> flatten_params(const TrainedModel& m) {
    std::vector<double> out;
    out.reserve(m.parameter_count());
    for (const auto& t : m.params) out.insert(out.end(), t.v.begin(), t.v.end());
    return out;
}

inline void unflatten_params(TrainedModel& m, const std::vector<double>& flat) {
    if (flat.size() != m.parameter_count()) throw Error("unflatten: length mismatch");
    std::size_t off = 0;
    for (auto& t : m.params) {
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                  flat.begin() + static_cast<std::ptrdiff_t>(off + t.size()), t.v.begin());
        off += t.size();
    }
}

// ---------------------------------------------------------------------------
// Tabular forward pass. Logistic regression is the zero-hidden-layer case of
// the same stack: affine layers with ReLU between them and softmax on top.
// Parameter layout: W0, b0, W1, b1, ...
// ---------------------------------------------------------------------------

namespace detail {

inline void softmax_row(double* z, std::size_t l) {
    double mx = z[0];
    for (std::size_t j = 1; j < l; ++j) mx = std::max(mx, z[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < l; ++j) {
        z[j] = std::exp(z[j] - mx);
        sum += z[j];
    }
    for (std::size_t j = 0; j < l; ++j) z[j] /= sum;
}

}  // namespace detail

inline TrainedModel make_tabular_model(Arch arch, std::size_t input_width, std::size_t n_classes,
                                       const std::vector<std::size_t>& hidden,
                                       const Hyperparameters& hp) {
    if (arch == Arch::LogReg && !hidden.empty()) throw Error("logreg takes no hidden layers");
    if (arch == Arch::Mlp && hidden.empty()) throw Error("mlp needs at least one hidden layer");
    TrainedModel m;
    m.arch = arch;
    m.input_width = input_width;
    m.n_classes = n_classes;
    m.hidden = hidden;
    m.hp = hp;
    Rng rng(hp.seed);
    std::size_t in = input_width;
    std::vector<std::size_t> widths = hidden;
    widths.push_back(n_classes);
    for (std::size_t layer = 0; layer < widths.size(); ++layer) {
        std::size_t out = widths[layer];
        Tensor w("W" + std::to_string(layer), in, out);
        double bound = std::sqrt(6.0 / static_cast<double>(in + out));
        for (auto& x : w.v) x = rng.uniform(-bound, bound);
        m.params.push_back(std::move(w));
        m.params.emplace_back("b" + std::to_string(layer), 1, out);
        in = out;
    }
    return m;
}

// Posterior matrix for a batch of inputs; every row is a probability simplex.
inline Matrix predict_proba(const TrainedModel& m, const Matrix& inputs) {
    if (m.arch == Arch::Gcn) throw Error("predict_proba: use gcn_predict for graph models");
    if (inputs.cols != m.input_width)
        throw Error("predict_proba: input width " + std::to_string(inputs.cols) + " != model width " +
                    std::to_string(m.input_width));
    std::size_t n_layers = m.params.size() / 2;
    Matrix act = inputs;
    for (std::size_t layer = 0; layer < n_layers; ++layer) {
        const Tensor& w = m.params[2 * layer];
        const Tensor& b = m.params[2 * layer + 1];
        Matrix next(act.rows, w.cols);
        for (std::size_t i = 0; i < act.rows; ++i) {
            for (std::size_t j = 0; j < w.cols; ++j) {
                double z = b.v[j];
                for (std::size_t k = 0; k < w.rows; ++k) z += act(i, k) * w(k, j);
                next(i, j) = z;
            }
        }
        if (layer + 1 < n_layers)
            for (auto& x : next.v) x = x > 0.0 ? x : 0.0;
        act = std::move(next);
    }
    for (std::size_t i = 0; i < act.rows; ++i) detail::softmax_row(act.row(i), act.cols);
    return act;
}

// Mean cross-entropy over the batch plus an L2 penalty of
// 0.5 * weight_decay * ||theta||^2; `grads` mirrors the parameter layout.
inline double tabular_loss_and_grad(const TrainedModel& m, const Matrix& X,
                                    const std::vector<int>& y, double weight_decay,
                                    std::vector<Tensor>& grads) {
    if (X.rows != y.size()) throw Error("loss: X rows != label count");
    std::size_t n_layers = m.params.size() / 2;
    std::size_t n = X.rows;

    grads.clear();
    for (const auto& t : m.params) grads.emplace_back(t.name, t.rows, t.cols);

    // forward, keeping activations
    std::vector<Matrix> acts;
    acts.push_back(X);
    for (std::size_t layer = 0; layer < n_layers; ++layer) {
        const Tensor& w = m.params[2 * layer];
        const Tensor& b = m.params[2 * layer + 1];
        const Matrix& a = acts.back();
        Matrix next(a.rows, w.cols);
        for (std::size_t i = 0; i < a.rows; ++i)
            for (std::size_t j = 0; j < w.cols; ++j) {
                double z = b.v[j];
                for (std::size_t k = 0; k < w.rows; ++k) z += a(i, k) * w(k, j);
                next(i, j) = z;
            }
        if (layer + 1 < n_layers)
            for (auto& x : next.v) x = x > 0.0 ? x : 0.0;
        acts.push_back(std::move(next));
    }

    // softmax + cross entropy
    Matrix probs = acts.back();
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        detail::softmax_row(probs.row(i), probs.cols);
        double p = probs(i, static_cast<std::size_t>(y[i]));
        loss -= std::log(std::max(p, 1e-300));
    }
    loss /= static_cast<double>(n);

    // backward: delta starts as (probs - onehot)/n
    Matrix delta = probs;
    for (std::size_t i = 0; i < n; ++i) delta(i, static_cast<std::size_t>(y[i])) -= 1.0;
    for (auto& x : delta.v) x /= static_cast<double>(n);

    for (std::size_t layer = n_layers; layer-- > 0;) {
        const Matrix& a = acts[layer];
        Tensor& gw = grads[2 * layer];
        Tensor& gb = grads[2 * layer + 1];
        for (std::size_t i = 0; i < a.rows; ++i)
            for (std::size_t j = 0; j < delta.cols; ++j) {
                double d = delta(i, j);
                if (d == 0.0) continue;
                gb.v[j] += d;
                for (std::size_t k = 0; k < a.cols; ++k) gw(k, j) += a(i, k) * d;
            }
        if (layer > 0) {
            const Tensor& w = m.params[2 * layer];
            Matrix prev(delta.rows, w.rows);
            for (std::size_t i = 0; i < delta.rows; ++i)
                for (std::size_t k = 0; k < w.rows; ++k) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < w.cols; ++j) s += delta(i, j) * w(k, j);
                    // ReLU mask from the stored (post-activation) value
                    prev(i, k) = acts[layer](i, k) > 0.0 ? s : 0.0;
                }
            delta = std::move(prev);
        }
    }

    if (weight_decay > 0.0) {
        double sq = 0.0;
        for (std::size_t t = 0; t < m.params.size(); ++t)
            for (std::size_t i = 0; i < m.params[t].size(); ++i) {
                double p = m.params[t].v[i];
                sq += p * p;
                grads[t].v[i] += weight_decay * p;
            }
        loss += 0.5 * weight_decay * sq;
    }
    return loss;
}

// ---------------------------------------------------------------------------
// Adam (beta1=0.9, beta2=0.999, eps=1e-8), with weight decay already folded
// into the gradients as an L2 term.
// ---------------------------------------------------------------------------

class Adam {
public:
    Adam(const std::vector<Tensor>& params, double lr) : lr_(lr) {
        for (const auto& t : params) {
            m_.emplace_back(t.name, t.rows, t.cols);
            v_.emplace_back(t.name, t.rows, t.cols);
        }
    }

    void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t p = 0; p < params.size(); ++p) {
            for (std::size_t i = 0; i < params[p].size(); ++i) {
                double g = grads[p].v[i];
                m_[p].v[i] = beta1_ * m_[p].v[i] + (1.0 - beta1_) * g;
                v_[p].v[i] = beta2_ * v_[p].v[i] + (1.0 - beta2_) * g * g;
                double mhat = m_[p].v[i] / bc1;
                double vhat = v_[p].v[i] / bc2;
                params[p].v[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

private:
    double lr_;
    static constexpr double beta1_ = 0.9;
    static constexpr double beta2_ = 0.999;
    static constexpr double eps_ = 1e-8;
    std::size_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

struct TrainStats {
    double first_epoch_loss = 0.0;
    double last_epoch_loss = 0.0;
};

namespace detail {

inline Matrix take_rows(const Matrix& X, const std::vector<std::size_t>& rows) {
    Matrix out(rows.size(), X.cols);
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(X.row(rows[i]), X.row(rows[i]) + X.cols, out.row(i));
    return out;
}

}  // namespace detail

inline TrainedModel train_tabular(Arch arch, const Matrix& X, const std::vector<int>& y,
                                  const std::vector<std::size_t>& hidden, std::size_t n_classes,
                                  const Hyperparameters& hp, TrainStats* stats = nullptr) {
    hp.validate();
    if (X.rows != y.size()) throw Error("train: X rows != label count");
    if (n_classes < 2) throw Error("train: need at least 2 classes");
    for (int lab : y)
        if (lab < 0 || static_cast<std::size_t>(lab) >= n_classes)
            throw Error("train: label out of range");

    TrainedModel m = make_tabular_model(arch, X.cols, n_classes, hidden, hp);
    Adam opt(m.params, hp.learning_rate);
    Rng shuffle_rng(derive_seed(hp.seed, 0x51u));
    std::vector<std::size_t> order(X.rows);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::size_t batch = hp.batch_size == 0 ? X.rows : std::min(hp.batch_size, X.rows);
    std::vector<Tensor> grads;
    for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t off = 0; off < X.rows; off += batch) {
            std::size_t end = std::min(off + batch, X.rows);
            std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(off),
                                          order.begin() + static_cast<std::ptrdiff_t>(end));
            Matrix xb = detail::take_rows(X, rows);
            std::vector<int> yb(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) yb[i] = y[rows[i]];
            double loss = tabular_loss_and_grad(m, xb, yb, hp.weight_decay, grads);
            if (!std::isfinite(loss)) throw Error("train: non-finite loss (divergence)");
            opt.step(m.params, grads);
            epoch_loss += loss;
            ++n_batches;
        }
        if (stats && n_batches > 0) {
            double avg = epoch_loss / static_cast<double>(n_batches);
            if (epoch == 0) stats->first_epoch_loss = avg;
            stats->last_epoch_loss = avg;
        }
    }
    return m;
}

inline TrainedModel train_logreg(const Matrix& X, const std::vector<int>& y, std::size_t n_classes,
                                 const Hyperparameters& hp, TrainStats* stats = nullptr) {
    return train_tabular(Arch::LogReg, X, y, {}, n_classes, hp, stats);
}

inline TrainedModel train_mlp(const Matrix& X, const std::vector<int>& y,
                              const std::vector<std::size_t>& hidden, std::size_t n_classes,
                              const Hyperparameters& hp, TrainStats* stats = nullptr) {
    return train_tabular(Arch::Mlp, X, y, hidden, n_classes, hp, stats);
}

// ---------------------------------------------------------------------------
// Serialization: textual header plus the flat parameter list at 17
// significant digits (decimal round-trip exact).
// ---------------------------------------------------------------------------

inline void save_model(const TrainedModel& m, std::ostream& out) {
    out << "#propinf-model v1\n";
    out << "arch: " << arch_name(m.arch) << "\n";
    out << "input_width: " << m.input_width << "\n";
    out << "n_classes: " << m.n_classes << "\n";
    out << "hidden:";
    for (auto h : m.hidden) out << " " << h;
    out << "\n";
    out << "learning_rate: " << format_double(m.hp.learning_rate) << "\n";
    out << "weight_decay: " << format_double(m.hp.weight_decay) << "\n";
    out << "epochs: " << m.hp.epochs << "\n";
    out << "batch_size: " << m.hp.batch_size << "\n";
    out << "seed: " << m.hp.seed << "\n";
    for (const auto& t : m.params) out << "tensor: " << t.name << " " << t.rows << " " << t.cols << "\n";
    out << "---\n";
    for (const auto& t : m.params)
        for (double x : t.v) out << format_double(x) << "\n";
}

inline void save_model(const TrainedModel& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("save_model: cannot open " + path);
    save_model(m, out);
}

inline TrainedModel load_model(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "#propinf-model v1") throw Error("load_model: bad magic");
    TrainedModel m;
    while (std::getline(in, line)) {
        if (line == "---") break;
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "arch:") {
            std::string a;
            ss >> a;
            m.arch = arch_from_name(a);
        } else if (key == "input_width:") {
            ss >> m.input_width;
        } else if (key == "n_classes:") {
            ss >> m.n_classes;
        } else if (key == "hidden:") {
            std::size_t h;
            while (ss >> h) m.hidden.push_back(h);
        } else if (key == "learning_rate:") {
            ss >> m.hp.learning_rate;
        } else if (key == "weight_decay:") {
            ss >> m.hp.weight_decay;
        } else if (key == "epochs:") {
            ss >> m.hp.epochs;
        } else if (key == "batch_size:") {
            ss >> m.hp.batch_size;
        } else if (key == "seed:") {
            ss >> m.hp.seed;
        } else if (key == "tensor:") {
            std::string name;
            std::size_t r, c;
            ss >> name >> r >> c;
            m.params.emplace_back(name, r, c);
        } else {
            throw Error("load_model: unknown header key " + key);
        }
    }
    for (auto& t : m.params)
        for (auto& x : t.v) {
            if (!std::getline(in, line)) throw Error("load_model: truncated parameter list");
            x = std::stod(line);
        }
    return m;
}

inline TrainedModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("load_model: cannot open " + path);
    return load_model(in);
}

}  // namespace propinf
