#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "propinf/common.hpp"
#include "propinf/dataset.hpp"
#include "propinf/synthetic.hpp"

namespace propinf {

// ---------------------------------------------------------------------------
// Pearson product-moment correlation. Returns nullopt when either vector is
// constant (the coefficient is undefined; NaN never escapes).
// ---------------------------------------------------------------------------

inline std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw Error("pearson: length mismatch");
    std::size_t n = x.size();
    if (n < 2) throw Error("pearson: need at least 2 observations");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    double r = sxy / std::sqrt(sxx * syy);
    return std::clamp(r, -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Cramér's V from the contingency table of two categorical vectors, no
// continuity correction: v = sqrt(chi2 / (n * min(r-1, c-1))).
// ---------------------------------------------------------------------------

inline std::optional<double> cramers_v(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw Error("cramers_v: length mismatch");
    std::size_t n = a.size();
    if (n == 0) throw Error("cramers_v: empty input");

    std::map<int, std::size_t> ra, rb;
    for (int v : a) ra.emplace(v, ra.size());
    for (int v : b) rb.emplace(v, rb.size());
    // re-index densely
    {
        std::size_t k = 0;
        for (auto& kv : ra) kv.second = k++;
        k = 0;
        for (auto& kv : rb) kv.second = k++;
    }
    std::size_t nr = ra.size(), nc = rb.size();
    if (nr < 2 || nc < 2) return std::nullopt;  // degenerate table

    std::vector<double> table(nr * nc, 0.0), rowsum(nr, 0.0), colsum(nc, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t r = ra[a[i]], c = rb[b[i]];
        table[r * nc + c] += 1.0;
        rowsum[r] += 1.0;
        colsum[c] += 1.0;
    }
    double chi2 = 0.0;
    for (std::size_t r = 0; r < nr; ++r)
        for (std::size_t c = 0; c < nc; ++c) {
            double expected = rowsum[r] * colsum[c] / static_cast<double>(n);
            if (expected > 0.0) {
                double d = table[r * nc + c] - expected;
                chi2 += d * d / expected;
            }
        }
    double denom = static_cast<double>(n) * static_cast<double>(std::min(nr, nc) - 1);
    double v = std::sqrt(chi2 / denom);
    return std::clamp(v, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// One-way ANOVA. The F upper-tail probability comes from the regularized
// incomplete beta function, evaluated with the Lentz continued fraction to
// absolute tolerance 1e-10.
// ---------------------------------------------------------------------------

namespace detail {

inline double betacf(double a, double b, double x) {
    constexpr int max_iter = 500;
    constexpr double eps = 1e-12;
    constexpr double fpmin = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double ln_beta = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                     a * std::log(x) + b * std::log1p(-x);
    double front = std::exp(ln_beta);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::betacf(a, b, x) / a;
    return 1.0 - std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          b * std::log1p(-x) + a * std::log(x)) *
                     detail::betacf(b, a, 1.0 - x) / b;
}

// Upper tail P(F_{d1,d2} > f).
inline double f_upper_tail(double f, double d1, double d2) {
    if (f <= 0.0) return 1.0;
    double x = d2 / (d2 + d1 * f);
    return incomplete_beta(d2 / 2.0, d1 / 2.0, x);
}

struct AnovaResult {
    double f_statistic = 0.0;
    double p_value = 1.0;
};

inline AnovaResult anova(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw Error("anova: need at least 2 groups");
    std::size_t n = 0;
    for (const auto& g : groups) {
        if (g.size() < 2) throw Error("anova: each group needs at least 2 observations");
        n += g.size();
    }
    double grand = 0.0;
    for (const auto& g : groups)
        for (double v : g) grand += v;
    grand /= static_cast<double>(n);

    double ss_between = 0.0, ss_within = 0.0;
    for (const auto& g : groups) {
        double mean = 0.0;
        for (double v : g) mean += v;
        mean /= static_cast<double>(g.size());
        ss_between += static_cast<double>(g.size()) * (mean - grand) * (mean - grand);
        for (double v : g) ss_within += (v - mean) * (v - mean);
    }
    double d1 = static_cast<double>(groups.size() - 1);
    double d2 = static_cast<double>(n - groups.size());
    if (ss_within == 0.0) {
        // Zero within-group variance: identical groups => p = 1 by convention,
        // separated groups => certain effect.
        if (ss_between == 0.0) return {0.0, 1.0};
        return {std::numeric_limits<double>::infinity(), 0.0};
    }
    double f = (ss_between / d1) / (ss_within / d2);
    return {f, f_upper_tail(f, d1, d2)};
}

inline double anova_pvalue(const std::vector<std::vector<double>>& groups) {
    return anova(groups).p_value;
}

// ---------------------------------------------------------------------------
/// Scenario classification: decide which of the four correlation regimes a
// dataset is in, by testing A against every feature column and against Y.
// ---------------------------------------------------------------------------

struct ScenarioThresholds {
    double x_threshold = 0.15;       // |pearson| or Cramér's V above this => column in X'
    double y_cat_threshold = 0.10;   // Cramér's V for categorical A vs categorical Y
    double y_anova_alpha = 0.05;     // ANOVA significance for numeric/categorical pairs
};

struct ColumnScore {
    std::string column;
    std::string statistic;  // "pearson", "cramers_v", "anova_p"
    double value = 0.0;
    bool defined = true;
};

struct ScenarioReport {
    Scenario scenario = Scenario::XindepYindep;
    std::vector<ColumnScore> x_scores;       // A vs each feature column
    ColumnScore y_score;                     // A vs Y
    std::vector<std::string> correlated_x;   // columns exceeding the X threshold
    ScenarioThresholds thresholds;

    std::string serialize() const {
        std::ostringstream out;
        out << "scenario: " << scenario_name(scenario) << "\n";
        out << "x_threshold: " << format_double(thresholds.x_threshold) << "\n";
        for (const auto& s : x_scores) {
            out << "x_score: " << s.column << " " << s.statistic << " ";
            out << (s.defined ? format_double(s.value) : std::string("undefined")) << "\n";
        }
        out << "y_score: " << y_score.statistic << " "
            << (y_score.defined ? format_double(y_score.value) : std::string("undefined")) << "\n";
        for (const auto& c : correlated_x) out << "correlated: " << c << "\n";
        return out.str();
    }
};

namespace detail {

inline std::vector<int> categorical_codes(const TabularDataset& ds, std::size_t col) {
    std::vector<int> out(ds.n_records);
    for (std::size_t i = 0; i < ds.n_records; ++i) out[i] = static_cast<int>(ds.at(i, col));
    return out;
}

// Groups the numeric vector by the categorical codes, for one-way ANOVA.
inline std::vector<std::vector<double>> group_by(const std::vector<double>& numeric,
                                                 const std::vector<int>& codes) {
    std::map<int, std::vector<double>> grouped;
    for (std::size_t i = 0; i < numeric.size(); ++i) grouped[codes[i]].push_back(numeric[i]);
    std::vector<std::vector<double>> out;
    for (auto& kv : grouped)
        if (kv.second.size() >= 2) out.push_back(std::move(kv.second));
    return out;
}

}  // namespace detail

inline ScenarioReport classify_scenario(const TabularDataset& ds,
                                        const ScenarioThresholds& thresholds = {}) {
    if (ds.schema.sensitive.empty() || ds.schema.target.empty())
        throw Error("classify_scenario: schema must declare sensitive and target columns");
    std::size_t a_idx = ds.schema.index_of(ds.schema.sensitive);
    std::size_t y_idx = ds.schema.index_of(ds.schema.target);
    const Column& a_col = ds.schema.columns[a_idx];
    const Column& y_col = ds.schema.columns[y_idx];

    ScenarioReport report;
    report.thresholds = thresholds;

    auto a_numeric = ds.column(ds.schema.sensitive);
    std::vector<int> a_codes;
    if (a_col.categorical) a_codes = detail::categorical_codes(ds, a_idx);

    bool x_corr = false;
    for (std::size_t j = 0; j < ds.n_columns(); ++j) {
        if (j == a_idx || j == y_idx) continue;
        const Column& col = ds.schema.columns[j];
        ColumnScore score;
        score.column = col.name;
        if (!a_col.categorical && !col.categorical) {
            score.statistic = "pearson";
            auto r = pearson(a_numeric, ds.column(col.name));
            if (r) {
                score.value = std::fabs(*r);
            } else {
                score.defined = false;
            }
        } else if (a_col.categorical && col.categorical) {
            score.statistic = "cramers_v";
            auto v = cramers_v(a_codes, detail::categorical_codes(ds, j));
            if (v) {
                score.value = *v;
            } else {
                score.defined = false;
            }
        } else {
            // categorical-numeric: one-way ANOVA, scored as 1-p so that
            // "bigger means more correlated" holds across statistics. The
            // decision still uses the alpha level.
            score.statistic = "anova_p";
            const auto& codes = a_col.categorical ? a_codes : detail::categorical_codes(ds, j);
            const auto& numeric = a_col.categorical ? ds.column(col.name) : a_numeric;
            auto groups = detail::group_by(numeric, codes);
            if (groups.size() >= 2) {
                score.value = anova_pvalue(groups);
            } else {
                score.defined = false;
            }
        }
        bool exceeds = false;
        if (score.defined) {
            if (score.statistic == "anova_p")
                exceeds = score.value < thresholds.y_anova_alpha;
            else
                exceeds = score.value > thresholds.x_threshold;
        }
        if (exceeds) {
            x_corr = true;
            report.correlated_x.push_back(col.name);
        }
        report.x_scores.push_back(score);
    }

    // A vs Y
    bool y_corr = false;
    ColumnScore ys;
    ys.column = y_col.name;
    if (a_col.categorical && y_col.categorical) {
        ys.statistic = "cramers_v";
        auto v = cramers_v(a_codes, detail::categorical_codes(ds, y_idx));
        if (v) {
            ys.value = *v;
            y_corr = *v > thresholds.y_cat_threshold;
        } else {
            ys.defined = false;
        }
    } else if (!a_col.categorical && !y_col.categorical) {
        ys.statistic = "pearson";
        auto r = pearson(a_numeric, ds.column(y_col.name));
        if (r) {
            ys.value = std::fabs(*r);
            y_corr = ys.value > thresholds.y_cat_threshold;
        } else {
            ys.defined = false;
        }
    } else {
        ys.statistic = "anova_p";
        const auto& codes = y_col.categorical ? detail::categorical_codes(ds, y_idx) : a_codes;
        const auto& numeric = y_col.categorical ? a_numeric : ds.column(y_col.name);
        auto groups = detail::group_by(numeric, codes);
        if (groups.size() >= 2) {
            ys.value = anova_pvalue(groups);
            y_corr = ys.value < thresholds.y_anova_alpha;
        } else {
            ys.defined = false;
        }
    }
    report.y_score = ys;
    report.scenario = scenario_of(x_corr, y_corr);
    return report;
}

}  // namespace propinf
