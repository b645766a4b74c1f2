#include <catch_amalgamated.hpp>

#include "propinf/stats.hpp"
#include "propinf/synthetic.hpp"

using namespace propinf;
using Catch::Approx;

TEST_CASE("pearson: exact hand values", "[stats]") {
    CHECK(*pearson({1, 2, 3}, {2, 4, 6}) == Approx(1.0).margin(1e-12));
    CHECK(*pearson({1, 2, 3}, {6, 4, 2}) == Approx(-1.0).margin(1e-12));
    // cov sum 4, centered sum of squares 5 for each argument => r = 0.8
    CHECK(*pearson({1, 2, 3, 4}, {1, 3, 2, 4}) == Approx(0.8).margin(1e-12));
}

TEST_CASE("pearson: undefined for constant input", "[stats]") {
    CHECK_FALSE(pearson({1, 1, 1}, {1, 2, 3}).has_value());
    CHECK_FALSE(pearson({1, 2, 3}, {5, 5, 5}).has_value());
    CHECK_THROWS_AS(pearson({1, 2}, {1, 2, 3}), Error);
}

TEST_CASE("pearson: symmetry and affine invariance", "[stats]") {
    std::vector<double> x = {1, 4, 2, 8, 5, 7};
    std::vector<double> y = {3, 1, 4, 1, 5, 9};
    double r = *pearson(x, y);
    CHECK(*pearson(y, x) == Approx(r).margin(1e-12));
    std::vector<double> x2, x3;
    for (double v : x) {
        x2.push_back(2.0 * v + 10.0);
        x3.push_back(-3.0 * v + 1.0);
    }
    CHECK(*pearson(x2, y) == Approx(r).margin(1e-12));
    CHECK(*pearson(x3, y) == Approx(-r).margin(1e-12));
}

static std::pair<std::vector<int>, std::vector<int>> from_table(
    const std::vector<std::vector<int>>& table) {
    std::vector<int> a, b;
    for (std::size_t i = 0; i < table.size(); ++i)
        for (std::size_t j = 0; j < table[i].size(); ++j)
            for (int c = 0; c < table[i][j]; ++c) {
                a.push_back(static_cast<int>(i));
                b.push_back(static_cast<int>(j));
            }
    return {a, b};
}

TEST_CASE("cramers_v: exact hand values", "[stats]") {
    auto [a1, b1] = from_table({{10, 0}, {0, 10}});
    CHECK(*cramers_v(a1, b1) == Approx(1.0).margin(1e-12));

    auto [a2, b2] = from_table({{5, 5}, {5, 5}});
    CHECK(*cramers_v(a2, b2) == Approx(0.0).margin(1e-12));

    // chi-square = 20/3, V = sqrt((20/3)/60) = 1/3
    auto [a3, b3] = from_table({{20, 10}, {10, 20}});
    CHECK(*cramers_v(a3, b3) == Approx(1.0 / 3.0).margin(1e-9));
}

TEST_CASE("cramers_v: relabeling and argument-swap invariance", "[stats]") {
    auto [a, b] = from_table({{12, 3, 5}, {2, 9, 4}});
    double v = *cramers_v(a, b);
    CHECK(*cramers_v(b, a) == Approx(v).margin(1e-12));
    std::vector<int> a2;
    for (int x : a) a2.push_back(x == 0 ? 42 : -7);  // relabel categories
    CHECK(*cramers_v(a2, b) == Approx(v).margin(1e-12));
}

TEST_CASE("cramers_v: undefined when a variable is constant", "[stats]") {
    CHECK_FALSE(cramers_v({1, 1, 1, 1}, {0, 1, 0, 1}).has_value());
}

TEST_CASE("f distribution upper tail matches closed-form point", "[stats]") {
    // P(F(1,6) > 2) = I_{3/4}(3, 1/2) = 0.20703125 exactly.
    CHECK(f_upper_tail(2.0, 1, 6) == Approx(0.20703125).margin(1e-9));
    CHECK(f_upper_tail(0.0, 1, 6) == Approx(1.0).margin(1e-12));
}

TEST_CASE("anova: exact hand values", "[stats]") {
    AnovaResult same = anova({{1, 2, 3}, {1, 2, 3}});
    CHECK(same.f_statistic == Approx(0.0).margin(1e-12));
    CHECK(same.p_value == Approx(1.0).margin(1e-12));

    CHECK(anova_pvalue({{0, 0.01, -0.01}, {100, 100.01, 99.99}}) < 1e-6);

    // Groups [1,2,3,4] vs [2,3,4,5]: SSB = 2 (df 1), SSW = 10 (df 6),
    // F = 2 / (10/6) = 1.2; the tail probability comes from the F(1,6) CDF.
    AnovaResult r = anova({{1, 2, 3, 4}, {2, 3, 4, 5}});
    CHECK(r.f_statistic == Approx(1.2).margin(1e-12));
    CHECK(r.p_value == Approx(0.315333596201229615).margin(1e-9));
}

TEST_CASE("anova: shift invariance and separation monotonicity", "[stats]") {
    std::vector<double> g1 = {1, 2, 3, 4};
    std::vector<double> g2 = {2, 3, 4, 5};
    double p0 = anova_pvalue({g1, g2});
    std::vector<double> g1s, g2s;
    for (double v : g1) g1s.push_back(v + 100.0);
    for (double v : g2) g2s.push_back(v + 100.0);
    CHECK(anova_pvalue({g1s, g2s}) == Approx(p0).margin(1e-9));

    std::vector<double> g2far;
    for (double v : g2) g2far.push_back(v + 3.0);
    CHECK(anova_pvalue({g1, g2far}) < p0);
}

TEST_CASE("anova: identical-separated degenerate cases", "[stats]") {
    AnovaResult sep = anova({{1, 1, 1}, {2, 2, 2}});
    CHECK(sep.p_value == Approx(0.0).margin(1e-12));
    AnovaResult ident = anova({{3, 3}, {3, 3}});
    CHECK(ident.p_value == Approx(1.0).margin(1e-12));
    CHECK_THROWS_AS(anova({{1.0, 2.0}}), Error);
    CHECK_THROWS_AS(anova({{1.0}, {2.0, 3.0}}), Error);
}

TEST_CASE("classify_scenario round-trips the generator", "[stats][slow]") {
    // >= 95% agreement over 20 seeds at n=10000, strength >= 0.5.
    for (double strength : {0.5, 1.0}) {
        int agree = 0;
        const int seeds = 20;
        int checked = 0;
        for (int seed = 1; seed <= seeds; ++seed) {
            for (Scenario sc : {Scenario::XcorrYcorr, Scenario::XindepYcorr,
                                Scenario::XcorrYindep, Scenario::XindepYindep}) {
                SyntheticConfig cfg;
                cfg.scenario = sc;
                cfg.n_records = 10000;
                cfg.correlation_strength = strength;
                if (scenario_x_corr(sc)) cfg.correlated_columns = {"f0", "f1"};
                TabularDataset ds = synth_generate(cfg, static_cast<std::uint64_t>(seed));
                ScenarioReport rep = classify_scenario(ds);
                ++checked;
                if (rep.scenario == sc) ++agree;
            }
        }
        INFO("strength " << strength << ": " << agree << "/" << checked);
        CHECK(agree * 100 >= checked * 95);
    }
}

TEST_CASE("classify_scenario report names the correlated columns", "[stats]") {
    SyntheticConfig cfg;
    cfg.scenario = Scenario::XcorrYindep;
    cfg.correlated_columns = {"f2"};
    cfg.n_records = 10000;
    TabularDataset ds = synth_generate(cfg, 7);
    ScenarioReport rep = classify_scenario(ds);
    REQUIRE(rep.correlated_x.size() >= 1);
    CHECK(std::find(rep.correlated_x.begin(), rep.correlated_x.end(), "f2") !=
          rep.correlated_x.end());
    std::string s = rep.serialize();
    CHECK(s.find("scenario") != std::string::npos);
}
