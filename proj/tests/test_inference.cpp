#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mctp/inference.hpp"
#include "support/oracles.hpp"

using namespace mctp;

namespace {

AncovaDataset random_dataset(const std::vector<int>& sizes, int m, unsigned seed,
                             const std::vector<double>& group_sd = {}) {
    AncovaDataset d;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    int N = 0;
    for (int n : sizes) N += n;
    d.response.resize(N);
    d.covariates.resize(N, m);
    d.groups.reserve(N);
    int r = 0;
    for (std::size_t g = 0; g < sizes.size(); ++g) {
        double sd = group_sd.empty() ? 1.0 : group_sd[g];
        for (int i = 0; i < sizes[g]; ++i, ++r) {
            d.groups.push_back({"g" + std::to_string(g + 1)});
            double mean = 1.0 + 0.5 * static_cast<double>(g);
            for (int j = 0; j < m; ++j) {
                d.covariates(r, j) = 7.0 + z(rng);
                mean += 0.4 * d.covariates(r, j);
            }
            d.response(r) = mean + sd * z(rng);
        }
    }
    return d;
}

void check_result_invariants(const MctpResult& res) {
    double min_p = 2.0;
    double max_t = 0.0;
    bool any = false;
    for (const MctpRow& row : res.rows) {
        CHECK(row.se > 0.0);
        CHECK(row.ci_lower < row.ci_upper);
        // the three decision routes must agree exactly
        bool by_stat = std::fabs(row.statistic) > res.crit;
        bool by_ci = row.ci_lower > 0.0 || row.ci_upper < 0.0;
        bool by_p = row.p_adj <= res.alpha;
        CHECK(row.reject == by_stat);
        CHECK(row.reject == by_ci);
        CHECK(row.reject == by_p);
        min_p = std::min(min_p, row.p_adj);
        max_t = std::max(max_t, std::fabs(row.statistic));
        any = any || row.reject;
    }
    CHECK(res.global_stat == doctest::Approx(max_t).epsilon(1e-12));
    CHECK(res.global_p == doctest::Approx(min_p).epsilon(1e-12));
    CHECK(res.global_reject == any);
    CHECK(res.global_reject == (res.global_p <= res.alpha));
}

} // namespace

TEST_CASE("test statistics and correlation match their definitions") {
    AncovaDataset data = random_dataset({7, 8, 9}, 2, 3, {1.0, 2.0, 0.5});
    DesignBundle design = build_design(data);
    FittedAncova f = fit(design, VarianceMode::GroupWise);
    ContrastMatrix C = contrast(ContrastKind::Tukey, 3);

    TestStats stats = test_statistics(C, f);
    Eigen::VectorXd eff = C.C * f.b_hat;
    Eigen::MatrixXd V = C.C * f.Psi_hat * C.C.transpose();
    for (int l = 0; l < C.n_rows(); ++l) {
        CHECK(stats.effects(l) == doctest::Approx(eff(l)).epsilon(1e-12));
        CHECK(stats.ses(l) == doctest::Approx(std::sqrt(V(l, l))).epsilon(1e-12));
        CHECK(stats.t(l) == doctest::Approx(eff(l) / std::sqrt(V(l, l))).epsilon(1e-12));
    }
    CHECK(stats.t0 == doctest::Approx(stats.t.cwiseAbs().maxCoeff()).epsilon(1e-15));

    CorrelationMatrix R = correlation(C, f);
    for (int i = 0; i < R.dim(); ++i) {
        CHECK(R.R(i, i) == doctest::Approx(1.0).epsilon(1e-12));
        for (int j = 0; j < R.dim(); ++j)
            CHECK(R.R(i, j) ==
                  doctest::Approx(V(i, j) / std::sqrt(V(i, i) * V(j, j))).epsilon(1e-9));
    }

    Eigen::MatrixXd wrong(1, 5);
    wrong << 1, -1, 0, 0, 0;
    CHECK_THROWS_AS(test_statistics(user_contrast(wrong, {}), f), Error);
}

TEST_CASE("Box degrees of freedom reduce to Welch for two groups") {
    for (unsigned seed = 1; seed <= 20; ++seed) {
        AncovaDataset data = random_dataset({5 + (seed % 4), 8}, 0, seed, {1.0, 2.5});
        DesignBundle design = build_design(data);
        FittedAncova f = fit(design, VarianceMode::GroupWise);
        ContrastMatrix C = contrast(ContrastKind::Dunnett, 2);

        std::vector<double> x1, x2;
        for (int r = 0; r < design.n_obs; ++r)
            (design.cell_of_row(r) == 0 ? x1 : x2).push_back(design.y(r));
        oracles::WelchOracle w = oracles::welch_two_sample(x1, x2);

        TestStats stats = test_statistics(C, f);
        CHECK(std::fabs(std::fabs(stats.t(0)) - std::fabs(w.t)) < 1e-10);

        BoxDfResult box = box_dfs(C, design, f);
        REQUIRE(box.nu.size() == 1);
        CHECK(std::fabs(box.nu(0) - w.nu) < 1e-10);
        CHECK(!box.clamped);
    }
}

TEST_CASE("box_dfs needs the group-wise fit") {
    AncovaDataset data = random_dataset({6, 6}, 0, 2);
    DesignBundle design = build_design(data);
    FittedAncova f = fit(design, VarianceMode::Homoscedastic);
    ContrastMatrix C = contrast(ContrastKind::Dunnett, 2);
    CHECK_THROWS_AS(box_dfs(C, design, f), Error);
}

TEST_CASE("select_df applies the rule before rounding to the nearest integer") {
    BoxDfResult box;
    box.nu.resize(3);
    box.nu << 2.4, 3.6, 7.49;
    CHECK(select_df(box, DfRule::Min) == 2.0);
    CHECK(select_df(box, DfRule::Max) == 7.0);
    CHECK(select_df(box, DfRule::Mean) == 4.0); // mean 4.497 rounds to 4

    box.nu.resize(1);
    box.nu << 1.2;
    CHECK(select_df(box, DfRule::Min) == 1.0);

    CHECK(df_rule_name(DfRule::Min) == "min");
    CHECK(df_rule_name(DfRule::Mean) == "mean");
    CHECK(df_rule_name(DfRule::Max) == "max");
}

TEST_CASE("run_mctp produces a consistent simultaneous decision") {
    AncovaDataset data = random_dataset({9, 11, 10}, 2, 17, {1.0, 1.8, 0.6});
    DesignBundle design = build_design(data);
    FittedAncova f = fit(design, VarianceMode::GroupWise);
    ContrastMatrix C = contrast(ContrastKind::Dunnett, 3);

    MctpOptions opt;
    opt.seed = 5;
    MctpResult res = run_mctp(design, C, f, opt);

    CHECK(res.method == "mvt-min");
    CHECK(res.rows.size() == 2);
    CHECK(res.nu_raw.size() == 2);
    CHECK(res.df_min <= res.df_mean);
    CHECK(res.df_mean <= res.df_max);
    CHECK(res.df_used == res.df_min);
    CHECK(res.crit > 0.0);
    CHECK(res.alpha == 0.05);
    check_result_invariants(res);

    // rule selection switches the df actually used
    opt.rule = DfRule::Max;
    MctpResult res_max = run_mctp(design, C, f, opt);
    CHECK(res_max.method == "mvt-max");
    CHECK(res_max.df_used == res_max.df_max);
    // a larger df can only tighten the critical value
    CHECK(res_max.crit <= res.crit + 5e-3);

    // interval geometry comes from the statistic space
    for (const MctpRow& row : res.rows) {
        CHECK(row.ci_lower ==
              doctest::Approx(row.se * (row.statistic - res.crit)).epsilon(1e-12));
        CHECK(row.ci_upper ==
              doctest::Approx(row.se * (row.statistic + res.crit)).epsilon(1e-12));
    }
}

TEST_CASE("run_mctp under the normal reference") {
    AncovaDataset data = random_dataset({25, 30, 28}, 1, 23);
    DesignBundle design = build_design(data);
    FittedAncova f = fit(design, VarianceMode::GroupWise);
    ContrastMatrix C = contrast(ContrastKind::GrandMean, 3);

    MctpOptions opt;
    opt.method = InferenceMethod::AsymptoticNormal;
    MctpResult res = run_mctp(design, C, f, opt);
    CHECK(res.method == "normal");
    CHECK(std::isinf(res.df_used));
    CHECK(res.nu_raw.size() == 0);
    check_result_invariants(res);

    // the normal reference also runs on the subject-wise sandwich
    FittedAncova fs = fit(design, VarianceMode::SubjectWise);
    MctpResult res_s = run_mctp(design, C, fs, opt);
    check_result_invariants(res_s);
}

TEST_CASE("run_mctp validates its configuration") {
    AncovaDataset data = random_dataset({8, 8}, 0, 31);
    DesignBundle design = build_design(data);
    FittedAncova f = fit(design, VarianceMode::SubjectWise);
    ContrastMatrix C = contrast(ContrastKind::Dunnett, 2);

    MctpOptions opt;
    // the multivariate-t path needs group-wise variances for the Box df
    CHECK_THROWS_AS(run_mctp(design, C, f, opt), Error);

    FittedAncova fg = fit(design, VarianceMode::GroupWise);
    opt.alpha = 0.0;
    CHECK_THROWS_AS(run_mctp(design, C, fg, opt), Error);
    opt.alpha = 1.0;
    CHECK_THROWS_AS(run_mctp(design, C, fg, opt), Error);
}

TEST_CASE("two-group run_mctp is the Welch test end to end") {
    AncovaDataset data = random_dataset({12, 9}, 0, 41, {1.0, 3.0});
    DesignBundle design = build_design(data);
    FittedAncova f = fit(design, VarianceMode::GroupWise);
    ContrastMatrix C = contrast(ContrastKind::Dunnett, 2);

    MctpOptions opt;
    opt.seed = 77;
    MctpResult res = run_mctp(design, C, f, opt);

    std::vector<double> x1, x2;
    for (int r = 0; r < design.n_obs; ++r)
        (design.cell_of_row(r) == 0 ? x1 : x2).push_back(design.y(r));
    oracles::WelchOracle w = oracles::welch_two_sample(x1, x2);

    int nu = static_cast<int>(std::floor(w.nu + 0.5));
    CHECK(res.df_used == static_cast<double>(nu));
    CHECK(res.crit == doctest::Approx(oracles::t_quantile(0.975, nu)).epsilon(1e-9));
    CHECK(std::fabs(res.rows[0].statistic) == doctest::Approx(std::fabs(w.t)).epsilon(1e-10));
    // q = 1: the adjusted p is the ordinary two-sided t p-value
    double p = 2.0 * (1.0 - oracles::t_cdf(std::fabs(w.t), nu));
    CHECK(res.rows[0].p_adj == doctest::Approx(p).epsilon(1e-6));
    check_result_invariants(res);
}
