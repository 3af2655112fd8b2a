#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mctp/design.hpp"
#include "support/oracles.hpp"

using namespace mctp;

namespace {

// Two-factor dataset with shuffled rows so the sorting path is exercised.
AncovaDataset two_factor_sample() {
    AncovaDataset d;
    std::mt19937_64 rng(42);
    std::normal_distribution<double> z(0.0, 1.0);
    const std::vector<std::string> doses = {"d1", "d2", "d3"};
    const std::vector<std::string> sexes = {"f", "m"};
    std::vector<std::pair<CellKey, int>> plan;
    for (const auto& dose : doses)
        for (const auto& sex : sexes) plan.push_back({{dose, sex}, 4});

    int N = 0;
    for (auto& p : plan) N += p.second;
    d.response.resize(N);
    d.covariates.resize(N, 2);
    d.groups.reserve(N);
    int r = 0;
    for (auto& p : plan)
        for (int i = 0; i < p.second; ++i, ++r) {
            d.groups.push_back(p.first);
            d.covariates(r, 0) = z(rng);
            d.covariates(r, 1) = z(rng);
            d.response(r) = z(rng) + 0.5 * d.covariates(r, 0);
        }
    // deliberately interleave the rows
    std::vector<int> order(N);
    for (int i = 0; i < N; ++i) order[i] = (i * 7) % N;
    AncovaDataset shuffled;
    shuffled.response.resize(N);
    shuffled.covariates.resize(N, 2);
    shuffled.groups.resize(N);
    for (int i = 0; i < N; ++i) {
        shuffled.response(i) = d.response(order[i]);
        shuffled.covariates.row(i) = d.covariates.row(order[i]);
        shuffled.groups[i] = d.groups[order[i]];
    }
    shuffled.factor_names = {"dose", "sex"};
    shuffled.covariate_names = {"x1", "x2"};
    return shuffled;
}

AncovaDataset one_way(const std::vector<int>& sizes, int m, unsigned seed) {
    AncovaDataset d;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    int N = 0;
    for (int n : sizes) N += n;
    d.response.resize(N);
    d.covariates.resize(N, m);
    d.groups.reserve(N);
    int r = 0;
    for (std::size_t g = 0; g < sizes.size(); ++g)
        for (int i = 0; i < sizes[g]; ++i, ++r) {
            d.groups.push_back({"g" + std::to_string(g + 1)});
            for (int j = 0; j < m; ++j) d.covariates(r, j) = z(rng);
            d.response(r) = z(rng);
        }
    return d;
}

} // namespace

TEST_CASE("cell labels join factor levels") {
    CHECK(cell_label({"a"}) == "a");
    CHECK(cell_label({"d1", "m"}) == "d1:m");
}

TEST_CASE("build_design sorts rows into contiguous cells and keeps the permutation") {
    AncovaDataset data = two_factor_sample();
    DesignBundle d = build_design(data);

    CHECK(d.n_obs == 24);
    CHECK(d.n_cells == 6);
    CHECK(d.n_covs == 2);
    REQUIRE(d.cells.size() == 6);
    // lexicographic cell order
    CHECK(d.cell_labels.front() == "d1:f");
    CHECK(d.cell_labels.back() == "d3:m");
    for (int i = 0; i + 1 < d.n_cells; ++i) CHECK(d.cells[i] < d.cells[i + 1]);

    // rows of a cell are contiguous and consistent with starts/sizes
    for (int i = 0; i < d.n_cells; ++i) {
        for (int r = d.cell_start[i]; r < d.cell_start[i] + d.cell_sizes[i]; ++r)
            CHECK(d.cell_of_row(r) == i);
    }

    // the permutation carries sorted rows back to the original data
    for (int r = 0; r < d.n_obs; ++r) {
        CHECK(d.y(r) == data.response(d.perm[r]));
        CHECK(d.M.row(r) == data.covariates.row(d.perm[r]));
        CHECK(data.groups[d.perm[r]] == d.cells[d.cell_of_row(r)]);
    }
    Eigen::VectorXd back = d.unpermute(d.y);
    for (int r = 0; r < d.n_obs; ++r) CHECK(back(r) == data.response(r));

    // X is the cell indicator block and B = [X M]
    Eigen::VectorXd ones = d.X.rowwise().sum();
    for (int r = 0; r < d.n_obs; ++r) CHECK(ones(r) == 1.0);
    CHECK((d.B.leftCols(6) - d.X).norm() == 0.0);
    CHECK((d.B.rightCols(2) - d.M).norm() == 0.0);
}

TEST_CASE("projector and leverages agree with the normal-equations oracle") {
    AncovaDataset data = one_way({5, 7, 6}, 2, 7);
    DesignBundle d = build_design(data);
    oracles::OlsOracle ols = oracles::brute_force_ols(d.B, d.y);

    Eigen::VectorXd coef = d.P_B * d.y;
    CHECK((coef - ols.coef).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((d.leverages - ols.leverage).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("input validation of build_design") {
    AncovaDataset empty;
    CHECK_THROWS_AS(build_design(empty), Error);

    AncovaDataset d = one_way({4, 4}, 0, 1);
    d.response(2) = std::nan("");
    try {
        build_design(d);
        FAIL("expected NonFiniteInput");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonFiniteInput);
        CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    }

    AncovaDataset one_group = one_way({6}, 0, 2);
    try {
        build_design(one_group);
        FAIL("expected InvalidGroupCount");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidGroupCount);
    }

    // a singleton cell is saturated by its own indicator column
    AncovaDataset singleton = one_way({5, 1}, 0, 3);
    try {
        build_design(singleton);
        FAIL("expected LeverageOne");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::LeverageOne);
    }

    // covariate constant within cells duplicates the indicator columns
    AncovaDataset collinear = one_way({4, 4}, 1, 4);
    for (int r = 0; r < 8; ++r) collinear.covariates(r, 0) = r < 4 ? 1.0 : 2.0;
    try {
        build_design(collinear);
        FAIL("expected RankDeficient");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::RankDeficient);
    }
}

TEST_CASE("named contrast matrices have the textbook shapes") {
    for (int a = 2; a <= 5; ++a) {
        ContrastMatrix dun = contrast(ContrastKind::Dunnett, a);
        ContrastMatrix tuk = contrast(ContrastKind::Tukey, a);
        ContrastMatrix gm = contrast(ContrastKind::GrandMean, a);
        CHECK(dun.n_rows() == a - 1);
        CHECK(tuk.n_rows() == a * (a - 1) / 2);
        CHECK(gm.n_rows() == a);
        for (const ContrastMatrix* cm : {&dun, &tuk, &gm}) {
            CHECK(cm->n_cells() == a);
            CHECK(static_cast<int>(cm->row_labels.size()) == cm->n_rows());
            for (int r = 0; r < cm->n_rows(); ++r)
                CHECK(std::fabs(cm->C.row(r).sum()) < 1e-12);
        }
    }

    ContrastMatrix dun = contrast(ContrastKind::Dunnett, 3);
    CHECK(dun.C(0, 0) == -1.0);
    CHECK(dun.C(0, 1) == 1.0);
    CHECK(dun.C(0, 2) == 0.0);
    CHECK(dun.row_labels[0] == "g2 - g1");

    ContrastMatrix gm = contrast(ContrastKind::GrandMean, 4);
    CHECK(gm.C(0, 0) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(gm.C(0, 1) == doctest::Approx(-0.25).epsilon(1e-12));

    ContrastMatrix named = contrast(ContrastKind::Dunnett, {"placebo", "low", "high"});
    CHECK(named.row_labels[0] == "low - placebo");
    CHECK(named.row_labels[1] == "high - placebo");
    CHECK((named.C - dun.C).norm() == 0.0);

    CHECK_THROWS_AS(contrast(ContrastKind::Dunnett, 1), Error);
    CHECK_THROWS_AS(contrast(ContrastKind::UserDefined, 3), Error);
}

TEST_CASE("user contrasts are validated row by row") {
    Eigen::MatrixXd ok(1, 3);
    ok << 1.0, -0.5, -0.5;
    ContrastMatrix cm = user_contrast(ok, {"g1 - rest"});
    CHECK(cm.kind == ContrastKind::UserDefined);
    CHECK(cm.row_labels[0] == "g1 - rest");

    ContrastMatrix unnamed = user_contrast(ok, {});
    CHECK(unnamed.row_labels[0] == "contrast 1");

    Eigen::MatrixXd bad_sum(1, 3);
    bad_sum << 1.0, 0.0, -0.5;
    CHECK_THROWS_AS(user_contrast(bad_sum, {}), Error);

    Eigen::MatrixXd zero_row(2, 3);
    zero_row << 1.0, -1.0, 0.0, 0.0, 0.0, 0.0;
    CHECK_THROWS_AS(user_contrast(zero_row, {}), Error);

    Eigen::MatrixXd nonfinite(1, 3);
    nonfinite << 1.0, -1.0, std::numeric_limits<double>::quiet_NaN();
    // the row-sum test sees the NaN first; either class is a hard error
    CHECK_THROWS_AS(user_contrast(nonfinite, {}), Error);

    CHECK_THROWS_AS(user_contrast(ok, {"a", "b"}), Error);
}

TEST_CASE("factorial contrasts are Kronecker products of effect rows and averages") {
    // factors: 2 levels x 3 levels, cells in lexicographic (Kronecker) order
    std::vector<int> levels = {2, 3};

    EffectSpec main1;
    main1.factors = {1};
    main1.base = ContrastKind::GrandMean;
    ContrastMatrix m1 = factorial_contrast(main1, levels);
    REQUIRE(m1.n_rows() == 3);
    REQUIRE(m1.n_cells() == 6);
    Eigen::MatrixXd avg0 = Eigen::MatrixXd::Constant(1, 2, 0.5);
    Eigen::MatrixXd gm3 = contrast(ContrastKind::GrandMean, 3).C;
    for (int r = 0; r < 3; ++r)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 3; ++j)
                CHECK(m1.C(r, 3 * i + j) ==
                      doctest::Approx(avg0(0, i) * gm3(r, j)).epsilon(1e-12));

    EffectSpec main0;
    main0.factors = {0};
    main0.base = ContrastKind::Dunnett;
    ContrastMatrix m0 = factorial_contrast(main0, levels);
    REQUIRE(m0.n_rows() == 1);
    // (level 2 of factor 0) - (level 1), averaged over factor 1
    for (int j = 0; j < 3; ++j) {
        CHECK(m0.C(0, j) == doctest::Approx(-1.0 / 3).epsilon(1e-12));
        CHECK(m0.C(0, 3 + j) == doctest::Approx(1.0 / 3).epsilon(1e-12));
    }

    EffectSpec inter;
    inter.factors = {0, 1};
    ContrastMatrix mi = factorial_contrast(inter, levels);
    REQUIRE(mi.n_rows() == 2); // (2-1) x (3-1)
    for (int r = 0; r < mi.n_rows(); ++r) {
        CHECK(std::fabs(mi.C.row(r).sum()) < 1e-12);
        // interaction rows are orthogonal to both main-effect spaces
        for (int i = 0; i < 2; ++i)
            CHECK(std::fabs(mi.C.row(r).segment(3 * i, 3).sum()) < 1e-12);
        for (int j = 0; j < 3; ++j)
            CHECK(std::fabs(mi.C(r, j) + mi.C(r, 3 + j)) < 1e-12);
    }

    EffectSpec bad;
    bad.factors = {2};
    CHECK_THROWS_AS(factorial_contrast(bad, levels), Error);
    bad.factors = {0, 0};
    CHECK_THROWS_AS(factorial_contrast(bad, levels), Error);
}

TEST_CASE("full_cross_levels accepts the complete cross and rejects holes") {
    AncovaDataset data = two_factor_sample();
    DesignBundle d = build_design(data);
    auto levels = full_cross_levels(d);
    REQUIRE(levels.size() == 2);
    CHECK(levels[0] == std::vector<std::string>{"d1", "d2", "d3"});
    CHECK(levels[1] == std::vector<std::string>{"f", "m"});

    // drop one cell entirely
    AncovaDataset holed;
    int keep = 0;
    for (int r = 0; r < data.response.size(); ++r)
        if (!(data.groups[r][0] == "d3" && data.groups[r][1] == "m")) ++keep;
    holed.response.resize(keep);
    holed.covariates.resize(keep, 2);
    int w = 0;
    for (int r = 0; r < data.response.size(); ++r) {
        if (data.groups[r][0] == "d3" && data.groups[r][1] == "m") continue;
        holed.response(w) = data.response(r);
        holed.covariates.row(w) = data.covariates.row(r);
        holed.groups.push_back(data.groups[r]);
        ++w;
    }
    DesignBundle dh = build_design(holed);
    try {
        full_cross_levels(dh);
        FAIL("expected NotFullCross");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NotFullCross);
    }
}
