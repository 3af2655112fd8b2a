#include "mctp/estimation.hpp"

#include <cmath>

namespace mctp {

const char* variance_mode_name(VarianceMode mode) {
    switch (mode) {
        case VarianceMode::GroupWise:     return "group-wise";
        case VarianceMode::SubjectWise:   return "subject-wise";
        case VarianceMode::Homoscedastic: return "homoscedastic";
    }
    return "?";
}

VarianceMode variance_mode_from_name(const std::string& name) {
    if (name == "group-wise") return VarianceMode::GroupWise;
    if (name == "subject-wise") return VarianceMode::SubjectWise;
    if (name == "homoscedastic") return VarianceMode::Homoscedastic;
    fail(ErrorCode::ConfigError, "unknown variance mode '" + name +
                                 "' (expected group-wise, subject-wise, or homoscedastic)");
}

GroupVariances group_variances(const DesignBundle& design, const Eigen::VectorXd& response) {
    if (response.size() != design.n_obs)
        fail(ErrorCode::DataError, "response length does not match design");

    const int a = design.n_cells;
    const int m = design.n_covs;
    GroupVariances out;
    out.sigma2.resize(a);
    out.dfs.resize(a);

    for (int i = 0; i < a; ++i) {
        const int n_i = design.cell_sizes[i];
        const int start = design.cell_start[i];
        Eigen::VectorXd y_i = response.segment(start, n_i);

        // Cell sub-model B_i = [1 M_i]; its residual projector yields the
        // unbiased variance estimate. A rank-revealing solve keeps the rank
        // decision stable when a covariate is (nearly) constant in the cell.
        Eigen::MatrixXd B_i(n_i, 1 + m);
        B_i.col(0).setOnes();
        if (m > 0) B_i.rightCols(m) = design.M.middleRows(start, n_i);

        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(B_i);
        cod.setThreshold(1e-10);
        const int rank = static_cast<int>(cod.rank());
        const int df = n_i - rank;
        if (df < 1)
            fail(ErrorCode::InsufficientReplication,
                 "cell " + design.cell_labels[i] + " has " + std::to_string(n_i) +
                 " observations for a sub-model of rank " + std::to_string(rank) +
                 "; no residual degrees of freedom for the variance estimate");

        Eigen::VectorXd resid = y_i - B_i * cod.solve(y_i);
        double rss = resid.squaredNorm();
        out.sigma2(i) = rss / df;
        out.dfs(i) = df;
    }
    return out;
}

Eigen::VectorXd subject_variances(const DesignBundle& design, const Eigen::VectorXd& response) {
    if (response.size() != design.n_obs)
        fail(ErrorCode::DataError, "response length does not match design");
    Eigen::VectorXd beta = design.P_B * response;
    Eigen::VectorXd resid = response - design.B * beta;
    return resid.cwiseAbs2();
}

namespace {

// (D S D')ij = sum_r D(i,r) s_r D(j,r) for diagonal S given as a vector.
Eigen::MatrixXd sandwich(const Eigen::MatrixXd& D, const Eigen::VectorXd& s) {
    Eigen::MatrixXd G = D * s.asDiagonal() * D.transpose();
    return 0.5 * (G + G.transpose());
}

Eigen::VectorXd expand_to_rows(const DesignBundle& design, const Eigen::VectorXd& per_cell) {
    Eigen::VectorXd out(design.n_obs);
    for (int i = 0; i < design.n_cells; ++i)
        out.segment(design.cell_start[i], design.cell_sizes[i]).setConstant(per_cell(i));
    return out;
}

} // namespace

FittedAncova fit(const DesignBundle& design, VarianceMode mode) {
    const int N = design.n_obs;
    const int a = design.n_cells;
    const int m = design.n_covs;

    FittedAncova f;
    f.mode = mode;

    if (mode == VarianceMode::GroupWise) {
        GroupVariances gv = group_variances(design, design.y);
        f.sigma2_group = gv.sigma2;
        f.dfs_group = gv.dfs;

        // GLS weights need strictly positive variances; cells with zero
        // residual variance get a floor for the weighting only. The sandwich
        // below still uses the true estimates, so such cells contribute
        // exactly zero variance to Psi_hat.
        double sig_max = gv.sigma2.maxCoeff();
        Eigen::VectorXd weights_cell(a);
        if (sig_max <= 0.0) {
            weights_cell.setOnes();
        } else {
            double floor = 1e-10 * sig_max;
            weights_cell = gv.sigma2.cwiseMax(floor);
        }
        Eigen::VectorXd w_rows = expand_to_rows(design, weights_cell); // Sigma diagonal

        // Cell averaging operator E = (X'X)^{-1} X'. For block-constant
        // weights the weighted projection onto the cell space equals the
        // unweighted one, so E is also the leading GLS factor.
        Eigen::MatrixXd E = Eigen::MatrixXd::Zero(a, N);
        for (int i = 0; i < a; ++i)
            E.block(i, design.cell_start[i], 1, design.cell_sizes[i])
                .setConstant(1.0 / design.cell_sizes[i]);

        if (m > 0) {
            // A = (M'Q Sigma^{-1} M)^{-1} M'Q Sigma^{-1} with Q the
            // complement of the cell-mean projection; QM is M centered
            // within cells, and Q commutes with the block-constant Sigma.
            Eigen::MatrixXd Mq = design.M - design.X * (E * design.M);
            Eigen::MatrixXd MqW = Mq.transpose() * w_rows.cwiseInverse().asDiagonal(); // m x N
            Eigen::MatrixXd Gm = MqW * Mq;
            Eigen::LDLT<Eigen::MatrixXd> ldlt(Gm);
            if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
                fail(ErrorCode::RankDeficient, "weighted covariate cross-product is singular");
            f.A = ldlt.solve(MqW);
            f.D = E - (E * design.M) * f.A;
            f.p_hat = f.A * design.y;
        } else {
            f.A.resize(0, N);
            f.p_hat.resize(0);
            f.D = E;
        }
        f.b_hat = f.D * design.y;

        Eigen::VectorXd sig_rows = expand_to_rows(design, gv.sigma2);
        f.Psi_hat = sandwich(f.D, sig_rows);
        f.Xi_hat = (m > 0) ? sandwich(f.A, sig_rows) : Eigen::MatrixXd(0, 0);
    } else {
        // OLS effects; the two modes differ only in the plug-in covariance.
        f.D = design.P_B.topRows(a);
        f.A = design.P_B.bottomRows(m);
        f.b_hat = f.D * design.y;
        f.p_hat = (m > 0) ? Eigen::VectorXd(f.A * design.y) : Eigen::VectorXd(0);

        if (mode == VarianceMode::SubjectWise) {
            f.eps2_subject = subject_variances(design, design.y);
            f.Psi_hat = sandwich(f.D, f.eps2_subject);
            f.Xi_hat = (m > 0) ? sandwich(f.A, f.eps2_subject) : Eigen::MatrixXd(0, 0);
        } else {
            Eigen::VectorXd beta = design.P_B * design.y;
            double rss = (design.y - design.B * beta).squaredNorm();
            f.pooled_sigma2 = rss / (N - a - m);
            Eigen::VectorXd s = Eigen::VectorXd::Constant(N, f.pooled_sigma2);
            f.Psi_hat = sandwich(f.D, s);
            f.Xi_hat = (m > 0) ? sandwich(f.A, s) : Eigen::MatrixXd(0, 0);
        }
    }

    f.residuals = design.y - design.X * f.b_hat;
    if (m > 0) f.residuals -= design.M * f.p_hat;
    return f;
}

} // namespace mctp
