#include "mctp/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mctp {

namespace {

void check_conformable(const ContrastMatrix& C, int n_cells) {
    if (C.C.cols() != n_cells)
        fail(ErrorCode::InvalidContrast,
             "contrast matrix has " + std::to_string(C.C.cols()) +
             " columns but the design has " + std::to_string(n_cells) + " cells");
    if (C.C.rows() < 1)
        fail(ErrorCode::InvalidContrast, "contrast matrix has no rows");
}

} // namespace

std::string df_rule_name(DfRule rule) {
    switch (rule) {
        case DfRule::Min: return "min";
        case DfRule::Mean: return "mean";
        case DfRule::Max: return "max";
    }
    fail(ErrorCode::ConfigError, "unknown df rule");
}

TestStats test_statistics(const ContrastMatrix& C, const FittedAncova& fit) {
    check_conformable(C, static_cast<int>(fit.Psi_hat.rows()));
    const int q = static_cast<int>(C.C.rows());

    TestStats out;
    out.effects = C.C * fit.b_hat;
    out.ses.resize(q);
    out.t.resize(q);
    for (int l = 0; l < q; ++l) {
        double v = C.C.row(l) * fit.Psi_hat * C.C.row(l).transpose();
        if (!(v > 0.0))
            fail(ErrorCode::DegenerateVariance,
                 "contrast '" + C.row_labels[l] + "' has nonpositive estimated variance");
        out.ses(l) = std::sqrt(v);
        out.t(l) = out.effects(l) / out.ses(l);
    }
    out.t0 = out.t.cwiseAbs().maxCoeff();
    return out;
}

CorrelationMatrix correlation(const ContrastMatrix& C, const FittedAncova& fit) {
    check_conformable(C, static_cast<int>(fit.Psi_hat.rows()));
    Eigen::MatrixXd V = C.C * fit.Psi_hat * C.C.transpose();
    V = 0.5 * (V + V.transpose());
    const int q = static_cast<int>(V.rows());
    Eigen::VectorXd d(q);
    for (int l = 0; l < q; ++l) {
        if (!(V(l, l) > 0.0))
            fail(ErrorCode::DegenerateVariance,
                 "contrast '" + C.row_labels[l] + "' has nonpositive estimated variance");
        d(l) = 1.0 / std::sqrt(V(l, l));
    }
    Eigen::MatrixXd R = d.asDiagonal() * V * d.asDiagonal();
    return CorrelationMatrix::make(R);
}

BoxDfResult box_dfs(const ContrastMatrix& C, const DesignBundle& design,
                    const FittedAncova& fit) {
    if (fit.mode != VarianceMode::GroupWise)
        fail(ErrorCode::ConfigError,
             "Satterthwaite degrees of freedom require group-wise variance estimation");
    check_conformable(C, design.n_cells);

    const int q = static_cast<int>(C.C.rows());
    BoxDfResult out;
    out.nu.resize(q);
    for (int l = 0; l < q; ++l) {
        Eigen::RowVectorXd w = C.C.row(l) * fit.D;
        double var = 0.0;
        double den = 0.0;
        for (int i = 0; i < design.n_cells; ++i) {
            double s = w.segment(design.cell_start[i], design.cell_sizes[i]).squaredNorm();
            double sig2 = fit.sigma2_group(i);
            var += s * sig2;
            den += s * s * sig2 * sig2 / fit.dfs_group(i);
        }
        if (!(var > 0.0))
            fail(ErrorCode::DegenerateVariance,
                 "contrast '" + C.row_labels[l] + "' has nonpositive estimated variance");
        double nu;
        if (den > 0.0) {
            nu = var * var / den;
        } else {
            nu = std::numeric_limits<double>::infinity();
        }
        if (!(nu >= 1.0)) {
            nu = 1.0;
            out.clamped = true;
        }
        nu = std::min(nu, 1e9);
        out.nu(l) = nu;
    }
    return out;
}

double select_df(const BoxDfResult& box, DfRule rule) {
    double v = 0.0;
    switch (rule) {
        case DfRule::Min: v = box.nu.minCoeff(); break;
        case DfRule::Mean: v = box.nu.mean(); break;
        case DfRule::Max: v = box.nu.maxCoeff(); break;
    }
    return std::max(1.0, std::floor(v + 0.5));
}

MctpResult run_mctp(const DesignBundle& design, const ContrastMatrix& C,
                    const FittedAncova& fit, const MctpOptions& opt) {
    if (!(opt.alpha > 0.0 && opt.alpha < 1.0))
        fail(ErrorCode::ConfigError, "alpha must lie strictly between 0 and 1");
    if (opt.method == InferenceMethod::MvtApprox && fit.mode != VarianceMode::GroupWise)
        fail(ErrorCode::ConfigError,
             "the multivariate t method requires group-wise variance estimation; "
             "use the normal or bootstrap method otherwise");
    check_conformable(C, design.n_cells);

    MctpResult res;
    res.alpha = opt.alpha;
    res.seed = opt.seed;

    TestStats stats = test_statistics(C, fit);
    CorrelationMatrix R = correlation(C, fit);
    res.R_hat = R.R;
    res.r_repaired = R.repaired;
    if (R.repaired)
        res.warnings.push_back("estimated correlation matrix required spectral repair");

    Df df = Df::normal();
    if (opt.method == InferenceMethod::MvtApprox) {
        BoxDfResult box = box_dfs(C, design, fit);
        if (box.clamped)
            res.warnings.push_back("Satterthwaite df clamped to 1 for at least one contrast");
        res.nu_raw = box.nu;
        res.df_min = select_df(box, DfRule::Min);
        res.df_mean = select_df(box, DfRule::Mean);
        res.df_max = select_df(box, DfRule::Max);
        res.df_used = select_df(box, opt.rule);
        res.method = "mvt-" + df_rule_name(opt.rule);
        df = Df::t(static_cast<int>(res.df_used));
    } else {
        res.df_used = std::numeric_limits<double>::infinity();
        res.df_min = res.df_mean = res.df_max = res.df_used;
        res.method = "normal";
    }

    const double level = 1.0 - opt.alpha;
    const int q = static_cast<int>(C.C.rows());
    double c_ref = univariate_two_sided_quantile(std::pow(level, 1.0 / q), df);
    MvtEngine engine(R, df, opt.seed, opt.n_shifts, opt.n_points, c_ref);
    QuantileResult qr = engine.quantile(level, opt.tol, opt.max_samples);
    res.crit = qr.c;
    res.crit_se = qr.se;

    res.rows.resize(q);
    for (int l = 0; l < q; ++l) {
        MctpRow& row = res.rows[l];
        row.label = C.row_labels[l];
        row.effect = stats.effects(l);
        row.se = stats.ses(l);
        row.statistic = stats.t(l);

        double t_abs = std::fabs(row.statistic);
        row.reject = t_abs > res.crit;
        // The interval bounds are built in statistic space so that excluding
        // zero coincides bit-for-bit with |t| exceeding the critical value.
        row.ci_lower = row.se * (row.statistic - res.crit);
        row.ci_upper = row.se * (row.statistic + res.crit);

        double p = (t_abs > 0.0) ? 1.0 - engine.prob(t_abs).p : 1.0;
        // Monte Carlo noise in p and in the critical value can disagree at
        // the boundary; the decision from the critical value wins and the
        // p-value is nudged to the consistent side of alpha.
        if (row.reject && p > opt.alpha) p = opt.alpha;
        if (!row.reject && p <= opt.alpha) p = std::nextafter(opt.alpha, 2.0);
        row.p_adj = p;
    }

    res.global_stat = stats.t0;
    res.global_reject = false;
    res.global_p = 1.0;
    for (const MctpRow& row : res.rows) {
        res.global_reject = res.global_reject || row.reject;
        res.global_p = std::min(res.global_p, row.p_adj);
    }
    return res;
}

} // namespace mctp
