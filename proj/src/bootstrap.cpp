#include "mctp/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mctp/detail/rng.hpp"

namespace mctp {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

Eigen::VectorXd scaled_residuals(const DesignBundle& design, const FittedAncova& fit) {
    const int n = design.n_obs;
    Eigen::VectorXd r(n);
    double max_abs = 0.0;
    double scale = std::max(1.0, design.y.cwiseAbs().maxCoeff());
    for (int j = 0; j < n; ++j) {
        double h = design.leverages(j);
        if (h > 1.0 - 1e-8)
            fail(ErrorCode::LeverageOne,
                 "observation " + std::to_string(j) + " has leverage too close to 1");
        r(j) = fit.residuals(j) / std::sqrt(1.0 - h);
        max_abs = std::max(max_abs, std::fabs(r(j)));
    }
    if (max_abs <= 1e-12 * scale)
        fail(ErrorCode::AllResidualsZero,
             "all residuals vanish; the bootstrap distribution is degenerate");
    return r;
}

BootstrapSample bootstrap_distribution(const DesignBundle& design, const ContrastMatrix& C,
                                       const FittedAncova& fit, int n_boot,
                                       std::uint64_t seed) {
    if (fit.mode != VarianceMode::SubjectWise)
        fail(ErrorCode::ConfigError,
             "the wild bootstrap requires subject-wise variance estimation");
    if (n_boot < 1)
        fail(ErrorCode::ConfigError, "number of bootstrap replicates must be positive");
    if (C.C.cols() != design.n_cells)
        fail(ErrorCode::InvalidContrast,
             "contrast matrix has " + std::to_string(C.C.cols()) +
             " columns but the design has " + std::to_string(design.n_cells) + " cells");

    const int n = design.n_obs;
    const int q = static_cast<int>(C.C.rows());

    Eigen::VectorXd r = scaled_residuals(design, fit);
    Eigen::MatrixXd G = C.C * fit.D;        // q x n, maps data to contrast effects
    Eigen::MatrixXd G2 = G.cwiseProduct(G); // entrywise squares for the variance form

    // Reference denominator scale per contrast: separates genuinely collapsed
    // replicates from floating-point dust left by the refit projection.
    Eigen::VectorXd r2 = r.cwiseProduct(r);
    Eigen::VectorXd den_scale = G2 * r2;

    BootstrapSample out;
    out.t0.resize(n_boot);

    Eigen::VectorXd ystar(n), beta(design.B.cols()), resid(n), eps2(n), num(q), den(q);
    for (int b = 0; b < n_boot; ++b) {
        detail::SplitMix rng(detail::derive_seed(seed, static_cast<std::uint64_t>(b)));
        std::uint64_t bits = 0;
        int bits_left = 0;
        for (int j = 0; j < n; ++j) {
            if (bits_left == 0) {
                bits = rng.next_u64();
                bits_left = 64;
            }
            ystar(j) = (bits & 1u) ? r(j) : -r(j);
            bits >>= 1;
            --bits_left;
        }

        beta.noalias() = design.P_B * ystar;
        resid = ystar;
        resid.noalias() -= design.B * beta;
        eps2 = resid.cwiseProduct(resid);
        num.noalias() = G * ystar;
        den.noalias() = G2 * eps2;

        double t0 = 0.0;
        for (int l = 0; l < q; ++l) {
            if (den(l) <= 1e-20 * den_scale(l)) {
                t0 = kInf;
                break;
            }
            t0 = std::max(t0, std::fabs(num(l)) / std::sqrt(den(l)));
        }
        if (t0 == kInf) ++out.n_degenerate;
        out.t0[b] = t0;
    }
    return out;
}

double bootstrap_critical_value(std::vector<double> t0, double alpha) {
    const int n = static_cast<int>(t0.size());
    const double denom = n + 1.0;
    // Largest k with k/(n+1) <= alpha under the same floating-point division
    // that produces the p-values, so decision and p-value always agree.
    int k = static_cast<int>(std::floor(alpha * denom)) + 2;
    k = std::min(k, n);
    while (k >= 1 && k / denom > alpha) --k;
    if (k < 1) return kInf;
    std::nth_element(t0.begin(), t0.begin() + (n - k), t0.end());
    return t0[n - k];
}

MctpResult run_mctp_boot(const DesignBundle& design, const ContrastMatrix& C,
                         const FittedAncova& fit, double alpha,
                         const BootstrapSettings& settings) {
    if (!(alpha > 0.0 && alpha < 1.0))
        fail(ErrorCode::ConfigError, "alpha must lie strictly between 0 and 1");

    TestStats stats = test_statistics(C, fit);
    CorrelationMatrix R = correlation(C, fit);

    BootstrapSample sample =
        bootstrap_distribution(design, C, fit, settings.n_boot, settings.seed);
    if (sample.n_degenerate > 0.01 * settings.n_boot)
        fail(ErrorCode::DegenerateBootstrap,
             "more than 1% of bootstrap replicates collapsed (" +
             std::to_string(sample.n_degenerate) + " of " +
             std::to_string(settings.n_boot) + "); the design is too small for "
             "the wild bootstrap");

    MctpResult res;
    res.alpha = alpha;
    res.seed = settings.seed;
    res.method = "boot";
    res.n_boot = settings.n_boot;
    res.n_degenerate = sample.n_degenerate;
    res.R_hat = R.R;
    res.r_repaired = R.repaired;
    res.nu_raw.resize(0);
    res.df_min = res.df_mean = res.df_max = res.df_used =
        std::numeric_limits<double>::quiet_NaN();
    res.crit = bootstrap_critical_value(sample.t0, alpha);
    res.crit_se = std::numeric_limits<double>::quiet_NaN();
    if (sample.n_degenerate > 0)
        res.warnings.push_back(std::to_string(sample.n_degenerate) +
                               " bootstrap replicates collapsed and were counted as +inf");

    const double denom = settings.n_boot + 1.0;
    const int q = static_cast<int>(C.C.rows());
    res.rows.resize(q);
    for (int l = 0; l < q; ++l) {
        MctpRow& row = res.rows[l];
        row.label = C.row_labels[l];
        row.effect = stats.effects(l);
        row.se = stats.ses(l);
        row.statistic = stats.t(l);

        double t_abs = std::fabs(row.statistic);
        long cnt = std::count_if(sample.t0.begin(), sample.t0.end(),
                                 [t_abs](double v) { return v >= t_abs; });
        row.p_adj = (1.0 + cnt) / denom;
        row.reject = t_abs > res.crit;
        row.ci_lower = row.se * (row.statistic - res.crit);
        row.ci_upper = row.se * (row.statistic + res.crit);
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
