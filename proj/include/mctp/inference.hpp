#ifndef MCTP_INFERENCE_HPP
#define MCTP_INFERENCE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mctp/design.hpp"
#include "mctp/errors.hpp"
#include "mctp/estimation.hpp"
#include "mctp/mvtdist.hpp"

namespace mctp {

// Rule for collapsing the per-contrast Satterthwaite degrees of freedom
// into the single value used by the multivariate t reference.
enum class DfRule { Min, Mean, Max };

std::string df_rule_name(DfRule rule);

enum class InferenceMethod {
    MvtApprox,        // multivariate t with plug-in correlation and Box df
    AsymptoticNormal, // multivariate normal reference (df = infinity)
};

struct TestStats {
    Eigen::VectorXd effects; // C * b_hat
    Eigen::VectorXd ses;     // sqrt(diag(C Psi_hat C'))
    Eigen::VectorXd t;       // effects ./ ses
    double t0 = 0.0;         // max_l |t_l|
};

TestStats test_statistics(const ContrastMatrix& C, const FittedAncova& fit);

// Plug-in correlation matrix of the contrast statistics,
// diag(V)^{-1/2} V diag(V)^{-1/2} with V = C Psi_hat C'.
CorrelationMatrix correlation(const ContrastMatrix& C, const FittedAncova& fit);

struct BoxDfResult {
    Eigen::VectorXd nu; // per-contrast Satterthwaite df, clamped to >= 1
    bool clamped = false;
};

// Satterthwaite-type df matching the first two moments of c'Psi_hat c.
// Requires group-wise variance estimation.
BoxDfResult box_dfs(const ContrastMatrix& C, const DesignBundle& design,
                    const FittedAncova& fit);

// Applies the rule to the raw df vector and rounds to the nearest integer
// (never below 1).
double select_df(const BoxDfResult& box, DfRule rule);

struct MctpOptions {
    double alpha = 0.05;
    InferenceMethod method = InferenceMethod::MvtApprox;
    DfRule rule = DfRule::Min;
    std::uint64_t seed = 1;
    double tol = 1e-3;            // |estimated coverage - target| stopping rule
    int n_shifts = 12;
    int n_points = 4096;
    std::int64_t max_samples = 50000000;
};

struct MctpRow {
    std::string label;
    double effect = 0.0;
    double se = 0.0;
    double statistic = 0.0;
    double p_adj = 1.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
    bool reject = false;
};

struct MctpResult {
    std::vector<MctpRow> rows;
    Eigen::MatrixXd R_hat;
    bool r_repaired = false;

    Eigen::VectorXd nu_raw;   // per-contrast df before rounding (empty if normal)
    double df_min = 0.0;      // rounded candidates under each rule
    double df_mean = 0.0;
    double df_max = 0.0;
    double df_used = 0.0;     // +inf for the normal reference

    double crit = 0.0;        // equicoordinate critical value
    double crit_se = 0.0;
    double global_stat = 0.0; // max_l |t_l|
    double global_p = 1.0;    // min_l p_adj
    bool global_reject = false;

    double alpha = 0.05;
    std::string method;
    std::uint64_t seed = 0;
    int n_boot = 0;
    int n_degenerate = 0;
    std::vector<std::string> warnings;
};

// Runs the full simultaneous test: statistics, critical value, adjusted
// p-values, and compatible confidence intervals. The three decision paths
// (|t| vs critical value, interval excluding zero, p vs alpha) agree
// exactly by construction.
MctpResult run_mctp(const DesignBundle& design, const ContrastMatrix& C,
                    const FittedAncova& fit, const MctpOptions& opt);

} // namespace mctp

#endif
