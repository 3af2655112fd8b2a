#ifndef MCTP_BOOTSTRAP_HPP
#define MCTP_BOOTSTRAP_HPP

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "mctp/design.hpp"
#include "mctp/estimation.hpp"
#include "mctp/inference.hpp"

namespace mctp {

struct BootstrapSettings {
    int n_boot = 10000;
    std::uint64_t seed = 1;
};

// Residuals rescaled by 1/sqrt(1 - leverage) so the sign-flipped draws
// have second moments matching the per-subject error variances.
Eigen::VectorXd scaled_residuals(const DesignBundle& design, const FittedAncova& fit);

struct BootstrapSample {
    std::vector<double> t0;  // max-|t| statistic per replicate, +inf when degenerate
    int n_degenerate = 0;
};

// Wild bootstrap distribution of the maximum statistic: sign-flip the
// leverage-scaled residuals, refit, and studentize each contrast with the
// refitted subject-wise covariance. Replicates whose denominator collapses
// count as +inf.
BootstrapSample bootstrap_distribution(const DesignBundle& design, const ContrastMatrix& C,
                                       const FittedAncova& fit, int n_boot,
                                       std::uint64_t seed);

// Critical value for the bootstrap test: the order statistic whose exceedance
// count reproduces the p-value rule (1 + #{T0* >= |t|}) / (n_boot + 1) <= alpha
// exactly, ties included. +inf when no order statistic is deep enough.
double bootstrap_critical_value(std::vector<double> t0, double alpha);

MctpResult run_mctp_boot(const DesignBundle& design, const ContrastMatrix& C,
                         const FittedAncova& fit, double alpha,
                         const BootstrapSettings& settings);

} // namespace mctp

#endif
