#ifndef MCTP_ESTIMATION_HPP
#define MCTP_ESTIMATION_HPP

#include <Eigen/Dense>
#include <string>

#include "mctp/design.hpp"

namespace mctp {

enum class VarianceMode { GroupWise, SubjectWise, Homoscedastic };

const char* variance_mode_name(VarianceMode mode);
VarianceMode variance_mode_from_name(const std::string& name);

struct GroupVariances {
    Eigen::VectorXd sigma2; // a, unbiased per-cell residual variances
    Eigen::VectorXd dfs;    // a, denominators n_i - 1 - rank(M_i)
};

// Per-cell residual variance from the cell sub-model [1 M_i]. `response`
// must be in the design's sorted row order (as design.y is).
GroupVariances group_variances(const DesignBundle& design, const Eigen::VectorXd& response);

// Squared residuals of the full OLS fit of `response` on B, sorted order.
Eigen::VectorXd subject_variances(const DesignBundle& design, const Eigen::VectorXd& response);

struct FittedAncova {
    VarianceMode mode = VarianceMode::GroupWise;
    Eigen::VectorXd b_hat;        // a, adjusted cell effects
    Eigen::VectorXd p_hat;        // m, covariate slopes
    Eigen::MatrixXd Psi_hat;      // a x a covariance of b_hat
    Eigen::MatrixXd Xi_hat;       // m x m covariance of p_hat
    Eigen::VectorXd residuals;    // N, y - X b_hat - M p_hat, sorted order
    Eigen::VectorXd sigma2_group; // a  (GroupWise only)
    Eigen::VectorXd dfs_group;    // a  (GroupWise only)
    Eigen::VectorXd eps2_subject; // N  (SubjectWise only)
    double pooled_sigma2 = 0.0;   //    (Homoscedastic only)

    // Generating matrices: b_hat = D y, p_hat = A y, so any contrast of
    // effects is a linear statistic with row weights c'D over observations.
    Eigen::MatrixXd D; // a x N
    Eigen::MatrixXd A; // m x N
};

// Two-stage estimation. GroupWise: per-cell variances, then feasible GLS
// with the block-constant plug-in covariance (single pass, no iteration).
// SubjectWise: OLS effects with the squared-residual sandwich covariance.
// Homoscedastic: OLS effects with a pooled variance scale.
FittedAncova fit(const DesignBundle& design, VarianceMode mode);

} // namespace mctp

#endif
