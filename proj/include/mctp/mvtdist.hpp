#ifndef MCTP_MVTDIST_HPP
#define MCTP_MVTDIST_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "mctp/errors.hpp"

namespace mctp {

// Degrees of freedom of the reference distribution: a positive integer, or
// the normal limit (df.is_finite() == false).
struct Df {
    int nu = 0; // 0 encodes the normal case

    static Df normal() { return Df{0}; }
    static Df t(int nu_) {
        if (nu_ < 1) fail(ErrorCode::ConfigError, "t degrees of freedom must be >= 1");
        return Df{nu_};
    }
    bool is_finite() const { return nu > 0; }
};

struct CorrelationMatrix {
    Eigen::MatrixXd R;  // validated correlation matrix (after any repair)
    Eigen::MatrixXd L;  // lower-triangular factor with L L' = R (PSD-tolerant)
    bool repaired = false;

    // Validates symmetry and the unit diagonal. Eigenvalues in (-1e-8, 0)
    // are clipped to zero and the matrix renormalized; anything more
    // negative is rejected.
    static CorrelationMatrix make(const Eigen::MatrixXd& R_in);
    int dim() const { return static_cast<int>(R.rows()); }
};

struct ProbEstimate {
    double p = 0;  // P(|T_1| <= c, ..., |T_q| <= c)
    double se = 0; // standard error across randomized shifts
};

struct QuantileRequest {
    double level = 0.95;
    Df df = Df::normal();
    CorrelationMatrix R;
    std::uint64_t seed = 1;
    double tol = 1e-3;                       // probability tolerance at the root
    std::int64_t max_samples = 50000000;     // total integrand evaluations budget
    int n_shifts = 12;                       // randomized shifts of the point set
    int n_points = 4096;                     // points per shift
};

struct QuantileResult {
    double c = 0;
    double achieved_p = 0;      // estimated probability at c
    double se = 0;              // standard error of that estimate
    std::int64_t samples_used = 0;
};

// Randomized quasi-Monte Carlo evaluation of central equicoordinate
// rectangle probabilities, by sequential conditioning on a reordered
// Cholesky factor (lattice points with per-shift random offsets and a
// baker transform). The dependence structure is always Gaussian; finite
// df gives the coordinates t margins by mapping the threshold through
// the t and normal distribution functions, so with R = I the joint law
// factorizes into its margins for every df. Every result is a
// deterministic function of (R, df, seed, n_shifts, n_points); the
// variable order is frozen at construction so that repeated probability
// evaluations share one integration grid.
class MvtEngine {
public:
    // c_ref centers the variable-reordering heuristic; any positive value
    // is valid, a rough guess of the working threshold helps variance.
    MvtEngine(const CorrelationMatrix& R, Df df, std::uint64_t seed,
              int n_shifts, int n_points, double c_ref);

    ProbEstimate prob(double c) const;

    // Smallest c with |P(c) - level| <= tol, by bracketed root refinement on
    // the frozen grid. Throws NoConvergence when max_samples is exhausted.
    QuantileResult quantile(double level, double tol, std::int64_t max_samples) const;

    std::int64_t samples_per_eval() const;
    int dim() const { return q_; }

private:
    int q_;
    Df df_;
    int n_shifts_;
    int n_points_;
    Eigen::MatrixXd L_;                 // reordered Cholesky factor
    std::vector<double> generators_;    // one lattice generator per coordinate
    Eigen::MatrixXd shifts_;            // n_coords x n_shifts
    mutable std::int64_t samples_used_ = 0;

    void build_order_and_factor(const Eigen::MatrixXd& R, double c_ref);
    friend struct MvtEngineTestAccess;
};

ProbEstimate rect_prob(double c, Df df, const CorrelationMatrix& R, std::uint64_t seed,
                       int n_shifts = 12, int n_points = 4096);

QuantileResult equi_quantile(const QuantileRequest& req);

// Multiplicity-adjusted p-values p_l = 1 - P(max_j |T_j| <= |t_l|), all
// evaluated on one frozen grid (seeded as in equi_quantile).
Eigen::VectorXd adj_pvalues(const Eigen::VectorXd& t_obs, Df df, const CorrelationMatrix& R,
                            std::uint64_t seed, int n_shifts = 12, int n_points = 4096);

// Two-sided univariate quantile F^{-1}((1+level)/2) of the normal or t
// reference; used for brackets and the q = 1 shortcut.
double univariate_two_sided_quantile(double level, Df df);
double univariate_cdf(double x, Df df);

} // namespace mctp

#endif
