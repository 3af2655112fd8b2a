#include "mctp/mvtdist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/students_t.hpp>

#include "mctp/detail/normal.hpp"
#include "mctp/detail/rng.hpp"

namespace mctp {

using detail::norm_cdf;
using detail::norm_pdf;
using detail::norm_quantile;

namespace {

constexpr double kEps = 1e-13;

// Lower-triangular Cholesky factor that tolerates semidefinite input:
// non-positive pivots produce a zero row/column instead of failing.
Eigen::MatrixXd psd_cholesky(const Eigen::MatrixXd& A, double* max_defect) {
    const int n = static_cast<int>(A.rows());
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
    const double tol = 1e-12 * std::max(1.0, A.diagonal().maxCoeff());
    for (int j = 0; j < n; ++j) {
        double d = A(j, j) - L.row(j).head(j).squaredNorm();
        if (d <= tol) {
            L(j, j) = 0.0;
            continue;
        }
        L(j, j) = std::sqrt(d);
        for (int i = j + 1; i < n; ++i)
            L(i, j) = (A(i, j) - L.row(i).head(j).dot(L.row(j).head(j))) / L(j, j);
    }
    if (max_defect) *max_defect = (L * L.transpose() - A).cwiseAbs().maxCoeff();
    return L;
}

double tent(double x) {
    double v = std::fabs(2.0 * x - 1.0);
    if (v < 1e-16) v = 1e-16;
    if (v > 1.0 - 1e-16) v = 1.0 - 1e-16;
    return v;
}

std::vector<int> first_primes(int count) {
    std::vector<int> primes;
    for (int c = 2; static_cast<int>(primes.size()) < count; ++c) {
        bool is_prime = true;
        for (int p : primes) {
            if (p * p > c) break;
            if (c % p == 0) { is_prime = false; break; }
        }
        if (is_prime) primes.push_back(c);
    }
    return primes;
}

} // namespace

CorrelationMatrix CorrelationMatrix::make(const Eigen::MatrixXd& R_in) {
    const int q = static_cast<int>(R_in.rows());
    if (R_in.cols() != q || q < 1)
        fail(ErrorCode::ConfigError, "correlation matrix must be square and non-empty");
    if ((R_in - R_in.transpose()).cwiseAbs().maxCoeff() > 1e-10)
        fail(ErrorCode::ConfigError, "correlation matrix is not symmetric");

    Eigen::MatrixXd R = 0.5 * (R_in + R_in.transpose());
    for (int i = 0; i < q; ++i) {
        if (std::fabs(R(i, i) - 1.0) > 1e-12)
            fail(ErrorCode::ConfigError, "correlation matrix diagonal entry " + std::to_string(i) +
                                         " is not 1");
        R(i, i) = 1.0;
    }

    CorrelationMatrix out;
    out.repaired = false;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(R);
    double min_eig = es.eigenvalues().minCoeff();
    if (min_eig < -1e-8)
        fail(ErrorCode::NotPositiveSemidefinite,
             "correlation matrix has eigenvalue " + std::to_string(min_eig) +
             " below the repairable tolerance");
    if (min_eig < 0.0) {
        // Clip the marginally negative spectrum and restore a unit diagonal.
        Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
        Eigen::MatrixXd Rc = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
        Eigen::VectorXd d = Rc.diagonal().cwiseMax(1e-12).cwiseSqrt().cwiseInverse();
        R = d.asDiagonal() * Rc * d.asDiagonal();
        R = 0.5 * (R + R.transpose());
        for (int i = 0; i < q; ++i) R(i, i) = 1.0;
        out.repaired = true;
    }

    double defect = 0.0;
    Eigen::MatrixXd L = psd_cholesky(R, &defect);
    if (defect > 1e-8)
        fail(ErrorCode::NotPositiveSemidefinite,
             "correlation matrix could not be factored after repair (residual " +
             std::to_string(defect) + ")");

    out.R = std::move(R);
    out.L = std::move(L);
    return out;
}

double univariate_cdf(double x, Df df) {
    if (!df.is_finite()) return norm_cdf(x);
    boost::math::students_t_distribution<double> t(df.nu);
    return boost::math::cdf(t, x);
}

double univariate_two_sided_quantile(double level, Df df) {
    if (level <= 0.0 || level >= 1.0)
        fail(ErrorCode::ConfigError, "confidence level must lie strictly between 0 and 1");
    double p = 0.5 * (1.0 + level);
    if (!df.is_finite()) return norm_quantile(p);
    boost::math::students_t_distribution<double> t(df.nu);
    return boost::math::quantile(t, p);
}

namespace {

// Threshold with the same one-sided tail mass under the standard normal as
// c has under t(nu). Mapping the rectangle bound through this function gives
// the coordinates t margins while the dependence stays Gaussian, so an
// identity correlation factorizes the joint law exactly, for any df.
// Working on the upper tail keeps the map accurate for large c.
double normal_equivalent_limit(double c, int nu) {
    if (!std::isfinite(c)) return c;
    boost::math::students_t_distribution<double> t(nu);
    double tail = boost::math::cdf(boost::math::complement(t, c));
    if (tail <= 0.0) return std::numeric_limits<double>::infinity();
    if (tail >= 0.5) return 0.0;
    return -detail::norm_quantile(tail);
}

} // namespace

void MvtEngine::build_order_and_factor(const Eigen::MatrixXd& R, double c_ref) {
    const int q = q_;
    Eigen::MatrixXd A = R;
    L_ = Eigen::MatrixXd::Zero(q, q);
    std::vector<double> y(q, 0.0);

    // Greedy ordering: at each stage take the variable with the smallest
    // conditional probability of staying inside [-c, c], propagating the
    // truncated-normal mean of the already-fixed variables.
    for (int i = 0; i < q; ++i) {
        int best = i;
        double best_p = std::numeric_limits<double>::infinity();
        for (int j = i; j < q; ++j) {
            double var = A(j, j) - L_.row(j).head(i).squaredNorm();
            double mu = 0.0;
            for (int t = 0; t < i; ++t) mu += L_(j, t) * y[t];
            double pj;
            if (var <= kEps) {
                pj = (std::fabs(mu) <= c_ref) ? 1.0 : 0.0;
            } else {
                double sd = std::sqrt(var);
                pj = norm_cdf((c_ref - mu) / sd) - norm_cdf((-c_ref - mu) / sd);
            }
            if (pj < best_p - 1e-15) {
                best_p = pj;
                best = j;
            }
        }
        if (best != i) {
            A.row(i).swap(A.row(best));
            A.col(i).swap(A.col(best));
            L_.row(i).swap(L_.row(best));
        }

        double var = A(i, i) - L_.row(i).head(i).squaredNorm();
        if (var <= kEps) {
            L_(i, i) = 0.0;
            y[i] = 0.0;
            continue;
        }
        L_(i, i) = std::sqrt(var);
        for (int j = i + 1; j < q; ++j)
            L_(j, i) = (A(j, i) - L_.row(j).head(i).dot(L_.row(i).head(i))) / L_(i, i);

        double mu = 0.0;
        for (int t = 0; t < i; ++t) mu += L_(i, t) * y[t];
        double lo = (-c_ref - mu) / L_(i, i);
        double hi = (c_ref - mu) / L_(i, i);
        double p = std::max(norm_cdf(hi) - norm_cdf(lo), 1e-300);
        y[i] = (norm_pdf(lo) - norm_pdf(hi)) / p;
    }
}

MvtEngine::MvtEngine(const CorrelationMatrix& R, Df df, std::uint64_t seed,
                     int n_shifts, int n_points, double c_ref)
    : q_(R.dim()),
      df_(df),
      n_shifts_(std::max(2, n_shifts)),
      n_points_(std::max(16, n_points)) {
    if (c_ref <= 0.0 || !std::isfinite(c_ref)) c_ref = 2.0;
    build_order_and_factor(R.R, c_ref);

    // The innermost conditioned variable integrates out analytically, so
    // q coordinates need q-1 lattice dimensions.
    const int n_coords = std::max(1, q_ - 1);
    std::vector<int> primes = first_primes(n_coords);
    generators_.resize(n_coords);
    for (int g = 0; g < n_coords; ++g) {
        double s = std::sqrt(static_cast<double>(primes[g]));
        generators_[g] = s - std::floor(s);
    }

    detail::SplitMix rng(detail::derive_seed(seed, 0x6d76u));
    shifts_.resize(n_coords, n_shifts_);
    for (int k = 0; k < n_shifts_; ++k)
        for (int g = 0; g < n_coords; ++g) shifts_(g, k) = rng.next_double();
}

std::int64_t MvtEngine::samples_per_eval() const {
    return static_cast<std::int64_t>(n_shifts_) * n_points_;
}

ProbEstimate MvtEngine::prob(double c) const {
    if (!(c > 0.0))
        fail(ErrorCode::ConfigError, "rectangle half-width must be positive");

    if (q_ == 1) {
        double p = univariate_cdf(c, df_) - univariate_cdf(-c, df_);
        return {std::clamp(p, 0.0, 1.0), 0.0};
    }

    const int q = q_;
    const double cl = df_.is_finite() ? normal_equivalent_limit(c, df_.nu) : c;
    std::vector<double> shift_est(n_shifts_);
    std::vector<double> x(generators_.size());
    std::vector<double> y(q, 0.0);

    for (int k = 0; k < n_shifts_; ++k) {
        for (std::size_t g = 0; g < x.size(); ++g) x[g] = shifts_(static_cast<int>(g), k);
        double sum = 0.0;
        for (int j = 0; j < n_points_; ++j) {
            for (std::size_t g = 0; g < x.size(); ++g) {
                x[g] += generators_[g];
                if (x[g] >= 1.0) x[g] -= 1.0;
            }
            double w = 1.0;
            for (int i = 0; i < q; ++i) {
                double mu = 0.0;
                for (int t = 0; t < i; ++t) mu += L_(i, t) * y[t];
                double lii = L_(i, i);
                if (lii <= 0.0) {
                    // Degenerate direction: the coordinate is determined by
                    // its predecessors; it only gates the sample.
                    if (std::fabs(mu) > cl) { w = 0.0; break; }
                    y[i] = 0.0;
                    continue;
                }
                double d = norm_cdf((-cl - mu) / lii);
                double e = norm_cdf((cl - mu) / lii);
                if (e <= d) { w = 0.0; break; }
                w *= (e - d);
                if (i + 1 < q) {
                    double u = tent(x[i]);
                    double z = d + u * (e - d);
                    if (z < 1e-16) z = 1e-16;
                    if (z > 1.0 - 1e-16) z = 1.0 - 1e-16;
                    y[i] = norm_quantile(z);
                }
            }
            sum += w;
        }
        shift_est[k] = sum / n_points_;
    }
    samples_used_ += samples_per_eval();

    double mean = 0.0;
    for (double v : shift_est) mean += v;
    mean /= n_shifts_;
    double var = 0.0;
    for (double v : shift_est) var += (v - mean) * (v - mean);
    var /= (n_shifts_ - 1.0);
    double se = std::sqrt(var / n_shifts_);
    return {std::clamp(mean, 0.0, 1.0), se};
}

QuantileResult MvtEngine::quantile(double level, double tol, std::int64_t max_samples) const {
    if (level <= 0.0 || level >= 1.0)
        fail(ErrorCode::ConfigError, "confidence level must lie strictly between 0 and 1");
    if (tol <= 0.0) fail(ErrorCode::ConfigError, "probability tolerance must be positive");

    if (q_ == 1) {
        double c = univariate_two_sided_quantile(level, df_);
        return {c, level, 0.0, 0};
    }

    const std::int64_t start_used = samples_used_;
    auto used = [&]() { return samples_used_ - start_used; };
    auto ensure_budget = [&]() {
        if (used() + samples_per_eval() > max_samples)
            fail(ErrorCode::NoConvergence,
                 "quantile search exhausted its sample budget (" + std::to_string(max_samples) +
                 " integrand evaluations)");
    };

    const double alpha = 1.0 - level;
    double cl = univariate_two_sided_quantile(level, df_);            // joint prob <= level here
    double ch = univariate_two_sided_quantile(1.0 - alpha / q_, df_); // Bonferroni bound

    ensure_budget();
    ProbEstimate pl = prob(cl);
    if (std::fabs(pl.p - level) <= tol) return {cl, pl.p, pl.se, used()};

    ensure_budget();
    ProbEstimate ph = prob(ch);
    if (std::fabs(ph.p - level) <= tol) return {ch, ph.p, ph.se, used()};

    // The brackets are analytic bounds; MC noise can still leave the target
    // outside, so widen defensively before refining.
    int guard = 0;
    while (pl.p > level && guard++ < 5) {
        cl *= 0.8;
        ensure_budget();
        pl = prob(cl);
        if (std::fabs(pl.p - level) <= tol) return {cl, pl.p, pl.se, used()};
    }
    guard = 0;
    while (ph.p < level && guard++ < 8) {
        ch *= 1.25;
        ensure_budget();
        ph = prob(ch);
        if (std::fabs(ph.p - level) <= tol) return {ch, ph.p, ph.se, used()};
    }
    if (pl.p > level || ph.p < level)
        fail(ErrorCode::NoConvergence, "could not bracket the equicoordinate quantile");

    // First interior point: independence-based guess, then Illinois steps.
    double c_next = univariate_two_sided_quantile(std::pow(level, 1.0 / q_), df_);
    if (!(c_next > cl && c_next < ch)) c_next = 0.5 * (cl + ch);

    int side = 0;
    for (int it = 0; it < 200; ++it) {
        ensure_budget();
        ProbEstimate pm = prob(c_next);
        if (std::fabs(pm.p - level) <= tol) return {c_next, pm.p, pm.se, used()};
        if (pm.p < level) {
            cl = c_next;
            pl = pm;
            if (side == -1) ph.p = level + 0.5 * (ph.p - level);
            side = -1;
        } else {
            ch = c_next;
            ph = pm;
            if (side == +1) pl.p = level - 0.5 * (level - pl.p);
            side = +1;
        }
        double denom = ph.p - pl.p;
        if (denom <= 0.0 || ch - cl < 1e-12 * ch) {
            c_next = 0.5 * (cl + ch);
        } else {
            c_next = ch - (ph.p - level) * (ch - cl) / denom;
            double w = ch - cl;
            c_next = std::clamp(c_next, cl + 0.01 * w, ch - 0.01 * w);
        }
    }
    fail(ErrorCode::NoConvergence, "equicoordinate quantile refinement did not reach tolerance");
}

ProbEstimate rect_prob(double c, Df df, const CorrelationMatrix& R, std::uint64_t seed,
                       int n_shifts, int n_points) {
    MvtEngine engine(R, df, seed, n_shifts, n_points, c);
    return engine.prob(c);
}

QuantileResult equi_quantile(const QuantileRequest& req) {
    double c_ref = univariate_two_sided_quantile(std::pow(req.level, 1.0 / req.R.dim()), req.df);
    MvtEngine engine(req.R, req.df, req.seed, req.n_shifts, req.n_points, c_ref);
    return engine.quantile(req.level, req.tol, req.max_samples);
}

Eigen::VectorXd adj_pvalues(const Eigen::VectorXd& t_obs, Df df, const CorrelationMatrix& R,
                            std::uint64_t seed, int n_shifts, int n_points) {
    for (int i = 0; i < t_obs.size(); ++i)
        if (!std::isfinite(t_obs(i)))
            fail(ErrorCode::NonFiniteInput, "observed statistic " + std::to_string(i) + " is not finite");
    double c_ref = t_obs.cwiseAbs().maxCoeff();
    MvtEngine engine(R, df, seed, n_shifts, n_points, c_ref);
    Eigen::VectorXd p(t_obs.size());
    for (int i = 0; i < t_obs.size(); ++i) {
        double t_abs = std::fabs(t_obs(i));
        if (t_abs <= 0.0) {
            p(i) = 1.0;
        } else {
            p(i) = std::clamp(1.0 - engine.prob(t_abs).p, 0.0, 1.0);
        }
    }
    return p;
}

} // namespace mctp
