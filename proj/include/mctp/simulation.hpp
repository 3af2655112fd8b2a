#ifndef MCTP_SIMULATION_HPP
#define MCTP_SIMULATION_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mctp/design.hpp"
#include "mctp/errors.hpp"

namespace mctp {

enum class SizePattern {
    Balanced,        // (8, ..., 8) + increment
    NegativePairing, // (8, 10, 13, 17, 20) truncated to a, + increment
    PositivePairing, // (20, 17, 13, 10, 8) truncated to a, + increment
    Custom,          // explicit per-group sizes
};

enum class VariancePattern {
    Homoscedastic, // sigma_i = 1
    GroupWise,     // (sigma1, 1.5, 1, 0.5, 0.75) truncated to a
    Complete,      // per-subject sigma_ik ~ U(0.5, 4)
};

enum class ErrorLaw { Normal, T5, ChiSq12, Exp1 };

enum class AltKind {
    Null,
    Alt1, // first ceil((a-1)/2) group effects shifted by -delta
    Alt2, // first ceil((a-2)/2) shifted by -delta, the next block by +delta
};

enum class SimMethod { MvtMin, MvtMean, MvtMax, Normal, Boot };

std::string sim_method_name(SimMethod m);
SimMethod sim_method_from_name(const std::string& name);
std::string size_pattern_name(SizePattern p);
std::string variance_pattern_name(VariancePattern p);
std::string error_law_name(ErrorLaw law);
ErrorLaw error_law_from_name(const std::string& name);

struct SimSetting {
    int a = 3;
    SizePattern sizes = SizePattern::Balanced;
    int increment = 0;
    std::vector<int> custom_sizes;

    VariancePattern variance = VariancePattern::Homoscedastic;
    double sigma1 = 2.0; // leading sd under group-wise heteroscedasticity

    ErrorLaw law = ErrorLaw::Normal;
    ContrastKind contrast_kind = ContrastKind::Dunnett;

    AltKind alternative = AltKind::Null;
    double delta = 0.0;
    int alt_block = -1; // override for the shifted block length (-1: default rule)

    int m = 4; // covariates, drawn N(7,1) with effects from (0.2, 1, 1.5, 2)

    int n_sim = 2000;
    int n_boot = 1000;
    double alpha = 0.05;
    std::uint64_t master_seed = 1;

    // effort of the quantile engine inside replicates
    int n_shifts = 6;
    int n_points = 1024;

    void validate() const;
    std::vector<int> resolved_sizes() const;
    Eigen::VectorXd resolved_sigmas() const; // group sds (GroupWise/Homoscedastic)
    Eigen::VectorXd group_effects(double delta) const; // b_i including the shift
};

// One synthetic dataset. All randomness comes from rep_seed, so a replicate
// is reproducible independently of scheduling; the shift enters only through
// the group effects, letting power curves share draws across delta values.
AncovaDataset generate(const SimSetting& setting, std::uint64_t rep_seed,
                       double delta = 0.0);

struct StudyResult {
    std::string method;
    double delta = 0.0;
    int n_sim = 0;
    int n_reject = 0;
    double rate = 0.0;
    double ci_lower = 0.0; // Wilson 95% interval for the rejection rate
    double ci_upper = 0.0;
    int n_failures = 0;
    std::map<std::string, int> failure_codes;
};

// Rejection rate of the global test over n_sim independent replicates.
// Methods share each replicate's data, fit, and quantile engines. Workers
// only partition replicate indices; results are identical for any count.
std::vector<StudyResult> type1_study(const SimSetting& setting,
                                     const std::vector<SimMethod>& methods,
                                     int n_workers = 1);

// Power curve over a delta grid with common random numbers: the point at
// delta = 0 reproduces the type-I study exactly.
std::vector<StudyResult> power_study(const SimSetting& setting,
                                     const std::vector<SimMethod>& methods,
                                     const std::vector<double>& deltas,
                                     int n_workers = 1);

} // namespace mctp

#endif
