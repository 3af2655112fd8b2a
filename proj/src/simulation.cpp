#include "mctp/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "mctp/bootstrap.hpp"
#include "mctp/detail/normal.hpp"
#include "mctp/detail/rng.hpp"
#include "mctp/estimation.hpp"
#include "mctp/inference.hpp"

namespace mctp {

namespace {

const double kCovariateEffects[4] = {0.2, 1.0, 1.5, 2.0};
const int kBaseNP[5] = {8, 10, 13, 17, 20};
const int kBasePP[5] = {20, 17, 13, 10, 8};
const double kSigmaGW[5] = {0.0, 1.5, 1.0, 0.5, 0.75}; // leading entry from sigma1

double standardized_error(ErrorLaw law, detail::SplitMix& rng) {
    switch (law) {
        case ErrorLaw::Normal:
            return detail::norm_quantile(rng.next_open01());
        case ErrorLaw::T5: {
            double z = detail::norm_quantile(rng.next_open01());
            double s = 0.0;
            for (int k = 0; k < 5; ++k) {
                double v = detail::norm_quantile(rng.next_open01());
                s += v * v;
            }
            // t5 has variance 5/3; rescale to unit variance
            return z / std::sqrt(s / 5.0) / std::sqrt(5.0 / 3.0);
        }
        case ErrorLaw::ChiSq12: {
            double s = 0.0;
            for (int k = 0; k < 12; ++k) {
                double v = detail::norm_quantile(rng.next_open01());
                s += v * v;
            }
            return (s - 12.0) / std::sqrt(24.0);
        }
        case ErrorLaw::Exp1:
            return -std::log(rng.next_open01()) - 1.0;
    }
    fail(ErrorCode::ConfigError, "unknown error law");
}

} // namespace

std::string sim_method_name(SimMethod m) {
    switch (m) {
        case SimMethod::MvtMin: return "mvt-min";
        case SimMethod::MvtMean: return "mvt-mean";
        case SimMethod::MvtMax: return "mvt-max";
        case SimMethod::Normal: return "normal";
        case SimMethod::Boot: return "boot";
    }
    fail(ErrorCode::ConfigError, "unknown simulation method");
}

SimMethod sim_method_from_name(const std::string& name) {
    if (name == "mvt-min") return SimMethod::MvtMin;
    if (name == "mvt-mean") return SimMethod::MvtMean;
    if (name == "mvt-max") return SimMethod::MvtMax;
    if (name == "normal") return SimMethod::Normal;
    if (name == "boot") return SimMethod::Boot;
    fail(ErrorCode::ConfigError, "unknown method '" + name +
                                 "' (expected mvt-min, mvt-mean, mvt-max, normal, or boot)");
}

std::string size_pattern_name(SizePattern p) {
    switch (p) {
        case SizePattern::Balanced: return "balanced";
        case SizePattern::NegativePairing: return "negative-pairing";
        case SizePattern::PositivePairing: return "positive-pairing";
        case SizePattern::Custom: return "custom";
    }
    fail(ErrorCode::ConfigError, "unknown size pattern");
}

std::string variance_pattern_name(VariancePattern p) {
    switch (p) {
        case VariancePattern::Homoscedastic: return "homoscedastic";
        case VariancePattern::GroupWise: return "group-wise";
        case VariancePattern::Complete: return "complete";
    }
    fail(ErrorCode::ConfigError, "unknown variance pattern");
}

std::string error_law_name(ErrorLaw law) {
    switch (law) {
        case ErrorLaw::Normal: return "normal";
        case ErrorLaw::T5: return "t5";
        case ErrorLaw::ChiSq12: return "chisq12";
        case ErrorLaw::Exp1: return "exp1";
    }
    fail(ErrorCode::ConfigError, "unknown error law");
}

ErrorLaw error_law_from_name(const std::string& name) {
    if (name == "normal") return ErrorLaw::Normal;
    if (name == "t5") return ErrorLaw::T5;
    if (name == "chisq12") return ErrorLaw::ChiSq12;
    if (name == "exp1") return ErrorLaw::Exp1;
    fail(ErrorCode::ConfigError, "unknown error law '" + name +
                                 "' (expected normal, t5, chisq12, or exp1)");
}

void SimSetting::validate() const {
    if (a < 3 || a > 5)
        fail(ErrorCode::ConfigError, "simulation group count must be 3, 4, or 5");
    if (increment < 0)
        fail(ErrorCode::ConfigError, "size increment must be nonnegative");
    if (sizes == SizePattern::Custom) {
        if (static_cast<int>(custom_sizes.size()) != a)
            fail(ErrorCode::ConfigError, "custom sizes must list exactly one entry per group");
        for (int n : custom_sizes)
            if (n < 2) fail(ErrorCode::ConfigError, "every group needs at least 2 observations");
    }
    if (variance == VariancePattern::GroupWise && !(sigma1 > 0.0))
        fail(ErrorCode::ConfigError, "sigma1 must be positive");
    if (m < 0 || m > 4)
        fail(ErrorCode::ConfigError, "the generator supports 0 to 4 covariates");
    if (n_sim < 1) fail(ErrorCode::ConfigError, "n_sim must be at least 1");
    if (n_boot < 1) fail(ErrorCode::ConfigError, "n_boot must be at least 1");
    if (!(alpha > 0.0 && alpha < 1.0))
        fail(ErrorCode::ConfigError, "alpha must lie strictly between 0 and 1");
    if (delta < 0.0) fail(ErrorCode::ConfigError, "delta must be nonnegative");
    if (alternative == AltKind::Alt2) {
        int block = alt_block >= 0 ? alt_block : (a - 1) / 2;
        if (2 * block > a)
            fail(ErrorCode::ConfigError, "the two shifted blocks exceed the group count");
    }
    if (alt_block > a)
        fail(ErrorCode::ConfigError, "shifted block longer than the group count");
}

std::vector<int> SimSetting::resolved_sizes() const {
    std::vector<int> n(a);
    switch (sizes) {
        case SizePattern::Balanced:
            for (int i = 0; i < a; ++i) n[i] = 8 + increment;
            break;
        case SizePattern::NegativePairing:
            for (int i = 0; i < a; ++i) n[i] = kBaseNP[i] + increment;
            break;
        case SizePattern::PositivePairing:
            for (int i = 0; i < a; ++i) n[i] = kBasePP[i] + increment;
            break;
        case SizePattern::Custom:
            n = custom_sizes;
            break;
    }
    return n;
}

Eigen::VectorXd SimSetting::resolved_sigmas() const {
    Eigen::VectorXd s(a);
    switch (variance) {
        case VariancePattern::Homoscedastic:
            s.setOnes();
            break;
        case VariancePattern::GroupWise:
            for (int i = 0; i < a; ++i) s(i) = i == 0 ? sigma1 : kSigmaGW[i];
            break;
        case VariancePattern::Complete:
            fail(ErrorCode::ConfigError,
                 "complete heteroscedasticity has per-subject scales, not group sds");
    }
    return s;
}

Eigen::VectorXd SimSetting::group_effects(double d) const {
    Eigen::VectorXd b = Eigen::VectorXd::Constant(a, 7.0);
    if (d == 0.0) return b;
    switch (alternative) {
        case AltKind::Null:
            break;
        case AltKind::Alt1: {
            int block = alt_block >= 0 ? alt_block : a / 2; // ceil((a-1)/2)
            for (int i = 0; i < block && i < a; ++i) b(i) -= d;
            break;
        }
        case AltKind::Alt2: {
            int block = alt_block >= 0 ? alt_block : (a - 1) / 2; // ceil((a-2)/2)
            for (int i = 0; i < block; ++i) b(i) -= d;
            for (int i = block; i < 2 * block; ++i) b(i) += d;
            break;
        }
    }
    return b;
}

AncovaDataset generate(const SimSetting& setting, std::uint64_t rep_seed, double delta) {
    std::vector<int> sizes = setting.resolved_sizes();
    const int a = setting.a;
    const int m = setting.m;
    int N = 0;
    for (int n : sizes) N += n;

    detail::SplitMix rng(rep_seed);

    AncovaDataset d;
    d.response.resize(N);
    d.covariates.resize(N, m);
    d.groups.reserve(N);
    d.factor_names = {"group"};
    for (int k = 0; k < m; ++k) d.covariate_names.push_back("x" + std::to_string(k + 1));

    for (int r = 0; r < N; ++r)
        for (int k = 0; k < m; ++k)
            d.covariates(r, k) = 7.0 + detail::norm_quantile(rng.next_open01());

    Eigen::VectorXd scale(N);
    if (setting.variance == VariancePattern::Complete) {
        for (int r = 0; r < N; ++r) scale(r) = 0.5 + 3.5 * rng.next_open01();
    } else {
        Eigen::VectorXd s = setting.resolved_sigmas();
        int r = 0;
        for (int i = 0; i < a; ++i)
            for (int j = 0; j < sizes[i]; ++j, ++r) scale(r) = s(i);
    }

    Eigen::VectorXd b = setting.group_effects(delta);
    int r = 0;
    for (int i = 0; i < a; ++i) {
        std::string label = "g" + std::to_string(i + 1);
        for (int j = 0; j < sizes[i]; ++j, ++r) {
            d.groups.push_back({label});
            double mean = b(i);
            for (int k = 0; k < m; ++k) mean += kCovariateEffects[k] * d.covariates(r, k);
            d.response(r) = mean + scale(r) * standardized_error(setting.law, rng);
        }
    }
    return d;
}

namespace {

struct ReplicateOutcome {
    // one decision per method: 1 reject, 0 accept, -1 failed
    std::vector<signed char> decision;
    std::vector<std::string> failure;
};

void wilson_interval(int k, int n, double& lo, double& hi) {
    const double z = 1.959963984540054;
    double p = static_cast<double>(k) / n;
    double z2 = z * z;
    double denom = 1.0 + z2 / n;
    double center = (p + z2 / (2.0 * n)) / denom;
    double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    lo = std::max(0.0, center - half);
    hi = std::min(1.0, center + half);
}

// Evaluates every requested method on one generated dataset. The engine
// seed is shared across replicates so that the integration grid is common
// to the whole study; data randomness comes solely from the replicate seed.
ReplicateOutcome run_replicate(const SimSetting& setting,
                               const std::vector<SimMethod>& methods,
                               std::uint64_t rep_seed, double delta,
                               std::uint64_t engine_seed) {
    const int n_methods = static_cast<int>(methods.size());
    ReplicateOutcome out;
    out.decision.assign(n_methods, -1);
    out.failure.assign(n_methods, "");

    AncovaDataset data;
    DesignBundle design;
    ContrastMatrix C;
    try {
        data = generate(setting, rep_seed, delta);
        design = build_design(data);
        C = contrast(setting.contrast_kind, setting.a);
    } catch (const Error& e) {
        for (int i = 0; i < n_methods; ++i) out.failure[i] = error_code_name(e.code());
        return out;
    }

    bool need_group = false, need_subject = false;
    for (SimMethod m : methods)
        (m == SimMethod::Boot ? need_subject : need_group) = true;

    FittedAncova fit_g, fit_s;
    TestStats stats_g, stats_s;
    CorrelationMatrix R_g;
    BoxDfResult box;
    std::string group_failure, subject_failure;
    bool have_box = false;

    if (need_group) {
        try {
            fit_g = fit(design, VarianceMode::GroupWise);
            stats_g = test_statistics(C, fit_g);
            R_g = correlation(C, fit_g);
        } catch (const Error& e) {
            group_failure = error_code_name(e.code());
        }
    }
    if (need_subject) {
        try {
            fit_s = fit(design, VarianceMode::SubjectWise);
            stats_s = test_statistics(C, fit_s);
        } catch (const Error& e) {
            subject_failure = error_code_name(e.code());
        }
    }

    // distinct t degrees of freedom -> critical value, shared between rules
    std::map<int, double> crit_by_df;
    double crit_normal = -1.0;

    for (int i = 0; i < n_methods; ++i) {
        SimMethod method = methods[i];
        try {
            if (method == SimMethod::Boot) {
                if (!subject_failure.empty()) { out.failure[i] = subject_failure; continue; }
                BootstrapSample sample = bootstrap_distribution(
                    design, C, fit_s, setting.n_boot,
                    detail::derive_seed(rep_seed, 0x626f6f74ULL));
                if (sample.n_degenerate > 0.01 * setting.n_boot)
                    fail(ErrorCode::DegenerateBootstrap, "degenerate bootstrap replicates");
                double crit = bootstrap_critical_value(sample.t0, setting.alpha);
                out.decision[i] = stats_s.t0 > crit ? 1 : 0;
                continue;
            }
            if (!group_failure.empty()) { out.failure[i] = group_failure; continue; }

            double crit;
            if (method == SimMethod::Normal) {
                if (crit_normal < 0.0) {
                    double c_ref = univariate_two_sided_quantile(
                        std::pow(1.0 - setting.alpha, 1.0 / R_g.dim()), Df::normal());
                    MvtEngine engine(R_g, Df::normal(), engine_seed,
                                     setting.n_shifts, setting.n_points, c_ref);
                    crit_normal = engine.quantile(1.0 - setting.alpha, 1e-3, 50000000).c;
                }
                crit = crit_normal;
            } else {
                if (!have_box) {
                    box = box_dfs(C, design, fit_g);
                    have_box = true;
                }
                DfRule rule = method == SimMethod::MvtMin   ? DfRule::Min
                              : method == SimMethod::MvtMean ? DfRule::Mean
                                                             : DfRule::Max;
                int df = static_cast<int>(select_df(box, rule));
                auto it = crit_by_df.find(df);
                if (it == crit_by_df.end()) {
                    double c_ref = univariate_two_sided_quantile(
                        std::pow(1.0 - setting.alpha, 1.0 / R_g.dim()), Df::t(df));
                    MvtEngine engine(R_g, Df::t(df), engine_seed,
                                     setting.n_shifts, setting.n_points, c_ref);
                    it = crit_by_df
                             .emplace(df, engine.quantile(1.0 - setting.alpha, 1e-3, 50000000).c)
                             .first;
                }
                crit = it->second;
            }
            out.decision[i] = stats_g.t0 > crit ? 1 : 0;
        } catch (const Error& e) {
            out.failure[i] = error_code_name(e.code());
        }
    }
    return out;
}

std::vector<StudyResult> run_study(const SimSetting& setting,
                                   const std::vector<SimMethod>& methods,
                                   double delta, int n_workers) {
    setting.validate();
    if (methods.empty())
        fail(ErrorCode::ConfigError, "no methods requested");

    const int n_sim = setting.n_sim;
    const int n_methods = static_cast<int>(methods.size());
    const std::uint64_t engine_seed = detail::derive_seed(setting.master_seed, 0x656e67ULL);

    std::vector<ReplicateOutcome> slots(n_sim);
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            int r = next.fetch_add(1);
            if (r >= n_sim) return;
            std::uint64_t rep_seed =
                detail::derive_seed(setting.master_seed, static_cast<std::uint64_t>(r));
            slots[r] = run_replicate(setting, methods, rep_seed, delta, engine_seed);
        }
    };

    int workers = std::max(1, n_workers);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    std::vector<StudyResult> results(n_methods);
    for (int i = 0; i < n_methods; ++i) {
        StudyResult& res = results[i];
        res.method = sim_method_name(methods[i]);
        res.delta = delta;
        res.n_sim = n_sim;
        for (int r = 0; r < n_sim; ++r) {
            const ReplicateOutcome& o = slots[r];
            if (o.decision[i] < 0) {
                ++res.n_failures;
                ++res.failure_codes[o.failure[i].empty() ? "unknown" : o.failure[i]];
            } else if (o.decision[i] == 1) {
                ++res.n_reject;
            }
        }
        res.rate = static_cast<double>(res.n_reject) / n_sim;
        wilson_interval(res.n_reject, n_sim, res.ci_lower, res.ci_upper);
    }
    return results;
}

} // namespace

std::vector<StudyResult> type1_study(const SimSetting& setting,
                                     const std::vector<SimMethod>& methods,
                                     int n_workers) {
    if (setting.alternative != AltKind::Null)
        fail(ErrorCode::ConfigError, "the type-I error study requires the null alternative");
    return run_study(setting, methods, 0.0, n_workers);
}

std::vector<StudyResult> power_study(const SimSetting& setting,
                                     const std::vector<SimMethod>& methods,
                                     const std::vector<double>& deltas,
                                     int n_workers) {
    if (setting.alternative == AltKind::Null)
        fail(ErrorCode::ConfigError, "the power study requires alternative 1 or 2");
    if (deltas.empty())
        fail(ErrorCode::ConfigError, "the power study needs at least one delta");
    std::vector<StudyResult> all;
    for (double d : deltas) {
        if (d < 0.0) fail(ErrorCode::ConfigError, "delta must be nonnegative");
        std::vector<StudyResult> rows = run_study(setting, methods, d, n_workers);
        all.insert(all.end(), rows.begin(), rows.end());
    }
    return all;
}

} // namespace mctp
