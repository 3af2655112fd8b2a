#include "mctp/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "mctp/bootstrap.hpp"
#include "mctp/design.hpp"
#include "mctp/estimation.hpp"
#include "mctp/inference.hpp"

namespace mctp::cli {

using ordered_json = nlohmann::ordered_json;

namespace {

// Single source for every number that appears in a report: the JSON dump of
// the double. Text output reuses the token, so both formats carry exactly
// the same digits.
ordered_json num_json(double v) {
    if (std::isnan(v)) return nullptr;
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

std::string num_token(double v) {
    if (std::isnan(v)) return "null";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return ordered_json(v).dump();
}

ContrastKind parse_contrast_kind(const std::string& name) {
    if (name == "dunnett") return ContrastKind::Dunnett;
    if (name == "tukey") return ContrastKind::Tukey;
    if (name == "grand-mean") return ContrastKind::GrandMean;
    fail(ErrorCode::ConfigError, "unknown contrast '" + name +
                                 "' (expected dunnett, tukey, or grand-mean)");
}

struct ResolvedMethod {
    std::string method;
    VarianceMode mode;
    bool is_boot = false;
    InferenceMethod inference = InferenceMethod::MvtApprox;
    DfRule rule = DfRule::Min;
};

ResolvedMethod resolve_method(const std::string& method_in, const std::string& variance_in) {
    std::string method = method_in;
    std::string variance = variance_in;
    if (method.empty() && variance.empty()) variance = "group-wise";
    if (method.empty()) {
        if (variance == "group-wise") method = "mvt-min";
        else if (variance == "subject-wise") method = "boot";
        else if (variance == "homoscedastic") method = "normal";
        else fail(ErrorCode::ConfigError, "unknown variance mode '" + variance +
                                          "' (expected group-wise, subject-wise, or homoscedastic)");
    }
    if (variance.empty())
        variance = method == "boot" ? "subject-wise" : "group-wise";

    ResolvedMethod r;
    r.method = method;
    r.mode = variance_mode_from_name(variance);
    if (method == "boot") {
        r.is_boot = true;
        if (r.mode != VarianceMode::SubjectWise)
            fail(ErrorCode::ConfigError,
                 "the bootstrap method requires subject-wise variances, not " + variance);
        return r;
    }
    if (method == "normal") {
        r.inference = InferenceMethod::AsymptoticNormal;
        return r;
    }
    if (method == "mvt-min" || method == "mvt-mean" || method == "mvt-max") {
        r.inference = InferenceMethod::MvtApprox;
        r.rule = method == "mvt-min" ? DfRule::Min
               : method == "mvt-mean" ? DfRule::Mean : DfRule::Max;
        if (r.mode != VarianceMode::GroupWise)
            fail(ErrorCode::ConfigError,
                 "method '" + method + "' requires group-wise variances, not " + variance);
        return r;
    }
    fail(ErrorCode::ConfigError, "unknown method '" + method +
                                 "' (expected mvt-min, mvt-mean, mvt-max, normal, or boot)");
}

AncovaDataset load_dataset(const AnalysisConfig& cfg, const CsvTable& table) {
    // the response, factor, and covariate columns must all be distinct
    std::vector<std::string> used;
    used.push_back(cfg.response);
    used.insert(used.end(), cfg.factors.begin(), cfg.factors.end());
    used.insert(used.end(), cfg.covariates.begin(), cfg.covariates.end());
    std::vector<std::string> sorted = used;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        fail(ErrorCode::ConfigError,
             "response, factor, and covariate columns must be distinct");

    int resp_idx = table.require_column(cfg.response);
    std::vector<int> factor_idx, cov_idx;
    for (const std::string& f : cfg.factors) factor_idx.push_back(table.require_column(f));
    for (const std::string& c : cfg.covariates) cov_idx.push_back(table.require_column(c));

    const int n = static_cast<int>(table.rows.size());
    AncovaDataset data;
    data.response.resize(n);
    data.covariates.resize(n, static_cast<int>(cov_idx.size()));
    data.groups.reserve(n);
    data.factor_names = cfg.factors;
    data.covariate_names = cfg.covariates;
    for (int r = 0; r < n; ++r) {
        const std::vector<std::string>& row = table.rows[r];
        data.response(r) = parse_number(row[resp_idx], r + 1, cfg.response);
        CellKey key;
        for (std::size_t f = 0; f < factor_idx.size(); ++f) {
            const std::string& level = row[factor_idx[f]];
            if (level.empty())
                fail(ErrorCode::DataError, "row " + std::to_string(r + 1) + ", column '" +
                                           cfg.factors[f] + "': empty factor level");
            key.push_back(level);
        }
        data.groups.push_back(std::move(key));
        for (std::size_t c = 0; c < cov_idx.size(); ++c)
            data.covariates(r, static_cast<int>(c)) =
                parse_number(row[cov_idx[c]], r + 1, cfg.covariates[c]);
    }
    return data;
}

ContrastMatrix load_contrast_file(const std::string& path, const DesignBundle& design) {
    CsvTable table = read_csv(path);
    int label_idx = table.column_index("label");
    std::vector<int> cell_idx;
    for (const std::string& cell : design.cell_labels) {
        int idx = table.column_index(cell);
        if (idx < 0)
            fail(ErrorCode::InvalidContrast,
                 path + ": missing a column for cell '" + cell + "'");
        cell_idx.push_back(idx);
    }
    if (table.columns.size() != design.cell_labels.size() + (label_idx >= 0 ? 1 : 0))
        fail(ErrorCode::InvalidContrast,
             path + ": expected one column per cell plus an optional 'label' column");

    const int q = static_cast<int>(table.rows.size());
    Eigen::MatrixXd C(q, design.n_cells);
    std::vector<std::string> labels;
    for (int r = 0; r < q; ++r) {
        for (int c = 0; c < design.n_cells; ++c)
            C(r, c) = parse_number(table.rows[r][cell_idx[c]], r + 1, design.cell_labels[c]);
        if (label_idx >= 0) labels.push_back(table.rows[r][label_idx]);
    }
    return user_contrast(C, labels);
}

ContrastMatrix resolve_effect(const std::string& spec, const std::string& base,
                              const AncovaDataset& data, const DesignBundle& design) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(item);

    auto factor_index = [&](const std::string& name) {
        for (std::size_t f = 0; f < data.factor_names.size(); ++f)
            if (data.factor_names[f] == name) return static_cast<int>(f);
        fail(ErrorCode::UnknownFactor, "factor '" + name + "' is not among the design factors");
    };

    EffectSpec effect;
    effect.base = parse_contrast_kind(base);
    if (parts.size() == 2 && parts[0] == "main") {
        effect.factors = {factor_index(parts[1])};
    } else if (parts.size() == 3 && parts[0] == "interaction") {
        effect.factors = {factor_index(parts[1]), factor_index(parts[2])};
        if (effect.factors[0] == effect.factors[1])
            fail(ErrorCode::ConfigError, "an interaction needs two distinct factors");
    } else {
        fail(ErrorCode::ConfigError,
             "effect spec must be main:<factor> or interaction:<factor>:<factor>, got '" +
             spec + "'");
    }

    std::vector<std::vector<std::string>> levels = full_cross_levels(design);
    std::vector<int> counts;
    for (const auto& l : levels) counts.push_back(static_cast<int>(l.size()));
    ContrastMatrix C = factorial_contrast(effect, counts);

    // Rewrite the generic row labels with the real factor and level names.
    if (effect.factors.size() == 1) {
        int f = effect.factors[0];
        ContrastMatrix named = contrast(effect.base, levels[f]);
        for (std::size_t r = 0; r < C.row_labels.size(); ++r)
            C.row_labels[r] = data.factor_names[f] + ": " + named.row_labels[r];
    } else {
        for (std::size_t r = 0; r < C.row_labels.size(); ++r)
            C.row_labels[r] = "interaction " + data.factor_names[effect.factors[0]] + ":" +
                              data.factor_names[effect.factors[1]] + " [" +
                              std::to_string(r + 1) + "]";
    }
    return C;
}

ordered_json result_to_json(const AnalysisConfig& cfg, const ResolvedMethod& rm,
                            const DesignBundle& design, const MctpResult& res) {
    ordered_json doc;
    doc["tool"] = "mctp";
    doc["command"] = "analyze";

    ordered_json input;
    input["file"] = cfg.input;
    input["n_obs"] = design.n_obs;
    input["response"] = cfg.response;
    input["factors"] = cfg.factors;
    input["covariates"] = cfg.covariates;
    ordered_json cells = ordered_json::array();
    for (int i = 0; i < design.n_cells; ++i) {
        ordered_json cell;
        cell["label"] = design.cell_labels[i];
        cell["size"] = design.cell_sizes[i];
        cells.push_back(cell);
    }
    input["cells"] = cells;
    doc["input"] = input;

    ordered_json settings;
    settings["variance"] = variance_mode_name(rm.mode);
    settings["method"] = res.method;
    settings["alpha"] = num_json(res.alpha);
    settings["seed"] = res.seed;
    if (rm.is_boot) {
        settings["n_boot"] = res.n_boot;
    } else {
        ordered_json engine;
        engine["n_shifts"] = cfg.n_shifts;
        engine["n_points"] = cfg.n_points;
        engine["tol"] = num_json(cfg.tol);
        settings["engine"] = engine;
    }
    doc["settings"] = settings;

    ordered_json result;
    ordered_json global;
    global["statistic"] = num_json(res.global_stat);
    global["critical_value"] = num_json(res.crit);
    if (!std::isnan(res.crit_se)) global["critical_value_se"] = num_json(res.crit_se);
    global["p_value"] = num_json(res.global_p);
    global["reject"] = res.global_reject;
    result["global"] = global;

    if (!std::isnan(res.df_used)) {
        ordered_json df;
        ordered_json per_contrast = ordered_json::array();
        for (int l = 0; l < res.nu_raw.size(); ++l) per_contrast.push_back(num_json(res.nu_raw(l)));
        df["per_contrast"] = per_contrast;
        ordered_json cand;
        cand["min"] = num_json(res.df_min);
        cand["mean"] = num_json(res.df_mean);
        cand["max"] = num_json(res.df_max);
        df["candidates"] = cand;
        df["used"] = num_json(res.df_used);
        result["df"] = df;
    }
    if (rm.is_boot) {
        ordered_json boot;
        boot["n_boot"] = res.n_boot;
        boot["n_degenerate"] = res.n_degenerate;
        result["bootstrap"] = boot;
    }

    ordered_json rows = ordered_json::array();
    for (const MctpRow& row : res.rows) {
        ordered_json r;
        r["contrast"] = row.label;
        r["effect"] = num_json(row.effect);
        r["se"] = num_json(row.se);
        r["statistic"] = num_json(row.statistic);
        r["p_adj"] = num_json(row.p_adj);
        r["ci_lower"] = num_json(row.ci_lower);
        r["ci_upper"] = num_json(row.ci_upper);
        r["reject"] = row.reject;
        rows.push_back(r);
    }
    result["contrasts"] = rows;

    ordered_json corr = ordered_json::array();
    for (int i = 0; i < res.R_hat.rows(); ++i) {
        ordered_json row = ordered_json::array();
        for (int j = 0; j < res.R_hat.cols(); ++j) row.push_back(num_json(res.R_hat(i, j)));
        corr.push_back(row);
    }
    result["correlation"] = corr;
    result["warnings"] = res.warnings;
    doc["result"] = result;
    return doc;
}

void render_text(const AnalysisConfig& cfg, const ResolvedMethod& rm,
                 const DesignBundle& design, const MctpResult& res, std::ostream& out) {
    out << "Simultaneous contrast tests\n";
    out << "  input: " << cfg.input << "   observations: " << design.n_obs
        << "   cells: " << design.n_cells << "\n";
    out << "  response: " << cfg.response << "   factors:";
    for (const auto& f : cfg.factors) out << " " << f;
    if (!cfg.covariates.empty()) {
        out << "   covariates:";
        for (const auto& c : cfg.covariates) out << " " << c;
    }
    out << "\n";
    out << "  variance: " << variance_mode_name(rm.mode) << "   method: " << res.method
        << "   alpha: " << num_token(res.alpha) << "   seed: " << res.seed << "\n";
    if (rm.is_boot) {
        out << "  bootstrap: n_boot=" << res.n_boot << "  degenerate=" << res.n_degenerate
            << "\n";
    } else if (!std::isnan(res.df_used)) {
        out << "  df: candidates min=" << num_token(res.df_min)
            << " mean=" << num_token(res.df_mean) << " max=" << num_token(res.df_max)
            << "  used=" << num_token(res.df_used) << "\n";
    }
    out << "  critical value: " << num_token(res.crit)
        << "   global statistic: " << num_token(res.global_stat)
        << "   global p: " << num_token(res.global_p)
        << "   decision: " << (res.global_reject ? "reject" : "retain") << "\n\n";

    std::vector<std::array<std::string, 7>> cells;
    cells.push_back({"Contrast", "Effect", "CI_Lower", "CI_Upper", "Statistic", "p_adj",
                     "Reject"});
    for (const MctpRow& row : res.rows)
        cells.push_back({row.label, num_token(row.effect), num_token(row.ci_lower),
                         num_token(row.ci_upper), num_token(row.statistic),
                         num_token(row.p_adj), row.reject ? "yes" : "no"});
    std::array<std::size_t, 7> width{};
    for (const auto& row : cells)
        for (int c = 0; c < 7; ++c) width[c] = std::max(width[c], row[c].size());
    for (const auto& row : cells) {
        for (int c = 0; c < 7; ++c) {
            out << std::left << std::setw(static_cast<int>(width[c]) + 2) << row[c];
        }
        out << "\n";
    }
    for (const std::string& w : res.warnings) out << "\nwarning: " << w << "\n";
}

} // namespace

int run_analysis(const AnalysisConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        if (cfg.input.empty()) fail(ErrorCode::ConfigError, "no input file given");
        if (cfg.response.empty()) fail(ErrorCode::ConfigError, "no response column given");
        if (cfg.factors.empty()) fail(ErrorCode::ConfigError, "at least one factor is required");
        if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0))
            fail(ErrorCode::ConfigError, "alpha must lie strictly between 0 and 1");
        if (cfg.format != "text" && cfg.format != "json")
            fail(ErrorCode::ConfigError, "format must be text or json");
        if (!cfg.contrast_file.empty() && !cfg.effect.empty())
            fail(ErrorCode::ConfigError, "give either a contrast file or an effect, not both");

        ResolvedMethod rm = resolve_method(cfg.method, cfg.variance);

        CsvTable table = read_csv(cfg.input);
        AncovaDataset data = load_dataset(cfg, table);
        DesignBundle design = build_design(data);

        ContrastMatrix C;
        if (!cfg.contrast_file.empty()) {
            C = load_contrast_file(cfg.contrast_file, design);
        } else if (!cfg.effect.empty()) {
            C = resolve_effect(cfg.effect, cfg.effect_base, data, design);
        } else {
            C = contrast(parse_contrast_kind(cfg.contrast), design.cell_labels);
        }

        FittedAncova fitted = fit(design, rm.mode);
        MctpResult res;
        if (rm.is_boot) {
            BootstrapSettings bs;
            bs.n_boot = cfg.n_boot;
            bs.seed = cfg.seed;
            res = run_mctp_boot(design, C, fitted, cfg.alpha, bs);
        } else {
            MctpOptions opt;
            opt.alpha = cfg.alpha;
            opt.method = rm.inference;
            opt.rule = rm.rule;
            opt.seed = cfg.seed;
            opt.tol = cfg.tol;
            opt.n_shifts = cfg.n_shifts;
            opt.n_points = cfg.n_points;
            res = run_mctp(design, C, fitted, opt);
        }

        std::ofstream file;
        std::ostream* sink = &out;
        if (!cfg.output.empty()) {
            file.open(cfg.output, std::ios::binary);
            if (!file) fail(ErrorCode::DataError, "cannot write '" + cfg.output + "'");
            sink = &file;
        }
        if (cfg.format == "json") {
            *sink << result_to_json(cfg, rm, design, res).dump(2) << "\n";
        } else {
            render_text(cfg, rm, design, res, *sink);
        }
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 4;
    }
}

} // namespace mctp::cli
