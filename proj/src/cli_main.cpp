#include "mctp/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "mctp/simulation.hpp"

namespace mctp::cli {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

int resolve_workers() {
    if (const char* env = std::getenv("MCTP_WORKERS")) {
        char* end = nullptr;
        long w = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || w < 1)
            fail(ErrorCode::ConfigError, "MCTP_WORKERS must be a positive integer");
        return static_cast<int>(w);
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

ContrastKind contrast_kind_from_config(const std::string& name) {
    if (name == "dunnett") return ContrastKind::Dunnett;
    if (name == "tukey") return ContrastKind::Tukey;
    if (name == "grand-mean") return ContrastKind::GrandMean;
    fail(ErrorCode::ConfigError, "unknown contrast '" + name +
                                 "' (expected dunnett, tukey, or grand-mean)");
}

void reject_unknown_keys(const nlohmann::json& obj, std::initializer_list<const char*> known,
                         const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) { ok = true; break; }
        if (!ok)
            fail(ErrorCode::ConfigError, where + ": unknown key '" + it.key() + "'");
    }
}

struct PlannedSetting {
    std::string name;
    SimSetting setting;
    std::vector<SimMethod> methods;
    std::vector<double> deltas; // empty for the null alternative
};

std::vector<PlannedSetting> parse_sim_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::DataError, "cannot open '" + path + "'");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ConfigError, path + ": invalid JSON: " + e.what());
    }

    try {
        if (!doc.is_object() || !doc.contains("settings") || !doc["settings"].is_array() ||
            doc["settings"].empty())
            fail(ErrorCode::ConfigError, path + ": expected an object with a non-empty "
                                                "'settings' array");
        reject_unknown_keys(doc, {"settings"}, path);

        std::vector<PlannedSetting> plan;
        int index = 0;
        for (const nlohmann::json& js : doc["settings"]) {
            ++index;
            std::string where = path + ": settings[" + std::to_string(index - 1) + "]";
            if (!js.is_object()) fail(ErrorCode::ConfigError, where + " must be an object");
            reject_unknown_keys(js,
                                {"name", "a", "sizes", "variance", "error_law", "contrast",
                                 "alternative", "m", "n_sim", "n_boot", "alpha", "master_seed",
                                 "methods", "engine"},
                                where);

            PlannedSetting ps;
            ps.name = js.value("name", "setting" + std::to_string(index));
            SimSetting& s = ps.setting;
            s.a = js.at("a").get<int>();

            if (js.contains("sizes")) {
                const nlohmann::json& sz = js["sizes"];
                reject_unknown_keys(sz, {"pattern", "increment", "values"}, where + ".sizes");
                std::string pattern = sz.value("pattern", "balanced");
                if (pattern == "balanced") s.sizes = SizePattern::Balanced;
                else if (pattern == "negative-pairing") s.sizes = SizePattern::NegativePairing;
                else if (pattern == "positive-pairing") s.sizes = SizePattern::PositivePairing;
                else if (pattern == "custom") s.sizes = SizePattern::Custom;
                else fail(ErrorCode::ConfigError, where + ".sizes: unknown pattern '" + pattern +
                                                  "'");
                s.increment = sz.value("increment", 0);
                if (s.sizes == SizePattern::Custom) {
                    if (!sz.contains("values"))
                        fail(ErrorCode::ConfigError, where + ".sizes: custom pattern needs "
                                                             "'values'");
                    s.custom_sizes = sz["values"].get<std::vector<int>>();
                }
            }

            if (js.contains("variance")) {
                const nlohmann::json& var = js["variance"];
                reject_unknown_keys(var, {"pattern", "sigma1"}, where + ".variance");
                std::string pattern = var.value("pattern", "homoscedastic");
                if (pattern == "homoscedastic") s.variance = VariancePattern::Homoscedastic;
                else if (pattern == "group-wise") s.variance = VariancePattern::GroupWise;
                else if (pattern == "complete") s.variance = VariancePattern::Complete;
                else fail(ErrorCode::ConfigError, where + ".variance: unknown pattern '" +
                                                  pattern + "'");
                s.sigma1 = var.value("sigma1", 2.0);
            }

            s.law = error_law_from_name(js.value("error_law", "normal"));
            s.contrast_kind = contrast_kind_from_config(js.value("contrast", "dunnett"));

            if (js.contains("alternative")) {
                const nlohmann::json& alt = js["alternative"];
                reject_unknown_keys(alt, {"kind", "delta", "deltas", "block"},
                                    where + ".alternative");
                std::string kind = alt.value("kind", "null");
                if (kind == "null") {
                    s.alternative = AltKind::Null;
                } else if (kind == "alt1" || kind == "alt2") {
                    s.alternative = kind == "alt1" ? AltKind::Alt1 : AltKind::Alt2;
                    if (alt.contains("deltas"))
                        ps.deltas = alt["deltas"].get<std::vector<double>>();
                    else if (alt.contains("delta"))
                        ps.deltas = {alt["delta"].get<double>()};
                    else
                        fail(ErrorCode::ConfigError,
                             where + ".alternative: alt1/alt2 need 'delta' or 'deltas'");
                    s.alt_block = alt.value("block", -1);
                } else {
                    fail(ErrorCode::ConfigError, where + ".alternative: unknown kind '" + kind +
                                                 "' (expected null, alt1, or alt2)");
                }
            }

            s.m = js.value("m", 4);
            s.n_sim = js.value("n_sim", 2000);
            s.n_boot = js.value("n_boot", 1000);
            s.alpha = js.value("alpha", 0.05);
            s.master_seed = js.value("master_seed", std::uint64_t{1});
            if (js.contains("engine")) {
                const nlohmann::json& eng = js["engine"];
                reject_unknown_keys(eng, {"n_shifts", "n_points"}, where + ".engine");
                s.n_shifts = eng.value("n_shifts", 6);
                s.n_points = eng.value("n_points", 1024);
            }

            if (js.contains("methods")) {
                for (const nlohmann::json& name : js["methods"])
                    ps.methods.push_back(sim_method_from_name(name.get<std::string>()));
                if (ps.methods.empty())
                    fail(ErrorCode::ConfigError, where + ": 'methods' must not be empty");
            } else {
                ps.methods = {s.variance == VariancePattern::Complete ? SimMethod::Boot
                                                                      : SimMethod::MvtMin};
            }

            s.validate();
            plan.push_back(std::move(ps));
        }
        return plan;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ConfigError, path + ": " + e.what());
    }
}

ordered_json setting_to_json(const PlannedSetting& ps) {
    const SimSetting& s = ps.setting;
    ordered_json js;
    js["name"] = ps.name;
    js["a"] = s.a;
    ordered_json sizes;
    sizes["pattern"] = size_pattern_name(s.sizes);
    if (s.sizes == SizePattern::Custom) sizes["values"] = s.custom_sizes;
    else sizes["increment"] = s.increment;
    sizes["resolved"] = s.resolved_sizes();
    js["sizes"] = sizes;
    ordered_json variance;
    variance["pattern"] = variance_pattern_name(s.variance);
    if (s.variance == VariancePattern::GroupWise) variance["sigma1"] = s.sigma1;
    js["variance"] = variance;
    js["error_law"] = error_law_name(s.law);
    js["contrast"] = s.contrast_kind == ContrastKind::Dunnett ? "dunnett"
                     : s.contrast_kind == ContrastKind::Tukey ? "tukey" : "grand-mean";
    js["alternative"] = s.alternative == AltKind::Null ? "null"
                        : s.alternative == AltKind::Alt1 ? "alt1" : "alt2";
    if (s.alternative != AltKind::Null) js["deltas"] = ps.deltas;
    js["m"] = s.m;
    js["n_sim"] = s.n_sim;
    js["n_boot"] = s.n_boot;
    js["alpha"] = s.alpha;
    js["master_seed"] = s.master_seed;
    ordered_json methods = ordered_json::array();
    for (SimMethod m : ps.methods) methods.push_back(sim_method_name(m));
    js["methods"] = methods;
    return js;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::DataError, "cannot write '" + path + "'");
    out << content;
}

} // namespace

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::ConfigError:
            return 2;
        case ErrorCode::DataError:
        case ErrorCode::NonFiniteInput:
        case ErrorCode::EmptyCell:
        case ErrorCode::UnknownFactor:
        case ErrorCode::NotFullCross:
        case ErrorCode::InvalidContrast:
        case ErrorCode::InvalidGroupCount:
            return 3;
        default:
            return 4;
    }
}

int run_simulation(const std::string& config_path, const std::string& out_dir,
                   bool dry_run, std::ostream& out, std::ostream& err) {
    try {
        std::vector<PlannedSetting> plan = parse_sim_config(config_path);
        int workers = resolve_workers();

        if (dry_run) {
            out << "setting,method,delta,n_sim\n";
            for (const PlannedSetting& ps : plan) {
                std::vector<double> deltas = ps.deltas.empty() ? std::vector<double>{0.0}
                                                               : ps.deltas;
                for (SimMethod m : ps.methods)
                    for (double d : deltas)
                        out << ps.name << "," << sim_method_name(m) << ","
                            << ordered_json(d).dump() << "," << ps.setting.n_sim << "\n";
            }
            return 0;
        }

        auto t_start = std::chrono::steady_clock::now();
        ordered_json results = ordered_json::array();
        std::string csv = "setting,method,delta,n_sim,n_reject,rate,ci_lower,ci_upper,"
                          "n_failures\n";
        for (const PlannedSetting& ps : plan) {
            std::vector<StudyResult> rows;
            if (ps.setting.alternative == AltKind::Null)
                rows = type1_study(ps.setting, ps.methods, workers);
            else
                rows = power_study(ps.setting, ps.methods, ps.deltas, workers);
            for (const StudyResult& r : rows) {
                ordered_json row;
                row["setting"] = ps.name;
                row["method"] = r.method;
                row["delta"] = r.delta;
                row["n_sim"] = r.n_sim;
                row["n_reject"] = r.n_reject;
                row["rate"] = r.rate;
                row["ci_lower"] = r.ci_lower;
                row["ci_upper"] = r.ci_upper;
                row["n_failures"] = r.n_failures;
                ordered_json codes;
                for (const auto& [code, count] : r.failure_codes) codes[code] = count;
                row["failure_codes"] = codes;
                results.push_back(row);

                csv += ps.name + "," + r.method + "," + ordered_json(r.delta).dump() + "," +
                       std::to_string(r.n_sim) + "," + std::to_string(r.n_reject) + "," +
                       ordered_json(r.rate).dump() + "," + ordered_json(r.ci_lower).dump() +
                       "," + ordered_json(r.ci_upper).dump() + "," +
                       std::to_string(r.n_failures) + "\n";
            }
        }
        double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                       t_start)
                             .count();

        ordered_json results_doc;
        results_doc["tool"] = "mctp";
        results_doc["command"] = "simulate";
        results_doc["results"] = results;

        ordered_json manifest;
        manifest["tool"] = "mctp";
        manifest["version"] = kVersion;
        manifest["config"] = config_path;
        manifest["workers"] = workers;
        manifest["elapsed_seconds"] = elapsed;
        ordered_json settings = ordered_json::array();
        for (const PlannedSetting& ps : plan) settings.push_back(setting_to_json(ps));
        manifest["settings"] = settings;

        std::string dir = out_dir.empty() ? "." : out_dir;
        std::error_code fs_err;
        std::filesystem::create_directories(dir, fs_err);
        write_file(dir + "/results.json", results_doc.dump(2) + "\n");
        write_file(dir + "/results.csv", csv);
        write_file(dir + "/manifest.json", manifest.dump(2) + "\n");
        out << "wrote " << results.size() << " result rows to " << dir << "/results.json ("
            << ordered_json(elapsed).dump() << "s)\n";
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 4;
    }
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multiple contrast tests for heteroscedastic ANCOVA"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    AnalysisConfig cfg;
    std::string factors_csv, covariates_csv;
    CLI::App* analyze = app.add_subcommand("analyze", "Run contrast tests on a CSV dataset");
    analyze->add_option("--input,-i", cfg.input, "CSV file, one row per subject")->required();
    analyze->add_option("--response,-y", cfg.response, "response column")->required();
    analyze->add_option("--factors,-f", factors_csv, "factor columns, comma separated")
        ->required();
    analyze->add_option("--covariates,-x", covariates_csv, "covariate columns, comma separated");
    analyze->add_option("--contrast", cfg.contrast, "dunnett | tukey | grand-mean");
    analyze->add_option("--contrast-file", cfg.contrast_file,
                        "CSV with one column per cell and an optional 'label' column");
    analyze->add_option("--effect", cfg.effect,
                        "factorial effect: main:<factor> or interaction:<f1>:<f2>");
    analyze->add_option("--effect-base", cfg.effect_base,
                        "base contrast for factorial main effects");
    analyze->add_option("--variance", cfg.variance,
                        "group-wise | subject-wise | homoscedastic");
    analyze->add_option("--method", cfg.method,
                        "mvt-min | mvt-mean | mvt-max | normal | boot");
    analyze->add_option("--alpha", cfg.alpha, "simultaneous level (default 0.05)");
    analyze->add_option("--n-boot", cfg.n_boot, "bootstrap replicates (default 10000)");
    analyze->add_option("--seed", cfg.seed, "RNG seed (default 1)");
    analyze->add_option("--tol", cfg.tol, "quantile probability tolerance (default 1e-3)");
    analyze->add_option("--n-shifts", cfg.n_shifts, "integration shifts (default 12)");
    analyze->add_option("--n-points", cfg.n_points, "points per shift (default 4096)");
    analyze->add_option("--format", cfg.format, "text | json");
    analyze->add_option("--output,-o", cfg.output, "write the report to a file");

    std::string sim_config, sim_outdir;
    bool dry_run = false;
    CLI::App* simulate = app.add_subcommand("simulate", "Run a simulation study from a config");
    simulate->add_option("--config,-c", sim_config, "JSON config with a 'settings' array")
        ->required();
    simulate->add_option("--output-dir,-d", sim_outdir,
                         "directory for results.json/results.csv/manifest.json (default .)");
    simulate->add_flag("--dry-run", dry_run, "print the expanded grid without running");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }

    auto split_csv = [](const std::string& text) {
        std::vector<std::string> parts;
        std::string item;
        std::stringstream ss(text);
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) parts.push_back(item);
        }
        return parts;
    };

    if (analyze->parsed()) {
        cfg.factors = split_csv(factors_csv);
        cfg.covariates = split_csv(covariates_csv);
        return run_analysis(cfg, out, err);
    }
    return run_simulation(sim_config, sim_outdir, dry_run, out, err);
}

} // namespace mctp::cli
