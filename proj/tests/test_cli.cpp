#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mctp/cli.hpp"

using namespace mctp;
using cli::CsvTable;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::vector<std::string>& args, std::string* out_text = nullptr,
            std::string* err_text = nullptr) {
    std::vector<const char*> argv;
    argv.push_back("mctp");
    for (const std::string& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    int rc = cli::main_entry(static_cast<int>(argv.size()), argv.data(), out, err);
    if (out_text) *out_text = out.str();
    if (err_text) *err_text = err.str();
    return rc;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("mctp_test_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    f << text;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// small three-group dataset with one covariate
std::string sample_csv() {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> z(0.0, 1.0);
    std::ostringstream ss;
    ss << "group,weight,bun\n";
    const char* names[3] = {"ctrl", "low", "high"};
    for (int g = 0; g < 3; ++g)
        for (int i = 0; i < 8; ++i) {
            double w = 7.0 + z(rng);
            double y = 2.0 + 0.8 * g + 0.5 * w + (0.5 + 0.4 * g) * z(rng);
            ss << names[g] << "," << w << "," << y << "\n";
        }
    return ss.str();
}

std::string two_factor_csv() {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> z(0.0, 1.0);
    std::ostringstream ss;
    ss << "dose,sex,weight,resp\n";
    for (const char* dose : {"d1", "d2", "d3"})
        for (const char* sex : {"f", "m"})
            for (int i = 0; i < 5; ++i) {
                double w = 7.0 + z(rng);
                ss << dose << "," << sex << "," << w << ","
                   << (1.0 + 0.5 * w + z(rng)) << "\n";
            }
    return ss.str();
}

} // namespace

TEST_CASE("csv parser handles quoting, line endings, and blank lines") {
    CsvTable t = cli::parse_csv("a,b\r\n1,\"x,\"\"y\"\"\"\n\n2,z\n", "mem");
    REQUIRE(t.columns.size() == 2);
    CHECK(t.columns[0] == "a");
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][1] == "x,\"y\"");
    CHECK(t.rows[1][1] == "z");

    CHECK(t.column_index("b") == 1);
    CHECK(t.column_index("missing") == -1);
    try {
        t.require_column("bun14");
        FAIL("expected DataError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DataError);
        CHECK(std::string(e.what()).find("bun14") != std::string::npos);
    }
}

TEST_CASE("csv parser reports structural problems with positions") {
    try {
        cli::parse_csv("a,b\n1,2,3\n", "mem");
        FAIL("expected DataError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DataError);
        CHECK(std::string(e.what()).find("row 1") != std::string::npos);
    }
    CHECK_THROWS_AS(cli::parse_csv("a,b\n\"unterminated\n", "mem"), Error);
    CHECK_THROWS_AS(cli::parse_csv("", "mem"), Error);
    CHECK_THROWS_AS(cli::parse_csv("a,b\n", "mem"), Error); // no data rows

    try {
        cli::parse_number("12,3", 4, "bun");
        FAIL("expected DataError");
    } catch (const Error& e) {
        std::string msg = e.what();
        CHECK(msg.find("row 4") != std::string::npos);
        CHECK(msg.find("bun") != std::string::npos);
    }
    CHECK(cli::parse_number(" 2.5\t", 1, "x") == 2.5);
}

TEST_CASE("analyze runs end to end and repeats byte for byte") {
    TempDir dir;
    write_file(dir.file("data.csv"), sample_csv());

    std::vector<std::string> args = {"analyze", "--input", dir.file("data.csv"),
                                     "--response", "bun", "--factors", "group",
                                     "--covariates", "weight", "--format", "json",
                                     "--seed", "7"};
    std::string out1, out2, err1;
    CHECK(run_cli(args, &out1, &err1) == 0);
    CHECK(run_cli(args, &out2) == 0);
    CHECK(out1 == out2);

    json doc = json::parse(out1);
    CHECK(doc["tool"] == "mctp");
    CHECK(doc["input"]["n_obs"] == 24);
    CHECK(doc["input"]["response"] == "bun");
    CHECK(doc["settings"]["variance"] == "group-wise");
    CHECK(doc["settings"]["method"] == "mvt-min");
    REQUIRE(doc["result"]["contrasts"].is_array());
    CHECK(doc["result"]["contrasts"].size() == 2);
    for (const json& row : doc["result"]["contrasts"]) {
        for (const char* key : {"contrast", "effect", "se", "statistic", "p_adj",
                                "ci_lower", "ci_upper", "reject"})
            CHECK(row.contains(key));
        // compatibility surfaced in the report itself
        bool reject = row["reject"].get<bool>();
        double lo = row["ci_lower"].get<double>();
        double hi = row["ci_upper"].get<double>();
        CHECK(reject == (lo > 0.0 || hi < 0.0));
        CHECK(reject == (row["p_adj"].get<double>() <= 0.05));
    }
    CHECK(doc["result"]["global"].contains("p_value"));
    CHECK(doc["result"]["df"]["candidates"].contains("min"));

    // parsing and re-serializing is lossless at full precision
    CHECK(json::parse(doc.dump()) == doc);
}

TEST_CASE("text report carries the simultaneous-interval table") {
    TempDir dir;
    write_file(dir.file("data.csv"), sample_csv());

    std::string text, jtext;
    CHECK(run_cli({"analyze", "-i", dir.file("data.csv"), "-y", "bun", "-f", "group",
                   "-x", "weight", "--seed", "7"},
                  &text) == 0);
    for (const char* col : {"Contrast", "Effect", "CI_Lower", "CI_Upper", "Statistic",
                            "p_adj", "Reject"})
        CHECK(text.find(col) != std::string::npos);
    CHECK(text.find("low - ctrl") != std::string::npos);
    CHECK(text.find("high - ctrl") != std::string::npos);

    // the text table prints exactly the numbers the JSON report carries
    CHECK(run_cli({"analyze", "-i", dir.file("data.csv"), "-y", "bun", "-f", "group",
                   "-x", "weight", "--seed", "7", "--format", "json"},
                  &jtext) == 0);
    json doc = json::parse(jtext);
    for (const json& row : doc["result"]["contrasts"]) {
        CHECK(text.find(json(row["statistic"]).dump()) != std::string::npos);
        CHECK(text.find(json(row["ci_lower"]).dump()) != std::string::npos);
    }
}

TEST_CASE("analysis writes to a file when asked") {
    TempDir dir;
    write_file(dir.file("data.csv"), sample_csv());
    std::string out;
    CHECK(run_cli({"analyze", "-i", dir.file("data.csv"), "-y", "bun", "-f", "group",
                   "--variance", "homoscedastic", "--format", "json", "-o",
                   dir.file("report.json")},
                  &out) == 0);
    json doc = json::parse(read_file(dir.file("report.json")));
    CHECK(doc["settings"]["method"] == "normal");
    CHECK(doc["settings"]["variance"] == "homoscedastic");
}

TEST_CASE("method and variance pairing rules") {
    TempDir dir;
    write_file(dir.file("data.csv"), sample_csv());
    auto run = [&](std::vector<std::string> extra, std::string* out = nullptr) {
        std::vector<std::string> args = {"analyze", "-i",       dir.file("data.csv"),
                                         "-y",      "bun",      "-f",
                                         "group",   "-x",       "weight",
                                         "--format", "json"};
        for (auto& e : extra) args.push_back(e);
        std::string tmp;
        int rc = run_cli(args, out ? out : &tmp);
        return rc;
    };

    std::string out;
    CHECK(run({"--variance", "subject-wise", "--n-boot", "400"}, &out) == 0);
    CHECK(json::parse(out)["settings"]["method"] == "boot");

    CHECK(run({"--method", "boot", "--n-boot", "400"}, &out) == 0);
    CHECK(json::parse(out)["settings"]["variance"] == "subject-wise");

    CHECK(run({"--method", "mvt-mean"}, &out) == 0);
    CHECK(json::parse(out)["settings"]["variance"] == "group-wise");

    // incompatible pairings are configuration errors
    CHECK(run({"--method", "mvt-min", "--variance", "subject-wise"}) == 2);
    CHECK(run({"--method", "boot", "--variance", "group-wise"}) == 2);
    CHECK(run({"--method", "welch"}) == 2);
    CHECK(run({"--alpha", "1.5"}) == 2);
}

TEST_CASE("factorial effects address factors by name") {
    TempDir dir;
    write_file(dir.file("two.csv"), two_factor_csv());
    auto args = [&](const std::string& effect) {
        return std::vector<std::string>{"analyze", "-i", dir.file("two.csv"), "-y", "resp",
                                        "-f", "dose,sex", "-x", "weight", "--effect",
                                        effect, "--format", "json"};
    };

    std::string out;
    CHECK(run_cli(args("main:dose"), &out) == 0);
    json doc = json::parse(out);
    CHECK(doc["input"]["cells"].size() == 6);
    CHECK(doc["result"]["contrasts"].size() == 3); // grand-mean base over 3 levels

    CHECK(run_cli(args("interaction:dose:sex"), &out) == 0);
    CHECK(json::parse(out)["result"]["contrasts"].size() == 2);

    std::string err;
    CHECK(run_cli(args("main:dosage"), &out, &err) == 3); // unknown factor
    CHECK(err.find("dosage") != std::string::npos);

    // a hole in the cross is a data shape error
    std::string holed = two_factor_csv();
    std::string::size_type pos;
    while ((pos = holed.find("d3,m")) != std::string::npos) {
        std::string::size_type end = holed.find('\n', pos);
        holed.erase(pos, end - pos + 1);
    }
    write_file(dir.file("holed.csv"), holed);
    std::vector<std::string> hargs = {"analyze", "-i", dir.file("holed.csv"), "-y", "resp",
                                      "-f", "dose,sex", "-x", "weight", "--effect",
                                      "main:dose"};
    CHECK(run_cli(hargs, &out, &err) == 3);
}

TEST_CASE("explicit contrast files override the named kinds") {
    TempDir dir;
    write_file(dir.file("data.csv"), sample_csv());
    // columns are the sorted cell labels: ctrl, high, low
    write_file(dir.file("c.csv"), "label,ctrl,high,low\nhigh vs ctrl,-1,1,0\npool,-2,1,1\n");

    std::string out;
    CHECK(run_cli({"analyze", "-i", dir.file("data.csv"), "-y", "bun", "-f", "group",
                   "-x", "weight", "--contrast-file", dir.file("c.csv"), "--format",
                   "json"},
                  &out) == 0);
    json doc = json::parse(out);
    REQUIRE(doc["result"]["contrasts"].size() == 2);
    CHECK(doc["result"]["contrasts"][0]["contrast"] == "high vs ctrl");

    write_file(dir.file("bad.csv"), "ctrl,high,low\n1,1,0\n");
    std::string err;
    CHECK(run_cli({"analyze", "-i", dir.file("data.csv"), "-y", "bun", "-f", "group",
                   "-x", "weight", "--contrast-file", dir.file("bad.csv")},
                  &out, &err) == 3);
}

TEST_CASE("data errors map to exit code 3 and numerical errors to 4") {
    TempDir dir;
    std::string out, err;
    CHECK(run_cli({"analyze", "-i", dir.file("absent.csv"), "-y", "y", "-f", "g"}, &out,
                  &err) == 3);

    write_file(dir.file("nan.csv"), "g,y\na,1\na,2\na,2.5\nb,nan\nb,4\nb,5\n");
    CHECK(run_cli({"analyze", "-i", dir.file("nan.csv"), "-y", "y", "-f", "g"}, &out,
                  &err) == 3);

    write_file(dir.file("col.csv"), "g,y\na,1\nb,2\n");
    CHECK(run_cli({"analyze", "-i", dir.file("col.csv"), "-y", "bun", "-f", "g"}, &out,
                  &err) == 3);
    CHECK(err.find("bun") != std::string::npos);

    // constant responses leave no residual scale for the bootstrap
    write_file(dir.file("flat.csv"), "g,y\na,1\na,1\na,1\nb,2\nb,2\nb,2\n");
    CHECK(run_cli({"analyze", "-i", dir.file("flat.csv"), "-y", "y", "-f", "g",
                   "--method", "boot", "--n-boot", "50"},
                  &out, &err) == 4);

    CHECK(run_cli({"analyze"}, &out, &err) == 2);          // missing required options
    CHECK(run_cli({"frobnicate"}, &out, &err) == 2);       // unknown subcommand
    CHECK(run_cli({"analyze", "--bogus"}, &out, &err) == 2);
}

TEST_CASE("simulate validates its config file") {
    TempDir dir;
    std::string out, err;

    write_file(dir.file("bad.json"), "{ not json");
    CHECK(run_cli({"simulate", "-c", dir.file("bad.json")}, &out, &err) == 2);

    write_file(dir.file("empty.json"), R"({"settings": []})");
    CHECK(run_cli({"simulate", "-c", dir.file("empty.json")}, &out, &err) == 2);

    write_file(dir.file("zero.json"), R"({"settings": [{"n_sim": 0}]})");
    CHECK(run_cli({"simulate", "-c", dir.file("zero.json")}, &out, &err) == 2);

    write_file(dir.file("unknown.json"),
               R"({"settings": [{"n_sim": 10, "n_simulations": 10}]})");
    CHECK(run_cli({"simulate", "-c", dir.file("unknown.json")}, &out, &err) == 2);
    CHECK(err.find("n_simulations") != std::string::npos);

    write_file(dir.file("badalt.json"),
               R"({"settings": [{"alternative": {"kind": "alt1"}}]})");
    CHECK(run_cli({"simulate", "-c", dir.file("badalt.json")}, &out, &err) == 2);
}

TEST_CASE("simulate dry run prints the expanded grid without writing results") {
    TempDir dir;
    write_file(dir.file("cfg.json"), R"({"settings": [{
        "name": "demo", "a": 3, "n_sim": 40,
        "alternative": {"kind": "alt1", "deltas": [0.0, 1.0]},
        "methods": ["mvt-min", "normal"],
        "engine": {"n_shifts": 4, "n_points": 256}
    }]})");

    std::string out, err;
    CHECK(run_cli({"simulate", "-c", dir.file("cfg.json"), "-d", dir.file("out"),
                   "--dry-run"},
                  &out, &err) == 0);
    CHECK(out.find("demo,mvt-min,0") != std::string::npos);
    CHECK(out.find("demo,normal,1") != std::string::npos);
    CHECK(!fs::exists(dir.file("out") + "/results.json"));
}

TEST_CASE("simulate writes results, csv, and manifest") {
    TempDir dir;
    write_file(dir.file("cfg.json"), R"({"settings": [{
        "name": "null-check", "a": 3, "m": 1, "n_sim": 30, "master_seed": 5,
        "methods": ["normal"],
        "engine": {"n_shifts": 4, "n_points": 256}
    }]})");

    std::string out, err;
    CHECK(run_cli({"simulate", "-c", dir.file("cfg.json"), "-d", dir.file("out")}, &out,
                  &err) == 0);

    json results = json::parse(read_file(dir.file("out") + "/results.json"));
    REQUIRE(results["results"].size() == 1);
    const json& row = results["results"][0];
    for (const char* key : {"setting", "method", "delta", "n_sim", "n_reject", "rate",
                            "ci_lower", "ci_upper", "n_failures"})
        CHECK(row.contains(key));
    CHECK(row["setting"] == "null-check");
    CHECK(row["n_sim"] == 30);

    std::string csv = read_file(dir.file("out") + "/results.csv");
    CHECK(csv.find("setting,method,delta") != std::string::npos);
    CHECK(csv.find("null-check,normal,0") != std::string::npos);

    json manifest = json::parse(read_file(dir.file("out") + "/manifest.json"));
    CHECK(manifest.contains("workers"));
    CHECK(manifest["settings"][0]["name"] == "null-check");
    CHECK(manifest["settings"][0]["sizes"]["resolved"].size() == 3);
}

TEST_CASE("version and help are friendly") {
    std::string out, err;
    CHECK(run_cli({"--version"}, &out, &err) == 0);
    CHECK(out.find("0.1.0") != std::string::npos);
    CHECK(run_cli({"--help"}, &out, &err) == 0);
    CHECK(out.find("analyze") != std::string::npos);
    CHECK(out.find("simulate") != std::string::npos);
}
