#ifndef MCTP_CLI_HPP
#define MCTP_CLI_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mctp/errors.hpp"

namespace mctp::cli {

// Minimal RFC-4180 CSV: header row required, quoted fields with doubled
// quotes, UTF-8 passed through untouched.
struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    int column_index(const std::string& name) const; // -1 when absent
    int require_column(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text, const std::string& origin);

// Strict numeric field parse; data row numbers are 1-based and exclude the
// header, matching what a spreadsheet user would count.
double parse_number(const std::string& field, int data_row, const std::string& column);

struct AnalysisConfig {
    std::string input;
    std::string response;
    std::vector<std::string> factors;
    std::vector<std::string> covariates;

    std::string contrast = "dunnett"; // dunnett | tukey | grand-mean
    std::string contrast_file;        // explicit matrix, overrides `contrast`
    std::string effect;               // factorial spec, e.g. main:dose or interaction:dose:sex
    std::string effect_base = "grand-mean"; // base contrast for factorial main effects

    std::string variance; // group-wise | subject-wise | homoscedastic; empty = follow method
    std::string method;   // mvt-min | mvt-mean | mvt-max | normal | boot; empty = follow variance

    double alpha = 0.05;
    int n_boot = 10000;
    std::uint64_t seed = 1;
    double tol = 1e-3;
    int n_shifts = 12;
    int n_points = 4096;

    std::string format = "text"; // text | json
    std::string output;          // file path; empty = stdout
};

int run_analysis(const AnalysisConfig& cfg, std::ostream& out, std::ostream& err);

int run_simulation(const std::string& config_path, const std::string& out_dir,
                   bool dry_run, std::ostream& out, std::ostream& err);

// Exit code for an error class: 2 configuration, 3 data/schema, 4 numerical.
int exit_code_for(ErrorCode code);

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace mctp::cli

#endif
