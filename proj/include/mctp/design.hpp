#ifndef MCTP_DESIGN_HPP
#define MCTP_DESIGN_HPP

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "mctp/errors.hpp"

namespace mctp {

// A cell is identified by an ordered tuple of factor levels. One-way layouts
// use tuples of length 1; higher-way layouts are flattened onto cells and
// recovered through Kronecker-structured contrasts.
using CellKey = std::vector<std::string>;

std::string cell_label(const CellKey& key);

struct AncovaDataset {
    Eigen::VectorXd response;              // N
    std::vector<CellKey> groups;           // N cell identifiers
    Eigen::MatrixXd covariates;            // N x m, m >= 0
    std::vector<std::string> factor_names;    // optional, may be empty
    std::vector<std::string> covariate_names; // optional, may be empty

    Eigen::Index n_obs() const { return response.size(); }
    Eigen::Index n_covariates() const { return covariates.cols(); }
};

// Design quantities in cell-sorted row order. Rows of the input are
// permuted so cells are contiguous; `perm[r]` is the original row index of
// sorted row r.
struct DesignBundle {
    Eigen::MatrixXd X;          // N x a cell-means block design
    Eigen::MatrixXd M;          // N x m covariates (sorted rows)
    Eigen::MatrixXd B;          // N x (a+m), B = [X M]
    Eigen::MatrixXd P_B;        // (a+m) x N, (B'B)^{-1} B'
    Eigen::VectorXd leverages;  // N, diag of B P_B
    Eigen::VectorXd y;          // N response in sorted order
    std::vector<int> perm;      // sorted row -> original row

    std::vector<CellKey> cells;            // a, lexicographic
    std::vector<std::string> cell_labels;  // a
    std::vector<int> cell_sizes;           // a
    std::vector<int> cell_start;           // a, offsets into sorted rows
    std::map<CellKey, int> cell_index;

    int n_obs = 0;
    int n_cells = 0;
    int n_covs = 0;

    int cell_of_row(int sorted_row) const;
    // Scatter a vector in sorted order back to the original row order.
    Eigen::VectorXd unpermute(const Eigen::VectorXd& sorted_values) const;
};

DesignBundle build_design(const AncovaDataset& data);

enum class ContrastKind { Dunnett, Tukey, GrandMean, UserDefined, KroneckerComposite };

struct ContrastMatrix {
    Eigen::MatrixXd C;                   // q x a
    std::vector<std::string> row_labels; // q
    ContrastKind kind = ContrastKind::UserDefined;

    Eigen::Index n_rows() const { return C.rows(); }
    Eigen::Index n_cells() const { return C.cols(); }
};

ContrastMatrix contrast(ContrastKind kind, int a);

// Same matrices, with row labels built from the given cell labels; the
// first label is the baseline for Dunnett-type comparisons.
ContrastMatrix contrast(ContrastKind kind, const std::vector<std::string>& cell_labels);

// Rows must sum to zero (|sum| <= 1e-8) and no row may be all zero.
ContrastMatrix user_contrast(const Eigen::MatrixXd& C, std::vector<std::string> labels);

// Main effect of one factor, or interaction of two, in a fully crossed
// layout. Factors are indexed in cell-key order; `levels[f]` is the number
// of levels of factor f. Cells are assumed in lexicographic tuple order,
// i.e. the Kronecker order over factors.
struct EffectSpec {
    std::vector<int> factors;                      // 1 = main, 2 = interaction
    ContrastKind base = ContrastKind::GrandMean;   // base contrast for main effects
};

ContrastMatrix factorial_contrast(const EffectSpec& effect, const std::vector<int>& levels);

// Verifies that the design's cells form the complete cross of the observed
// per-factor levels; returns the per-factor level lists (sorted). Throws
// NotFullCross or UnknownFactor.
std::vector<std::vector<std::string>> full_cross_levels(const DesignBundle& design);

} // namespace mctp

#endif
