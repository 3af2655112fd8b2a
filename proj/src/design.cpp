#include "mctp/design.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace mctp {

std::string cell_label(const CellKey& key) {
    std::string out;
    for (std::size_t i = 0; i < key.size(); ++i) {
        if (i) out += ':';
        out += key[i];
    }
    return out;
}

int DesignBundle::cell_of_row(int sorted_row) const {
    // cell_start is sorted; find the last start <= sorted_row
    auto it = std::upper_bound(cell_start.begin(), cell_start.end(), sorted_row);
    return static_cast<int>(it - cell_start.begin()) - 1;
}

Eigen::VectorXd DesignBundle::unpermute(const Eigen::VectorXd& sorted_values) const {
    Eigen::VectorXd out(sorted_values.size());
    for (int r = 0; r < sorted_values.size(); ++r) out(perm[r]) = sorted_values(r);
    return out;
}

DesignBundle build_design(const AncovaDataset& data) {
    const int N = static_cast<int>(data.n_obs());
    const int m = static_cast<int>(data.n_covariates());

    if (N == 0) fail(ErrorCode::DataError, "dataset has no observations");
    if (static_cast<int>(data.groups.size()) != N)
        fail(ErrorCode::DataError, "group labels and response have different lengths");
    if (data.covariates.rows() != 0 && data.covariates.rows() != N)
        fail(ErrorCode::DataError, "covariate rows do not match response length");

    for (int i = 0; i < N; ++i) {
        if (!std::isfinite(data.response(i)))
            fail(ErrorCode::NonFiniteInput, "response contains a non-finite value at row " + std::to_string(i));
    }
    for (int i = 0; i < data.covariates.rows(); ++i)
        for (int j = 0; j < m; ++j)
            if (!std::isfinite(data.covariates(i, j)))
                fail(ErrorCode::NonFiniteInput, "covariate contains a non-finite value at row " + std::to_string(i));

    std::size_t key_len = data.groups.front().size();
    if (key_len == 0) fail(ErrorCode::DataError, "empty group identifier at row 0");
    for (int i = 0; i < N; ++i)
        if (data.groups[i].size() != key_len)
            fail(ErrorCode::DataError, "group identifier at row " + std::to_string(i) +
                                       " has a different number of factor levels");

    DesignBundle d;
    d.n_obs = N;
    d.n_covs = m;

    // Stable sort rows by cell key so cells are contiguous and the design is
    // invariant to input row order.
    d.perm.resize(N);
    std::iota(d.perm.begin(), d.perm.end(), 0);
    std::stable_sort(d.perm.begin(), d.perm.end(), [&](int i, int j) {
        return data.groups[i] < data.groups[j];
    });

    d.y.resize(N);
    d.M.resize(N, m);
    for (int r = 0; r < N; ++r) {
        d.y(r) = data.response(d.perm[r]);
        if (m > 0) d.M.row(r) = data.covariates.row(d.perm[r]);
    }

    for (int r = 0; r < N; ++r) {
        const CellKey& key = data.groups[d.perm[r]];
        if (d.cells.empty() || d.cells.back() != key) {
            d.cell_index.emplace(key, static_cast<int>(d.cells.size()));
            d.cells.push_back(key);
            d.cell_labels.push_back(cell_label(key));
            d.cell_start.push_back(r);
            d.cell_sizes.push_back(0);
        }
        ++d.cell_sizes.back();
    }
    d.n_cells = static_cast<int>(d.cells.size());
    const int a = d.n_cells;
    if (a < 2) fail(ErrorCode::InvalidGroupCount, "need at least 2 groups, found " + std::to_string(a));

    d.X = Eigen::MatrixXd::Zero(N, a);
    for (int r = 0; r < N; ++r) d.X(r, d.cell_of_row(r)) = 1.0;

    d.B.resize(N, a + m);
    d.B.leftCols(a) = d.X;
    if (m > 0) d.B.rightCols(m) = d.M;

    if (N < a + m + 1)
        fail(ErrorCode::InsufficientReplication,
             "need more observations than regression columns (" + std::to_string(N) +
             " rows for " + std::to_string(a + m) + " columns)");

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d.B);
    qr.setThreshold(1e-10);
    if (qr.rank() < a + m)
        fail(ErrorCode::RankDeficient, "design matrix [groups covariates] is rank deficient; "
                                       "a covariate may be constant within groups");

    Eigen::MatrixXd BtB = d.B.transpose() * d.B;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(BtB);
    d.P_B = ldlt.solve(d.B.transpose());

    d.leverages.resize(N);
    for (int r = 0; r < N; ++r) d.leverages(r) = d.B.row(r).dot(d.P_B.col(r));
    for (int r = 0; r < N; ++r) {
        if (d.leverages(r) > 1.0 - 1e-8)
            fail(ErrorCode::LeverageOne,
                 "observation " + std::to_string(d.perm[r]) + " has leverage 1 (cell " +
                 d.cell_labels[d.cell_of_row(r)] + " is saturated); add replication");
    }

    return d;
}

namespace {

Eigen::MatrixXd dunnett_rows(int a) {
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(a - 1, a);
    for (int i = 0; i < a - 1; ++i) {
        C(i, 0) = -1.0;
        C(i, i + 1) = 1.0;
    }
    return C;
}

Eigen::MatrixXd tukey_rows(int a) {
    const int q = a * (a - 1) / 2;
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(q, a);
    int r = 0;
    for (int i = 0; i < a; ++i)
        for (int j = i + 1; j < a; ++j) {
            C(r, i) = -1.0;
            C(r, j) = 1.0;
            ++r;
        }
    return C;
}

Eigen::MatrixXd grand_mean_rows(int a) {
    Eigen::MatrixXd C = Eigen::MatrixXd::Identity(a, a);
    C.array() -= 1.0 / a;
    return C;
}

std::vector<std::string> default_labels(ContrastKind kind, int a) {
    std::vector<std::string> labels;
    auto grp = [](int i) { return "g" + std::to_string(i + 1); };
    switch (kind) {
        case ContrastKind::Dunnett:
            for (int i = 1; i < a; ++i) labels.push_back(grp(i) + " - " + grp(0));
            break;
        case ContrastKind::Tukey:
            for (int i = 0; i < a; ++i)
                for (int j = i + 1; j < a; ++j) labels.push_back(grp(j) + " - " + grp(i));
            break;
        case ContrastKind::GrandMean:
            for (int i = 0; i < a; ++i) labels.push_back(grp(i) + " - mean");
            break;
        default:
            break;
    }
    return labels;
}

} // namespace

ContrastMatrix contrast(ContrastKind kind, int a) {
    if (a < 2) fail(ErrorCode::InvalidGroupCount, "contrasts need at least 2 groups");
    ContrastMatrix cm;
    cm.kind = kind;
    switch (kind) {
        case ContrastKind::Dunnett:   cm.C = dunnett_rows(a); break;
        case ContrastKind::Tukey:     cm.C = tukey_rows(a); break;
        case ContrastKind::GrandMean: cm.C = grand_mean_rows(a); break;
        default:
            fail(ErrorCode::InvalidContrast, "named contrast kind required (Dunnett, Tukey, GrandMean)");
    }
    cm.row_labels = default_labels(kind, a);
    return cm;
}

ContrastMatrix contrast(ContrastKind kind, const std::vector<std::string>& cell_labels) {
    const int a = static_cast<int>(cell_labels.size());
    ContrastMatrix cm = contrast(kind, a);
    std::vector<std::string> labels;
    switch (kind) {
        case ContrastKind::Dunnett:
            for (int i = 1; i < a; ++i) labels.push_back(cell_labels[i] + " - " + cell_labels[0]);
            break;
        case ContrastKind::Tukey:
            for (int i = 0; i < a; ++i)
                for (int j = i + 1; j < a; ++j)
                    labels.push_back(cell_labels[j] + " - " + cell_labels[i]);
            break;
        case ContrastKind::GrandMean:
            for (int i = 0; i < a; ++i) labels.push_back(cell_labels[i] + " - mean");
            break;
        default:
            break;
    }
    cm.row_labels = std::move(labels);
    return cm;
}

ContrastMatrix user_contrast(const Eigen::MatrixXd& C, std::vector<std::string> labels) {
    if (C.rows() == 0) fail(ErrorCode::InvalidContrast, "contrast matrix has no rows");
    for (int r = 0; r < C.rows(); ++r) {
        double row_sum = C.row(r).sum();
        if (std::abs(row_sum) > 1e-8)
            fail(ErrorCode::InvalidContrast, "contrast row " + std::to_string(r) +
                                             " sums to " + std::to_string(row_sum) + ", expected 0");
        if (C.row(r).cwiseAbs().maxCoeff() == 0.0)
            fail(ErrorCode::InvalidContrast, "contrast row " + std::to_string(r) + " is all zero");
        for (int c = 0; c < C.cols(); ++c)
            if (!std::isfinite(C(r, c)))
                fail(ErrorCode::NonFiniteInput, "contrast row " + std::to_string(r) + " has a non-finite entry");
    }
    ContrastMatrix cm;
    cm.C = C;
    cm.kind = ContrastKind::UserDefined;
    if (labels.empty()) {
        for (int r = 0; r < C.rows(); ++r) labels.push_back("contrast " + std::to_string(r + 1));
    } else if (static_cast<int>(labels.size()) != C.rows()) {
        fail(ErrorCode::InvalidContrast, "number of labels does not match number of contrast rows");
    }
    cm.row_labels = std::move(labels);
    return cm;
}

namespace {

Eigen::MatrixXd averaging_row(int levels) {
    return Eigen::MatrixXd::Constant(1, levels, 1.0 / levels);
}

Eigen::MatrixXd centering_matrix(int levels) {
    Eigen::MatrixXd P = Eigen::MatrixXd::Identity(levels, levels);
    P.array() -= 1.0 / levels;
    return P;
}

Eigen::MatrixXd kron(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    Eigen::MatrixXd K(A.rows() * B.rows(), A.cols() * B.cols());
    for (int i = 0; i < A.rows(); ++i)
        for (int j = 0; j < A.cols(); ++j)
            K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    return K;
}

// Orthonormal row basis of the row space, rows signed so the first nonzero
// entry is positive. Used to reduce rank-deficient interaction blocks like
// P_s (x) P_t to a minimal, reproducible set of contrast rows.
Eigen::MatrixXd orthonormal_row_basis(const Eigen::MatrixXd& C) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(C, Eigen::ComputeThinV);
    double tol = 1e-10 * svd.singularValues()(0);
    int rank = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) > tol) ++rank;
    Eigen::MatrixXd basis = svd.matrixV().leftCols(rank).transpose();
    for (int r = 0; r < basis.rows(); ++r) {
        for (int c = 0; c < basis.cols(); ++c) {
            if (std::abs(basis(r, c)) > 1e-12) {
                if (basis(r, c) < 0) basis.row(r) = -basis.row(r);
                break;
            }
        }
    }
    return basis;
}

} // namespace

ContrastMatrix factorial_contrast(const EffectSpec& effect, const std::vector<int>& levels) {
    const int F = static_cast<int>(levels.size());
    if (F == 0) fail(ErrorCode::ConfigError, "no factors given");
    for (int l : levels)
        if (l < 2) fail(ErrorCode::InvalidGroupCount, "each factor needs at least 2 levels");
    if (effect.factors.empty() || effect.factors.size() > 2)
        fail(ErrorCode::ConfigError, "effect must name one factor (main) or two (interaction)");
    for (int f : effect.factors)
        if (f < 0 || f >= F) fail(ErrorCode::UnknownFactor, "factor index " + std::to_string(f) + " out of range");
    if (effect.factors.size() == 2 && effect.factors[0] == effect.factors[1])
        fail(ErrorCode::ConfigError, "interaction needs two distinct factors");

    ContrastMatrix cm;
    std::vector<std::string> labels;

    if (effect.factors.size() == 1) {
        const int f = effect.factors[0];
        ContrastMatrix base = contrast(effect.base, levels[f]);
        Eigen::MatrixXd C = Eigen::MatrixXd::Ones(1, 1);
        for (int g = 0; g < F; ++g) {
            Eigen::MatrixXd block = (g == f) ? base.C : averaging_row(levels[g]);
            C = kron(C, block);
        }
        cm.C = C;
        cm.kind = base.kind;
        // base labels describe levels of factor f, averaged over the others
        labels = base.row_labels;
        for (auto& s : labels) s = "factor" + std::to_string(f + 1) + ": " + s;
    } else {
        int f1 = effect.factors[0], f2 = effect.factors[1];
        Eigen::MatrixXd C = Eigen::MatrixXd::Ones(1, 1);
        for (int g = 0; g < F; ++g) {
            Eigen::MatrixXd block;
            if (g == f1 || g == f2) block = centering_matrix(levels[g]);
            else block = averaging_row(levels[g]);
            C = kron(C, block);
        }
        cm.C = orthonormal_row_basis(C);
        cm.kind = ContrastKind::KroneckerComposite;
        for (int r = 0; r < cm.C.rows(); ++r)
            labels.push_back("interaction f" + std::to_string(f1 + 1) + "xf" + std::to_string(f2 + 1) +
                             " [" + std::to_string(r + 1) + "]");
    }

    cm.row_labels = std::move(labels);
    return cm;
}

std::vector<std::vector<std::string>> full_cross_levels(const DesignBundle& design) {
    if (design.cells.empty()) fail(ErrorCode::DataError, "design has no cells");
    const std::size_t F = design.cells.front().size();
    std::vector<std::set<std::string>> seen(F);
    for (const CellKey& key : design.cells)
        for (std::size_t f = 0; f < F; ++f) seen[f].insert(key[f]);

    std::size_t expected = 1;
    for (const auto& s : seen) expected *= s.size();
    if (expected != design.cells.size())
        fail(ErrorCode::NotFullCross,
             "observed " + std::to_string(design.cells.size()) + " cells but the full cross has " +
             std::to_string(expected) + "; every factor-level combination needs data");

    std::vector<std::vector<std::string>> out(F);
    for (std::size_t f = 0; f < F; ++f) out[f].assign(seen[f].begin(), seen[f].end());
    return out;
}

} // namespace mctp
