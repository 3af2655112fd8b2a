#include "mctp/errors.hpp"

namespace mctp {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::NonFiniteInput:          return "non_finite_input";
        case ErrorCode::EmptyCell:               return "empty_cell";
        case ErrorCode::RankDeficient:           return "rank_deficient";
        case ErrorCode::LeverageOne:             return "leverage_one";
        case ErrorCode::InvalidGroupCount:       return "invalid_group_count";
        case ErrorCode::UnknownFactor:           return "unknown_factor";
        case ErrorCode::NotFullCross:            return "not_full_cross";
        case ErrorCode::InvalidContrast:         return "invalid_contrast";
        case ErrorCode::InsufficientReplication: return "insufficient_replication";
        case ErrorCode::DegenerateVariance:      return "degenerate_variance";
        case ErrorCode::NotPositiveSemidefinite: return "not_positive_semidefinite";
        case ErrorCode::NoConvergence:           return "no_convergence";
        case ErrorCode::AllResidualsZero:        return "all_residuals_zero";
        case ErrorCode::DegenerateBootstrap:     return "degenerate_bootstrap";
        case ErrorCode::ConfigError:             return "config_error";
        case ErrorCode::DataError:               return "data_error";
    }
    return "unknown_error";
}

} // namespace mctp
