#ifndef MCTP_ERRORS_HPP
#define MCTP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mctp {

// Failure classes surfaced by the library. The CLI maps these onto exit
// codes, so every throw site picks the code deliberately.
enum class ErrorCode {
    NonFiniteInput,
    EmptyCell,
    RankDeficient,
    LeverageOne,
    InvalidGroupCount,
    UnknownFactor,
    NotFullCross,
    InvalidContrast,
    InsufficientReplication,
    DegenerateVariance,
    NotPositiveSemidefinite,
    NoConvergence,
    AllResidualsZero,
    DegenerateBootstrap,
    ConfigError,
    DataError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
          code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

} // namespace mctp

#endif
