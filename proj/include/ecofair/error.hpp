#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ecofair {

enum class ErrorCode : std::uint8_t {
    InvalidArgument,
    DegenerateRate,
    InfeasibleCorrelation,
    InvalidOverlap,
    InvalidModel,
    EmptySample,
    EmptyGroup,
    DegenerateVariance,
    UnfittableStratum,
    SingularFit,
    EmptyData,
    ArityMismatch,
    MissingColumn,
    ParseFailure,
    NoReplicates,
    InsufficientRatios,
};

std::string_view error_name(ErrorCode code) noexcept;

// Every failure surfaced by the library carries a named code so the CLI can
// map it onto its exit-code contract and tests can match on it.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_name(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

#define ECOFAIR_REQUIRE(cond, code, msg)                  \
    do {                                                  \
        if (!(cond)) throw ::ecofair::Error((code), (msg)); \
    } while (0)

}  // namespace ecofair
