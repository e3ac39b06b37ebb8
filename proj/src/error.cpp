#include "ecofair/error.hpp"

namespace ecofair {

std::string_view error_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::DegenerateRate: return "DegenerateRate";
        case ErrorCode::InfeasibleCorrelation: return "InfeasibleCorrelation";
        case ErrorCode::InvalidOverlap: return "InvalidOverlap";
        case ErrorCode::InvalidModel: return "InvalidModel";
        case ErrorCode::EmptySample: return "EmptySample";
        case ErrorCode::EmptyGroup: return "EmptyGroup";
        case ErrorCode::DegenerateVariance: return "DegenerateVariance";
        case ErrorCode::UnfittableStratum: return "UnfittableStratum";
        case ErrorCode::SingularFit: return "SingularFit";
        case ErrorCode::EmptyData: return "EmptyData";
        case ErrorCode::ArityMismatch: return "ArityMismatch";
        case ErrorCode::MissingColumn: return "MissingColumn";
        case ErrorCode::ParseFailure: return "ParseFailure";
        case ErrorCode::NoReplicates: return "NoReplicates";
        case ErrorCode::InsufficientRatios: return "InsufficientRatios";
    }
    return "Unknown";
}

}  // namespace ecofair
