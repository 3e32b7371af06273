#pragma once

#include <stdexcept>
#include <string>

namespace cqf {

enum class ErrorCode {
    NotHurwitz,
    Singular,
    SingularOperator,
    SingularBlock,
    SingularTheta,
    SingularU,
    DimensionMismatch,
    BadDimensions,
    NotPositiveDefinite,
    NotAntisymmetric,
    RankDeficientG,
    GenerationFailed,
    NoStabilizingSolution,
    NonHurwitzIterate,
    NumericalFailure,
    InvalidConfig,
    Io,
};

inline const char* to_string(ErrorCode c) {
    switch (c) {
    case ErrorCode::NotHurwitz: return "NotHurwitz";
    case ErrorCode::Singular: return "Singular";
    case ErrorCode::SingularOperator: return "SingularOperator";
    case ErrorCode::SingularBlock: return "SingularBlock";
    case ErrorCode::SingularTheta: return "SingularTheta";
    case ErrorCode::SingularU: return "SingularU";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::BadDimensions: return "BadDimensions";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::NotAntisymmetric: return "NotAntisymmetric";
    case ErrorCode::RankDeficientG: return "RankDeficientG";
    case ErrorCode::GenerationFailed: return "GenerationFailed";
    case ErrorCode::NoStabilizingSolution: return "NoStabilizingSolution";
    case ErrorCode::NonHurwitzIterate: return "NonHurwitzIterate";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

} // namespace cqf
