#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stratadj {

enum class ErrorKind {
    InvalidInput,
    EmptyStratumArm,
    DimensionMismatch,
    NonFinite,
    DegenerateVariance,
    TooLarge,
    RankDeficient,
    ArmTooSmall,
    VarianceUndefined,
    SingularCovariance,
    InvalidAlpha,
    MethodInapplicable,
    ParseError,
};

std::string_view to_string(ErrorKind kind);

/// Library error. Every failure path in stratadj throws this with a kind
/// that callers (and the CLI exit-code mapping) can switch on.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace stratadj
