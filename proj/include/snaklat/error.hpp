#pragma once

#include <stdexcept>
#include <string>

namespace snaklat {

enum class ErrorKind {
    Config,
    SingularJacobian,
    NoConvergence,
    SingularBorderedSystem,
    CorrectorStalled,
    RefinementFailed,
    FactorizationFailure,
    AmbiguousCrossing,
    WrongNullity,
    StepUnderflow,
    UnknownId,
    Io,
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::SingularJacobian: return "SingularJacobian";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::SingularBorderedSystem: return "SingularBorderedSystem";
    case ErrorKind::CorrectorStalled: return "CorrectorStalled";
    case ErrorKind::RefinementFailed: return "RefinementFailed";
    case ErrorKind::FactorizationFailure: return "FactorizationFailure";
    case ErrorKind::AmbiguousCrossing: return "AmbiguousCrossing";
    case ErrorKind::WrongNullity: return "WrongNullity";
    case ErrorKind::StepUnderflow: return "StepUnderflow";
    case ErrorKind::UnknownId: return "UnknownId";
    case ErrorKind::Io: return "IoError";
    }
    return "Error";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    /// Process exit code: 2 for configuration problems, 1 for everything numerical.
    int exit_code() const noexcept { return kind_ == ErrorKind::Config ? 2 : 1; }

private:
    ErrorKind kind_;
};

}  // namespace snaklat
