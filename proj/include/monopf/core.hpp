#pragma once

// Shared numeric aliases and the error type used across the library.

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace monopf {

using Real = double;
using Complex = std::complex<double>;
using Index = Eigen::Index;

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;

/// Failure categories. Each one corresponds to a distinct way an operation
/// can refuse its input or give up.
enum class ErrorCode {
    MissingSection,
    MalformedRow,
    MultipleSlack,
    NoSlack,
    UnknownBus,
    ZeroImpedance,
    AsymmetricAdmittance,
    PVWithoutGen,
    DimensionMismatch,
    NonSquare,
    ConvergenceFailure,
    SingularW,
    ProjectionNotConverged,
    SingularNominalJacobian,
    StepUnderflow,
    SamplingExhausted,
    InvalidArgument,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MissingSection: return "MissingSection";
        case ErrorCode::MalformedRow: return "MalformedRow";
        case ErrorCode::MultipleSlack: return "MultipleSlack";
        case ErrorCode::NoSlack: return "NoSlack";
        case ErrorCode::UnknownBus: return "UnknownBus";
        case ErrorCode::ZeroImpedance: return "ZeroImpedance";
        case ErrorCode::AsymmetricAdmittance: return "AsymmetricAdmittance";
        case ErrorCode::PVWithoutGen: return "PVWithoutGen";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::NonSquare: return "NonSquare";
        case ErrorCode::ConvergenceFailure: return "ConvergenceFailure";
        case ErrorCode::SingularW: return "SingularW";
        case ErrorCode::ProjectionNotConverged: return "ProjectionNotConverged";
        case ErrorCode::SingularNominalJacobian: return "SingularNominalJacobian";
        case ErrorCode::StepUnderflow: return "StepUnderflow";
        case ErrorCode::SamplingExhausted: return "SamplingExhausted";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Parse failure tied to a 1-based line of the input text.
class ParseError : public Error {
public:
    ParseError(ErrorCode code, std::size_t line, const std::string& what)
        : Error(code, "line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Projection onto a monotonicity domain that ran out of iterations. Carries
/// the last iterate so callers can inspect how close it got.
class ProjectionError : public Error {
public:
    ProjectionError(Vector last_iterate, Real residual)
        : Error(ErrorCode::ProjectionNotConverged,
                "Dykstra projection stalled at residual " + std::to_string(residual)),
          last_(std::move(last_iterate)),
          residual_(residual) {}

    const Vector& last_iterate() const noexcept { return last_; }
    Real residual() const noexcept { return residual_; }

private:
    Vector last_;
    Real residual_;
};

inline void require(bool condition, ErrorCode code, const std::string& what) {
    if (!condition) throw Error(code, what);
}

}  // namespace monopf
