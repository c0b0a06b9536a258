#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace planeval {

enum class ErrorKind {
    // plan-core
    NotParseable,
    UnknownTool,
    BadStepKey,
    MissingField,
    MalformedToolCall,
    EmptyPlan,
    InvalidPlan,
    // lineage-store
    BoundaryMismatch,
    // judge-gateway
    BackendUnavailable,
    FormatUnrecoverable,
    QuotaExceeded,
    UnknownRole,
    // metric-eval / oneshot-eval / refine-loop
    JudgeFormatError,
    MissingReference,
    MissingMetric,
    WeightBudgetViolation,
    NoScoreField,
    NonNumericScore,
    UnknownTag,
    InvalidRevisedPlan,
    EmptyInput,
    // weight-learning
    EmptyTriples,
    DegenerateGrid,
    InfeasibleLattice,
    TooFewPlanners,
    // agreement-stats
    LengthMismatch,
    EmptySeries,
    LabelOutOfRange,
    RowSumMismatch,
    ZeroVariance,
    EmptyItems,
    DegenerateAgreement,
    // bench-cli
    MissingColumn,
    DuplicateTripleKey,
    InvalidBestPlan,
    BadInput,
    Io,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::NotParseable: return "NotParseable";
        case ErrorKind::UnknownTool: return "UnknownTool";
        case ErrorKind::BadStepKey: return "BadStepKey";
        case ErrorKind::MissingField: return "MissingField";
        case ErrorKind::MalformedToolCall: return "MalformedToolCall";
        case ErrorKind::EmptyPlan: return "EmptyPlan";
        case ErrorKind::InvalidPlan: return "InvalidPlan";
        case ErrorKind::BoundaryMismatch: return "BoundaryMismatch";
        case ErrorKind::BackendUnavailable: return "BackendUnavailable";
        case ErrorKind::FormatUnrecoverable: return "FormatUnrecoverable";
        case ErrorKind::QuotaExceeded: return "QuotaExceeded";
        case ErrorKind::UnknownRole: return "UnknownRole";
        case ErrorKind::JudgeFormatError: return "JudgeFormatError";
        case ErrorKind::MissingReference: return "MissingReference";
        case ErrorKind::MissingMetric: return "MissingMetric";
        case ErrorKind::WeightBudgetViolation: return "WeightBudgetViolation";
        case ErrorKind::NoScoreField: return "NoScoreField";
        case ErrorKind::NonNumericScore: return "NonNumericScore";
        case ErrorKind::UnknownTag: return "UnknownTag";
        case ErrorKind::InvalidRevisedPlan: return "InvalidRevisedPlan";
        case ErrorKind::EmptyInput: return "EmptyInput";
        case ErrorKind::EmptyTriples: return "EmptyTriples";
        case ErrorKind::DegenerateGrid: return "DegenerateGrid";
        case ErrorKind::InfeasibleLattice: return "InfeasibleLattice";
        case ErrorKind::TooFewPlanners: return "TooFewPlanners";
        case ErrorKind::LengthMismatch: return "LengthMismatch";
        case ErrorKind::EmptySeries: return "EmptySeries";
        case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
        case ErrorKind::RowSumMismatch: return "RowSumMismatch";
        case ErrorKind::ZeroVariance: return "ZeroVariance";
        case ErrorKind::EmptyItems: return "EmptyItems";
        case ErrorKind::DegenerateAgreement: return "DegenerateAgreement";
        case ErrorKind::MissingColumn: return "MissingColumn";
        case ErrorKind::DuplicateTripleKey: return "DuplicateTripleKey";
        case ErrorKind::InvalidBestPlan: return "InvalidBestPlan";
        case ErrorKind::BadInput: return "BadInput";
        case ErrorKind::Io: return "Io";
    }
    return "Unknown";
}

/// Library-wide exception. `detail()` carries an optional payload, e.g. the
/// last judge response when format retries run out.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message, std::string detail = {})
        : std::runtime_error(std::string(to_string(kind)) + ": " + message),
          kind_(kind),
          detail_(std::move(detail)) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorKind kind_;
    std::string detail_;
};

}  // namespace planeval
