#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace isgr {

enum class ErrorCode {
    DuplicateDisplayName,
    InvalidBbox,
    InvalidLabel,
    UnknownEntity,
    SelfLoop,
    StageMismatch,
    EmptyGraph,
    GraphParse,
    FixtureMiss,
    UnknownScene,
    Timeout,
    HttpStatus,
    MalformedResponse,
    ImageUnavailable,
    InvalidConfig,
    InvalidRequest,
    ManifestParse,
    UnwritableOutput,
    UnknownSource,
    UnknownRecordId,
    DecisionLogParse,
    DatasetUnreadable,
    BindFailure,
};

std::string_view to_string(ErrorCode code);

// Every failure in the library is reported through this type; `code()` is the
// machine-readable part, `what()` carries the human detail.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail)
        : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code), detail_(detail) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

}  // namespace isgr
