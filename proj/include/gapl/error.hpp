#pragma once

#include <stdexcept>
#include <string>

namespace gapl {

// Mirrors gapl_status in gapl.h; values are part of the C ABI.
enum class ErrorCode : int {
    Argument = 1,
    Shape = 2,
    Divergence = 3,
    LabelRange = 4,
    Format = 5,
    SpecMismatch = 6,
    InsufficientTrace = 7,
    MissingCheckpoint = 8,
    Config = 9,
    Io = 10,
};

const char* error_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code), message_(what) {}

    ErrorCode code() const noexcept { return code_; }
    // what() without the category prefix.
    const std::string& message() const noexcept { return message_; }

private:
    ErrorCode code_;
    std::string message_;
};

#define GAPL_DEFINE_ERROR(Name)                                                        \
    struct Name##Error : Error {                                                       \
        explicit Name##Error(const std::string& what) : Error(ErrorCode::Name, what) {} \
    };

GAPL_DEFINE_ERROR(Argument)
GAPL_DEFINE_ERROR(Shape)
GAPL_DEFINE_ERROR(LabelRange)
GAPL_DEFINE_ERROR(SpecMismatch)
GAPL_DEFINE_ERROR(InsufficientTrace)
GAPL_DEFINE_ERROR(Config)
GAPL_DEFINE_ERROR(Io)

#undef GAPL_DEFINE_ERROR

struct DivergenceError : Error {
    explicit DivergenceError(const std::string& what, long long iteration = -1)
        : Error(ErrorCode::Divergence,
                iteration >= 0 ? what + " at iteration " + std::to_string(iteration) : what),
          iteration(iteration) {}
    long long iteration;
};

// Byte offset (binary files) or line number (text files) of the offending input.
struct FormatError : Error {
    FormatError(const std::string& what, long long position = -1)
        : Error(ErrorCode::Format, what), position(position) {}
    long long position;
};

struct MissingCheckpointError : Error {
    using Error::Error;
    explicit MissingCheckpointError(const std::string& what) : Error(ErrorCode::MissingCheckpoint, what) {}
};

}  // namespace gapl
