#pragma once

#include <stdexcept>
#include <string>

namespace palmforge {

struct InvalidArgument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct InsufficientData : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NoConsensus : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BankEmpty : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values detected during numeric work; message names the site.
struct NumericalFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NotCalibrated : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ProtocolViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateData : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace palmforge
