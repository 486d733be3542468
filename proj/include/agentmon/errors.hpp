#pragma once
// Error taxonomy shared by all modules. Every failure mode the public
// operations document maps to exactly one of these types.

#include <stdexcept>
#include <string>

namespace agentmon {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Input text could not be parsed at all. `line` is 1-based, 0 when unknown.
struct ParseError : Error {
    int line = 0;
    explicit ParseError(const std::string& msg, int line_no = 0)
        : Error(line_no > 0 ? "line " + std::to_string(line_no) + ": " + msg : msg),
          line(line_no) {}
};

// Parsed fine but violates a documented schema/type invariant.
struct SchemaViolation : Error {
    using Error::Error;
};

struct EmptyTrajectory : Error {
    using Error::Error;
};
struct EmptyInput : Error {
    using Error::Error;
};
struct EmptyReasoning : Error {
    using Error::Error;
};
struct DegenerateDistribution : Error {
    using Error::Error;
};
struct DimMismatch : Error {
    using Error::Error;
};
struct InsufficientData : Error {
    using Error::Error;
};
struct LabelRequired : Error {
    using Error::Error;
};
struct AbstractionFailed : Error {
    using Error::Error;
};
struct UnsupportedVersion : Error {
    using Error::Error;
};

// Backend transport gave up after the configured retries.
struct BackendUnavailable : Error {
    using Error::Error;
};
// Backend reachable but cannot satisfy the request (e.g. no logprob support).
struct CapabilityMissing : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};

}  // namespace agentmon
