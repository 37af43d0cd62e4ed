#ifndef PSTF_CORE_ERRORS_HPP
#define PSTF_CORE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace pstf {

// Bad shapes, dim mismatches, schedule mismatches: the caller wired modules
// together incorrectly.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad arguments at an API or CLI boundary (unknown attribute, empty input,
// unknown template). Maps to exit code 2.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// A declared validation contract failed (config schema, probe quality gate).
// Maps to exit code 3.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Mid-run abort (non-finite loss, lock contention, broken artifact).
// Maps to exit code 4.
struct RuntimeAbort : std::runtime_error {
    explicit RuntimeAbort(const std::string& msg) : std::runtime_error(msg) {}
};

// extract_direction over pairs whose mean difference is exactly zero.
struct DegenerateDirectionError : UsageError {
    explicit DegenerateDirectionError(const std::string& msg) : UsageError(msg) {}
};

}  // namespace pstf

#endif  // PSTF_CORE_ERRORS_HPP
