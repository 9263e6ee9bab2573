#pragma once

#include <stdexcept>
#include <string>

namespace ftau {

/// Raised when input data or configuration fails validation.
/// The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised when a computation degenerates numerically (singular systems,
/// empty kernel windows, failed bandwidth selection). CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ftau
