#pragma once

#include <stdexcept>
#include <string>

namespace bnip {

// Inputs violate a documented precondition (dimensions, ranges, missing classes).
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// A numerical routine could not produce a trustworthy answer
// (rank deficiency, singular systems, non-PSD covariance).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// File system and parse failures raised by the io layer.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace bnip
