#ifndef MASEM_ERRORS_HPP
#define MASEM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace masem {

// Base class for all toolkit errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file (bad row, wrong column count, unparsable number).
class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

// Input violates a domain invariant (|r| >= 1, N < 4, duplicates, unmapped
// measures, missing pairs, non-positive composite denominator, ...).
class DomainError : public Error {
public:
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

// Structural problem in a path-model specification (cycle, unknown variable,
// repeated dependent).
class ModelError : public Error {
public:
    explicit ModelError(const std::string& msg) : Error(msg) {}
};

// Optimizer failed to converge within its iteration cap.
class ConvergenceError : public Error {
public:
    explicit ConvergenceError(const std::string& msg) : Error(msg) {}
};

} // namespace masem

#endif
