#pragma once

#include <stdexcept>
#include <string>

namespace commodopt {

// Invalid parameters or arguments outside a function's domain.
class DomainError : public std::domain_error {
public:
    explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

// A target value lies outside the attainable range of a monotone map
// (e.g. an option price outside the no-arbitrage bounds).
class NoSolutionError : public DomainError {
public:
    explicit NoSolutionError(const std::string& what) : DomainError(what) {}
};

// An iterative scheme did not reach its tolerance.
class ConvergenceError : public std::runtime_error {
public:
    explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input files (CSV rows, JSON records).
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace commodopt
