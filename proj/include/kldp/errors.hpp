#pragma once

#include <stdexcept>
#include <string>

namespace kldp {

// Argument outside the mathematical domain of a function (p outside (0,1), x <= 0, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Input is well-formed but carries too little information (empty histograms,
// constant samples, too few distinct values, too short a signal).
class DegenerateInputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Mismatched lengths or channel counts.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Singular or near-singular linear algebra, zero spread where a divisor is needed.
class ConditioningError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Inconsistent configuration or file content.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// File missing, unreadable or unwritable.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace kldp
