#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace magma {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid argument values (non-finite inputs, out-of-range ages, bad levels).
class DomainError : public Error {
public:
    using Error::Error;
};

// Malformed or inconsistent input data.
class DataError : public Error {
public:
    using Error::Error;
};

// Invalid configuration values.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Optimizer or EM failure.
class NumericalError : public Error {
public:
    using Error::Error;
};

class NonPsdError : public NumericalError {
public:
    NonPsdError(long dimension, std::vector<double> attempted_jitters);

    long dimension() const { return dimension_; }
    const std::vector<double>& attempted_jitters() const { return attempted_jitters_; }

private:
    long dimension_;
    std::vector<double> attempted_jitters_;
};

}  // namespace magma
