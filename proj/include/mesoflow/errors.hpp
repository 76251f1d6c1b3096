#pragma once

#include <stdexcept>
#include <string>

namespace mesoflow {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid or inconsistent configuration / input data.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// A numerical solver failed to converge or produced non-finite values.
class SolverError : public Error {
public:
    explicit SolverError(const std::string& msg) : Error(msg) {}
};

/// Point lies outside the computational domain.
class DomainError : public Error {
public:
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

/// A proposed explicit step was rejected (stability or positivity);
/// carries the step size the integrator should retry with.
class StepRejected : public SolverError {
public:
    StepRejected(const std::string& msg, double suggested)
        : SolverError(msg), suggested_dt(suggested) {}
    double suggested_dt = 0.0;
};

} // namespace mesoflow
