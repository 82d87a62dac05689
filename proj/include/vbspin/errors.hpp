// errors.hpp: exception types; the CLI maps each family onto an exit code

#pragma once

#include <stdexcept>
#include <string>

namespace vbspin {

/// Invalid configuration or input data (exit code 2).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Integrator produced NaN/Inf or otherwise lost the state (exit code 3).
class NumericalAbort : public std::runtime_error {
public:
    explicit NumericalAbort(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace vbspin
