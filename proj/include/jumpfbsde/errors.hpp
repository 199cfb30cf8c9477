#pragma once

#include <stdexcept>
#include <string>

namespace jumpfbsde {

/// Non-finite state or coefficient value encountered during simulation.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Picard iteration of an implicit step failed to reach tolerance, or the
/// contraction pre-check failed.
class NonConvergence : public std::runtime_error {
public:
    NonConvergence(const std::string& what, double residual) : std::runtime_error(what), residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

}  // namespace jumpfbsde
