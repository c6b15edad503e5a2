#pragma once

#include <stdexcept>
#include <string>

namespace mvlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shapes or dimensions that do not conform to the configured space.
class StructuralError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation (negative time, dt <= 0, u not in U, NaN).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Requested feature exists in the interface but not for this configuration.
class UnsupportedError : public Error {
public:
    using Error::Error;
};

/// Non-finite state produced during a forward simulation.
class SimulationFault : public Error {
public:
    SimulationFault(int step, int particle, const std::string& what)
        : Error("simulation fault at step " + std::to_string(step) + ", particle " +
                std::to_string(particle) + ": " + what),
          step_(step), particle_(particle) {}

    int step() const noexcept { return step_; }
    int particle() const noexcept { return particle_; }

private:
    int step_;
    int particle_;
};

/// Fixed-point iteration of the mean-field adjoint stopped contracting.
class PicardDivergence : public Error {
public:
    PicardDivergence(double ratio, int iteration)
        : Error("Picard iteration not contracting: distance ratio " + std::to_string(ratio) +
                " at iteration " + std::to_string(iteration)),
          ratio_(ratio), iteration_(iteration) {}

    double ratio() const noexcept { return ratio_; }
    int iteration() const noexcept { return iteration_; }

private:
    double ratio_;
    int iteration_;
};

}  // namespace mvlab
