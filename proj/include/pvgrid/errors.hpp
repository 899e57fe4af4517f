#pragma once

#include <stdexcept>
#include <string>

namespace pvgrid {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ValidationCode {
    DuplicateId,
    DanglingReference,
    ZeroImpedance,
    NoSlack,
    MultipleSlack,
    Disconnected,
    InvalidValue,
    Parse,
};

/// Raised while parsing or validating a network description.
class ValidationError : public Error {
public:
    ValidationError(ValidationCode code, const std::string& what) : Error(what), code_(code) {}
    ValidationCode code() const noexcept { return code_; }

private:
    ValidationCode code_;
};

/// Newton-Raphson hit its iteration cap (or produced non-finite values).
class DivergenceError : public Error {
public:
    DivergenceError(int iterations, double mismatch, const std::string& what)
        : Error(what), iterations_(iterations), mismatch_(mismatch) {}
    int iterations() const noexcept { return iterations_; }
    double mismatch() const noexcept { return mismatch_; }

private:
    int iterations_;
    double mismatch_;
};

/// Jacobian could not be factorised: islanded bus or voltage collapse.
class SingularJacobianError : public Error {
public:
    SingularJacobianError(int iteration, const std::string& what) : Error(what), iteration_(iteration) {}
    int iteration() const noexcept { return iteration_; }

private:
    int iteration_;
};

/// The harmonic admittance matrix is singular at the given order.
class ResonanceError : public Error {
public:
    ResonanceError(int order, const std::string& what) : Error(what), order_(order) {}
    int order() const noexcept { return order_; }

private:
    int order_;
};

/// A reactive injection request exceeds the device rating.
class CompensationLimitError : public Error {
public:
    using Error::Error;
};

}  // namespace pvgrid
