#pragma once

#include <complex>
#include <stdexcept>
#include <string>

namespace bvp {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Input expression falls outside the supported grammar.
struct MalformedSymbolError : Error {
    using Error::Error;
};

/// Matrix shapes or bundle ranks are inconsistent.
struct ShapeError : Error {
    using Error::Error;
};

/// Direct sums of problems with different orders or manifolds.
struct IncompatibleSumError : Error {
    using Error::Error;
};

/// Collar operator whose leading coefficient is not the identity.
struct NormalizationError : Error {
    using Error::Error;
};

/// A root of the frozen normal ODE sits too close to the real axis.
struct EllipticityMarginError : Error {
    std::complex<double> offending_root;
    EllipticityMarginError(const std::string& msg, std::complex<double> root)
        : Error(msg), offending_root(root) {}
};

/// An eigenvalue sits on the spectral splitting line.
struct SpectralCutError : Error {
    std::complex<double> offending_eigenvalue;
    SpectralCutError(const std::string& msg, std::complex<double> ev)
        : Error(msg), offending_eigenvalue(ev) {}
};

/// Boundary symbol is not invertible; the rotation homotopy cannot start.
struct CannotRotateError : Error {
    using Error::Error;
};

struct OrderError : Error {
    using Error::Error;
};

struct InvalidCutoffError : Error {
    using Error::Error;
};

/// Projection parity or admissible-class violations for the d functional.
struct AdmissibilityError : Error {
    using Error::Error;
};

/// Finite-rank modification vectors not aligned with the projection.
struct GeometryError : Error {
    using Error::Error;
};

/// Two independent numerical routes disagree.
struct NumericalInconsistencyError : Error {
    using Error::Error;
};

/// Requested discretization is not supported for this manifold/order.
struct CapabilityError : Error {
    using Error::Error;
};

/// Quantity cannot be resolved at the given tolerance.
struct ToleranceError : Error {
    using Error::Error;
};

struct ParseError : Error {
    using Error::Error;
};

}  // namespace bvp
