#pragma once

#include <stdexcept>
#include <string>

namespace d3ro {

struct D3ROError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionMismatch : D3ROError {
    using D3ROError::D3ROError;
};
// mode probabilities left the simplex at an evaluated y
struct SimplexViolation : D3ROError {
    using D3ROError::D3ROError;
};
// a builder or oracle was handed an instance outside its scope
struct PreconditionViolated : D3ROError {
    using D3ROError::D3ROError;
};
struct NegativeBoundViolation : D3ROError {
    using D3ROError::D3ROError;
};
struct UnboundedSupport : D3ROError {
    using D3ROError::D3ROError;
};
struct DualInfeasible : D3ROError {
    using D3ROError::D3ROError;
};
struct GuardExceeded : D3ROError {
    using D3ROError::D3ROError;
};

}  // namespace d3ro
