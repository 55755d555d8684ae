#pragma once

#include <stdexcept>
#include <string>

namespace forge {

/// Failure class, mapped to process exit codes by the CLI
/// (0 ok, 2 invariant failure, 3 numerical failure).
enum class ErrorClass { Invariant, Numerical };

class ForgeError : public std::runtime_error {
public:
    ForgeError(ErrorClass cls, std::string what)
        : std::runtime_error(std::move(what)), cls_(cls) {}
    ErrorClass error_class() const { return cls_; }

private:
    ErrorClass cls_;
};

#define FORGE_DEFINE_ERROR(Name, Class)                                  \
    class Name : public ForgeError {                                     \
    public:                                                              \
        explicit Name(const std::string& msg)                            \
            : ForgeError(ErrorClass::Class, std::string(#Name ": ") + msg) {} \
    }

// curve
FORGE_DEFINE_ERROR(NotEmbedded, Invariant);
FORGE_DEFINE_ERROR(NotConvex, Invariant);
FORGE_DEFINE_ERROR(ConvexityLost, Invariant);
FORGE_DEFINE_ERROR(DegenerateTangent, Numerical);

// dynamics
FORGE_DEFINE_ERROR(DiagonalChord, Numerical);
FORGE_DEFINE_ERROR(BracketFailure, Numerical);
FORGE_DEFINE_ERROR(GuardViolation, Invariant);

// orbits
FORGE_DEFINE_ERROR(OrderingViolated, Invariant);
FORGE_DEFINE_ERROR(GapOutsideGuard, Invariant);
FORGE_DEFINE_ERROR(NoCriticalPoint, Numerical);
FORGE_DEFINE_ERROR(AmbiguousMaximizer, Invariant);

// manifolds
FORGE_DEFINE_ERROR(NotHyperbolic, Invariant);
FORGE_DEFINE_ERROR(LeftAnnulus, Numerical);
FORGE_DEFINE_ERROR(JetUnresolved, Numerical);
FORGE_DEFINE_ERROR(WindowTooSmall, Invariant);
FORGE_DEFINE_ERROR(WindowAmbiguous, Invariant);

// splitting
FORGE_DEFINE_ERROR(NotOneFibered, Invariant);
FORGE_DEFINE_ERROR(NotSymmetricTwoFibered, Invariant);
FORGE_DEFINE_ERROR(TangentVertical, Invariant);
FORGE_DEFINE_ERROR(ContinuationLost, Numerical);
FORGE_DEFINE_ERROR(TailNotConverged, Numerical);
FORGE_DEFINE_ERROR(NewtonDiverged, Numerical);
FORGE_DEFINE_ERROR(UniquenessLost, Invariant);

FORGE_DEFINE_ERROR(NumericalFailure, Numerical);
FORGE_DEFINE_ERROR(ConfigError, Invariant);

#undef FORGE_DEFINE_ERROR

} // namespace forge
