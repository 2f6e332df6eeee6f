#pragma once

// Jacobian access for systems without closed forms: central finite
// differences, Jacobian-vector products, and the Hutchinson diagonal
// estimator diag(A) ~ mean of v .* (A v) over Rademacher probes v.

#include "seqpar/core.hpp"

#include <cstdint>

namespace seqpar {

struct DiagEstimate {
  Vector values;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
};

/// Default step for fd_jacobian().
inline constexpr double kDefaultFdStep = 1e-6;

/// Central-difference JVP (f(s + h v) - f(s - h v)) / (2h) with
/// h = 1e-6 (1 + |s|_inf) / max(|v|_inf, 1).
[[nodiscard]] Vector fd_jvp(const DynamicsSystem& sys, std::size_t t, const Vector& s, const Vector& v);

/// A_t(s) v through the system's own jvp (analytic where the model provides
/// one). Throws NumericalError naming t when the product is non-finite.
[[nodiscard]] Vector jvp(const DynamicsSystem& sys, std::size_t t, const Vector& s, const Vector& v);

/// Central differences, one column per coordinate, raw step h.
[[nodiscard]] Matrix fd_jacobian(const DynamicsSystem& sys, std::size_t t, const Vector& s,
                                 double h = kDefaultFdStep);

[[nodiscard]] DiagEstimate hutchinson_diag(const DynamicsSystem& sys, std::size_t t, const Vector& s,
                                           std::size_t samples, std::uint64_t seed);

/// Probe seed used by DynamicsSystem::diag_jacobian's default.
[[nodiscard]] std::uint64_t default_probe_seed(std::size_t t) noexcept;

}  // namespace seqpar
