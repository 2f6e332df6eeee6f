#pragma once

// Quantities that tie the dynamics to the conditioning of the residual
// problem: Lyapunov exponents, the block-bidiagonal residual Jacobian J and
// its singular values, PL bounds, and the linear rate of quasi methods.

#include "seqpar/core.hpp"
#include "seqpar/fixedpoint.hpp"
#include "seqpar/pscan.hpp"

#include <cstdint>
#include <vector>

namespace seqpar {

/// T * D above which the dense SVD paths refuse to run.
inline constexpr std::size_t kDenseOracleLimit = 4096;

struct LleEstimate {
  double lambda = 0.0;
  std::size_t horizon = 0;
  std::size_t probes = 0;
  std::vector<double> per_probe;
};

struct PlBounds {
  double lower = 0.0;
  double upper = 0.0;
  double lle = 0.0;
  double a_burn = 1.0;
  double b_burn = 1.0;
  std::size_t T = 0;
  std::size_t D = 0;
};

struct BurnInConstants {
  double a = 1.0;
  double b = 1.0;
};

struct DiagnosticsBundle {
  LleEstimate lle;
  PlBounds pl;
  double mismatch = 0.0;
  double gamma = 0.0;
};

/// Averages over `probes` random unit vectors the mean log stretch
/// (1/T) sum_t log ||A_t u_{t-1}|| with u renormalized every step.
[[nodiscard]] LleEstimate estimate_lle(const DynamicsSystem& sys, const Trajectory& traj, std::size_t probes = 3,
                                       std::uint64_t seed = 0, WorkerPool* pool = nullptr);

/// Dense TD x TD matrix with identity diagonal blocks and -A_t(s_{t-1}) on
/// the block subdiagonal (t = 2..T).
[[nodiscard]] Matrix assemble_big_j(const DynamicsSystem& sys, const Trajectory& traj);

/// Same layout from transitions t = 1..T (the first is unused).
[[nodiscard]] Matrix assemble_big_j(const std::vector<TransitionRepr>& transitions, std::size_t dim);

/// Residual Jacobian of the surrogate used by `method`.
[[nodiscard]] Matrix assemble_method_j(const DynamicsSystem& sys, const Trajectory& traj, const SolverMethod& method);

[[nodiscard]] double min_singular_value(const Matrix& M);
[[nodiscard]] double max_singular_value(const Matrix& M);

[[nodiscard]] PlBounds pl_bounds(double lle, double a_burn, double b_burn, std::size_t T, std::size_t D);

/// Tightest a >= 1 and b <= 1 with b e^{lambda k} <= ||A_{t+k} ... A_{t+1}||
/// <= a e^{lambda k} over all windows of length k <= max_window.
[[nodiscard]] BurnInConstants estimate_burn_in(const DynamicsSystem& sys, const Trajectory& traj, double lle,
                                               std::size_t max_window = 64);

/// max over t = 2..T of ||Ã_t - A_t||_2 at s_{t-1}.
[[nodiscard]] double jacobian_mismatch(const DynamicsSystem& sys, const Trajectory& traj, const SolverMethod& method);

/// ||J̃^{-1}||_2 by power iteration on J̃^{-T} J̃^{-1}, using block forward
/// and back substitution, so no dense TD x TD matrix is formed.
[[nodiscard]] double surrogate_inverse_norm(const DynamicsSystem& sys, const Trajectory& traj,
                                            const SolverMethod& method, std::size_t max_iters = 2000,
                                            double rel_tol = 1e-12);

/// gamma = ||J̃(s*)^{-1}||_2 * mismatch. Jacobi and Picard use their closed
/// forms for the inverse norm.
[[nodiscard]] double asymptotic_rate(const DynamicsSystem& sys, const Trajectory& traj_star,
                                     const SolverMethod& method);

[[nodiscard]] double picard_inverse_norm(std::size_t T);

[[nodiscard]] double basin_radius(double mu, double L);

[[nodiscard]] DiagnosticsBundle compute_diagnostics(const DynamicsSystem& sys, const Trajectory& traj_star,
                                                    const SolverMethod& method, std::size_t probes = 3,
                                                    std::uint64_t seed = 0);

}  // namespace seqpar
