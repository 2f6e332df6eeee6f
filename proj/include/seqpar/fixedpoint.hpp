#pragma once

// Fixed-point iterations for evaluating a nonlinear SSM in parallel over time.
//
// Every method linearizes f_t about the current iterate with some surrogate
// transition Ã_t and evaluates the resulting LDS
//   s_t <- Ã_t s_{t-1} + (f_t(s_{t-1}^old) - Ã_t s_{t-1}^old)
// with the scan. Newton uses the true Jacobian, the quasi method its diagonal,
// Picard the identity and Jacobi zero.

#include "seqpar/core.hpp"
#include "seqpar/pscan.hpp"
#include "seqpar/worker_pool.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace seqpar {

struct SolverMethod {
  enum class Kind { Newton, QuasiDiagonal, Picard, Jacobi, ScaledIdentity };

  Kind kind = Kind::Newton;
  double scale = 1.0;  // only read by ScaledIdentity

  static SolverMethod newton() { return {Kind::Newton, 1.0}; }
  static SolverMethod quasi_diagonal() { return {Kind::QuasiDiagonal, 1.0}; }
  static SolverMethod picard() { return {Kind::Picard, 1.0}; }
  static SolverMethod jacobi() { return {Kind::Jacobi, 1.0}; }
  static SolverMethod scaled_identity(double a) { return {Kind::ScaledIdentity, a}; }

  [[nodiscard]] std::string name() const;
  /// Parses newton | quasi | picard | jacobi | scaled:<a>.
  [[nodiscard]] static SolverMethod parse(const std::string& text);
};

struct Damping {
  enum class Kind { None, Scale, Clip };

  Kind kind = Kind::None;
  double k = 0.0;
  double lo = -1.0;
  double hi = 1.0;

  static Damping none() { return {}; }
  static Damping scale(double k) { return {Kind::Scale, k, -1.0, 1.0}; }
  static Damping clip(double lo = -1.0, double hi = 1.0) { return {Kind::Clip, 0.0, lo, hi}; }

  void validate() const;
  [[nodiscard]] std::string name() const;
};

struct InitStrategy {
  enum class Kind { Zeros, RandomNormal, JacobiStep };

  Kind kind = Kind::JacobiStep;
  std::uint64_t seed = 0;

  static InitStrategy zeros() { return {Kind::Zeros, 0}; }
  static InitStrategy random_normal(std::uint64_t seed) { return {Kind::RandomNormal, seed}; }
  static InitStrategy jacobi_step() { return {Kind::JacobiStep, 0}; }
};

enum class ConvergenceMetric { SuccessiveDiff, MeritPerStep };

struct SolverConfig {
  double tol = 1e-4;
  std::optional<std::size_t> max_iters;  // defaults to T
  InitStrategy init;
  std::optional<std::size_t> window;
  Damping damping;
  bool record_history = true;
  ConvergenceMetric metric = ConvergenceMetric::SuccessiveDiff;
  /// Probe count for a Hutchinson diagonal. Unset means the system's own
  /// diag_jacobian (analytic where available).
  std::optional<std::size_t> diag_samples;
  std::shared_ptr<WorkerPool> pool;
  /// Overrides `init` when set.
  std::optional<Trajectory> initial_guess;
  /// Called after each sweep with the 1-based sweep index and new iterate.
  std::function<void(std::size_t, const Trajectory&)> on_iterate;

  void validate(std::size_t horizon) const;
};

struct IterationRecord {
  double merit = 0.0;
  double max_abs_diff = 0.0;
};

struct SolveReport {
  Trajectory trajectory;
  bool converged = false;
  /// Sweeps that still moved the iterate by more than tol. The final sweep
  /// that confirms convergence is not counted, so an exact first update
  /// reports 1.
  std::size_t iterations = 0;
  /// All sweeps performed, including the confirming one.
  std::size_t sweeps = 0;
  std::vector<IterationRecord> history;
  std::size_t resets = 0;
  double elapsed = 0.0;
};

/// One LDS element per step, linearized about traj.
[[nodiscard]] std::vector<AffineOp> linearize(const DynamicsSystem& sys, const Trajectory& traj,
                                              const SolverMethod& method, const Damping& damping,
                                              WorkerPool* pool = nullptr,
                                              std::optional<std::size_t> diag_samples = std::nullopt);

/// Surrogate transition of `method` at state s, before damping.
[[nodiscard]] TransitionRepr method_transition(const DynamicsSystem& sys, std::size_t t, const Vector& s,
                                               const SolverMethod& method,
                                               std::optional<std::size_t> diag_samples = std::nullopt);

[[nodiscard]] TransitionRepr apply_damping(TransitionRepr a, const Damping& damping);

/// s_t = f_t(0) for every t.
[[nodiscard]] Trajectory jacobi_init(const DynamicsSystem& sys, WorkerPool* pool = nullptr);

[[nodiscard]] Trajectory initial_iterate(const DynamicsSystem& sys, const SolverConfig& config);

/// Zeroes every non-finite entry. Returns true if anything was replaced.
bool reset_non_finite(Trajectory& traj);

using UpdateFn = std::function<Trajectory(const DynamicsSystem&, const Trajectory&, WorkerPool*)>;

/// Shared driver: repeatedly applies `update` under the stopping, reset and
/// window rules of `config`.
[[nodiscard]] SolveReport run_fixed_point(const DynamicsSystem& sys, const SolverConfig& config,
                                          const UpdateFn& update);

[[nodiscard]] SolveReport fixed_point_solve(const DynamicsSystem& sys, const SolverConfig& config,
                                            const SolverMethod& method);

/// For each iterate, the number of leading steps within tol of the oracle.
[[nodiscard]] std::vector<std::size_t> prefix_lock_check(const std::vector<Trajectory>& iterates,
                                                         const Trajectory& oracle, double tol = 1e-8);

}  // namespace seqpar
