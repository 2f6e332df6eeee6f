#pragma once

// Domain types shared by every solver: states, trajectories, the dynamics
// interface, residuals, and the sequential rollout oracle.
//
// Time indices follow the recurrence s_t = f_t(s_{t-1}) with t in 1..T; the
// initial state s_0 is fixed and never an optimization variable. Trajectory
// rows are stored row-major so that one time step is contiguous.

#include "seqpar/worker_pool.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace seqpar {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using StateVector = Vector;

/// Raised when a caller breaks a documented precondition (shape mismatch,
/// out-of-range parameter, unsupported combination of options).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a computation produces values it cannot continue from. Carries
/// the 1-based time index at which the failure was detected (0 if not tied to
/// a time step).
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::size_t time_index)
      : std::runtime_error(what), time_index_(time_index) {}

  [[nodiscard]] std::size_t time_index() const noexcept { return time_index_; }

 private:
  std::size_t time_index_;
};

inline void require(bool condition, const char* message) {
  if (!condition) throw ContractViolation(message);
}

/// A full state sequence s_{1:T} together with the fixed initial state s_0.
/// Entries are allowed to be non-finite: intermediate solver iterates may
/// overflow, and callers detect that through has_non_finite().
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(StateVector initial, std::size_t horizon);
  Trajectory(StateVector initial, RowMatrix states);

  [[nodiscard]] std::size_t horizon() const noexcept { return static_cast<std::size_t>(states_.rows()); }
  [[nodiscard]] std::size_t dim() const noexcept { return static_cast<std::size_t>(initial_.size()); }

  [[nodiscard]] const StateVector& initial() const noexcept { return initial_; }
  [[nodiscard]] const RowMatrix& states() const noexcept { return states_; }
  [[nodiscard]] RowMatrix& states() noexcept { return states_; }

  /// State at time t in 0..T, where t = 0 returns the initial state.
  [[nodiscard]] Vector at(std::size_t t) const;
  void set(std::size_t t, const Vector& value);

  [[nodiscard]] bool has_non_finite() const;

 private:
  StateVector initial_;
  RowMatrix states_;
};

/// A discrete-time state space model s_t = f_t(s_{t-1}), t = 1..T.
///
/// Implementations must be deterministic pure functions of (t, s); any
/// stochastic input is drawn at construction from an explicit seed and curried
/// into f_t. Instances are immutable after construction and safe to share
/// between threads.
class DynamicsSystem {
 public:
  virtual ~DynamicsSystem() = default;

  [[nodiscard]] virtual std::size_t dim() const = 0;
  [[nodiscard]] virtual std::size_t horizon() const = 0;
  [[nodiscard]] virtual StateVector initial_state() const = 0;

  [[nodiscard]] virtual Vector step(std::size_t t, const Vector& s) const = 0;
  [[nodiscard]] virtual Matrix jacobian(std::size_t t, const Vector& s) const = 0;

  /// diag of the Jacobian. The default is a single-probe Hutchinson estimate
  /// built on jvp(), with a probe seed derived from t so the result stays a
  /// pure function of (t, s).
  [[nodiscard]] virtual Vector diag_jacobian(std::size_t t, const Vector& s) const;

  /// Jacobian-vector product A_t(s) v. Defaults to central differences.
  [[nodiscard]] virtual Vector jvp(std::size_t t, const Vector& s, const Vector& v) const;

  /// Human-readable model name for reports.
  [[nodiscard]] virtual std::string name() const { return "system"; }
};

/// Presents steps lo+1 .. lo+len of a base system as a standalone system whose
/// initial state is supplied by the caller. Used for windowed solves.
class WindowView final : public DynamicsSystem {
 public:
  WindowView(const DynamicsSystem& base, std::size_t offset, std::size_t length, StateVector initial);

  [[nodiscard]] std::size_t dim() const override { return base_.dim(); }
  [[nodiscard]] std::size_t horizon() const override { return length_; }
  [[nodiscard]] StateVector initial_state() const override { return initial_; }
  [[nodiscard]] Vector step(std::size_t t, const Vector& s) const override { return base_.step(offset_ + t, s); }
  [[nodiscard]] Matrix jacobian(std::size_t t, const Vector& s) const override {
    return base_.jacobian(offset_ + t, s);
  }
  [[nodiscard]] Vector diag_jacobian(std::size_t t, const Vector& s) const override {
    return base_.diag_jacobian(offset_ + t, s);
  }
  [[nodiscard]] Vector jvp(std::size_t t, const Vector& s, const Vector& v) const override {
    return base_.jvp(offset_ + t, s, v);
  }
  [[nodiscard]] std::string name() const override { return base_.name(); }

 private:
  const DynamicsSystem& base_;
  std::size_t offset_;
  std::size_t length_;
  StateVector initial_;
};

/// Evaluates the sequence left to right. This is the ground truth s* every
/// parallel solver is checked against. Non-finite states propagate unchanged.
[[nodiscard]] Trajectory rollout_sequential(const DynamicsSystem& sys);

/// One-step prediction errors r_t = s_t - f_t(s_{t-1}) as a T x D matrix.
[[nodiscard]] RowMatrix residual(const DynamicsSystem& sys, const Trajectory& traj, WorkerPool* pool = nullptr);

/// 0.5 * sum of squared residual entries; +infinity if any residual entry is
/// non-finite.
[[nodiscard]] double merit(const DynamicsSystem& sys, const Trajectory& traj, WorkerPool* pool = nullptr);

/// Infinity norm of the elementwise difference of two trajectories' states.
[[nodiscard]] double max_abs_diff(const Trajectory& a, const Trajectory& b);

void check_compatible(const DynamicsSystem& sys, const Trajectory& traj);

}  // namespace seqpar
