#include "seqpar/core.hpp"

#include "seqpar/jacutils.hpp"

#include <limits>
#include <utility>

namespace seqpar {

Trajectory::Trajectory(StateVector initial, std::size_t horizon)
    : initial_(std::move(initial)),
      states_(RowMatrix::Zero(static_cast<Eigen::Index>(horizon), initial_.size())) {
  require(horizon >= 1, "Trajectory: horizon must be at least 1");
  require(initial_.size() >= 1, "Trajectory: state dimension must be at least 1");
}

Trajectory::Trajectory(StateVector initial, RowMatrix states) : initial_(std::move(initial)), states_(std::move(states)) {
  require(states_.rows() >= 1, "Trajectory: horizon must be at least 1");
  require(initial_.size() >= 1, "Trajectory: state dimension must be at least 1");
  require(states_.cols() == initial_.size(), "Trajectory: row length must match the initial state");
}

Vector Trajectory::at(std::size_t t) const {
  if (t == 0) return initial_;
  require(t <= horizon(), "Trajectory::at: time index out of range");
  return states_.row(static_cast<Eigen::Index>(t - 1)).transpose();
}

void Trajectory::set(std::size_t t, const Vector& value) {
  require(t >= 1 && t <= horizon(), "Trajectory::set: time index out of range");
  require(value.size() == initial_.size(), "Trajectory::set: wrong dimension");
  states_.row(static_cast<Eigen::Index>(t - 1)) = value.transpose();
}

bool Trajectory::has_non_finite() const { return !states_.allFinite(); }

Vector DynamicsSystem::diag_jacobian(std::size_t t, const Vector& s) const {
  return hutchinson_diag(*this, t, s, 1, default_probe_seed(t)).values;
}

Vector DynamicsSystem::jvp(std::size_t t, const Vector& s, const Vector& v) const { return fd_jvp(*this, t, s, v); }

WindowView::WindowView(const DynamicsSystem& base, std::size_t offset, std::size_t length, StateVector initial)
    : base_(base), offset_(offset), length_(length), initial_(std::move(initial)) {
  require(length_ >= 1 && offset_ + length_ <= base_.horizon(), "WindowView: window outside the horizon");
  require(static_cast<std::size_t>(initial_.size()) == base_.dim(), "WindowView: initial state has wrong dimension");
}

void check_compatible(const DynamicsSystem& sys, const Trajectory& traj) {
  require(traj.dim() == sys.dim(), "trajectory dimension does not match the system");
  require(traj.horizon() == sys.horizon(), "trajectory horizon does not match the system");
}

Trajectory rollout_sequential(const DynamicsSystem& sys) {
  Trajectory out(sys.initial_state(), sys.horizon());
  require(out.dim() == sys.dim(), "rollout_sequential: initial state has wrong dimension");
  Vector s = out.initial();
  for (std::size_t t = 1; t <= sys.horizon(); ++t) {
    s = sys.step(t, s);
    out.set(t, s);
  }
  return out;
}

RowMatrix residual(const DynamicsSystem& sys, const Trajectory& traj, WorkerPool* pool) {
  check_compatible(sys, traj);
  RowMatrix r(traj.states().rows(), traj.states().cols());
  parallel_for(pool, 1, traj.horizon() + 1, [&](std::size_t t) {
    const auto row = static_cast<Eigen::Index>(t - 1);
    r.row(row) = traj.states().row(row) - sys.step(t, traj.at(t - 1)).transpose();
  });
  return r;
}

double merit(const DynamicsSystem& sys, const Trajectory& traj, WorkerPool* pool) {
  const RowMatrix r = residual(sys, traj, pool);
  if (!r.allFinite()) return std::numeric_limits<double>::infinity();
  return 0.5 * r.squaredNorm();
}

double max_abs_diff(const Trajectory& a, const Trajectory& b) {
  require(a.horizon() == b.horizon() && a.dim() == b.dim(), "max_abs_diff: shape mismatch");
  const RowMatrix diff = a.states() - b.states();
  if (!diff.allFinite()) return std::numeric_limits<double>::infinity();
  return diff.cwiseAbs().maxCoeff();
}

}  // namespace seqpar
