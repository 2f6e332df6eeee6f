#pragma once

#include "seqpar/core.hpp"
#include "seqpar/pscan.hpp"
#include "seqpar/rng.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

namespace seqpar::testing {

inline Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  return m;
}

inline Vector random_vector(Rng& rng, Eigen::Index n, double scale = 1.0) {
  return random_matrix(rng, n, 1, scale).col(0);
}

inline Trajectory random_trajectory(Rng& rng, const StateVector& s0, std::size_t T, double scale = 1.0) {
  Trajectory out(s0, T);
  out.states() = random_matrix(rng, static_cast<Eigen::Index>(T), s0.size(), scale);
  return out;
}

inline double rel_inf_diff(const Matrix& a, const Matrix& b) {
  const double scale = std::max({1.0, a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

/// A system given by lambdas; used to build systems inline in tests.
class LambdaSystem final : public DynamicsSystem {
 public:
  using StepFn = std::function<Vector(std::size_t, const Vector&)>;
  using JacFn = std::function<Matrix(std::size_t, const Vector&)>;

  LambdaSystem(std::size_t horizon, StateVector s0, StepFn step, JacFn jac)
      : horizon_(horizon), s0_(std::move(s0)), step_(std::move(step)), jac_(std::move(jac)) {}

  [[nodiscard]] std::size_t dim() const override { return static_cast<std::size_t>(s0_.size()); }
  [[nodiscard]] std::size_t horizon() const override { return horizon_; }
  [[nodiscard]] StateVector initial_state() const override { return s0_; }
  [[nodiscard]] Vector step(std::size_t t, const Vector& s) const override { return step_(t, s); }
  [[nodiscard]] Matrix jacobian(std::size_t t, const Vector& s) const override { return jac_(t, s); }

 private:
  std::size_t horizon_;
  StateVector s0_;
  StepFn step_;
  JacFn jac_;
};

/// Time-varying linear system s_t = A_t s_{t-1} + c_t.
inline LambdaSystem linear_system(std::vector<Matrix> A, std::vector<Vector> c, StateVector s0) {
  const std::size_t T = A.size();
  auto As = std::make_shared<std::vector<Matrix>>(std::move(A));
  auto cs = std::make_shared<std::vector<Vector>>(std::move(c));
  return LambdaSystem(
      T, std::move(s0), [As, cs](std::size_t t, const Vector& s) { return Vector((*As)[t - 1] * s + (*cs)[t - 1]); },
      [As](std::size_t t, const Vector&) { return (*As)[t - 1]; });
}

}  // namespace seqpar::testing
