#pragma once

// Levenberg-Marquardt steps computed as MAP inference in a linear-Gaussian
// SSM. The linearization about the current iterate supplies the dynamics
//   s_t = A_t s_{t-1} + b_t + w_t,  w_t ~ N(0, I)
// and the iterate itself is observed with precision lambda:
//   y_t = s_t^(i) + v_t,  v_t ~ N(0, I / lambda).
// A Kalman filter gives the filtered means (the production step); adding the
// RTS backward pass gives the exact LM step.

#include "seqpar/core.hpp"
#include "seqpar/fixedpoint.hpp"
#include "seqpar/pscan.hpp"

#include <vector>

namespace seqpar {

enum class ElkMode { Filter, Smoother };
enum class ElkJacobian { Full, Diagonal };

struct ElkConfig {
  double lambda = 1.0;
  ElkMode mode = ElkMode::Filter;
  ElkJacobian jacobian = ElkJacobian::Full;
  SolverConfig solver;

  void validate() const;
};

struct GaussianBelief {
  StateVector mean;
  Matrix cov;
};

/// Covariance recursion for a sequence of transitions, t = 1..T. Entry t-1
/// holds the step-t quantities. Diagonal transitions are stored as D x 1
/// columns when the pass runs elementwise.
struct ElkCovariancePass {
  std::vector<Matrix> predicted;  // P_t = A_t S_{t-1} A_t^T + I
  std::vector<Matrix> filtered;   // S_t
  std::vector<Matrix> gamma;      // attenuation Gamma_t
  bool elementwise = false;
};

/// Gamma = sigma2 (A Sigma A^T + (sigma2 + 1) I)^{-1}.
[[nodiscard]] Matrix attenuation(const Matrix& A, const Matrix& Sigma, double sigma2);

/// Runs the data-independent part of the filter. Throws NumericalError with
/// the step index when a covariance loses symmetry or positive
/// semidefiniteness beyond 1e-10.
[[nodiscard]] ElkCovariancePass elk_covariance_pass(const std::vector<TransitionRepr>& transitions, std::size_t dim,
                                                    double lambda, bool elementwise);

/// Filtered beliefs mu_{t|t}, Sigma_{t|t} for the LGSSM built around traj.
[[nodiscard]] std::vector<GaussianBelief> elk_filter_beliefs(const DynamicsSystem& sys, const Trajectory& traj,
                                                             const ElkConfig& cfg, WorkerPool* pool = nullptr);

/// One ELK update of traj.
[[nodiscard]] Trajectory elk_step(const DynamicsSystem& sys, const Trajectory& traj, const ElkConfig& cfg,
                                  WorkerPool* pool = nullptr);

[[nodiscard]] SolveReport elk_solve(const DynamicsSystem& sys, const ElkConfig& cfg);

[[nodiscard]] std::vector<double> log_spaced(double lo, double hi, std::size_t count);

struct LambdaGridPoint {
  double lambda = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

struct LambdaSelection {
  double lambda = 0.0;
  std::vector<LambdaGridPoint> grid;
};

/// Tries each lambda on the validation system and keeps the converged one
/// with the fewest iterations (the smallest such lambda on ties). Falls back
/// to the fewest iterations overall if nothing converges.
[[nodiscard]] LambdaSelection select_lambda(const DynamicsSystem& validation, const ElkConfig& base,
                                            const std::vector<double>& grid = log_spaced(1.0, 1e7, 8));

}  // namespace seqpar
