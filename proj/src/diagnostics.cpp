#include "seqpar/diagnostics.hpp"

#include "seqpar/rng.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace seqpar {

namespace {

void guard_dense(std::size_t T, std::size_t D) {
  require(T * D <= kDenseOracleLimit, "dense oracle refused: T * D exceeds 4096");
}

std::vector<Matrix> true_jacobians(const DynamicsSystem& sys, const Trajectory& traj) {
  std::vector<Matrix> out(traj.horizon());
  for (std::size_t t = 1; t <= traj.horizon(); ++t) out[t - 1] = sys.jacobian(t, traj.at(t - 1));
  return out;
}

std::vector<TransitionRepr> surrogate_transitions(const DynamicsSystem& sys, const Trajectory& traj,
                                                  const SolverMethod& method) {
  std::vector<TransitionRepr> out(traj.horizon());
  for (std::size_t t = 1; t <= traj.horizon(); ++t) out[t - 1] = method_transition(sys, t, traj.at(t - 1), method);
  return out;
}

}  // namespace

LleEstimate estimate_lle(const DynamicsSystem& sys, const Trajectory& traj, std::size_t probes, std::uint64_t seed,
                         WorkerPool* pool) {
  check_compatible(sys, traj);
  require(probes >= 1, "estimate_lle: need at least one probe");
  const std::size_t T = traj.horizon();
  const auto d = static_cast<Eigen::Index>(sys.dim());
  LleEstimate est;
  est.horizon = T;
  est.probes = probes;
  est.per_probe.assign(probes, 0.0);

  const Rng root(seed);
  parallel_for(pool, 0, probes, [&](std::size_t p) {
    Rng rng = root.split(p);
    Vector u(d);
    do {
      for (Eigen::Index i = 0; i < d; ++i) u[i] = rng.normal();
    } while (u.norm() == 0.0);
    u.normalize();
    double log_stretch = 0.0;
    for (std::size_t t = 1; t <= T; ++t) {
      u = sys.jacobian(t, traj.at(t - 1)) * u;
      const double n = u.norm();
      if (!(n > 0.0) || !std::isfinite(n)) {
        throw NumericalError("estimate_lle: degenerate Jacobian product at t=" + std::to_string(t), t);
      }
      log_stretch += std::log(n);
      u /= n;
    }
    est.per_probe[p] = log_stretch / static_cast<double>(T);
  });
  double sum = 0.0;
  for (const double v : est.per_probe) sum += v;
  est.lambda = sum / static_cast<double>(probes);
  return est;
}

Matrix assemble_big_j(const std::vector<TransitionRepr>& transitions, std::size_t dim) {
  const std::size_t T = transitions.size();
  require(T >= 1, "assemble_big_j: empty sequence");
  guard_dense(T, dim);
  const auto d = static_cast<Eigen::Index>(dim);
  const auto n = static_cast<Eigen::Index>(T * dim);
  Matrix J = Matrix::Identity(n, n);
  for (std::size_t t = 2; t <= T; ++t) {
    const auto r = static_cast<Eigen::Index>(t - 1) * d;
    J.block(r, r - d, d, d) = -to_dense(transitions[t - 1], dim);
  }
  return J;
}

Matrix assemble_big_j(const DynamicsSystem& sys, const Trajectory& traj) {
  check_compatible(sys, traj);
  guard_dense(traj.horizon(), sys.dim());
  std::vector<TransitionRepr> a;
  a.reserve(traj.horizon());
  for (auto& m : true_jacobians(sys, traj)) a.emplace_back(DenseTransition{std::move(m)});
  return assemble_big_j(a, sys.dim());
}

Matrix assemble_method_j(const DynamicsSystem& sys, const Trajectory& traj, const SolverMethod& method) {
  check_compatible(sys, traj);
  guard_dense(traj.horizon(), sys.dim());
  return assemble_big_j(surrogate_transitions(sys, traj, method), sys.dim());
}

double min_singular_value(const Matrix& M) {
  require(M.allFinite(), "min_singular_value: matrix must be finite");
  if (M.size() == 0) return 0.0;
  const Eigen::BDCSVD<Matrix> svd(M);
  return svd.singularValues().minCoeff();
}

double max_singular_value(const Matrix& M) {
  require(M.allFinite(), "max_singular_value: matrix must be finite");
  if (M.size() == 0) return 0.0;
  const Eigen::BDCSVD<Matrix> svd(M);
  return svd.singularValues().maxCoeff();
}

PlBounds pl_bounds(double lle, double a_burn, double b_burn, std::size_t T, std::size_t D) {
  require(std::isfinite(lle), "pl_bounds: lle must be finite");
  require(a_burn >= 1.0, "pl_bounds: a_burn must be at least 1");
  require(b_burn > 0.0 && b_burn <= 1.0, "pl_bounds: b_burn must lie in (0, 1]");
  require(T >= 1 && D >= 1, "pl_bounds: T and D must be at least 1");
  PlBounds out{0.0, 0.0, lle, a_burn, b_burn, T, D};
  const double Td = static_cast<double>(T);
  if (lle == 0.0) {
    out.lower = 1.0 / (a_burn * Td);
    out.upper = std::min(1.0, std::sqrt(2.0 * static_cast<double>(D) / (Td + 1.0)) / b_burn);
    return out;
  }
  if (lle > 0.0) {
    // e^{-lambda (T-1)} (1 - e^{-lambda}) / (1 - e^{-lambda T}) avoids overflow.
    out.lower = std::exp(-lle * (Td - 1.0)) * (-std::expm1(-lle)) / (-std::expm1(-lle * Td)) / a_burn;
  } else {
    out.lower = std::expm1(lle) / std::expm1(lle * Td) / a_burn;
  }
  out.upper = std::min(1.0, std::exp(-lle * (Td - 1.0)) / b_burn);
  return out;
}

BurnInConstants estimate_burn_in(const DynamicsSystem& sys, const Trajectory& traj, double lle,
                                 std::size_t max_window) {
  check_compatible(sys, traj);
  require(max_window >= 1, "estimate_burn_in: window must be at least 1");
  const std::vector<Matrix> A = true_jacobians(sys, traj);
  const std::size_t T = A.size();
  double hi = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t start = 0; start < T; ++start) {
    Matrix prod = Matrix::Identity(A[0].rows(), A[0].cols());
    for (std::size_t k = 1; k <= max_window && start + k <= T; ++k) {
      prod = A[start + k - 1] * prod;
      const double scaled = max_singular_value(prod) * std::exp(-lle * static_cast<double>(k));
      hi = std::max(hi, scaled);
      lo = std::min(lo, scaled);
    }
  }
  BurnInConstants out;
  out.a = std::max(1.0, hi);
  out.b = std::isfinite(lo) ? std::clamp(lo, std::numeric_limits<double>::min(), 1.0) : 1.0;
  return out;
}

double jacobian_mismatch(const DynamicsSystem& sys, const Trajectory& traj, const SolverMethod& method) {
  check_compatible(sys, traj);
  if (method.kind == SolverMethod::Kind::Newton) return 0.0;
  double worst = 0.0;
  for (std::size_t t = 2; t <= traj.horizon(); ++t) {
    const Vector s = traj.at(t - 1);
    const Matrix diff = to_dense(method_transition(sys, t, s, method), sys.dim()) - sys.jacobian(t, s);
    worst = std::max(worst, max_singular_value(diff));
  }
  return worst;
}

double surrogate_inverse_norm(const DynamicsSystem& sys, const Trajectory& traj, const SolverMethod& method,
                              std::size_t max_iters, double rel_tol) {
  check_compatible(sys, traj);
  const std::size_t T = traj.horizon();
  const auto d = static_cast<Eigen::Index>(sys.dim());
  const std::vector<TransitionRepr> A = surrogate_transitions(sys, traj, method);

  // J̃^{-1} x: y_1 = x_1, y_t = x_t + Ã_t y_{t-1}.
  auto forward = [&](const RowMatrix& x) {
    RowMatrix y = x;
    for (std::size_t t = 2; t <= T; ++t) {
      const auto r = static_cast<Eigen::Index>(t - 1);
      y.row(r) += apply_transition(A[t - 1], y.row(r - 1).transpose()).transpose();
    }
    return y;
  };
  // J̃^{-T} z: w_T = z_T, w_{t-1} = z_{t-1} + Ã_t^T w_t.
  auto backward = [&](const RowMatrix& z) {
    RowMatrix w = z;
    for (std::size_t t = T; t >= 2; --t) {
      const auto r = static_cast<Eigen::Index>(t - 1);
      const Vector wt = w.row(r).transpose();
      Vector contrib;
      if (const auto* m = std::get_if<DenseTransition>(&A[t - 1])) {
        contrib = m->m.transpose() * wt;
      } else {
        contrib = apply_transition(A[t - 1], wt);
      }
      w.row(r - 1) += contrib.transpose();
    }
    return w;
  };

  Rng rng(0x5EED1A7ULL);
  RowMatrix x(static_cast<Eigen::Index>(T), d);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = rng.normal();
  x /= x.norm();
  double estimate = 0.0;
  for (std::size_t it = 0; it < max_iters; ++it) {
    RowMatrix y = backward(forward(x));
    const double n = y.norm();
    if (!std::isfinite(n)) throw NumericalError("surrogate_inverse_norm: overflow in power iteration", 0);
    if (n == 0.0) return 0.0;
    x = y / n;
    const bool done = it > 0 && std::abs(n - estimate) <= rel_tol * n;
    estimate = n;
    if (done) break;
  }
  return std::sqrt(estimate);
}

double asymptotic_rate(const DynamicsSystem& sys, const Trajectory& traj_star, const SolverMethod& method) {
  check_compatible(sys, traj_star);
  if (method.kind == SolverMethod::Kind::Newton) return 0.0;
  const double mismatch = jacobian_mismatch(sys, traj_star, method);
  double inv_norm = 0.0;
  switch (method.kind) {
    case SolverMethod::Kind::Jacobi:
      inv_norm = 1.0;
      break;
    case SolverMethod::Kind::Picard:
      inv_norm = picard_inverse_norm(traj_star.horizon());
      break;
    default:
      inv_norm = surrogate_inverse_norm(sys, traj_star, method);
      break;
  }
  return inv_norm * mismatch;
}

double picard_inverse_norm(std::size_t T) {
  require(T >= 1, "picard_inverse_norm: T must be at least 1");
  return 1.0 / (2.0 * std::sin(std::numbers::pi / (2.0 * (2.0 * static_cast<double>(T) + 1.0))));
}

double basin_radius(double mu, double L) {
  require(mu > 0.0, "basin_radius: mu must be positive");
  require(L >= 0.0, "basin_radius: L must be nonnegative");
  if (L == 0.0) return std::numeric_limits<double>::infinity();
  return 2.0 * mu / L;
}

DiagnosticsBundle compute_diagnostics(const DynamicsSystem& sys, const Trajectory& traj_star,
                                      const SolverMethod& method, std::size_t probes, std::uint64_t seed) {
  DiagnosticsBundle out;
  out.lle = estimate_lle(sys, traj_star, probes, seed);
  out.pl = pl_bounds(out.lle.lambda, 1.0, 1.0, traj_star.horizon(), sys.dim());
  out.mismatch = jacobian_mismatch(sys, traj_star, method);
  out.gamma = asymptotic_rate(sys, traj_star, method);
  return out;
}

}  // namespace seqpar
