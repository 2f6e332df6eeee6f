#include "seqpar/elk.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <string>

namespace seqpar {

namespace {

void check_covariance(const Matrix& S, std::size_t t) {
  const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
  if (!S.allFinite()) throw NumericalError("elk: non-finite covariance at t=" + std::to_string(t), t);
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw NumericalError("elk: covariance lost symmetry at t=" + std::to_string(t), t);
  }
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(S, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-10 * scale) {
    throw NumericalError("elk: covariance is not positive semidefinite at t=" + std::to_string(t), t);
  }
}

std::vector<TransitionRepr> transitions_of(const std::vector<AffineOp>& ops) {
  std::vector<TransitionRepr> out;
  out.reserve(ops.size());
  for (const auto& op : ops) out.push_back(op.A);
  return out;
}

struct FilterResult {
  std::vector<AffineOp> ops;  // linearization about the iterate
  ElkCovariancePass cov;
  Trajectory filtered;
};

FilterResult run_filter(const DynamicsSystem& sys, const Trajectory& traj, const ElkConfig& cfg, WorkerPool* pool) {
  cfg.validate();
  const SolverMethod method =
      cfg.jacobian == ElkJacobian::Full ? SolverMethod::newton() : SolverMethod::quasi_diagonal();
  FilterResult res;
  res.ops = linearize(sys, traj, method, Damping::none(), pool, cfg.solver.diag_samples);
  const bool elementwise = cfg.jacobian == ElkJacobian::Diagonal;
  res.cov = elk_covariance_pass(transitions_of(res.ops), sys.dim(), cfg.lambda, elementwise);

  // mu_t = Gamma_t A_t mu_{t-1} + Gamma_t b_t + (I - Gamma_t) y_t
  const std::size_t horizon = traj.horizon();
  std::vector<AffineOp> mean_ops(horizon);
  parallel_for(pool, 0, horizon, [&](std::size_t k) {
    const Vector y = traj.states().row(static_cast<Eigen::Index>(k)).transpose();
    const Matrix& G = res.cov.gamma[k];
    if (elementwise) {
      const Vector g = G.col(0);
      const Vector a = to_diagonal(res.ops[k].A, sys.dim());
      mean_ops[k].A = DiagonalTransition{g.cwiseProduct(a)};
      mean_ops[k].b = g.cwiseProduct(res.ops[k].b) + (Vector::Ones(g.size()) - g).cwiseProduct(y);
    } else {
      const Matrix A = to_dense(res.ops[k].A, sys.dim());
      mean_ops[k].A = DenseTransition{G * A};
      mean_ops[k].b = G * res.ops[k].b + y - G * y;
    }
  });
  res.filtered = evaluate_lds(mean_ops, traj.initial(), pool);
  return res;
}

}  // namespace

void ElkConfig::validate() const {
  require(std::isfinite(lambda) && lambda >= 0.0, "ElkConfig: lambda must be finite and nonnegative");
  require(lambda > 0.0 || mode == ElkMode::Smoother, "ElkConfig: lambda = 0 is only defined in smoother mode");
}

Matrix attenuation(const Matrix& A, const Matrix& Sigma, double sigma2) {
  require(sigma2 > 0.0 && std::isfinite(sigma2), "attenuation: sigma2 must be positive");
  require(A.rows() == A.cols() && Sigma.rows() == A.rows() && Sigma.cols() == A.cols(),
          "attenuation: dimension mismatch");
  require(A.allFinite() && Sigma.allFinite(), "attenuation: inputs must be finite");
  const auto d = A.rows();
  const Matrix M = A * Sigma * A.transpose() + (sigma2 + 1.0) * Matrix::Identity(d, d);
  const Matrix Msym = 0.5 * (M + M.transpose());
  const Eigen::LLT<Matrix> llt(Msym);
  require(llt.info() == Eigen::Success, "attenuation: Sigma is not positive semidefinite");
  Matrix G = sigma2 * llt.solve(Matrix::Identity(d, d));
  return 0.5 * (G + G.transpose());
}

ElkCovariancePass elk_covariance_pass(const std::vector<TransitionRepr>& transitions, std::size_t dim,
                                      double lambda, bool elementwise) {
  require(!transitions.empty(), "elk_covariance_pass: empty sequence");
  require(dim >= 1, "elk_covariance_pass: dimension must be at least 1");
  require(std::isfinite(lambda) && lambda >= 0.0, "elk_covariance_pass: lambda must be nonnegative");
  ElkCovariancePass out;
  out.elementwise = elementwise;
  const std::size_t horizon = transitions.size();
  out.predicted.reserve(horizon);
  out.filtered.reserve(horizon);
  out.gamma.reserve(horizon);
  const auto d = static_cast<Eigen::Index>(dim);

  if (elementwise) {
    Vector S = Vector::Zero(d);
    const Vector ones = Vector::Ones(d);
    for (std::size_t k = 0; k < horizon; ++k) {
      const std::size_t t = k + 1;
      const Vector a = to_diagonal(transitions[k], dim);
      const Vector P = a.cwiseAbs2().cwiseProduct(S) + ones;
      const Vector G = (lambda * P + ones).cwiseInverse();
      S = G.cwiseAbs2().cwiseProduct(P) + lambda * P.cwiseAbs2().cwiseProduct(G.cwiseAbs2());
      if (!S.allFinite() || S.minCoeff() < 0.0) {
        throw NumericalError("elk: invalid diagonal covariance at t=" + std::to_string(t), t);
      }
      out.predicted.emplace_back(P);
      out.gamma.emplace_back(G);
      out.filtered.emplace_back(S);
    }
    return out;
  }

  const Matrix I = Matrix::Identity(d, d);
  Matrix S = Matrix::Zero(d, d);
  for (std::size_t k = 0; k < horizon; ++k) {
    const std::size_t t = k + 1;
    const Matrix A = to_dense(transitions[k], dim);
    Matrix P = A * S * A.transpose() + I;
    P = 0.5 * (P + P.transpose());
    const Eigen::LLT<Matrix> llt(lambda * P + I);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("elk: predicted covariance is not positive definite at t=" + std::to_string(t), t);
    }
    Matrix G = llt.solve(I);
    G = 0.5 * (G + G.transpose());
    const Matrix PG = P * G;
    // Joseph form (I-K) P (I-K)^T + K R K^T with I-K = G and K = lambda P G.
    S = G * P * G + lambda * PG * PG.transpose();
    S = 0.5 * (S + S.transpose());
    check_covariance(S, t);
    out.predicted.push_back(std::move(P));
    out.gamma.push_back(std::move(G));
    out.filtered.push_back(S);
  }
  return out;
}

std::vector<GaussianBelief> elk_filter_beliefs(const DynamicsSystem& sys, const Trajectory& traj,
                                               const ElkConfig& cfg, WorkerPool* pool) {
  const FilterResult res = run_filter(sys, traj, cfg, pool);
  std::vector<GaussianBelief> out;
  out.reserve(traj.horizon());
  for (std::size_t t = 1; t <= traj.horizon(); ++t) {
    const Matrix& S = res.cov.filtered[t - 1];
    out.push_back({res.filtered.at(t), res.cov.elementwise ? Matrix(S.col(0).asDiagonal()) : S});
  }
  return out;
}

Trajectory elk_step(const DynamicsSystem& sys, const Trajectory& traj, const ElkConfig& cfg, WorkerPool* pool) {
  check_compatible(sys, traj);
  FilterResult res = run_filter(sys, traj, cfg, pool);
  const std::size_t horizon = traj.horizon();
  if (cfg.mode == ElkMode::Filter || horizon == 1) return std::move(res.filtered);

  // RTS pass mu^s_t = mu_t + G_t (mu^s_{t+1} - A_{t+1} mu_t - b_{t+1}), run
  // as an affine recurrence in reversed time starting from mu^s_T = mu_T.
  const bool elementwise = res.cov.elementwise;
  const std::size_t dim = sys.dim();
  std::vector<AffineOp> back(horizon - 1);
  parallel_for(pool, 0, horizon - 1, [&](std::size_t k) {
    const std::size_t t = horizon - 1 - k;  // smoothing step t from t+1
    const Vector mu = res.filtered.at(t);
    const AffineOp& next = res.ops[t];  // step t+1
    const Vector mu_pred = next(mu);
    if (elementwise) {
      const Vector a = to_diagonal(next.A, dim);
      const Vector gain = res.cov.filtered[t - 1].col(0).cwiseProduct(a).cwiseQuotient(res.cov.predicted[t].col(0));
      back[k].A = DiagonalTransition{gain};
      back[k].b = mu - gain.cwiseProduct(mu_pred);
    } else {
      const Matrix A = to_dense(next.A, dim);
      const Matrix& P = res.cov.predicted[t];
      const Matrix gain = P.llt().solve(A * res.cov.filtered[t - 1]).transpose();
      back[k].b = mu - gain * mu_pred;
      back[k].A = DenseTransition{gain};
    }
  });
  const Trajectory reversed = evaluate_lds(back, res.filtered.at(horizon), pool);
  Trajectory out(traj.initial(), horizon);
  out.set(horizon, res.filtered.at(horizon));
  for (std::size_t k = 0; k + 1 < horizon; ++k) out.set(horizon - 1 - k, reversed.at(k + 1));
  return out;
}

SolveReport elk_solve(const DynamicsSystem& sys, const ElkConfig& cfg) {
  cfg.validate();
  const UpdateFn update = [&](const DynamicsSystem& active, const Trajectory& traj, WorkerPool* pool) {
    return elk_step(active, traj, cfg, pool);
  };
  return run_fixed_point(sys, cfg.solver, update);
}

std::vector<double> log_spaced(double lo, double hi, std::size_t count) {
  require(lo > 0.0 && hi >= lo, "log_spaced: need 0 < lo <= hi");
  require(count >= 1, "log_spaced: need at least one point");
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  const double a = std::log10(lo);
  const double b = std::log10(hi);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  }
  return out;
}

LambdaSelection select_lambda(const DynamicsSystem& validation, const ElkConfig& base,
                              const std::vector<double>& grid) {
  require(!grid.empty(), "select_lambda: empty grid");
  LambdaSelection sel;
  for (const double lambda : grid) {
    ElkConfig cfg = base;
    cfg.lambda = lambda;
    LambdaGridPoint point{lambda, 0, false};
    try {
      const SolveReport rep = elk_solve(validation, cfg);
      point.iterations = rep.iterations;
      point.converged = rep.converged;
    } catch (const NumericalError&) {
      point.iterations = cfg.solver.max_iters.value_or(validation.horizon());
    }
    sel.grid.push_back(point);
  }
  const auto better = [](const LambdaGridPoint& a, const LambdaGridPoint& b) {
    if (a.converged != b.converged) return a.converged;
    return a.iterations < b.iterations;
  };
  sel.lambda = std::min_element(sel.grid.begin(), sel.grid.end(), better)->lambda;
  return sel;
}

}  // namespace seqpar
