#include "seqpar/fixedpoint.hpp"

#include "seqpar/jacutils.hpp"
#include "seqpar/rng.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <limits>

namespace seqpar {

namespace {

std::string shortest(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return {buf, res.ptr};
}

}  // namespace

std::string SolverMethod::name() const {
  switch (kind) {
    case Kind::Newton:
      return "newton";
    case Kind::QuasiDiagonal:
      return "quasi";
    case Kind::Picard:
      return "picard";
    case Kind::Jacobi:
      return "jacobi";
    case Kind::ScaledIdentity:
      return "scaled:" + shortest(scale);
  }
  return "unknown";
}

SolverMethod SolverMethod::parse(const std::string& text) {
  if (text == "newton" || text == "deer") return newton();
  if (text == "quasi" || text == "quasi-diagonal" || text == "quasi_diagonal") return quasi_diagonal();
  if (text == "picard") return picard();
  if (text == "jacobi") return jacobi();
  const std::string prefix = "scaled:";
  if (text.rfind(prefix, 0) == 0) {
    try {
      std::size_t used = 0;
      const std::string rest = text.substr(prefix.size());
      const double a = std::stod(rest, &used);
      if (used == rest.size() && std::isfinite(a)) return scaled_identity(a);
    } catch (const std::exception&) {
    }
  }
  throw ContractViolation("unknown solver method '" + text + "'");
}

void Damping::validate() const {
  switch (kind) {
    case Kind::None:
      return;
    case Kind::Scale:
      require(k >= 0.0 && k <= 1.0, "Damping::Scale: k must lie in [0, 1]");
      return;
    case Kind::Clip:
      require(lo <= 0.0 && hi >= 0.0, "Damping::Clip: need lo <= 0 <= hi");
      return;
  }
}

std::string Damping::name() const {
  switch (kind) {
    case Kind::None:
      return "none";
    case Kind::Scale:
      return "scale:" + shortest(k);
    case Kind::Clip:
      return "clip:" + shortest(lo) + ":" + shortest(hi);
  }
  return "unknown";
}

void SolverConfig::validate(std::size_t horizon) const {
  require(tol > 0.0, "SolverConfig: tol must be positive");
  require(!max_iters || *max_iters >= 1, "SolverConfig: max_iters must be at least 1");
  require(!window || (*window >= 1 && *window <= horizon), "SolverConfig: window must lie in [1, T]");
  require(!diag_samples || *diag_samples >= 1, "SolverConfig: diag_samples must be at least 1");
  damping.validate();
}

TransitionRepr method_transition(const DynamicsSystem& sys, std::size_t t, const Vector& s,
                                 const SolverMethod& method, std::optional<std::size_t> diag_samples) {
  switch (method.kind) {
    case SolverMethod::Kind::Newton:
      return DenseTransition{sys.jacobian(t, s)};
    case SolverMethod::Kind::QuasiDiagonal:
      if (diag_samples) return DiagonalTransition{hutchinson_diag(sys, t, s, *diag_samples, default_probe_seed(t)).values};
      return DiagonalTransition{sys.diag_jacobian(t, s)};
    case SolverMethod::Kind::Picard:
      return IdentityTransition{};
    case SolverMethod::Kind::Jacobi:
      return ZeroTransition{};
    case SolverMethod::Kind::ScaledIdentity:
      return ScaledTransition{method.scale};
  }
  return ZeroTransition{};
}

namespace {

bool transition_finite(const TransitionRepr& a) {
  if (const auto* s = std::get_if<ScaledTransition>(&a)) return std::isfinite(s->a);
  if (const auto* g = std::get_if<DiagonalTransition>(&a)) return g->d.allFinite();
  if (const auto* m = std::get_if<DenseTransition>(&a)) return m->m.allFinite();
  return true;
}

}  // namespace

TransitionRepr apply_damping(TransitionRepr a, const Damping& damping) {
  if (damping.kind == Damping::Kind::None || std::holds_alternative<ZeroTransition>(a)) return a;
  if (damping.kind == Damping::Kind::Scale) {
    const double f = 1.0 - damping.k;
    if (std::holds_alternative<IdentityTransition>(a)) return ScaledTransition{f};
    if (auto* s = std::get_if<ScaledTransition>(&a)) s->a *= f;
    if (auto* g = std::get_if<DiagonalTransition>(&a)) g->d *= f;
    if (auto* m = std::get_if<DenseTransition>(&a)) m->m *= f;
    return a;
  }
  require(!std::holds_alternative<DenseTransition>(a), "Clip damping requires a diagonal transition");
  if (std::holds_alternative<IdentityTransition>(a)) return ScaledTransition{std::clamp(1.0, damping.lo, damping.hi)};
  if (auto* s = std::get_if<ScaledTransition>(&a)) s->a = std::clamp(s->a, damping.lo, damping.hi);
  if (auto* g = std::get_if<DiagonalTransition>(&a)) g->d = g->d.cwiseMax(damping.lo).cwiseMin(damping.hi);
  return a;
}

std::vector<AffineOp> linearize(const DynamicsSystem& sys, const Trajectory& traj, const SolverMethod& method,
                                const Damping& damping, WorkerPool* pool, std::optional<std::size_t> diag_samples) {
  check_compatible(sys, traj);
  damping.validate();
  if (damping.kind == Damping::Kind::Clip) {
    require(method.kind != SolverMethod::Kind::Newton, "Clip damping requires a diagonal transition");
  }
  std::vector<AffineOp> ops(traj.horizon());
  const auto build = [&](std::size_t t, const Vector& s) {
    AffineOp op;
    op.A = apply_damping(method_transition(sys, t, s, method, diag_samples), damping);
    op.b = sys.step(t, s) - apply_transition(op.A, s);
    return op;
  };
  const auto finite = [](const AffineOp& op) { return op.b.allFinite() && transition_finite(op.A); };
  parallel_for(pool, 1, traj.horizon() + 1, [&](std::size_t t) {
    Vector s = traj.at(t - 1);
    s = s.unaryExpr([](double x) { return std::isfinite(x) ? x : 0.0; });
    AffineOp& op = ops[t - 1];
    // A finite state can still overflow f_t or its Jacobian; linearize about
    // the reset value instead.
    try {
      op = build(t, s);
      if (finite(op)) return;
    } catch (const NumericalError&) {
    }
    op = build(t, Vector::Zero(s.size()));
  });
  return ops;
}

Trajectory jacobi_init(const DynamicsSystem& sys, WorkerPool* pool) {
  Trajectory out(sys.initial_state(), sys.horizon());
  const Vector zero = Vector::Zero(static_cast<Eigen::Index>(sys.dim()));
  parallel_for(pool, 1, sys.horizon() + 1, [&](std::size_t t) { out.set(t, sys.step(t, zero)); });
  return out;
}

Trajectory initial_iterate(const DynamicsSystem& sys, const SolverConfig& config) {
  if (config.initial_guess) {
    check_compatible(sys, *config.initial_guess);
    return Trajectory(sys.initial_state(), config.initial_guess->states());
  }
  switch (config.init.kind) {
    case InitStrategy::Kind::Zeros:
      return Trajectory(sys.initial_state(), sys.horizon());
    case InitStrategy::Kind::RandomNormal: {
      Trajectory out(sys.initial_state(), sys.horizon());
      Rng rng(config.init.seed);
      for (Eigen::Index i = 0; i < out.states().rows(); ++i)
        for (Eigen::Index j = 0; j < out.states().cols(); ++j) out.states()(i, j) = rng.normal();
      return out;
    }
    case InitStrategy::Kind::JacobiStep:
      return jacobi_init(sys, config.pool.get());
  }
  return Trajectory(sys.initial_state(), sys.horizon());
}

bool reset_non_finite(Trajectory& traj) {
  auto& m = traj.states();
  if (m.allFinite()) return false;
  m = m.unaryExpr([](double x) { return std::isfinite(x) ? x : 0.0; });
  return true;
}

SolveReport run_fixed_point(const DynamicsSystem& sys, const SolverConfig& config, const UpdateFn& update) {
  const std::size_t horizon = sys.horizon();
  config.validate(horizon);
  const auto started = std::chrono::steady_clock::now();
  const std::size_t max_iters = config.max_iters.value_or(horizon);
  const std::size_t window = config.window.value_or(horizon);
  WorkerPool* pool = config.pool.get();
  const bool merit_metric = config.metric == ConvergenceMetric::MeritPerStep;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  SolveReport report;
  report.trajectory = initial_iterate(sys, config);
  if (reset_non_finite(report.trajectory)) ++report.resets;
  Trajectory& full = report.trajectory;

  bool all_converged = true;
  for (std::size_t offset = 0; offset < horizon;) {
    const std::size_t len = std::min(window, horizon - offset);
    const bool whole = len == horizon;
    const WindowView view(sys, offset, len, full.at(offset));
    const DynamicsSystem& active = whole ? sys : static_cast<const DynamicsSystem&>(view);
    const auto rows = static_cast<Eigen::Index>(len);
    const auto first_row = static_cast<Eigen::Index>(offset);
    Trajectory local(full.at(offset), RowMatrix(full.states().middleRows(first_row, rows)));

    const std::size_t budget = max_iters > report.iterations ? max_iters - report.iterations : 0;
    bool converged = false;
    if (merit_metric && merit(active, local, pool) / static_cast<double>(len) <= config.tol) converged = true;

    for (std::size_t sweep = 1; !converged && sweep <= budget + 1; ++sweep) {
      if (merit_metric && sweep > budget) break;
      Trajectory next = update(active, local, pool);
      const bool reset = reset_non_finite(next);
      if (reset) ++report.resets;
      const double diff = max_abs_diff(next, local);
      local = std::move(next);
      ++report.sweeps;

      double m = nan;
      if (config.record_history || merit_metric) m = merit(active, local, pool);
      if (config.record_history) report.history.push_back({m, diff});
      full.states().middleRows(first_row, rows) = local.states();
      if (config.on_iterate) config.on_iterate(report.sweeps, full);

      if (merit_metric) {
        ++report.iterations;
        converged = !reset && m / static_cast<double>(len) <= config.tol;
      } else {
        converged = !reset && diff <= config.tol;
        if (!converged && sweep <= budget) ++report.iterations;
      }
    }
    all_converged = all_converged && converged;
    offset += len;
  }

  report.converged = all_converged;
  report.elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

SolveReport fixed_point_solve(const DynamicsSystem& sys, const SolverConfig& config, const SolverMethod& method) {
  if (config.damping.kind == Damping::Kind::Clip) {
    require(method.kind != SolverMethod::Kind::Newton, "Clip damping requires a diagonal transition");
  }
  const UpdateFn update = [&](const DynamicsSystem& active, const Trajectory& traj, WorkerPool* pool) {
    return evaluate_lds(linearize(active, traj, method, config.damping, pool, config.diag_samples), traj.initial(),
                        pool);
  };
  return run_fixed_point(sys, config, update);
}

std::vector<std::size_t> prefix_lock_check(const std::vector<Trajectory>& iterates, const Trajectory& oracle,
                                           double tol) {
  std::vector<std::size_t> counts;
  counts.reserve(iterates.size());
  for (const auto& it : iterates) {
    require(it.horizon() == oracle.horizon() && it.dim() == oracle.dim(), "prefix_lock_check: shape mismatch");
    std::size_t n = 0;
    while (n < it.horizon()) {
      const auto row = static_cast<Eigen::Index>(n);
      const double err = (it.states().row(row) - oracle.states().row(row)).cwiseAbs().maxCoeff();
      if (!(err <= tol)) break;
      ++n;
    }
    counts.push_back(n);
  }
  return counts;
}

}  // namespace seqpar
