#include <doctest.h>

#include "helpers.hpp"
#include "seqpar/diagnostics.hpp"
#include "seqpar/models.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <numbers>

using namespace seqpar;
using seqpar::testing::LambdaSystem;
using seqpar::testing::linear_system;
using seqpar::testing::random_matrix;
using seqpar::testing::random_vector;

namespace {

constexpr double kGolden = 1.6180339887498949;

Trajectory perturbed_rollout(const DynamicsSystem& sys, Rng& rng, double scale) {
  Trajectory traj = rollout_sequential(sys);
  traj.states() += random_matrix(rng, traj.states().rows(), traj.states().cols(), scale);
  return traj;
}

}  // namespace

TEST_CASE("lle of a constant contraction is exact for every probe") {
  const ScalarAffine sys(0.5, 200, 1.0, 4);
  const LleEstimate est = estimate_lle(sys, rollout_sequential(sys), 5, 3);
  CHECK(est.probes == 5);
  CHECK(est.horizon == 200);
  REQUIRE(est.per_probe.size() == 5);
  for (const double v : est.per_probe) CHECK(std::abs(v - std::log(0.5)) <= 1e-12);
  CHECK(std::abs(est.lambda - std::log(0.5)) <= 1e-12);
}

TEST_CASE("lle of the logistic map at r = 4 is ln 2") {
  const LogisticMap sys(4.0, 100000);
  const Trajectory traj = rollout_sequential(sys);
  double oracle = 0.0;
  for (std::size_t t = 1; t <= sys.horizon(); ++t) oracle += std::log(std::abs(4.0 * (1.0 - 2.0 * traj.at(t - 1)[0])));
  oracle /= static_cast<double>(sys.horizon());
  const double est = estimate_lle(sys, traj, 3, 0).lambda;
  CHECK(std::abs(est - oracle) <= 1e-9);
  CHECK(std::abs(est - std::numbers::ln2) <= 0.01);
}

TEST_CASE("lle estimates are stable across probes") {
  const MeanFieldRnn rnn(32, 1.5, 10000, 1);
  const LangevinTwoWell well(0.01, 10000, 2);
  for (const DynamicsSystem* sys : {static_cast<const DynamicsSystem*>(&rnn), static_cast<const DynamicsSystem*>(&well)}) {
    CAPTURE(sys->name());
    const LleEstimate est = estimate_lle(*sys, rollout_sequential(*sys), 3, 7);
    const auto [lo, hi] = std::minmax_element(est.per_probe.begin(), est.per_probe.end());
    CHECK(*hi - *lo < 1e-3);
  }
}

TEST_CASE("lle sign follows the gain of the mean-field network") {
  const MeanFieldRnn calm(32, 0.5, 5000, 3);
  const MeanFieldRnn wild(32, 2.0, 5000, 3);
  CHECK(estimate_lle(calm, rollout_sequential(calm)).lambda < 0.0);
  CHECK(estimate_lle(wild, rollout_sequential(wild)).lambda > 0.0);
}

TEST_CASE("lle is deterministic and the pool does not change it") {
  const Gru sys(6, 500, 2);
  const Trajectory traj = rollout_sequential(sys);
  WorkerPool pool(3);
  CHECK(estimate_lle(sys, traj, 3, 4).per_probe == estimate_lle(sys, traj, 3, 4, &pool).per_probe);
}

TEST_CASE("lle fails on a degenerate Jacobian chain") {
  const LambdaSystem dead(
      5, Vector::Ones(2), [](std::size_t, const Vector& s) { return Vector(0.0 * s); },
      [](std::size_t t, const Vector&) { return t == 3 ? Matrix(Matrix::Zero(2, 2)) : Matrix(Matrix::Identity(2, 2)); });
  try {
    (void)estimate_lle(dead, rollout_sequential(dead));
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(e.time_index() == 3);
  }
  CHECK_THROWS_AS((void)estimate_lle(dead, rollout_sequential(dead), 0), ContractViolation);
}

TEST_CASE("assembled J has unit diagonal blocks and negated transitions below") {
  const ScalarAffine one(0.7, 1, 1.0, 3);
  CHECK(assemble_big_j(one, rollout_sequential(one)) == Matrix::Identity(3, 3));

  Rng rng(2);
  const Gru sys(3, 6, 1);
  const Trajectory traj = perturbed_rollout(sys, rng, 0.5);
  const Matrix J = assemble_big_j(sys, traj);
  REQUIRE(J.rows() == 18);
  CHECK(J.diagonal() == Vector::Ones(18));
  CHECK(Matrix(J.triangularView<Eigen::StrictlyUpper>()).isZero());
  for (std::size_t t = 2; t <= 6; ++t) {
    const auto r = static_cast<Eigen::Index>(3 * (t - 1));
    const auto c = static_cast<Eigen::Index>(3 * (t - 2));
    CHECK((J.block(r, c, 3, 3) + sys.jacobian(t, traj.at(t - 1))).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("blocks of the inverse of J are Jacobian products") {
  Rng rng(3);
  const std::size_t T = 4;
  std::vector<Matrix> As;
  for (std::size_t t = 0; t < T; ++t) As.push_back(random_matrix(rng, 2, 2));
  const auto sys = linear_system(As, std::vector<Vector>(T, Vector::Zero(2)), Vector::Ones(2));
  const Matrix Jinv = assemble_big_j(sys, rollout_sequential(sys)).inverse();
  for (std::size_t t = 1; t <= T; ++t) {
    for (std::size_t tau = 1; tau <= T; ++tau) {
      Matrix expect = Matrix::Zero(2, 2);
      if (t == tau) expect = Matrix::Identity(2, 2);
      if (t > tau) {
        expect = Matrix::Identity(2, 2);
        for (std::size_t k = tau + 1; k <= t; ++k) expect = As[k - 1] * expect;
      }
      const Matrix block = Jinv.block(2 * static_cast<Eigen::Index>(t - 1), 2 * static_cast<Eigen::Index>(tau - 1), 2, 2);
      CHECK((block - expect).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("dense oracle guard") {
  const ScalarAffine sys(0.5, 4097, 1.0, 1);
  CHECK_THROWS_AS((void)assemble_big_j(sys, rollout_sequential(sys)), ContractViolation);
  const ScalarAffine ok(0.5, 4096, 1.0, 1);
  CHECK_NOTHROW((void)assemble_big_j(ok, rollout_sequential(ok)));
}

TEST_CASE("singular value helpers") {
  CHECK(min_singular_value(Matrix::Identity(4, 4)) == doctest::Approx(1.0));
  Matrix d = Matrix::Zero(2, 2);
  d.diagonal() << 3.0, 0.2;
  CHECK(min_singular_value(d) == doctest::Approx(0.2));
  CHECK(max_singular_value(d) == doctest::Approx(3.0));
  Matrix chain(2, 2);
  chain << 1, 0, -1, 1;
  CHECK(min_singular_value(chain) == doctest::Approx(std::sqrt((3.0 - std::sqrt(5.0)) / 2.0)).epsilon(1e-12));
}

TEST_CASE("pl bounds at lambda = 0, T = 2") {
  const PlBounds b = pl_bounds(0.0, 1.0, 1.0, 2, 1);
  CHECK(b.lower == doctest::Approx(0.5));
  CHECK(b.upper == doctest::Approx(std::sqrt(2.0 / 3.0)));
  CHECK(b.a_burn == 1.0);
  CHECK(b.b_burn == 1.0);
  CHECK(b.T == 2);
  CHECK(b.D == 1);
}

TEST_CASE("pl lower bound forgets T for strongly stable systems") {
  const double l10 = pl_bounds(-2.0, 1.0, 1.0, 10, 1).lower;
  const double l100 = pl_bounds(-2.0, 1.0, 1.0, 100, 1).lower;
  CHECK(std::abs(l10 - l100) < 1e-8);
  CHECK(l100 == doctest::Approx(1.0 - std::exp(-2.0)).epsilon(1e-12));
}

TEST_CASE("pl upper bound collapses for chaotic systems") {
  CHECK(pl_bounds(std::numbers::ln2, 1.0, 1.0, 10, 1).upper == doctest::Approx(std::pow(2.0, -9.0)).epsilon(1e-12));
}

TEST_CASE("pl bounds are ordered and at most one") {
  for (double lle : {-3.0, -0.5, -1e-9, 0.0, 1e-9, 0.2, 1.5, 50.0}) {
    for (std::size_t T : {1, 2, 7, 100, 100000}) {
      for (double a : {1.0, 3.0}) {
        for (double b : {1.0, 0.25}) {
          CAPTURE(lle);
          CAPTURE(T);
          const PlBounds p = pl_bounds(lle, a, b, T, 3);
          if (lle * static_cast<double>(T - 1) < 700.0) CHECK(p.lower > 0.0);
          CHECK(p.lower >= 0.0);
          CHECK(p.lower <= p.upper);
          CHECK(p.upper <= 1.0 + 1e-12);
          CHECK(std::isfinite(p.lower));
        }
      }
    }
  }
  CHECK_THROWS_AS((void)pl_bounds(0.1, 0.5, 1.0, 3, 1), ContractViolation);
  CHECK_THROWS_AS((void)pl_bounds(0.1, 1.0, 1.5, 3, 1), ContractViolation);
}

TEST_CASE("pl sandwich on constant scalar chains") {
  for (double a : {0.5, 1.0, 2.0}) {
    for (std::size_t T : {2, 4, 8, 16}) {
      CAPTURE(a);
      CAPTURE(T);
      const ScalarAffine sys(a, T, 1.0, 1);
      const double sigma = min_singular_value(assemble_big_j(sys, rollout_sequential(sys)));
      const PlBounds b = pl_bounds(std::log(a), 1.0, 1.0, T, 1);
      CHECK(b.lower <= sigma);
      CHECK(sigma <= b.upper);
    }
  }
}

TEST_CASE("merit gradient satisfies the PL inequality") {
  Rng rng(4);
  for (int k = 0; k < 30; ++k) {
    const std::size_t T = 2 + static_cast<std::size_t>(k % 10);
    const MeanFieldRnn sys(3, 0.5 + 0.1 * k, T, static_cast<std::uint64_t>(k));
    const Trajectory traj = perturbed_rollout(sys, rng, 1.0);
    const Matrix J = assemble_big_j(sys, traj);
    RowMatrix r = residual(sys, traj);
    const Eigen::Map<const Vector> rv(r.data(), r.size());
    const Vector grad = J.transpose() * rv;
    const double sigma = min_singular_value(J);
    CHECK(0.5 * grad.squaredNorm() >= sigma * sigma * merit(sys, traj) * (1.0 - 1e-12));
  }
}

TEST_CASE("residual Jacobian inherits the per-step Lipschitz constant") {
  Rng rng(5);
  const MeanFieldRnn sys(4, 1.5, 12, 6);
  const double L = sys.jacobian_lipschitz();
  for (int k = 0; k < 100; ++k) {
    const Trajectory a = perturbed_rollout(sys, rng, 1.0);
    const Trajectory b = perturbed_rollout(sys, rng, 1.0);
    const double lhs = max_singular_value(assemble_big_j(sys, a) - assemble_big_j(sys, b));
    const double rhs = L * (a.states() - b.states()).norm();
    CHECK(lhs <= rhs * (1.0 + 1e-12));
  }
}

TEST_CASE("jacobian mismatch") {
  Rng rng(6);
  const Gru gru(3, 20, 2);
  const Trajectory traj = perturbed_rollout(gru, rng, 0.3);
  CHECK(jacobian_mismatch(gru, traj, SolverMethod::newton()) == 0.0);

  const S5WordProblem s5(50, 1);
  CHECK(jacobian_mismatch(s5, rollout_sequential(s5), SolverMethod::jacobi()) == doctest::Approx(1.0));

  for (const auto& m : {SolverMethod::quasi_diagonal(), SolverMethod::picard(), SolverMethod::jacobi()}) {
    const Matrix diff = assemble_method_j(gru, traj, m) - assemble_big_j(gru, traj);
    CHECK(jacobian_mismatch(gru, traj, m) == doctest::Approx(max_singular_value(diff)).epsilon(1e-10));
  }
}

TEST_CASE("surrogate inverse norm matches the dense inverse") {
  Rng rng(7);
  const Gru sys(3, 25, 4);
  const Trajectory traj = perturbed_rollout(sys, rng, 0.2);
  for (const auto& m : {SolverMethod::newton(), SolverMethod::quasi_diagonal(), SolverMethod::picard(),
                        SolverMethod::scaled_identity(0.5)}) {
    CAPTURE(m.name());
    const double dense = 1.0 / min_singular_value(assemble_method_j(sys, traj, m));
    CHECK(surrogate_inverse_norm(sys, traj, m) == doctest::Approx(dense).epsilon(1e-8));
  }
}

TEST_CASE("asymptotic rates") {
  for (double alpha : {0.1, 0.5, 0.9}) {
    const ScalarAffine sys(alpha, 100, 1.0, 1);
    const Trajectory traj = rollout_sequential(sys);
    CHECK(asymptotic_rate(sys, traj, SolverMethod::jacobi()) == doctest::Approx(alpha).epsilon(1e-12));
    CHECK(asymptotic_rate(sys, traj, SolverMethod::newton()) == 0.0);
    CHECK(asymptotic_rate(sys, traj, SolverMethod::picard()) ==
          doctest::Approx(picard_inverse_norm(100) * (1.0 - alpha)).epsilon(1e-12));
  }
  const Gru gru(8, 1000, 1);
  const Trajectory star = rollout_sequential(gru);
  CHECK(asymptotic_rate(gru, star, SolverMethod::jacobi()) < asymptotic_rate(gru, star, SolverMethod::quasi_diagonal()));
}

TEST_CASE("picard inverse norm") {
  CHECK(picard_inverse_norm(1) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(picard_inverse_norm(2) == doctest::Approx(kGolden).epsilon(1e-12));
  for (std::size_t T = 1; T <= 40; ++T) {
    Matrix M(T, T);
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t j = 0; j < T; ++j)
        M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<double>(std::min(i, j) + 1);
    const double lmax = Eigen::SelfAdjointEigenSolver<Matrix>(M).eigenvalues().maxCoeff();
    CHECK(std::abs(picard_inverse_norm(T) - std::sqrt(lmax)) <= 1e-10);
  }
  for (std::size_t T : {100, 1000, 100000}) {
    const double ratio = picard_inverse_norm(T) / static_cast<double>(T);
    CHECK(ratio >= 0.6);
    CHECK(ratio <= 0.7);
  }
  CHECK_THROWS_AS((void)picard_inverse_norm(0), ContractViolation);
}

TEST_CASE("basin radius") {
  CHECK(std::isinf(basin_radius(1.0, 0.0)));
  CHECK(basin_radius(1.0, 4.0) == 0.5);
  CHECK_THROWS_AS((void)basin_radius(0.0, 1.0), ContractViolation);
  CHECK_THROWS_AS((void)basin_radius(-1.0, 1.0), ContractViolation);
}

TEST_CASE("one gauss-newton step halves the residual inside the basin of a cubic") {
  const auto r = [](double s) { return std::pow(s - 0.4, 3) + 0.45 * (s - 0.4); };
  const auto dr = [](double s) { return 3.0 * std::pow(s - 0.4, 2) + 0.45; };
  const double w = 0.3;
  const double mu = 0.45 * 0.45;  // min of r'^2 on [0.4 - w, 0.4 + w]
  const double L = 6.0 * w;       // max of |r''| on the same interval
  const double radius = basin_radius(mu, L);
  int tested = 0;
  for (int i = 0; i <= 600; ++i) {
    const double s = 0.4 - w + 2.0 * w * i / 600.0;
    const double res = r(s);
    if (!(std::abs(res) < radius)) continue;
    const double next = s - res / dr(s);
    if (std::abs(next - 0.4) > w) continue;
    ++tested;
    const double res_next = std::abs(r(next));
    CHECK(res_next <= L / (2.0 * mu) * res * res + 1e-15);
    CHECK(res_next <= std::abs(res));
  }
  CHECK(tested > 100);
}

TEST_CASE("burn-in constants of a constant chain are one") {
  const ScalarAffine sys(0.8, 50, 1.0, 1);
  const Trajectory traj = rollout_sequential(sys);
  const BurnInConstants c = estimate_burn_in(sys, traj, std::log(0.8), 10);
  CHECK(c.a == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(c.b == doctest::Approx(1.0).epsilon(1e-12));

  const Gru gru(4, 200, 5);
  const Trajectory g = rollout_sequential(gru);
  const double lle = estimate_lle(gru, g).lambda;
  const BurnInConstants k = estimate_burn_in(gru, g, lle, 16);
  CHECK(k.a >= 1.0);
  CHECK(k.b <= 1.0);
  CHECK(k.b > 0.0);
}

TEST_CASE("diagnostics bundle agrees with the individual instruments") {
  const Gru sys(4, 100, 3);
  const Trajectory star = rollout_sequential(sys);
  const DiagnosticsBundle d = compute_diagnostics(sys, star, SolverMethod::jacobi(), 3, 2);
  CHECK(d.lle.lambda == estimate_lle(sys, star, 3, 2).lambda);
  CHECK(d.mismatch == jacobian_mismatch(sys, star, SolverMethod::jacobi()));
  CHECK(d.gamma == doctest::Approx(d.mismatch).epsilon(1e-14));
  CHECK(d.pl.lle == d.lle.lambda);
  CHECK(d.pl.T == 100);
}
