#pragma once

// Test systems. Each draws any random parameters or inputs once, from its
// seed, in the constructor; step() and jacobian() are then pure.

#include "seqpar/core.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace seqpar {

/// s_t = alpha s_{t-1} + u_t.
class ScalarAffine final : public DynamicsSystem {
 public:
  ScalarAffine(double alpha, std::size_t horizon, StateVector s0, std::optional<RowMatrix> inputs = std::nullopt);
  ScalarAffine(double alpha, std::size_t horizon, double s0 = 1.0, std::size_t dim = 1);

  [[nodiscard]] std::size_t dim() const override { return static_cast<std::size_t>(s0_.size()); }
  [[nodiscard]] std::size_t horizon() const override { return horizon_; }
  [[nodiscard]] StateVector initial_state() const override { return s0_; }
  [[nodiscard]] Vector step(std::size_t t, const Vector& s) const override;
  [[nodiscard]] Matrix jacobian(std::size_t t, const Vector& s) const override;
  [[nodiscard]] Vector diag_jacobian(std::size_t t, const Vector& s) const override;
  [[nodiscard]] Vector jvp(std::size_t t, const Vector& s, const Vector& v) const override;
  [[nodiscard]] std::string name() const override { return "scalar_affine"; }

  [[nodiscard]] double alpha() const noexcept { return alpha_; }

 private:
  double alpha_;
  std::size_t horizon_;
  StateVector s0_;
  std::optional<RowMatrix> inputs_;
};

/// s_t = W tanh(s_{t-1}) + u_t with W_ij ~ N(0, g^2 / D), W_ii = 0 and
/// u_t = 0.1 sin(2 pi t / T) on every coordinate.
class MeanFieldRnn final : public DynamicsSystem {
 public:
  MeanFieldRnn(std::size_t dim, double gain, std::size_t horizon, std::uint64_t seed);

  [[nodiscard]] std::size_t dim() const override { return static_cast<std::size_t>(W_.rows()); }
  [[nodiscard]] std::size_t horizon() const override { return horizon_; }
  [[nodiscard]] StateVector initial_state() const override { return s0_; }
  [[nodiscard]] Vector step(std::size_t t, const Vector& s) const override;
  [[nodiscard]] Matrix jacobian(std::size_t t, const Vector& s) const override;
  [[nodiscard]] Vector diag_jacobian(std::size_t t, const Vector& s) const override;
  [[nodiscard]] Vector jvp(std::size_t t, const Vector& s, const Vector& v) const override;
  [[nodiscard]] std::string name() const override { return "mean_field_rnn"; }

  [[nodiscard]] const Matrix& weights() const noexcept { return W_; }
  [[nodiscard]] double gain() const noexcept { return gain_; }
  /// L with ||A_t(s') - A_t(s)||_2 <= L ||s' - s||_2.
  [[nodiscard]] double jacobian_lipschitz() const;

 private:
  Matrix W_;
  double gain_;
  std::size_t horizon_;
  StateVector s0_;
};

/// Gated recurrent unit with scalar input x_t ~ N(0, 1) and all weights and
/// biases drawn N(0, 1) / sqrt(D). h_0 = 0.
class Gru final : public DynamicsSystem {
 public:
  Gru(std::size_t dim, std::size_t horizon, std::uint64_t seed);

  [[nodiscard]] std::size_t dim() const override { return static_cast<std::size_t>(Wz_.rows()); }
  [[nodiscard]] std::size_t horizon() const override { return horizon_; }
  [[nodiscard]] StateVector initial_state() const override { return Vector::Zero(Wz_.rows()); }
  [[nodiscard]] Vector step(std::size_t t, const Vector& s) const override;
  [[nodiscard]] Matrix jacobian(std::size_t t, const Vector& s) const override;
  [[nodiscard]] Vector diag_jacobian(std::size_t t, const Vector& s) const override;
  [[nodiscard]] std::string name() const override { return "gru"; }

 private:
  struct Gates {
    Vector z, r, h_tilde;
  };
  [[nodiscard]] Gates gates(std::size_t t, const Vector& h) const;

  Matrix Wz_, Wr_, Wh_;
  Vector uz_, ur_, uh_, bz_, br_, bh_;
  Vector x_;
  std::size_t horizon_;
};

/// One RK4 step of dx_k/dt = (x_{k+1} - x_{k-2}) x_{k-1} - x_k + F.
class Lorenz96 final : public DynamicsSystem {
 public:
  Lorenz96(std::size_t dim, double forcing, double dt, std::size_t horizon);

  [[nodiscard]] std::size_t dim() const override { return dim_; }
  [[nodiscard]] std::size_t horizon() const override { return horizon_; }
  [[nodiscard]] StateVector initial_state() const override;
  [[nodiscard]] Vector step(std::size_t t, const Vector& s) const override;
  [[nodiscard]] Matrix jacobian(std::size_t t, const Vector& s) const override;
  [[nodiscard]] Vector diag_jacobian(std::size_t t, const Vector& s) const override;
  [[nodiscard]] std::string name() const override { return "lorenz96"; }

  [[nodiscard]] Vector vector_field(const Vector& x) const;

 private:
  std::size_t dim_;
  double forcing_;
  double dt_;
  std::size_t horizon_;
};

/// Unadjusted Langevin s_t = s_{t-1} - eps grad phi(s_{t-1}) + sqrt(2 eps) w_t
/// for phi = -log of an equal mixture of N((0,-1.4), C) and N((0,1.6), C),
/// C = diag(0.8, 0.4).
class LangevinTwoWell final : public DynamicsSystem {
 public:
  LangevinTwoWell(double eps, std::size_t horizon, std::uint64_t seed);

  [[nodiscard]] std::size_t dim() const override { return 2; }
  [[nodiscard]] std::size_t horizon() const override { return horizon_; }
  [[nodiscard]] StateVector initial_state() const override;
  [[nodiscard]] Vector step(std::size_t t, const Vector& s) const override;
  [[nodiscard]] Matrix jacobian(std::size_t t, const Vector& s) const override;
  [[nodiscard]] Vector diag_jacobian(std::size_t t, const Vector& s) const override;
  [[nodiscard]] std::string name() const override { return "langevin_two_well"; }

  [[nodiscard]] double potential(const Vector& s) const;
  [[nodiscard]] Vector grad_potential(const Vector& s) const;
  [[nodiscard]] Matrix hessian_potential(const Vector& s) const;

 private:
  [[nodiscard]] std::array<double, 2> responsibilities(const Vector& s) const;

  double eps_;
  std::size_t horizon_;
  RowMatrix noise_;
  std::array<Vector, 2> means_;
  Vector precision_;  // diagonal of C^{-1}
};

/// s_t = P_t s_{t-1} with P_t a uniformly random 5 x 5 permutation matrix.
class S5WordProblem final : public DynamicsSystem {
 public:
  S5WordProblem(std::size_t horizon, std::uint64_t seed);

  [[nodiscard]] std::size_t dim() const override { return 5; }
  [[nodiscard]] std::size_t horizon() const override { return perms_.size(); }
  [[nodiscard]] StateVector initial_state() const override;
  [[nodiscard]] Vector step(std::size_t t, const Vector& s) const override;
  [[nodiscard]] Matrix jacobian(std::size_t t, const Vector& s) const override;
  [[nodiscard]] Vector diag_jacobian(std::size_t t, const Vector& s) const override;
  [[nodiscard]] Vector jvp(std::size_t t, const Vector& s, const Vector& v) const override;
  [[nodiscard]] std::string name() const override { return "s5"; }

  /// Row i of P_t has its one in column perm(t)[i].
  [[nodiscard]] const std::array<int, 5>& perm(std::size_t t) const { return perms_.at(t - 1); }

 private:
  std::vector<std::array<int, 5>> perms_;
};

/// s_t = r s_{t-1} (1 - s_{t-1}), D = 1.
class LogisticMap final : public DynamicsSystem {
 public:
  LogisticMap(double r, std::size_t horizon, double s0 = 0.2);

  [[nodiscard]] std::size_t dim() const override { return 1; }
  [[nodiscard]] std::size_t horizon() const override { return horizon_; }
  [[nodiscard]] StateVector initial_state() const override { return Vector::Constant(1, s0_); }
  [[nodiscard]] Vector step(std::size_t t, const Vector& s) const override;
  [[nodiscard]] Matrix jacobian(std::size_t t, const Vector& s) const override;
  [[nodiscard]] Vector diag_jacobian(std::size_t t, const Vector& s) const override;
  [[nodiscard]] Vector jvp(std::size_t t, const Vector& s, const Vector& v) const override;
  [[nodiscard]] std::string name() const override { return "logistic"; }

 private:
  double r_;
  std::size_t horizon_;
  double s0_;
};

struct ModelSpec {
  enum class Kind { ScalarAffine, MeanFieldRnn, Gru, Lorenz96, LangevinTwoWell, S5WordProblem, LogisticMap };

  Kind kind = Kind::ScalarAffine;
  /// Model default when unset: 1 (scalar_affine), 32 (mean_field_rnn),
  /// 8 (gru), 5 (lorenz96). Fixed for the other models.
  std::optional<std::size_t> dim;
  std::uint64_t seed = 0;
  double alpha = 0.5;
  /// Initial value for scalar_affine (default 1) and logistic (default 0.2).
  std::optional<double> s0;
  std::optional<RowMatrix> inputs;
  double gain = 1.0;
  double forcing = 8.0;
  double dt = 0.01;
  double eps = 0.01;
  double r = 4.0;

  /// scalar_affine | mean_field_rnn | gru | lorenz96 | langevin_two_well |
  /// s5 | logistic
  [[nodiscard]] static Kind parse_kind(const std::string& name);
  [[nodiscard]] static std::string kind_name(Kind kind);
};

[[nodiscard]] std::unique_ptr<DynamicsSystem> build(const ModelSpec& spec, std::size_t horizon);

}  // namespace seqpar
