#include "seqpar/models.hpp"

#include "seqpar/jacutils.hpp"
#include "seqpar/rng.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <numbers>
#include <string>
#include <utility>

namespace seqpar {

namespace {

void require_time(std::size_t t, std::size_t horizon) {
  require(t >= 1 && t <= horizon, "time index out of range");
}

Vector sigmoid(const Vector& x) {
  return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

Matrix normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  return m;
}

Vector normal_vector(Rng& rng, Eigen::Index n, double scale) { return normal_matrix(rng, n, 1, scale).col(0); }

}  // namespace

// ---------------------------------------------------------------- ScalarAffine

ScalarAffine::ScalarAffine(double alpha, std::size_t horizon, StateVector s0, std::optional<RowMatrix> inputs)
    : alpha_(alpha), horizon_(horizon), s0_(std::move(s0)), inputs_(std::move(inputs)) {
  require(std::isfinite(alpha_), "ScalarAffine: alpha must be finite");
  require(horizon_ >= 1, "ScalarAffine: horizon must be at least 1");
  require(s0_.size() >= 1, "ScalarAffine: dimension must be at least 1");
  if (inputs_) {
    require(static_cast<std::size_t>(inputs_->rows()) == horizon_ && inputs_->cols() == s0_.size(),
            "ScalarAffine: inputs must be T x D");
  }
}

ScalarAffine::ScalarAffine(double alpha, std::size_t horizon, double s0, std::size_t dim)
    : ScalarAffine(alpha, horizon, Vector::Constant(static_cast<Eigen::Index>(dim), s0)) {}

Vector ScalarAffine::step(std::size_t t, const Vector& s) const {
  require_time(t, horizon_);
  Vector out = alpha_ * s;
  if (inputs_) out += inputs_->row(static_cast<Eigen::Index>(t - 1)).transpose();
  return out;
}

Matrix ScalarAffine::jacobian(std::size_t, const Vector&) const { return alpha_ * Matrix::Identity(s0_.size(), s0_.size()); }

Vector ScalarAffine::diag_jacobian(std::size_t, const Vector&) const { return Vector::Constant(s0_.size(), alpha_); }

Vector ScalarAffine::jvp(std::size_t, const Vector&, const Vector& v) const { return alpha_ * v; }

// ---------------------------------------------------------------- MeanFieldRnn

MeanFieldRnn::MeanFieldRnn(std::size_t dim, double gain, std::size_t horizon, std::uint64_t seed)
    : gain_(gain), horizon_(horizon) {
  require(dim >= 1, "MeanFieldRnn: dimension must be at least 1");
  require(gain > 0.0 && std::isfinite(gain), "MeanFieldRnn: gain must be positive");
  require(horizon >= 1, "MeanFieldRnn: horizon must be at least 1");
  const auto d = static_cast<Eigen::Index>(dim);
  Rng rng(seed);
  Rng wrng = rng.split(1);
  W_ = normal_matrix(wrng, d, d, gain / std::sqrt(static_cast<double>(dim)));
  W_.diagonal().setZero();
  Rng srng = rng.split(2);
  s0_ = normal_vector(srng, d, 1.0);
}

Vector MeanFieldRnn::step(std::size_t t, const Vector& s) const {
  require_time(t, horizon_);
  const double u = 0.1 * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(horizon_));
  return (W_ * s.array().tanh().matrix()).array() + u;
}

Matrix MeanFieldRnn::jacobian(std::size_t, const Vector& s) const {
  const Vector sech2 = 1.0 - s.array().tanh().square();
  return W_ * sech2.asDiagonal();
}

Vector MeanFieldRnn::diag_jacobian(std::size_t, const Vector& s) const {
  const Vector sech2 = 1.0 - s.array().tanh().square();
  return W_.diagonal().cwiseProduct(sech2);
}

Vector MeanFieldRnn::jvp(std::size_t, const Vector& s, const Vector& v) const {
  const Vector sech2 = 1.0 - s.array().tanh().square();
  return W_ * sech2.cwiseProduct(v);
}

double MeanFieldRnn::jacobian_lipschitz() const {
  // max |d/dx sech^2 x| = 4 / (3 sqrt 3)
  const Eigen::JacobiSVD<Matrix> svd(W_);
  return svd.singularValues()(0) * 4.0 / (3.0 * std::sqrt(3.0));
}

// ------------------------------------------------------------------------ Gru

Gru::Gru(std::size_t dim, std::size_t horizon, std::uint64_t seed) : horizon_(horizon) {
  require(dim >= 1, "Gru: dimension must be at least 1");
  require(horizon >= 1, "Gru: horizon must be at least 1");
  const auto d = static_cast<Eigen::Index>(dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  Rng rng(seed);
  Rng w = rng.split(1);
  Wz_ = normal_matrix(w, d, d, scale);
  Wr_ = normal_matrix(w, d, d, scale);
  Wh_ = normal_matrix(w, d, d, scale);
  uz_ = normal_vector(w, d, scale);
  ur_ = normal_vector(w, d, scale);
  uh_ = normal_vector(w, d, scale);
  bz_ = normal_vector(w, d, scale);
  br_ = normal_vector(w, d, scale);
  bh_ = normal_vector(w, d, scale);
  Rng x = rng.split(2);
  x_ = normal_vector(x, static_cast<Eigen::Index>(horizon), 1.0);
}

Gru::Gates Gru::gates(std::size_t t, const Vector& h) const {
  require_time(t, horizon_);
  const double x = x_[static_cast<Eigen::Index>(t - 1)];
  Gates g;
  g.z = sigmoid(Wz_ * h + uz_ * x + bz_);
  g.r = sigmoid(Wr_ * h + ur_ * x + br_);
  g.h_tilde = (Wh_ * g.r.cwiseProduct(h) + uh_ * x + bh_).array().tanh();
  return g;
}

Vector Gru::step(std::size_t t, const Vector& s) const {
  const Gates g = gates(t, s);
  return (Vector::Ones(s.size()) - g.z).cwiseProduct(s) + g.z.cwiseProduct(g.h_tilde);
}

Matrix Gru::jacobian(std::size_t t, const Vector& s) const {
  const Gates g = gates(t, s);
  const Eigen::Index d = s.size();
  const Vector ones = Vector::Ones(d);
  const Vector dz = g.z.cwiseProduct(ones - g.z);
  const Vector dr = g.r.cwiseProduct(ones - g.r);
  const Vector dh = ones - g.h_tilde.cwiseAbs2();
  const Matrix d_rh = Matrix(g.r.asDiagonal()) + s.cwiseProduct(dr).asDiagonal() * Wr_;
  Matrix J = Matrix((ones - g.z).asDiagonal());
  J += (g.h_tilde - s).cwiseProduct(dz).asDiagonal() * Wz_;
  J += g.z.cwiseProduct(dh).asDiagonal() * (Wh_ * d_rh);
  return J;
}

Vector Gru::diag_jacobian(std::size_t t, const Vector& s) const { return jacobian(t, s).diagonal(); }

// ------------------------------------------------------------------- Lorenz96

Lorenz96::Lorenz96(std::size_t dim, double forcing, double dt, std::size_t horizon)
    : dim_(dim), forcing_(forcing), dt_(dt), horizon_(horizon) {
  require(dim >= 4, "Lorenz96: dimension must be at least 4");
  require(std::isfinite(forcing), "Lorenz96: forcing must be finite");
  require(dt > 0.0 && std::isfinite(dt), "Lorenz96: dt must be positive");
  require(horizon >= 1, "Lorenz96: horizon must be at least 1");
}

StateVector Lorenz96::initial_state() const {
  Vector s = Vector::Constant(static_cast<Eigen::Index>(dim_), forcing_);
  s[0] += 0.01;
  return s;
}

Vector Lorenz96::vector_field(const Vector& x) const {
  const auto n = static_cast<Eigen::Index>(dim_);
  Vector dx(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double xp1 = x[(k + 1) % n];
    const double xm1 = x[(k + n - 1) % n];
    const double xm2 = x[(k + n - 2) % n];
    dx[k] = (xp1 - xm2) * xm1 - x[k] + forcing_;
  }
  return dx;
}

Vector Lorenz96::step(std::size_t t, const Vector& s) const {
  require_time(t, horizon_);
  const Vector k1 = vector_field(s);
  const Vector k2 = vector_field(s + 0.5 * dt_ * k1);
  const Vector k3 = vector_field(s + 0.5 * dt_ * k2);
  const Vector k4 = vector_field(s + dt_ * k3);
  return s + (dt_ / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Matrix Lorenz96::jacobian(std::size_t t, const Vector& s) const { return fd_jacobian(*this, t, s); }

Vector Lorenz96::diag_jacobian(std::size_t t, const Vector& s) const { return jacobian(t, s).diagonal(); }

// ------------------------------------------------------------ LangevinTwoWell

LangevinTwoWell::LangevinTwoWell(double eps, std::size_t horizon, std::uint64_t seed)
    : eps_(eps), horizon_(horizon) {
  require(eps > 0.0 && std::isfinite(eps), "LangevinTwoWell: eps must be positive");
  require(horizon >= 1, "LangevinTwoWell: horizon must be at least 1");
  means_[0] = Vector(2);
  means_[0] << 0.0, -1.4;
  means_[1] = Vector(2);
  means_[1] << 0.0, 1.6;
  precision_ = Vector(2);
  precision_ << 1.0 / 0.8, 1.0 / 0.4;
  Rng rng(seed);
  noise_.resize(static_cast<Eigen::Index>(horizon), 2);
  for (Eigen::Index i = 0; i < noise_.rows(); ++i) {
    noise_(i, 0) = rng.normal();
    noise_(i, 1) = rng.normal();
  }
}

StateVector LangevinTwoWell::initial_state() const { return means_[0]; }

std::array<double, 2> LangevinTwoWell::responsibilities(const Vector& s) const {
  std::array<double, 2> logp{};
  for (int k = 0; k < 2; ++k) {
    const Vector e = s - means_[k];
    logp[k] = -0.5 * e.cwiseAbs2().dot(precision_);
  }
  const double top = std::max(logp[0], logp[1]);
  const double w0 = std::exp(logp[0] - top);
  const double w1 = std::exp(logp[1] - top);
  return {w0 / (w0 + w1), w1 / (w0 + w1)};
}

double LangevinTwoWell::potential(const Vector& s) const {
  // Equal weights and a shared covariance, so the normalizer is a constant.
  std::array<double, 2> logp{};
  for (int k = 0; k < 2; ++k) {
    const Vector e = s - means_[k];
    logp[k] = -0.5 * e.cwiseAbs2().dot(precision_);
  }
  const double top = std::max(logp[0], logp[1]);
  const double lse = top + std::log(0.5 * std::exp(logp[0] - top) + 0.5 * std::exp(logp[1] - top));
  const double log_norm = -std::log(2.0 * std::numbers::pi) + 0.5 * std::log(precision_.prod());
  return -(lse + log_norm);
}

Vector LangevinTwoWell::grad_potential(const Vector& s) const {
  const auto pi = responsibilities(s);
  Vector g = Vector::Zero(2);
  for (int k = 0; k < 2; ++k) g += pi[k] * precision_.cwiseProduct(s - means_[k]);
  return g;
}

Matrix LangevinTwoWell::hessian_potential(const Vector& s) const {
  const auto pi = responsibilities(s);
  std::array<Vector, 2> g;
  Vector mean = Vector::Zero(2);
  for (int k = 0; k < 2; ++k) {
    g[k] = precision_.cwiseProduct(s - means_[k]);
    mean += pi[k] * g[k];
  }
  Matrix H = precision_.asDiagonal();
  for (int k = 0; k < 2; ++k) H -= pi[k] * g[k] * g[k].transpose();
  H += mean * mean.transpose();
  return H;
}

Vector LangevinTwoWell::step(std::size_t t, const Vector& s) const {
  require_time(t, horizon_);
  return s - eps_ * grad_potential(s) + std::sqrt(2.0 * eps_) * noise_.row(static_cast<Eigen::Index>(t - 1)).transpose();
}

Matrix LangevinTwoWell::jacobian(std::size_t, const Vector& s) const {
  return Matrix::Identity(2, 2) - eps_ * hessian_potential(s);
}

Vector LangevinTwoWell::diag_jacobian(std::size_t t, const Vector& s) const { return jacobian(t, s).diagonal(); }

// -------------------------------------------------------------- S5WordProblem

S5WordProblem::S5WordProblem(std::size_t horizon, std::uint64_t seed) {
  require(horizon >= 1, "S5WordProblem: horizon must be at least 1");
  Rng rng(seed);
  perms_.resize(horizon);
  for (auto& p : perms_) {
    for (int i = 0; i < 5; ++i) p[static_cast<std::size_t>(i)] = i;
    for (int i = 4; i > 0; --i) {
      const auto j = static_cast<int>(rng.engine()() % static_cast<std::uint64_t>(i + 1));
      std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
    }
  }
}

StateVector S5WordProblem::initial_state() const {
  Vector s(5);
  s << 1, 2, 3, 4, 5;
  return s;
}

Vector S5WordProblem::step(std::size_t t, const Vector& s) const {
  require_time(t, perms_.size());
  const auto& p = perms_[t - 1];
  Vector out(5);
  for (int i = 0; i < 5; ++i) out[i] = s[p[static_cast<std::size_t>(i)]];
  return out;
}

Matrix S5WordProblem::jacobian(std::size_t t, const Vector&) const {
  require_time(t, perms_.size());
  Matrix P = Matrix::Zero(5, 5);
  const auto& p = perms_[t - 1];
  for (int i = 0; i < 5; ++i) P(i, p[static_cast<std::size_t>(i)]) = 1.0;
  return P;
}

Vector S5WordProblem::diag_jacobian(std::size_t t, const Vector& s) const { return jacobian(t, s).diagonal(); }

Vector S5WordProblem::jvp(std::size_t t, const Vector&, const Vector& v) const { return step(t, v); }

// ---------------------------------------------------------------- LogisticMap

LogisticMap::LogisticMap(double r, std::size_t horizon, double s0) : r_(r), horizon_(horizon), s0_(s0) {
  require(r > 0.0 && r <= 4.0, "LogisticMap: r must lie in (0, 4]");
  require(horizon >= 1, "LogisticMap: horizon must be at least 1");
  require(std::isfinite(s0), "LogisticMap: s0 must be finite");
}

Vector LogisticMap::step(std::size_t t, const Vector& s) const {
  require_time(t, horizon_);
  return Vector::Constant(1, r_ * s[0] * (1.0 - s[0]));
}

Matrix LogisticMap::jacobian(std::size_t, const Vector& s) const { return Matrix::Constant(1, 1, r_ * (1.0 - 2.0 * s[0])); }

Vector LogisticMap::diag_jacobian(std::size_t, const Vector& s) const {
  return Vector::Constant(1, r_ * (1.0 - 2.0 * s[0]));
}

Vector LogisticMap::jvp(std::size_t, const Vector& s, const Vector& v) const { return r_ * (1.0 - 2.0 * s[0]) * v; }

// ------------------------------------------------------------------ ModelSpec

ModelSpec::Kind ModelSpec::parse_kind(const std::string& name) {
  if (name == "scalar_affine" || name == "scalar") return Kind::ScalarAffine;
  if (name == "mean_field_rnn" || name == "mean_field" || name == "rnn") return Kind::MeanFieldRnn;
  if (name == "gru") return Kind::Gru;
  if (name == "lorenz96" || name == "lorenz") return Kind::Lorenz96;
  if (name == "langevin_two_well" || name == "two_well" || name == "langevin") return Kind::LangevinTwoWell;
  if (name == "s5" || name == "s5_word_problem") return Kind::S5WordProblem;
  if (name == "logistic" || name == "logistic_map") return Kind::LogisticMap;
  throw ContractViolation("unknown model '" + name + "'");
}

std::string ModelSpec::kind_name(Kind kind) {
  switch (kind) {
    case Kind::ScalarAffine:
      return "scalar_affine";
    case Kind::MeanFieldRnn:
      return "mean_field_rnn";
    case Kind::Gru:
      return "gru";
    case Kind::Lorenz96:
      return "lorenz96";
    case Kind::LangevinTwoWell:
      return "langevin_two_well";
    case Kind::S5WordProblem:
      return "s5";
    case Kind::LogisticMap:
      return "logistic";
  }
  return "unknown";
}

std::unique_ptr<DynamicsSystem> build(const ModelSpec& spec, std::size_t horizon) {
  switch (spec.kind) {
    case ModelSpec::Kind::ScalarAffine: {
      const auto d = static_cast<Eigen::Index>(spec.dim.value_or(1));
      return std::make_unique<ScalarAffine>(spec.alpha, horizon, Vector::Constant(d, spec.s0.value_or(1.0)), spec.inputs);
    }
    case ModelSpec::Kind::MeanFieldRnn:
      return std::make_unique<MeanFieldRnn>(spec.dim.value_or(32), spec.gain, horizon, spec.seed);
    case ModelSpec::Kind::Gru:
      return std::make_unique<Gru>(spec.dim.value_or(8), horizon, spec.seed);
    case ModelSpec::Kind::Lorenz96:
      return std::make_unique<Lorenz96>(spec.dim.value_or(5), spec.forcing, spec.dt, horizon);
    case ModelSpec::Kind::LangevinTwoWell:
      require(!spec.dim || *spec.dim == 2, "langevin_two_well is two-dimensional");
      return std::make_unique<LangevinTwoWell>(spec.eps, horizon, spec.seed);
    case ModelSpec::Kind::S5WordProblem:
      require(!spec.dim || *spec.dim == 5, "s5 is five-dimensional");
      return std::make_unique<S5WordProblem>(horizon, spec.seed);
    case ModelSpec::Kind::LogisticMap:
      require(!spec.dim || *spec.dim == 1, "logistic is one-dimensional");
      return std::make_unique<LogisticMap>(spec.r, horizon, spec.s0.value_or(0.2));
  }
  throw ContractViolation("unknown model kind");
}

}  // namespace seqpar
