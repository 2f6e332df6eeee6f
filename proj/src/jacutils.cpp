#include "seqpar/jacutils.hpp"

#include "seqpar/rng.hpp"

#include <algorithm>
#include <string>

namespace seqpar {

namespace {

void require_finite(const Vector& v, std::size_t t, const char* what) {
  if (!v.allFinite()) throw NumericalError(std::string(what) + " produced non-finite values at t=" + std::to_string(t), t);
}

}  // namespace

Vector fd_jvp(const DynamicsSystem& sys, std::size_t t, const Vector& s, const Vector& v) {
  require(static_cast<std::size_t>(v.size()) == sys.dim(), "jvp: direction has wrong dimension");
  const double s_norm = s.size() > 0 ? s.cwiseAbs().maxCoeff() : 0.0;
  const double v_norm = v.size() > 0 ? v.cwiseAbs().maxCoeff() : 0.0;
  const double h = 1e-6 * (1.0 + s_norm) / std::max(v_norm, 1.0);
  const Vector plus = sys.step(t, s + h * v);
  const Vector minus = sys.step(t, s - h * v);
  return (plus - minus) / (2.0 * h);
}

Vector jvp(const DynamicsSystem& sys, std::size_t t, const Vector& s, const Vector& v) {
  require(static_cast<std::size_t>(v.size()) == sys.dim(), "jvp: direction has wrong dimension");
  Vector out = sys.jvp(t, s, v);
  require_finite(out, t, "jvp");
  return out;
}

Matrix fd_jacobian(const DynamicsSystem& sys, std::size_t t, const Vector& s, double h) {
  require(h > 0.0, "fd_jacobian: step must be positive");
  const auto d = static_cast<Eigen::Index>(sys.dim());
  require(s.size() == d, "fd_jacobian: state has wrong dimension");
  Matrix jac(d, d);
  Vector probe = s;
  for (Eigen::Index k = 0; k < d; ++k) {
    probe[k] = s[k] + h;
    const Vector plus = sys.step(t, probe);
    probe[k] = s[k] - h;
    const Vector minus = sys.step(t, probe);
    probe[k] = s[k];
    jac.col(k) = (plus - minus) / (2.0 * h);
  }
  if (!jac.allFinite()) throw NumericalError("fd_jacobian produced non-finite values at t=" + std::to_string(t), t);
  return jac;
}

DiagEstimate hutchinson_diag(const DynamicsSystem& sys, std::size_t t, const Vector& s, std::size_t samples,
                             std::uint64_t seed) {
  require(samples >= 1, "hutchinson_diag: need at least one sample");
  const auto d = static_cast<Eigen::Index>(sys.dim());
  Rng rng(seed);
  Vector mean = Vector::Zero(d);
  Vector v(d);
  for (std::size_t n = 0; n < samples; ++n) {
    for (Eigen::Index k = 0; k < d; ++k) v[k] = rng.rademacher();
    const Vector x = v.cwiseProduct(jvp(sys, t, s, v));
    // Running mean, so identical samples reproduce their value exactly.
    mean += (x - mean) / static_cast<double>(n + 1);
  }
  return {mean, samples, seed};
}

std::uint64_t default_probe_seed(std::size_t t) noexcept { return splitmix64(0xD1A6ULL + t); }

}  // namespace seqpar
