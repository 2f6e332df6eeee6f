#include "seqpar/pscan.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace seqpar {

namespace {

template <class... Fs>
struct overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
overloaded(Fs...) -> overloaded<Fs...>;

double scalar_of(const TransitionRepr& a) {
  if (std::holds_alternative<IdentityTransition>(a)) return 1.0;
  if (const auto* s = std::get_if<ScaledTransition>(&a)) return s->a;
  return 0.0;
}

// left * right, where right is dense and left is anything.
void left_multiply(const TransitionRepr& left, Matrix& right) {
  std::visit(overloaded{
                 [&](const ZeroTransition&) { right.setZero(); },
                 [&](const IdentityTransition&) {},
                 [&](const ScaledTransition& s) { right *= s.a; },
                 [&](const DiagonalTransition& d) { right = d.d.asDiagonal() * right; },
                 [&](const DenseTransition& m) { right = m.m * right; },
             },
             left);
}

// left * right, where left is dense and right is anything.
void right_multiply(Matrix& left, const TransitionRepr& right) {
  std::visit(overloaded{
                 [&](const ZeroTransition&) { left.setZero(); },
                 [&](const IdentityTransition&) {},
                 [&](const ScaledTransition& s) { left *= s.a; },
                 [&](const DiagonalTransition& d) { left = left * d.d.asDiagonal(); },
                 [&](const DenseTransition& m) { left = left * m.m; },
             },
             right);
}

}  // namespace

int transition_rank(const TransitionRepr& a) noexcept {
  if (std::holds_alternative<DenseTransition>(a)) return 2;
  if (std::holds_alternative<DiagonalTransition>(a)) return 1;
  return 0;
}

Matrix to_dense(const TransitionRepr& a, std::size_t dim) {
  const auto d = static_cast<Eigen::Index>(dim);
  return std::visit(overloaded{
                        [&](const ZeroTransition&) -> Matrix { return Matrix::Zero(d, d); },
                        [&](const IdentityTransition&) -> Matrix { return Matrix::Identity(d, d); },
                        [&](const ScaledTransition& s) -> Matrix { return s.a * Matrix::Identity(d, d); },
                        [&](const DiagonalTransition& g) -> Matrix {
                          require(g.d.size() == d, "to_dense: diagonal has wrong dimension");
                          return g.d.asDiagonal();
                        },
                        [&](const DenseTransition& m) -> Matrix {
                          require(m.m.rows() == d && m.m.cols() == d, "to_dense: matrix has wrong dimension");
                          return m.m;
                        },
                    },
                    a);
}

Vector to_diagonal(const TransitionRepr& a, std::size_t dim) {
  require(!std::holds_alternative<DenseTransition>(a), "to_diagonal: dense transition has no diagonal form");
  if (const auto* g = std::get_if<DiagonalTransition>(&a)) {
    require(static_cast<std::size_t>(g->d.size()) == dim, "to_diagonal: diagonal has wrong dimension");
    return g->d;
  }
  return Vector::Constant(static_cast<Eigen::Index>(dim), scalar_of(a));
}

Vector apply_transition(const TransitionRepr& a, const Vector& x) {
  return std::visit(overloaded{
                        [&](const ZeroTransition&) -> Vector { return Vector::Zero(x.size()); },
                        [&](const IdentityTransition&) -> Vector { return x; },
                        [&](const ScaledTransition& s) -> Vector { return s.a * x; },
                        [&](const DiagonalTransition& g) -> Vector {
                          require(g.d.size() == x.size(), "apply: dimension mismatch");
                          return g.d.cwiseProduct(x);
                        },
                        [&](const DenseTransition& m) -> Vector {
                          require(m.m.cols() == x.size(), "apply: dimension mismatch");
                          return m.m * x;
                        },
                    },
                    a);
}

double spectral_norm(const TransitionRepr& a, std::size_t dim) {
  if (const auto* m = std::get_if<DenseTransition>(&a)) {
    if (m->m.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(m->m);
    return svd.singularValues()(0);
  }
  const Vector d = to_diagonal(a, dim);
  return d.size() == 0 ? 0.0 : d.cwiseAbs().maxCoeff();
}

Vector AffineOp::operator()(const Vector& x) const { return apply_transition(A, x) + b; }

void affine_compose_into(const AffineOp& first, AffineOp& second) {
  require(first.b.size() == second.b.size(), "affine_compose: dimension mismatch");
  if (std::holds_alternative<ZeroTransition>(second.A)) return;

  second.b += apply_transition(second.A, first.b);

  if (std::holds_alternative<ZeroTransition>(first.A)) {
    second.A = ZeroTransition{};
    return;
  }
  if (auto* m = std::get_if<DenseTransition>(&second.A)) {
    right_multiply(m->m, first.A);
    return;
  }
  if (const auto* m = std::get_if<DenseTransition>(&first.A)) {
    Matrix product = m->m;
    left_multiply(second.A, product);
    second.A = DenseTransition{std::move(product)};
    return;
  }
  if (auto* g = std::get_if<DiagonalTransition>(&second.A)) {
    if (const auto* g1 = std::get_if<DiagonalTransition>(&first.A)) {
      g->d.array() *= g1->d.array();
    } else {
      g->d *= scalar_of(first.A);
    }
    return;
  }
  if (const auto* g1 = std::get_if<DiagonalTransition>(&first.A)) {
    second.A = DiagonalTransition{scalar_of(second.A) * g1->d};
    return;
  }
  if (std::holds_alternative<IdentityTransition>(second.A) && std::holds_alternative<IdentityTransition>(first.A)) {
    return;
  }
  second.A = ScaledTransition{scalar_of(second.A) * scalar_of(first.A)};
}

AffineOp affine_compose(const AffineOp& first, const AffineOp& second) {
  AffineOp out = second;
  affine_compose_into(first, out);
  return out;
}

void promote_uniform(std::vector<AffineOp>& ops) {
  int rank = 0;
  bool mixed_scalar = false;
  for (const auto& op : ops) {
    rank = std::max(rank, transition_rank(op.A));
    mixed_scalar = mixed_scalar || std::holds_alternative<ScaledTransition>(op.A);
  }
  for (auto& op : ops) {
    if (std::holds_alternative<ZeroTransition>(op.A)) continue;
    if (rank == 2 && !std::holds_alternative<DenseTransition>(op.A)) {
      op.A = DenseTransition{to_dense(op.A, op.dim())};
    } else if (rank == 1 && !std::holds_alternative<DiagonalTransition>(op.A)) {
      op.A = DiagonalTransition{to_diagonal(op.A, op.dim())};
    } else if (rank == 0 && mixed_scalar && std::holds_alternative<IdentityTransition>(op.A)) {
      op.A = ScaledTransition{1.0};
    }
  }
}

std::vector<AffineOp> parallel_scan(std::vector<AffineOp> ops, WorkerPool* pool, ScanStats* stats) {
  require(!ops.empty(), "parallel_scan: empty sequence");
  const std::size_t dim = ops.front().dim();
  for (const auto& op : ops) require(op.dim() == dim, "parallel_scan: non-uniform dimension");
  promote_uniform(ops);
  const ScanStats s = inclusive_scan_tree(
      ops, [](const AffineOp& first, AffineOp& second) { affine_compose_into(first, second); }, pool);
  if (stats != nullptr) *stats = s;
  return ops;
}

std::vector<AffineOp> sequential_scan(const std::vector<AffineOp>& ops) {
  require(!ops.empty(), "sequential_scan: empty sequence");
  std::vector<AffineOp> out;
  out.reserve(ops.size());
  out.push_back(ops.front());
  for (std::size_t t = 1; t < ops.size(); ++t) out.push_back(affine_compose(out.back(), ops[t]));
  return out;
}

Trajectory evaluate_lds(const std::vector<AffineOp>& ops, const StateVector& s0, WorkerPool* pool) {
  require(!ops.empty(), "evaluate_lds: empty sequence");
  const std::size_t dim = static_cast<std::size_t>(s0.size());
  for (const auto& op : ops) require(op.dim() == dim, "evaluate_lds: dimension mismatch");
  Trajectory out(s0, ops.size());

  const bool all_zero = std::all_of(ops.begin(), ops.end(),
                                    [](const AffineOp& op) { return std::holds_alternative<ZeroTransition>(op.A); });
  if (all_zero) {
    parallel_for(pool, 0, ops.size(), [&](std::size_t t) { out.set(t + 1, ops[t].b); });
    return out;
  }

  // Folding s0 into the first element makes every prefix that reaches it a
  // constant map, so its transition never has to be formed.
  std::vector<AffineOp> work = ops;
  promote_uniform(work);
  work.front().b = work.front()(s0);
  work.front().A = ZeroTransition{};
  inclusive_scan_tree(
      work, [](const AffineOp& first, AffineOp& second) { affine_compose_into(first, second); }, pool);
  parallel_for(pool, 0, work.size(), [&](std::size_t t) { out.set(t + 1, work[t].b); });
  return out;
}

Trajectory evaluate_lds_sequential(const std::vector<AffineOp>& ops, const StateVector& s0) {
  require(!ops.empty(), "evaluate_lds_sequential: empty sequence");
  Trajectory out(s0, ops.size());
  Vector s = s0;
  for (std::size_t t = 0; t < ops.size(); ++t) {
    require(ops[t].dim() == static_cast<std::size_t>(s0.size()), "evaluate_lds_sequential: dimension mismatch");
    s = ops[t](s);
    out.set(t + 1, s);
  }
  return out;
}

}  // namespace seqpar
