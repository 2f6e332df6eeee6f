#pragma once

// Parallel associative scan over affine maps x -> A x + b.
//
// The transition A is kept in the cheapest representation that is closed
// under composition, so Picard/Jacobi/diagonal iterations cost O(T D) and only
// the full Newton path pays O(T D^3).

#include "seqpar/core.hpp"
#include "seqpar/worker_pool.hpp"

#include <cstddef>
#include <functional>
#include <type_traits>
#include <variant>
#include <vector>

namespace seqpar {

struct ZeroTransition {};
struct IdentityTransition {};
struct ScaledTransition {
  double a = 1.0;
};
struct DiagonalTransition {
  Vector d;
};
struct DenseTransition {
  Matrix m;
};

using TransitionRepr =
    std::variant<ZeroTransition, IdentityTransition, ScaledTransition, DiagonalTransition, DenseTransition>;

/// Lattice rank used for promotion: Zero/Identity/Scaled = 0, Diagonal = 1,
/// Dense = 2.
[[nodiscard]] int transition_rank(const TransitionRepr& a) noexcept;

[[nodiscard]] Matrix to_dense(const TransitionRepr& a, std::size_t dim);
/// Diagonal view of a scalar or diagonal transition. Dense is rejected.
[[nodiscard]] Vector to_diagonal(const TransitionRepr& a, std::size_t dim);
[[nodiscard]] Vector apply_transition(const TransitionRepr& a, const Vector& x);
/// Spectral norm ||A||_2.
[[nodiscard]] double spectral_norm(const TransitionRepr& a, std::size_t dim);

struct AffineOp {
  TransitionRepr A = IdentityTransition{};
  Vector b;

  [[nodiscard]] std::size_t dim() const noexcept { return static_cast<std::size_t>(b.size()); }
  [[nodiscard]] Vector operator()(const Vector& x) const;
};

/// Map applying `first` then `second`: (A2 A1, b2 + A2 b1).
[[nodiscard]] AffineOp affine_compose(const AffineOp& first, const AffineOp& second);

/// second <- affine_compose(first, second), without allocating where the
/// representation allows it.
void affine_compose_into(const AffineOp& first, AffineOp& second);

/// Rewrites every element into the least representation class holding all of
/// them. Zero transitions are left alone since they absorb every class.
void promote_uniform(std::vector<AffineOp>& ops);

struct ScanStats {
  std::size_t compose_calls = 0;
  std::size_t up_levels = 0;
  std::size_t down_levels = 0;
};

enum class ScanPhase { Up, Down };

/// In-place inclusive prefix scan on a binary tree. After return buf[t]
/// holds buf[t] o ... o buf[0] where combine(first, second) must overwrite
/// `second` with the map "first, then second". The sequence is treated as
/// padded to a power of two with identities, but combines that would touch a
/// padded slot are skipped. Each level runs on the pool; the observer, if set,
/// sees the buffer after every level.
template <class T, class Combine>
ScanStats inclusive_scan_tree(std::vector<T>& buf, Combine&& combine, WorkerPool* pool = nullptr,
                              const std::type_identity_t<std::function<void(ScanPhase, std::size_t, const std::vector<T>&)>>& observer = {}) {
  ScanStats stats;
  const std::size_t n = buf.size();
  if (n <= 1) return stats;
  std::size_t width = 1;
  while (width < n) width <<= 1;

  auto run_level = [&](std::size_t first_index, std::size_t d) {
    if (first_index >= n) return;
    const std::size_t count = (n - 1 - first_index) / (2 * d) + 1;
    stats.compose_calls += count;
    parallel_for(pool, 0, count, [&](std::size_t k) {
      const std::size_t i = first_index + k * 2 * d;
      combine(buf[i - d], buf[i]);
    });
  };

  for (std::size_t d = 1; d < width; d <<= 1) {
    run_level(2 * d - 1, d);
    ++stats.up_levels;
    if (observer) observer(ScanPhase::Up, d, buf);
  }
  for (std::size_t d = width / 4; d >= 1; d >>= 1) {
    run_level(3 * d - 1, d);
    ++stats.down_levels;
    if (observer) observer(ScanPhase::Down, d, buf);
  }
  return stats;
}

/// All inclusive prefixes ops_t o ... o ops_1.
[[nodiscard]] std::vector<AffineOp> parallel_scan(std::vector<AffineOp> ops, WorkerPool* pool = nullptr,
                                                  ScanStats* stats = nullptr);

/// Left fold reference for parallel_scan.
[[nodiscard]] std::vector<AffineOp> sequential_scan(const std::vector<AffineOp>& ops);

/// States s_t = A_t s_{t-1} + b_t, t = 1..T, evaluated with the scan. An
/// all-Zero sequence is a plain map s_t = b_t.
[[nodiscard]] Trajectory evaluate_lds(const std::vector<AffineOp>& ops, const StateVector& s0,
                                      WorkerPool* pool = nullptr);

/// Sequential recurrence reference for evaluate_lds.
[[nodiscard]] Trajectory evaluate_lds_sequential(const std::vector<AffineOp>& ops, const StateVector& s0);

}  // namespace seqpar
