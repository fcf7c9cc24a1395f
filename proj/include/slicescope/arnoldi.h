#ifndef SLICESCOPE_ARNOLDI_H_
#define SLICESCOPE_ARNOLDI_H_

#include <cstddef>
#include <cstdint>
#include <functional>

#include "slicescope/dataset.h"

namespace slicescope {

using LinearOperator = std::function<Vector(const Vector&)>;

struct ArnoldiResult {
  // dim x P_eff, orthonormal columns spanning the Krylov subspace.
  Matrix basis;
  // P_eff x P_eff upper-Hessenberg restriction basis^T H basis.
  Matrix restriction;

  std::size_t effective_dim() const { return static_cast<std::size_t>(basis.cols()); }
};

// Residual norm (relative to ||H q_j||, floored at 1) below which the Krylov
// space is treated as invariant and the iteration stops early.
inline constexpr double kArnoldiBreakdownTolerance = 1e-10;

// Runs up to `iterations` Arnoldi steps on a symmetric operator from a seeded
// standard-normal start vector, with two passes of modified Gram-Schmidt per
// step. Throws FactorizationError if the operator returns non-finite values.
ArnoldiResult arnoldi(const LinearOperator& op, std::size_t dim, std::size_t iterations,
                      std::uint64_t seed);

// Same, from an explicit (not necessarily normalized) start vector.
ArnoldiResult arnoldi(const LinearOperator& op, const Vector& start, std::size_t iterations);

}  // namespace slicescope

#endif  // SLICESCOPE_ARNOLDI_H_
