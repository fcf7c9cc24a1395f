#include "slicescope/arnoldi.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "slicescope/errors.h"
#include "slicescope/random.h"

namespace slicescope {

ArnoldiResult arnoldi(const LinearOperator& op, std::size_t dim, std::size_t iterations,
                      std::uint64_t seed) {
  Rng rng(seed);
  Vector start(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < start.size(); ++i) start[i] = rng.normal();
  return arnoldi(op, start, iterations);
}

ArnoldiResult arnoldi(const LinearOperator& op, const Vector& start, std::size_t iterations) {
  const auto dim = static_cast<std::size_t>(start.size());
  require(iterations >= 1, "Arnoldi needs at least one iteration");
  require(dim >= iterations, "Arnoldi dimension exceeds the operator dimension");
  const double start_norm = start.norm();
  require(start_norm > 0.0 && std::isfinite(start_norm), "Arnoldi start vector must be nonzero");

  const auto n = static_cast<Eigen::Index>(dim);
  const auto p = static_cast<Eigen::Index>(iterations);
  Matrix basis(n, p);
  Matrix restriction = Matrix::Zero(p, p);
  basis.col(0) = start / start_norm;

  Eigen::Index effective = p;
  for (Eigen::Index j = 0; j < p; ++j) {
    Vector w = op(basis.col(j));
    if (w.size() != n || !w.allFinite()) {
      throw FactorizationError("Hessian-vector oracle returned non-finite values at Arnoldi step " +
                               std::to_string(j));
    }
    const double image_norm = w.norm();
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index i = 0; i <= j; ++i) {
        const double coefficient = basis.col(i).dot(w);
        restriction(i, j) += coefficient;
        w -= coefficient * basis.col(i);
      }
    }
    if (j + 1 == p) break;
    const double residual = w.norm();
    if (residual <= kArnoldiBreakdownTolerance * std::max(1.0, image_norm)) {
      effective = j + 1;
      break;
    }
    restriction(j + 1, j) = residual;
    basis.col(j + 1) = w / residual;
  }

  ArnoldiResult result;
  result.basis = basis.leftCols(effective);
  result.restriction = restriction.topLeftCorner(effective, effective);
  return result;
}

}  // namespace slicescope
