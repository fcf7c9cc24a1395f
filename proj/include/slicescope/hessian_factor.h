#ifndef SLICESCOPE_HESSIAN_FACTOR_H_
#define SLICESCOPE_HESSIAN_FACTOR_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "slicescope/arnoldi.h"
#include "slicescope/model.h"

namespace slicescope {

inline constexpr std::size_t kDefaultArnoldiDim = 500;
inline constexpr std::size_t kDefaultRank = 100;
inline constexpr std::size_t kDefaultHessianBatch = 2048;

struct FactorOptions {
  std::size_t arnoldi_dim = kDefaultArnoldiDim;
  std::size_t rank = kDefaultRank;
  std::uint64_t seed = 0;
  // Eigenvalues with |lambda| < eig_floor * max|lambda| are dropped.
  double eig_floor = 1e-8;
};

// Low-rank factors of the inverse Hessian: H^-1 ~= M diag(1/lambda) M^T.
struct HessianFactors {
  Matrix projection;   // M, masked_param_count x rank, orthonormal columns
  Vector eigenvalues;  // sorted by descending |lambda|
  Vector signs;        // +1 / -1 per eigenvalue
  std::size_t arnoldi_dim = 0;            // effective Krylov dimension
  std::size_t requested_arnoldi_dim = 0;
  std::size_t requested_rank = 0;
  std::uint64_t seed = 0;
  std::string model_hash;

  std::size_t rank() const { return static_cast<std::size_t>(eigenvalues.size()); }
  std::size_t dim() const { return static_cast<std::size_t>(projection.rows()); }
  bool all_positive() const { return (signs.array() > 0.0).all(); }
};

// Runs Arnoldi on the mean-loss Hessian over `hessian_batch`, symmetrizes the
// restriction, and keeps its top eigenpairs by magnitude. The Arnoldi
// dimension is clamped to the masked parameter count and the rank to the
// effective Krylov dimension. Throws DegenerateHessianError when no
// eigenvalue survives the floor.
HessianFactors factor_hessian(const Model& model, const LabeledDataset& hessian_batch,
                              const FactorOptions& options);

// Same decomposition for an arbitrary symmetric operator.
HessianFactors factor_operator(const LinearOperator& op, std::size_t dim, const FactorOptions& options);

// M diag(1/lambda) M^T v.
Vector apply_inverse(const HessianFactors& factors, const Vector& v);

inline constexpr std::string_view kFactorsMagic = "SSFACTR1";
// JSON header plus row-major little-endian f64 payload for M.
void save_factors(const std::filesystem::path& path, const HessianFactors& factors);
HessianFactors load_factors(const std::filesystem::path& path);
// Content hash of a factor file's header and payload.
std::string factors_hash(const HessianFactors& factors);

}  // namespace slicescope

#endif  // SLICESCOPE_HESSIAN_FACTOR_H_
