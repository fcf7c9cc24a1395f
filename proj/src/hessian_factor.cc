#include "slicescope/hessian_factor.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Eigenvalues>

#include "slicescope/errors.h"
#include "slicescope/serialization.h"

namespace slicescope {

HessianFactors factor_operator(const LinearOperator& op, std::size_t dim, const FactorOptions& options) {
  require(options.arnoldi_dim >= 2, "Arnoldi dimension must be at least 2");
  require(options.rank >= 1, "rank must be at least 1");
  require(options.rank <= options.arnoldi_dim, "rank must not exceed the Arnoldi dimension");
  require(options.eig_floor >= 0.0, "eigenvalue floor must be nonnegative");
  require(dim >= 1, "operator dimension must be positive");

  const std::size_t iterations = std::min(options.arnoldi_dim, dim);
  const ArnoldiResult krylov = arnoldi(op, dim, iterations, options.seed);

  // The Hessenberg restriction is symmetric only up to rounding.
  const Matrix symmetric = 0.5 * (krylov.restriction + krylov.restriction.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetric);
  if (solver.info() != Eigen::Success) {
    throw FactorizationError("eigendecomposition of the Arnoldi restriction failed");
  }
  const Vector& values = solver.eigenvalues();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::abs(values[a]) > std::abs(values[b]);
  });

  const double largest = std::abs(values[order.front()]);
  const double floor = options.eig_floor * largest;
  std::vector<Eigen::Index> kept;
  for (Eigen::Index index : order) {
    if (kept.size() == options.rank) break;
    const double magnitude = std::abs(values[index]);
    if (magnitude == 0.0 || magnitude < floor) break;
    kept.push_back(index);
  }
  if (kept.empty()) {
    throw DegenerateHessianError("all Hessian eigenvalues fall below the floor");
  }

  const auto rank = static_cast<Eigen::Index>(kept.size());
  Matrix vectors(symmetric.rows(), rank);
  HessianFactors factors;
  factors.eigenvalues.resize(rank);
  factors.signs.resize(rank);
  for (Eigen::Index k = 0; k < rank; ++k) {
    const Eigen::Index source = kept[static_cast<std::size_t>(k)];
    vectors.col(k) = solver.eigenvectors().col(source);
    factors.eigenvalues[k] = values[source];
    factors.signs[k] = values[source] < 0.0 ? -1.0 : 1.0;
  }
  factors.projection = krylov.basis * vectors;
  factors.arnoldi_dim = krylov.effective_dim();
  factors.requested_arnoldi_dim = options.arnoldi_dim;
  factors.requested_rank = options.rank;
  factors.seed = options.seed;
  return factors;
}

HessianFactors factor_hessian(const Model& model, const LabeledDataset& hessian_batch,
                              const FactorOptions& options) {
  const LinearOperator op = [&](const Vector& v) { return model.hvp(hessian_batch, v); };
  HessianFactors factors = factor_operator(op, model.spec().masked_count(), options);
  factors.model_hash = model_hash(model);
  return factors;
}

Vector apply_inverse(const HessianFactors& factors, const Vector& v) {
  require(static_cast<std::size_t>(v.size()) == factors.dim(),
          "vector length does not match factor dimension");
  const Vector coordinates = factors.projection.transpose() * v;
  return factors.projection * coordinates.cwiseQuotient(factors.eigenvalues);
}

namespace {

Json factors_header(const HessianFactors& factors) {
  Json header;
  header["format"] = "slicescope-factors";
  header["version"] = 1;
  header["dim"] = factors.dim();
  header["arnoldi_dim"] = factors.arnoldi_dim;
  header["requested_arnoldi_dim"] = factors.requested_arnoldi_dim;
  header["rank"] = factors.rank();
  header["requested_rank"] = factors.requested_rank;
  header["seed"] = factors.seed;
  header["model_hash"] = factors.model_hash;
  header["eigenvalues"] = std::vector<double>(factors.eigenvalues.begin(), factors.eigenvalues.end());
  header["signs"] = std::vector<double>(factors.signs.begin(), factors.signs.end());
  return header;
}

std::vector<std::byte> factors_payload(const HessianFactors& factors) {
  const RowMatrix row_major = factors.projection;
  return pack_f64(std::span(row_major.data(), static_cast<std::size_t>(row_major.size())));
}

}  // namespace

void save_factors(const std::filesystem::path& path, const HessianFactors& factors) {
  write_artifact(path, kFactorsMagic, factors_header(factors), factors_payload(factors));
}

HessianFactors load_factors(const std::filesystem::path& path) {
  const Artifact artifact = read_artifact(path, kFactorsMagic);
  const Json& header = artifact.header;
  HessianFactors factors;
  try {
    const auto dim = header.at("dim").get<std::size_t>();
    const auto rank = header.at("rank").get<std::size_t>();
    const auto eigenvalues = header.at("eigenvalues").get<std::vector<double>>();
    const auto signs = header.at("signs").get<std::vector<double>>();
    if (eigenvalues.size() != rank || signs.size() != rank) {
      throw FormatError(path.string() + ": eigenvalue count does not match rank");
    }
    const auto values = unpack_f64(artifact.payload);
    if (values.size() != dim * rank) {
      throw FormatError(path.string() + ": payload size does not match dim x rank");
    }
    factors.projection = Eigen::Map<const RowMatrix>(values.data(), static_cast<Eigen::Index>(dim),
                                                     static_cast<Eigen::Index>(rank));
    factors.eigenvalues = Eigen::Map<const Vector>(eigenvalues.data(), static_cast<Eigen::Index>(rank));
    factors.signs = Eigen::Map<const Vector>(signs.data(), static_cast<Eigen::Index>(rank));
    factors.arnoldi_dim = header.at("arnoldi_dim").get<std::size_t>();
    factors.requested_arnoldi_dim = header.value("requested_arnoldi_dim", factors.arnoldi_dim);
    factors.requested_rank = header.value("requested_rank", rank);
    factors.seed = header.value("seed", std::uint64_t{0});
    factors.model_hash = header.value("model_hash", std::string());
  } catch (const Json::exception& e) {
    throw FormatError(path.string() + ": bad factors header: " + e.what());
  }
  return factors;
}

std::string factors_hash(const HessianFactors& factors) {
  const std::uint64_t hash = fnv1a(factors_header(factors).dump());
  return hex64(fnv1a(factors_payload(factors), hash));
}

}  // namespace slicescope
