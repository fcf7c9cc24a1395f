#ifndef SLICESCOPE_INFLUENCE_H_
#define SLICESCOPE_INFLUENCE_H_

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>

#include "slicescope/hessian_factor.h"
#include "slicescope/model.h"

namespace slicescope {

enum class DatasetRole { kTrain, kTest };

std::string to_string(DatasetRole role);
DatasetRole dataset_role_from_string(const std::string& name);

struct InfluenceEmbedding {
  Vector values;
  std::size_t example_index = 0;
  DatasetRole role = DatasetRole::kTest;
};

// One influence embedding per row, in dataset order.
struct EmbeddingMatrix {
  Matrix rows;
  std::string factors_hash;
  DatasetRole role = DatasetRole::kTest;

  std::size_t size() const { return static_cast<std::size_t>(rows.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(rows.cols()); }
};

// mu(z) = |lambda|^{-1/2} M^T grad L(z). With negative eigenvalues retained,
// influence is recovered as mu(z')^T S mu(z) where S = diag(factors.signs).
InfluenceEmbedding embed(const HessianFactors& factors, const Model& model, const Example& z,
                         std::size_t example_index = 0, DatasetRole role = DatasetRole::kTest);

// Row i is embed(dataset[i]). Output is identical for any worker count.
EmbeddingMatrix get_embeddings(const LabeledDataset& dataset, const HessianFactors& factors,
                               const Model& model, DatasetRole role = DatasetRole::kTest,
                               std::size_t workers = 1);

// grad L(z_train)^T M diag(1/lambda) M^T grad L(z_test), evaluated through
// apply_inverse rather than embeddings.
double practical_influence(const HessianFactors& factors, const Model& model, const Example& z_train,
                           const Example& z_test);

// Influence of every training example on one test example: train_rows S mu.
Vector influence_explanation(const EmbeddingMatrix& train_embeddings, const Vector& signs,
                             const Vector& test_embedding);
Vector influence_explanation(const LabeledDataset& train_set, const HessianFactors& factors,
                             const Model& model, const Example& z_test);

// Sum of squared train-embedding norms; bounds explanation distances by
// embedding distances.
double lemma1_constant(const EmbeddingMatrix& train_embeddings);

inline constexpr std::string_view kEmbeddingsMagic = "SSEMBED1";
// JSON header plus row-major little-endian f32 payload.
void save_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& embeddings);
EmbeddingMatrix load_embeddings(const std::filesystem::path& path);

}  // namespace slicescope

#endif  // SLICESCOPE_INFLUENCE_H_
