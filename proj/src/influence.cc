#include "slicescope/influence.h"

#include <cmath>
#include <span>
#include <vector>

#include "slicescope/errors.h"
#include "slicescope/parallel.h"
#include "slicescope/serialization.h"

namespace slicescope {

std::string to_string(DatasetRole role) { return role == DatasetRole::kTrain ? "train" : "test"; }

DatasetRole dataset_role_from_string(const std::string& name) {
  if (name == "train") return DatasetRole::kTrain;
  if (name == "test") return DatasetRole::kTest;
  throw ContractViolation("unknown dataset role '" + name + "'");
}

InfluenceEmbedding embed(const HessianFactors& factors, const Model& model, const Example& z,
                         std::size_t example_index, DatasetRole role) {
  require(model.spec().masked_count() == factors.dim(),
          "model gradient dimension does not match factors");
  const Vector gradient = model.grad(z);
  const Vector coordinates = factors.projection.transpose() * gradient;
  InfluenceEmbedding out;
  out.values = coordinates.cwiseQuotient(factors.eigenvalues.cwiseAbs().cwiseSqrt());
  out.example_index = example_index;
  out.role = role;
  return out;
}

EmbeddingMatrix get_embeddings(const LabeledDataset& dataset, const HessianFactors& factors,
                               const Model& model, DatasetRole role, std::size_t workers) {
  require(model.spec().masked_count() == factors.dim(),
          "model gradient dimension does not match factors");
  EmbeddingMatrix out;
  out.rows.resize(static_cast<Eigen::Index>(dataset.size()), static_cast<Eigen::Index>(factors.rank()));
  out.factors_hash = factors_hash(factors);
  out.role = role;
  parallel_for(dataset.size(), workers, [&](std::size_t i) {
    try {
      out.rows.row(static_cast<Eigen::Index>(i)) = embed(factors, model, dataset[i], i, role).values;
    } catch (const std::exception& e) {
      throw ExampleError(i, e.what());
    }
  });
  return out;
}

double practical_influence(const HessianFactors& factors, const Model& model, const Example& z_train,
                           const Example& z_test) {
  return model.grad(z_train).dot(apply_inverse(factors, model.grad(z_test)));
}

Vector influence_explanation(const EmbeddingMatrix& train_embeddings, const Vector& signs,
                             const Vector& test_embedding) {
  require(static_cast<std::size_t>(test_embedding.size()) == train_embeddings.dim() &&
              signs.size() == test_embedding.size(),
          "embedding dimensions do not match");
  return train_embeddings.rows * signs.cwiseProduct(test_embedding);
}

Vector influence_explanation(const LabeledDataset& train_set, const HessianFactors& factors,
                             const Model& model, const Example& z_test) {
  const EmbeddingMatrix train = get_embeddings(train_set, factors, model, DatasetRole::kTrain);
  return influence_explanation(train, factors.signs, embed(factors, model, z_test).values);
}

double lemma1_constant(const EmbeddingMatrix& train_embeddings) {
  require(train_embeddings.size() > 0, "lemma constant needs at least one training embedding");
  return train_embeddings.rows.squaredNorm();
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& embeddings) {
  Json header;
  header["format"] = "slicescope-embeddings";
  header["version"] = 1;
  header["n"] = embeddings.size();
  header["d_eff"] = embeddings.dim();
  header["factors_hash"] = embeddings.factors_hash;
  header["dataset_role"] = to_string(embeddings.role);
  const RowMatrix row_major = embeddings.rows;
  write_artifact(path, kEmbeddingsMagic, header,
                 pack_f32(std::span(row_major.data(), static_cast<std::size_t>(row_major.size()))));
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
  const Artifact artifact = read_artifact(path, kEmbeddingsMagic);
  EmbeddingMatrix out;
  try {
    const auto n = artifact.header.at("n").get<std::size_t>();
    const auto d = artifact.header.at("d_eff").get<std::size_t>();
    const auto values = unpack_f32(artifact.payload);
    if (values.size() != n * d) throw FormatError(path.string() + ": payload size does not match n x d_eff");
    out.rows = Eigen::Map<const RowMatrix>(values.data(), static_cast<Eigen::Index>(n),
                                           static_cast<Eigen::Index>(d));
    out.factors_hash = artifact.header.value("factors_hash", std::string());
    out.role = dataset_role_from_string(artifact.header.value("dataset_role", std::string("test")));
  } catch (const Json::exception& e) {
    throw FormatError(path.string() + ": bad embeddings header: " + e.what());
  }
  return out;
}

}  // namespace slicescope
