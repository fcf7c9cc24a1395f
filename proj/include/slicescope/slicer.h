#ifndef SLICESCOPE_SLICER_H_
#define SLICESCOPE_SLICER_H_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "slicescope/hessian_factor.h"
#include "slicescope/influence.h"
#include "slicescope/kmeans.h"
#include "slicescope/model.h"

namespace slicescope {

// Recursive search settings: emit a node once accuracy <= A and size >= S,
// otherwise split it into B clusters, down to max_depth.
struct SliceRule {
  double accuracy_threshold = 0.40;
  std::size_t size_threshold = 25;
  std::size_t branching_factor = 3;
  std::size_t max_depth = 5;

  void validate() const;
};

struct Slice {
  std::vector<std::size_t> members;  // ascending test indices
  double accuracy = 0.0;
};

// Emitted slices are disjoint, each satisfies the rule, and they are ordered
// by smallest member index. `correct[i]` says whether the stored prediction
// for example i was right. `kmeans_options.k` is ignored (B is used).
std::vector<Slice> rule_find(const Matrix& embeddings, const std::vector<bool>& correct,
                             const SliceRule& rule, const KMeansOptions& kmeans_options);

struct PipelineSeeds {
  std::uint64_t arnoldi_seed = 0;
  std::uint64_t kmeans_seed = 0;
};

struct PipelineOptions {
  std::size_t arnoldi_dim = kDefaultArnoldiDim;
  std::size_t rank = kDefaultRank;
  double eig_floor = 1e-8;
  // Training examples passed to the Hessian (seeded subsample).
  std::size_t hessian_batch = kDefaultHessianBatch;
  KMeansOptions kmeans;
  std::size_t workers = 1;
};

// Hessian batch drawn from the training set with a seed derived from the
// Arnoldi seed.
LabeledDataset hessian_batch(const LabeledDataset& train_set, std::size_t max_size, std::uint64_t seed);

// Factors plus test embeddings: the shared front half of both slicers.
struct EmbeddingStage {
  HessianFactors factors;
  EmbeddingMatrix test_embeddings;
};

EmbeddingStage compute_test_embeddings(const LabeledDataset& test_set, const LabeledDataset& train_set,
                                       const Model& model, const PipelineOptions& options,
                                       const PipelineSeeds& seeds);

struct InfEmbedResult {
  EmbeddingStage stage;
  KMeansResult clustering;
  const Partition& partition() const { return clustering.partition; }
};

// factor_hessian -> get_embeddings -> kmeans with K slices.
InfEmbedResult inf_embed(std::size_t k, const LabeledDataset& test_set, const LabeledDataset& train_set,
                         const Model& model, const PipelineOptions& options, const PipelineSeeds& seeds);

struct InfEmbedRuleResult {
  EmbeddingStage stage;
  std::vector<Slice> slices;
};

// get_embeddings -> rule_find, using the model's predictions on the test set.
InfEmbedRuleResult inf_embed_rule(const LabeledDataset& test_set, const LabeledDataset& train_set,
                                  const Model& model, const SliceRule& rule,
                                  const PipelineOptions& options, const PipelineSeeds& seeds);

// correct[i] = (argmax prediction == label) for each test example.
std::vector<bool> prediction_correctness(const Model& model, const LabeledDataset& data);

}  // namespace slicescope

#endif  // SLICESCOPE_SLICER_H_
