#include "slicescope/slicer.h"

#include <algorithm>

#include "slicescope/errors.h"
#include "slicescope/random.h"

namespace slicescope {

void SliceRule::validate() const {
  require(accuracy_threshold >= 0.0 && accuracy_threshold <= 1.0, "accuracy threshold must lie in [0, 1]");
  require(size_threshold >= 1, "size threshold must be at least 1");
  require(branching_factor >= 2, "branching factor must be at least 2");
  require(max_depth >= 1, "max depth must be positive");
}

namespace {

struct RuleSearch {
  const Matrix& embeddings;
  const std::vector<bool>& correct;
  const SliceRule& rule;
  const KMeansOptions& kmeans_options;
  std::vector<Slice> found;

  void visit(const std::vector<std::size_t>& members, std::size_t depth) {
    const std::size_t size = members.size();
    if (size == 0) return;
    std::size_t hits = 0;
    for (std::size_t i : members) hits += correct[i];
    const double accuracy = static_cast<double>(hits) / static_cast<double>(size);
    if (accuracy <= rule.accuracy_threshold && size >= rule.size_threshold) {
      found.push_back(Slice{members, accuracy});
      return;
    }
    if (size < rule.size_threshold) return;
    if (depth >= rule.max_depth || size < rule.branching_factor) return;

    Matrix sub(static_cast<Eigen::Index>(size), embeddings.cols());
    for (std::size_t r = 0; r < size; ++r) {
      sub.row(static_cast<Eigen::Index>(r)) = embeddings.row(static_cast<Eigen::Index>(members[r]));
    }
    KMeansOptions options = kmeans_options;
    options.k = rule.branching_factor;
    if (options.init == KMeansInit::kExplicit) options.init = KMeansInit::kPlusPlus;
    options.seed = mix_seed(kmeans_options.seed, depth * 0x100000000ULL + members.front());
    const KMeansResult split = kmeans(sub, options);

    std::vector<std::vector<std::size_t>> children(rule.branching_factor);
    for (std::size_t r = 0; r < size; ++r) {
      children[split.partition.assignments[r]].push_back(members[r]);
    }
    for (const auto& child : children) visit(child, depth + 1);
  }
};

}  // namespace

std::vector<Slice> rule_find(const Matrix& embeddings, const std::vector<bool>& correct,
                             const SliceRule& rule, const KMeansOptions& kmeans_options) {
  rule.validate();
  require(correct.size() == static_cast<std::size_t>(embeddings.rows()),
          "correctness vector length does not match embeddings");
  std::vector<std::size_t> all(correct.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  RuleSearch search{embeddings, correct, rule, kmeans_options, {}};
  search.visit(all, 0);
  std::sort(search.found.begin(), search.found.end(),
            [](const Slice& a, const Slice& b) { return a.members.front() < b.members.front(); });
  return std::move(search.found);
}

LabeledDataset hessian_batch(const LabeledDataset& train_set, std::size_t max_size, std::uint64_t seed) {
  require(max_size >= 1, "Hessian batch size must be positive");
  if (max_size >= train_set.size()) return train_set;
  return train_set.subset(sample_indices(train_set.size(), max_size, mix_seed(seed, 0x4e55)));
}

EmbeddingStage compute_test_embeddings(const LabeledDataset& test_set, const LabeledDataset& train_set,
                                       const Model& model, const PipelineOptions& options,
                                       const PipelineSeeds& seeds) {
  FactorOptions factor_options;
  factor_options.arnoldi_dim = options.arnoldi_dim;
  factor_options.rank = options.rank;
  factor_options.seed = seeds.arnoldi_seed;
  factor_options.eig_floor = options.eig_floor;
  EmbeddingStage stage;
  stage.factors = factor_hessian(model, hessian_batch(train_set, options.hessian_batch, seeds.arnoldi_seed),
                                 factor_options);
  stage.test_embeddings = get_embeddings(test_set, stage.factors, model, DatasetRole::kTest, options.workers);
  return stage;
}

InfEmbedResult inf_embed(std::size_t k, const LabeledDataset& test_set, const LabeledDataset& train_set,
                         const Model& model, const PipelineOptions& options, const PipelineSeeds& seeds) {
  InfEmbedResult result;
  result.stage = compute_test_embeddings(test_set, train_set, model, options, seeds);
  KMeansOptions kmeans_options = options.kmeans;
  kmeans_options.k = k;
  kmeans_options.seed = seeds.kmeans_seed;
  result.clustering = kmeans(result.stage.test_embeddings.rows, kmeans_options);
  return result;
}

InfEmbedRuleResult inf_embed_rule(const LabeledDataset& test_set, const LabeledDataset& train_set,
                                  const Model& model, const SliceRule& rule,
                                  const PipelineOptions& options, const PipelineSeeds& seeds) {
  InfEmbedRuleResult result;
  result.stage = compute_test_embeddings(test_set, train_set, model, options, seeds);
  KMeansOptions kmeans_options = options.kmeans;
  kmeans_options.seed = seeds.kmeans_seed;
  result.slices = rule_find(result.stage.test_embeddings.rows, prediction_correctness(model, test_set),
                            rule, kmeans_options);
  return result;
}

std::vector<bool> prediction_correctness(const Model& model, const LabeledDataset& data) {
  const auto predicted = model.predict_classes(data);
  std::vector<bool> correct(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) correct[i] = predicted[i] == data[i].class_id();
  return correct;
}

}  // namespace slicescope
