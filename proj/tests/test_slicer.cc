#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "slicescope/errors.h"
#include "slicescope/kmeans.h"
#include "slicescope/slicer.h"
#include "slicescope/train.h"
#include "test_util.h"

using namespace slicescope;
using testutil::random_vector;

namespace {

Matrix random_points(Rng& rng, std::size_t n, std::size_t d) {
  Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = rng.normal();
  return out;
}

KMeansOptions plain(std::size_t k, std::uint64_t seed = 0) {
  KMeansOptions options;
  options.k = k;
  options.seed = seed;
  options.normalize_centroids = false;
  return options;
}


}  // namespace

TEST_CASE("one cluster holds everything") {
  Rng rng(1);
  const Matrix points = random_points(rng, 40, 3);
  const KMeansResult result = kmeans(points, plain(1));
  CHECK(result.partition.num_slices == 1);
  CHECK(std::all_of(result.partition.assignments.begin(), result.partition.assignments.end(),
                    [](std::size_t a) { return a == 0; }));
  CHECK((result.centroids.row(0).transpose() - points.colwise().mean().transpose()).norm() < 1e-12);
}

TEST_CASE("two far blobs are separated") {
  Rng rng(2);
  Matrix points = random_points(rng, 100, 2);
  for (Eigen::Index i = 0; i < 100; ++i) points(i, 0) += i < 50 ? 10.0 : -10.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (bool normalize : {false, true}) {
      KMeansOptions options = plain(2, seed);
      options.normalize_centroids = normalize;
      const Partition p = kmeans(points, options).partition;
      for (std::size_t i = 0; i < 100; ++i) {
        CHECK(p.assignments[i] == p.assignments[i < 50 ? 0 : 99]);
      }
      CHECK(p.assignments[0] != p.assignments[99]);
    }
  }
}

TEST_CASE("k equal to n gives singletons") {
  Rng rng(3);
  const Matrix points = random_points(rng, 12, 3);
  const KMeansResult result = kmeans(points, plain(12));
  std::set<std::size_t> ids(result.partition.assignments.begin(), result.partition.assignments.end());
  CHECK(ids.size() == 12);
  CHECK(result.objective_history.back() == 0.0);
}

TEST_CASE("k-means contract violations") {
  Rng rng(4);
  const Matrix points = random_points(rng, 5, 2);
  CHECK_THROWS_AS(kmeans(points, plain(6)), ContractViolation);
  CHECK_THROWS_AS(kmeans(points, plain(0)), ContractViolation);
  KMeansOptions bad_init = plain(2);
  bad_init.init = KMeansInit::kExplicit;
  bad_init.initial_indices = {0, 9};
  CHECK_THROWS_AS(kmeans(points, bad_init), ContractViolation);
  CHECK_THROWS_AS(kmeans_init_from_string("nearest"), ContractViolation);
}

TEST_CASE("objective never increases without normalization") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix points = random_points(rng, 200, 4);
    const KMeansResult result = kmeans(points, plain(6, static_cast<std::uint64_t>(trial)));
    for (std::size_t t = 1; t < result.objective_history.size(); ++t) {
      CHECK(result.objective_history[t] <= result.objective_history[t - 1] * (1 + 1e-12));
    }
  }
}

TEST_CASE("clustering is permutation equivariant under explicit init") {
  Rng rng(6);
  const Matrix points = random_points(rng, 60, 3);
  std::vector<std::size_t> perm(60);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = 59; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  std::vector<std::size_t> inverse(60);
  for (std::size_t i = 0; i < 60; ++i) inverse[perm[i]] = i;

  Matrix permuted(60, 3);
  for (std::size_t i = 0; i < 60; ++i) permuted.row(static_cast<Eigen::Index>(i)) = points.row(static_cast<Eigen::Index>(perm[i]));

  KMeansOptions a = plain(4);
  a.init = KMeansInit::kExplicit;
  a.initial_indices = {3, 17, 29, 44};
  KMeansOptions b = a;
  for (auto& index : b.initial_indices) index = inverse[index];

  const Partition pa = kmeans(points, a).partition;
  const Partition pb = kmeans(permuted, b).partition;
  for (std::size_t i = 0; i < 60; ++i) CHECK(pb.assignments[i] == pa.assignments[perm[i]]);
}

TEST_CASE("k-means is deterministic in the seed") {
  Rng rng(7);
  const Matrix points = random_points(rng, 150, 5);
  for (KMeansInit init : {KMeansInit::kPlusPlus, KMeansInit::kRandom}) {
    KMeansOptions options = plain(5, 11);
    options.init = init;
    const KMeansResult a = kmeans(points, options);
    const KMeansResult b = kmeans(points, options);
    CHECK(a.partition.assignments == b.partition.assignments);
    CHECK(a.centroids == b.centroids);
  }
}

TEST_CASE("normalized centroids have unit norm") {
  Rng rng(8);
  const Matrix points = random_points(rng, 80, 3) * 5.0;
  KMeansOptions options = plain(4, 2);
  options.normalize_centroids = true;
  const KMeansResult result = kmeans(points, options);
  for (Eigen::Index c = 0; c < 4; ++c) CHECK(result.centroids.row(c).norm() == doctest::Approx(1.0));
}

TEST_CASE("slice objectives") {
  Matrix points(4, 1);
  points << 0.0, 2.0, 10.0, 10.0;
  Partition partition{{0, 0, 1, 1}, 2};
  const auto objectives = slice_objectives(points, partition);
  CHECK(objectives[0] == doctest::Approx(2.0));
  CHECK(objectives[1] == 0.0);
  Partition bad{{0, 3, 1, 1}, 2};
  CHECK_THROWS_AS(slice_objectives(points, bad), ContractViolation);
}

TEST_CASE("rule search emits nothing when every prediction is right") {
  Rng rng(9);
  const Matrix points = random_points(rng, 300, 3);
  const std::vector<bool> correct(300, true);
  KMeansOptions options = plain(3);
  CHECK(rule_find(points, correct, SliceRule{}, options).empty());
}

TEST_CASE("rule search finds a planted error cluster") {
  Rng rng(10);
  Matrix points = random_points(rng, 1000, 2);
  std::vector<bool> correct(1000, true);
  for (Eigen::Index i = 0; i < 100; ++i) {
    points(i * 10, 0) += 20.0;
    correct[static_cast<std::size_t>(i * 10)] = false;
  }
  SliceRule rule;
  rule.accuracy_threshold = 0.4;
  rule.size_threshold = 25;
  const auto slices = rule_find(points, correct, rule, plain(3, 4));
  REQUIRE(!slices.empty());
  std::size_t covered = 0;
  for (const auto& slice : slices) {
    CHECK(slice.accuracy <= 0.4);
    CHECK(slice.members.size() >= 25);
    for (std::size_t i : slice.members) covered += i % 10 == 0 ? 1 : 0;
  }
  CHECK(covered >= 90);
}

TEST_CASE("rule search respects the size threshold") {
  Rng rng(11);
  const Matrix points = random_points(rng, 50, 2);
  const std::vector<bool> correct(50, false);
  SliceRule rule;
  rule.size_threshold = 51;
  CHECK(rule_find(points, correct, rule, plain(3)).empty());
  rule.size_threshold = 50;
  const auto whole = rule_find(points, correct, rule, plain(3));
  REQUIRE(whole.size() == 1);
  CHECK(whole[0].members.size() == 50);
  CHECK(whole[0].accuracy == 0.0);
}

TEST_CASE("rule search output is disjoint and ordered") {
  Rng rng(12);
  const Matrix points = random_points(rng, 600, 3);
  std::vector<bool> correct(600);
  for (std::size_t i = 0; i < 600; ++i) correct[i] = points(static_cast<Eigen::Index>(i), 0) < 0.3;
  SliceRule rule;
  rule.accuracy_threshold = 0.3;
  rule.size_threshold = 10;
  const auto slices = rule_find(points, correct, rule, plain(3, 9));
  std::set<std::size_t> seen;
  std::size_t previous_front = 0;
  for (std::size_t s = 0; s < slices.size(); ++s) {
    CHECK(std::is_sorted(slices[s].members.begin(), slices[s].members.end()));
    if (s > 0) CHECK(slices[s].members.front() > previous_front);
    previous_front = slices[s].members.front();
    for (std::size_t i : slices[s].members) CHECK(seen.insert(i).second);
  }
  CHECK(!slices.empty());
}

TEST_CASE("rule validation") {
  SliceRule rule;
  rule.branching_factor = 1;
  CHECK_THROWS_AS(rule.validate(), ContractViolation);
  rule = SliceRule{};
  rule.accuracy_threshold = 1.5;
  CHECK_THROWS_AS(rule.validate(), ContractViolation);
  Rng rng(13);
  CHECK_THROWS_AS(rule_find(random_points(rng, 5, 2), std::vector<bool>(4, true), SliceRule{}, plain(3)),
                  ContractViolation);
}

TEST_CASE("pipelines are deterministic") {
  Rng rng(14);
  auto [train_set, test_set] = testutil::cluster_split(rng, 200, 120, 4, 3);
  const ModelSpec spec = ModelSpec::softmax_linear(4, 3);
  TrainOptions train_options;
  train_options.epochs = 50;
  train_options.learning_rate = 0.2;
  const Model model(spec, train(spec, train_set, train_options, 1));
  PipelineOptions options;
  options.arnoldi_dim = 15;
  options.rank = 6;
  options.hessian_batch = 150;
  options.kmeans.normalize_centroids = false;
  const PipelineSeeds seeds{3, 4};

  const InfEmbedResult a = inf_embed(5, test_set, train_set, model, options, seeds);
  options.workers = 3;
  const InfEmbedResult b = inf_embed(5, test_set, train_set, model, options, seeds);
  CHECK(a.partition().assignments == b.partition().assignments);
  CHECK(a.stage.test_embeddings.rows == b.stage.test_embeddings.rows);
  CHECK(a.partition().size() == test_set.size());
  CHECK(a.stage.factors.rank() == 6);

  const InfEmbedResult whole = inf_embed(1, test_set, train_set, model, options, seeds);
  CHECK(whole.partition().slices()[0].size() == test_set.size());

  SliceRule rule;
  rule.accuracy_threshold = 1.0;
  rule.size_threshold = 1;
  const InfEmbedRuleResult r = inf_embed_rule(test_set, train_set, model, rule, options, seeds);
  REQUIRE(r.slices.size() == 1);
  CHECK(r.slices[0].members.size() == test_set.size());
  CHECK(r.slices[0].accuracy == doctest::Approx(model.accuracy(test_set)));
}

TEST_CASE("hessian batch subsampling") {
  Rng rng(15);
  const LabeledDataset data = testutil::random_dataset(rng, 40, 2, 2);
  CHECK(hessian_batch(data, 100, 1).size() == 40);
  const LabeledDataset small = hessian_batch(data, 10, 1);
  CHECK(small.size() == 10);
  CHECK(hessian_batch(data, 10, 1)[3].features == small[3].features);
  CHECK_THROWS_AS(hessian_batch(data, 0, 1), ContractViolation);
}
