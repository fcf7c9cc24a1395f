#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "slicescope/bench.h"
#include "slicescope/errors.h"
#include "slicescope/train.h"
#include "test_util.h"

using namespace slicescope;

namespace {

BlindspotSpec small_spec(TaskKind kind, double strength, std::uint64_t seed = 5) {
  BlindspotSpec spec;
  spec.task_kind = kind;
  spec.num_train = 1500;
  spec.num_test = 500;
  spec.strength = strength;
  spec.seed = seed;
  return spec;
}

std::uint64_t features_hash(const LabeledDataset& data) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (const auto& z : data) {
    hash = fnv1a(std::span(reinterpret_cast<const std::byte*>(z.features.data()),
                           sizeof(double) * static_cast<std::size_t>(z.features.size())),
                 hash);
    hash = fnv1a(std::to_string(z.class_id()), hash);
  }
  return hash;
}

// Test accuracy on the truth slice minus overall test accuracy.
double planted_gap(const BlindspotSpec& spec) {
  const GeneratedTask task = generate(spec);
  const ModelSpec model_spec = ModelSpec::softmax_linear(spec.feature_dim, spec.num_classes);
  const Model model(model_spec, train(model_spec, task.train, TrainOptions{}, mix_seed(spec.seed, 0x7472)));
  std::vector<std::size_t> target;
  for (std::size_t i = 0; i < task.test.size(); ++i) {
    if (task.test[i].class_id() == spec.target_class) target.push_back(i);
  }
  return model.accuracy(task.test) - model.accuracy(task.test.subset(target));
}

Matrix line_embeddings(std::size_t n) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(n), 1);
  for (std::size_t i = 0; i < n; ++i) out(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i);
  return out;
}

BenchConfig small_config() {
  BenchConfig config;
  config.train.epochs = 200;
  config.pipeline.arnoldi_dim = 40;
  config.pipeline.rank = 10;
  config.pipeline.hessian_batch = 500;
  config.pipeline.kmeans.normalize_centroids = false;
  config.num_slices = 6;
  config.opponents_k = 20;
  return config;
}

}  // namespace

TEST_CASE("strength zero leaves the data untouched") {
  for (TaskKind kind : {TaskKind::kCorrelation, TaskKind::kRare, TaskKind::kNoisyLabel}) {
    const GeneratedTask task = generate(small_spec(kind, 0.0));
    CHECK(task.truth.empty());
    CHECK(task.train.size() == 1500);
    CHECK(std::none_of(task.train_manipulated.begin(), task.train_manipulated.end(), [](bool b) { return b; }));
    CHECK(features_hash(task.train) == features_hash(generate(small_spec(TaskKind::kCorrelation, 0.0)).train));
  }
  // Train and test come from one distribution: the spurious coordinate
  // has the same baseline in both splits.
  const GeneratedTask task = generate(small_spec(TaskKind::kCorrelation, 0.0));
  auto spurious_mean = [](const LabeledDataset& data) {
    double sum = 0.0;
    for (const auto& z : data) sum += z.features[z.features.size() - 1];
    return sum / static_cast<double>(data.size());
  };
  CHECK(std::abs(spurious_mean(task.train) - spurious_mean(task.test)) < 0.05);
}

TEST_CASE("full-strength correlation marks every target train example") {
  BlindspotSpec spec = small_spec(TaskKind::kCorrelation, 1.0);
  spec.num_classes = 2;
  const GeneratedTask task = generate(spec);
  const auto last = static_cast<Eigen::Index>(spec.feature_dim - 1);
  for (std::size_t i = 0; i < task.train.size(); ++i) {
    const bool target = task.train[i].class_id() == spec.target_class;
    CHECK(task.train_manipulated[i] == target);
  }
  // Baseline spurious noise is 0.25 sigma, far below the 3.0 shift.
  for (const auto& z : task.test) CHECK(z.features[last] < spec.spurious_value / 2);
  REQUIRE(task.truth.size() == 1);
  for (std::size_t i : task.truth[0].test_indices) CHECK(task.test[i].class_id() == spec.target_class);
}

TEST_CASE("manipulations never touch the test split") {
  const std::uint64_t reference = features_hash(generate(small_spec(TaskKind::kCorrelation, 0.0)).test);
  for (TaskKind kind : {TaskKind::kCorrelation, TaskKind::kRare, TaskKind::kNoisyLabel}) {
    for (double strength : {0.3, 0.9}) {
      CHECK(features_hash(generate(small_spec(kind, strength)).test) == reference);
    }
  }
}

TEST_CASE("rare and noisy label manipulations") {
  const GeneratedTask rare = generate(small_spec(TaskKind::kRare, 0.9));
  const GeneratedTask base = generate(small_spec(TaskKind::kRare, 0.0));
  auto count = [](const LabeledDataset& data, std::size_t c) {
    return std::count_if(data.begin(), data.end(), [&](const Example& z) { return z.class_id() == c; });
  };
  CHECK(count(rare.train, 0) < count(base.train, 0) / 5);
  CHECK(count(rare.train, 1) == count(base.train, 1));

  const GeneratedTask noisy = generate(small_spec(TaskKind::kNoisyLabel, 1.0));
  CHECK(count(noisy.train, 0) == 0);
  CHECK(count(noisy.train, 1) == count(base.train, 0) + count(base.train, 1));

  BlindspotSpec all_gone = small_spec(TaskKind::kRare, 1.0);
  CHECK_THROWS_AS(generate(all_gone), GenerationError);
}

TEST_CASE("multi-feature blindspots") {
  BlindspotSpec spec = small_spec(TaskKind::kMultiFeature, 1.0);
  spec.blindspots = {Blindspot{0, {0}, 1}, Blindspot{2, {1, 2}, 3}};
  const GeneratedTask task = generate(spec);
  REQUIRE(task.truth.size() == 2);
  for (std::size_t i : task.truth[0].test_indices) {
    CHECK(task.test[i].class_id() == 0);
    CHECK(task.test_attributes[i][0]);
  }
  for (std::size_t i : task.truth[1].test_indices) {
    CHECK(task.test[i].class_id() == 2);
    CHECK((task.test_attributes[i][1] && task.test_attributes[i][2]));
  }
  for (std::size_t i = 0; i < task.train.size(); ++i) {
    if (task.train_manipulated[i]) CHECK((task.train[i].class_id() == 1 || task.train[i].class_id() == 3));
  }
}

TEST_CASE("spec validation") {
  BlindspotSpec spec;
  spec.strength = 1.5;
  CHECK_THROWS_AS(spec.validate(), ContractViolation);
  spec = BlindspotSpec{};
  spec.target_class = 4;
  CHECK_THROWS_AS(spec.validate(), ContractViolation);
  spec = BlindspotSpec{};
  spec.feature_dim = 4;
  CHECK_THROWS_AS(spec.validate(), ContractViolation);
  CHECK_THROWS_AS(task_kind_from_string("shift"), ContractViolation);
}

TEST_CASE("a seeded correlation task has a planted gap of at least 20 points") {
  BlindspotSpec spec;
  spec.seed = 1000;
  CHECK(planted_gap(spec) >= 0.20);
}

TEST_CASE("the planted gap grows with strength") {
  std::vector<double> medians;
  for (double strength : {0.0, 0.5, 1.0}) {
    std::vector<double> gaps;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      BlindspotSpec spec = small_spec(TaskKind::kCorrelation, strength, 300 + seed);
      gaps.push_back(planted_gap(spec));
    }
    medians.push_back(summarize(gaps).median);
  }
  for (std::size_t s = 1; s < medians.size(); ++s) CHECK(medians[s] >= medians[s - 1] - 0.02);
  CHECK(medians.back() > medians.front() + 0.1);
}

TEST_CASE("precision at k") {
  const Matrix embeddings = line_embeddings(40);
  GroundTruthSlice truth;
  for (std::size_t i = 0; i < 10; ++i) truth.test_indices.push_back(i);

  CHECK(precision_at_k(SliceMembers{truth.test_indices}, truth, 10, embeddings) == 1.0);
  CHECK(precision_at_k(SliceMembers{{20, 21, 22}, {30, 31}}, truth, 10, embeddings) == 0.0);
  CHECK(precision_at_k(SliceMembers{}, truth, 10, embeddings) == 0.0);

  // Members 5..14: centroid 9.5, so the 10 nearest are all of them; five in truth.
  std::vector<std::size_t> half;
  for (std::size_t i = 5; i < 15; ++i) half.push_back(i);
  CHECK(precision_at_k(SliceMembers{half, {30, 31}}, truth, 10, embeddings) == doctest::Approx(0.5));

  // Only the centroid-nearest k count: members 0..9 plus far outliers.
  std::vector<std::size_t> padded = truth.test_indices;
  for (std::size_t i = 35; i < 40; ++i) padded.push_back(i);
  CHECK(precision_at_k(SliceMembers{padded}, truth, 5, embeddings) == 1.0);

  Partition partition{std::vector<std::size_t>(40, 1), 2};
  for (std::size_t i : truth.test_indices) partition.assignments[i] = 0;
  CHECK(precision_at_k(partition, truth, 10, embeddings) == 1.0);
  CHECK_THROWS_AS(precision_at_k(SliceMembers{}, truth, 0, embeddings), ContractViolation);
}

TEST_CASE("truth-as-discovered scores perfectly on generated tasks") {
  for (TaskKind kind : {TaskKind::kCorrelation, TaskKind::kNoisyLabel}) {
    const GeneratedTask task = generate(small_spec(kind, 0.8));
    Rng rng(3);
    Matrix embeddings(static_cast<Eigen::Index>(task.test.size()), 4);
    for (Eigen::Index i = 0; i < embeddings.size(); ++i) embeddings.data()[i] = rng.normal();
    for (const auto& truth : task.truth) {
      CHECK(precision_at_k(SliceMembers{truth.test_indices}, truth, 10, embeddings) == 1.0);
    }
  }
}

TEST_CASE("discovery rates") {
  const std::vector<GroundTruthSlice> truths{{{0, 1, 2, 3, 4}, "a"}, {{10, 11, 12, 13}, "b"}};
  SliceMembers exact{{0, 1, 2, 3, 4}, {10, 11, 12, 13}};
  DiscoveryRates rates = discovery_rates(exact, truths);
  CHECK(*rates.discovery_rate == 1.0);
  CHECK(rates.false_discovery_rate == 0.0);

  rates = discovery_rates(SliceMembers{}, truths);
  CHECK(*rates.discovery_rate == 0.0);
  CHECK(rates.false_discovery_rate == 0.0);

  const std::vector<GroundTruthSlice> one{{{0, 1, 2, 3, 4}, "a"}};
  rates = discovery_rates(SliceMembers{{0, 1, 2, 3, 4}, {20, 21, 22}}, one);
  CHECK(*rates.discovery_rate == 1.0);
  CHECK(rates.false_discovery_rate == 0.5);

  // Recall below the floor: 1 of 5 is 0.2, which still counts; an empty truth set is vacuous.
  rates = discovery_rates(SliceMembers{{0}}, one);
  CHECK(*rates.discovery_rate == 1.0);
  CHECK(!discovery_rates(exact, {}).discovery_rate.has_value());
}

TEST_CASE("summaries use linear interpolation") {
  const Summary s = summarize({4.0, 1.0, 3.0, 2.0});
  CHECK(s.count == 4);
  CHECK(s.median == doctest::Approx(2.5));
  CHECK(s.q1 == doctest::Approx(1.75));
  CHECK(s.q3 == doctest::Approx(3.25));
  CHECK(summarize({}).count == 0);
  CHECK(summarize({7.0}).iqr() == 0.0);
}

TEST_CASE("benchmark reports") {
  BlindspotSpec spec = small_spec(TaskKind::kCorrelation, 0.9);
  spec.num_train = 600;
  spec.num_test = 300;
  const BenchConfig config = small_config();
  const BenchReport report = run_benchmark(spec, config, {1, 2});
  REQUIRE(report.seeds.size() == 2);
  for (const auto& seed : report.seeds) {
    REQUIRE(!seed.error.has_value());
    CHECK(seed.num_slices == 6);
    for (double p : seed.precision_at_k) CHECK((p >= 0.0 && p <= 1.0));
    CHECK((*seed.rates.discovery_rate >= 0.0 && *seed.rates.discovery_rate <= 1.0));
    CHECK((seed.rates.false_discovery_rate >= 0.0 && seed.rates.false_discovery_rate <= 1.0));
    CHECK((*seed.opponent_manipulated_fraction >= 0.0 && *seed.opponent_manipulated_fraction <= 1.0));
    CHECK((*seed.worst_slice_label_purity > 0.0 && *seed.worst_slice_label_purity <= 1.0));
  }
  const std::string first = to_json(report).dump();
  CHECK(to_json(run_benchmark(spec, config, {1, 2})).dump() == first);
  const std::string csv = bench_csv(report);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

  SUBCASE("strength zero reports the no-truth sentinel") {
    BlindspotSpec none = spec;
    none.strength = 0.0;
    const Json json = to_json(run_benchmark(none, config, {1}));
    CHECK(json.at("summary").at("discovery_rate").is_null());
    CHECK(json.at("summary").at("precision_at_k").is_null());
    CHECK(json.at("seeds").at(0).at("discovery_rate").is_null());
    CHECK(!json.at("summary").at("test_accuracy").is_null());
  }
  SUBCASE("rule mode") {
    BenchConfig rule = config;
    rule.method = SliceMethod::kInfEmbedRule;
    rule.rule.size_threshold = 10;
    const BenchReport r = run_benchmark(spec, rule, {1});
    CHECK(!r.seeds[0].error.has_value());
  }
  SUBCASE("per-seed failures are recorded") {
    BenchConfig broken = config;
    broken.num_slices = 100000;
    const BenchReport r = run_benchmark(spec, broken, {1});
    CHECK(r.seeds[0].error.has_value());
  }
}

TEST_CASE("bench json round trips") {
  BlindspotSpec spec = small_spec(TaskKind::kMultiFeature, 0.7);
  spec.blindspots = {Blindspot{1, {0, 2}, 3}};
  const BlindspotSpec spec_back = blindspot_spec_from_json(to_json(spec));
  CHECK(to_json(spec_back).dump() == to_json(spec).dump());

  BenchConfig config = small_config();
  config.method = SliceMethod::kInfEmbedRule;
  config.model_kind = ModelKind::kMlp;
  config.hidden_dim = 7;
  const BenchConfig config_back = bench_config_from_json(to_json(config));
  CHECK(to_json(config_back).dump() == to_json(config).dump());

  Json bad = to_json(config);
  bad["method"] = "spectral";
  CHECK_THROWS_AS(bench_config_from_json(bad), ContractViolation);
  Json bad_spec = to_json(spec);
  bad_spec["num_classes"] = "four";
  CHECK_THROWS_AS(blindspot_spec_from_json(bad_spec), ContractViolation);
}
