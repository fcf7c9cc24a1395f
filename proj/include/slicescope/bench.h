#ifndef SLICESCOPE_BENCH_H_
#define SLICESCOPE_BENCH_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "slicescope/dataset.h"
#include "slicescope/kmeans.h"
#include "slicescope/serialization.h"
#include "slicescope/slicer.h"
#include "slicescope/train.h"

namespace slicescope {

enum class TaskKind { kRare, kCorrelation, kNoisyLabel, kMultiFeature };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& name);

// Conjunction "label == class_id and every listed attribute is on". Training
// examples inside it are relabelled to `flip_to` with probability `strength`.
struct Blindspot {
  std::size_t class_id = 0;
  std::vector<std::size_t> attributes;
  std::size_t flip_to = 1;
};

// Synthetic tabular task. Feature layout, first to last coordinate:
//   class-signal block | one coordinate per binary attribute | spurious coordinate.
struct BlindspotSpec {
  TaskKind task_kind = TaskKind::kCorrelation;
  std::size_t num_classes = 4;
  std::size_t feature_dim = 16;
  std::size_t num_train = 4000;
  std::size_t num_test = 1000;
  std::size_t num_attributes = 3;
  double attribute_probability = 0.5;
  double attribute_shift = 1.0;
  // Class means are N(0, class_separation^2) per signal coordinate.
  double class_separation = 0.6;
  double noise = 1.0;

  // Manipulation parameters.
  std::size_t target_class = 0;
  // correlation: fraction of target-class train examples carrying the
  // spurious coordinate; rare: fraction dropped; noisy_label: flip rate;
  // multi_feature: flip rate inside each blindspot.
  double strength = 0.9;
  double spurious_value = 3.0;
  // Destination class of noisy_label flips.
  std::size_t noisy_flip_to = 1;
  std::vector<Blindspot> blindspots;

  std::uint64_t seed = 0;

  std::size_t signal_dim() const { return feature_dim - num_attributes - 1; }
  // Throws ContractViolation on an invalid spec.
  void validate() const;
};

struct GroundTruthSlice {
  std::vector<std::size_t> test_indices;  // ascending
  std::string description;
};

struct GeneratedTask {
  LabeledDataset train;
  LabeledDataset test;
  std::vector<GroundTruthSlice> truth;
  // Train examples altered by the manipulation.
  std::vector<bool> train_manipulated;
  // Binary latent attributes, one row per example.
  std::vector<std::vector<bool>> train_attributes;
  std::vector<std::vector<bool>> test_attributes;
};

// The test split never depends on the manipulation: the same seed yields the
// same test set for any task kind or strength.
GeneratedTask generate(const BlindspotSpec& spec);

using SliceMembers = std::vector<std::vector<std::size_t>>;

// For each discovered slice, take its k members nearest the slice centroid in
// embedding space and measure the fraction inside `truth`; return the best
// slice's fraction (0 when nothing was discovered).
double precision_at_k(const SliceMembers& discovered, const GroundTruthSlice& truth, std::size_t k,
                      const Matrix& embeddings);
double precision_at_k(const Partition& discovered, const GroundTruthSlice& truth, std::size_t k,
                      const Matrix& embeddings);

struct DiscoveryRates {
  // Empty when there are no truths to discover.
  std::optional<double> discovery_rate;
  double false_discovery_rate = 0.0;
};

// A truth counts as discovered if some slice s has |s & t| / |s| >= precision_floor
// and |s & t| / |t| >= recall_floor.
DiscoveryRates discovery_rates(const SliceMembers& slices, const std::vector<GroundTruthSlice>& truths,
                               double precision_floor = 0.8, double recall_floor = 0.2);

enum class SliceMethod { kInfEmbed, kInfEmbedRule };

std::string to_string(SliceMethod method);
SliceMethod slice_method_from_string(const std::string& name);

struct BenchConfig {
  ModelKind model_kind = ModelKind::kSoftmaxLinear;
  std::size_t hidden_dim = 0;
  bool bias = true;
  TrainOptions train;
  PipelineOptions pipeline;
  SliceMethod method = SliceMethod::kInfEmbed;
  std::size_t num_slices = 10;
  SliceRule rule;
  std::size_t precision_k = 10;
  std::size_t opponents_k = 50;
  double precision_floor = 0.8;
  double recall_floor = 0.2;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::optional<std::string> error;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  // Test accuracy on the union of truth slices (empty union -> nullopt).
  std::optional<double> truth_accuracy;
  std::size_t factor_rank = 0;
  std::size_t num_slices = 0;
  std::vector<double> precision_at_k;  // one per truth
  DiscoveryRates rates;
  double coherence = 0.0;
  // Lowest-accuracy discovered slice.
  std::optional<std::size_t> worst_slice_size;
  std::optional<double> worst_slice_accuracy;
  std::optional<std::size_t> worst_slice_modal_label;
  std::optional<double> worst_slice_label_purity;
  // Fraction of the worst slice's top opponents that were manipulated.
  std::optional<double> opponent_manipulated_fraction;
};

struct Summary {
  std::size_t count = 0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr() const { return q3 - q1; }
};

// Linear-interpolation quartiles; count 0 yields zeros.
Summary summarize(std::vector<double> values);

struct BenchReport {
  BlindspotSpec spec;
  BenchConfig config;
  std::vector<SeedResult> seeds;
  // Median / IQR across successful seeds, keyed by metric name.
  std::vector<std::pair<std::string, Summary>> summaries;

  const Summary* summary(const std::string& name) const;
};

// Runs one generate -> train -> slice -> score pass.
SeedResult run_seed(const BlindspotSpec& spec, const BenchConfig& config, std::uint64_t seed);

// Independent seeds, folded in seed order. Per-seed failures are recorded in
// the seed's `error` field.
BenchReport run_benchmark(const BlindspotSpec& spec, const BenchConfig& config,
                          const std::vector<std::uint64_t>& seeds);

Json to_json(const BlindspotSpec& spec);
BlindspotSpec blindspot_spec_from_json(const Json& json);
Json to_json(const BenchConfig& config);
BenchConfig bench_config_from_json(const Json& json);
Json to_json(const BenchReport& report);
// Header plus one row per seed.
std::string bench_csv(const BenchReport& report);

Json to_json(const GroundTruthSlice& truth);

}  // namespace slicescope

#endif  // SLICESCOPE_BENCH_H_
