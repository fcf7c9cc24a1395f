// slicescope command-line driver. Every subcommand reads its inputs from files
// written by an earlier stage, so a pipeline can be resumed anywhere.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "slicescope/analysis.h"
#include "slicescope/bench.h"
#include "slicescope/errors.h"
#include "slicescope/hessian_factor.h"
#include "slicescope/influence.h"
#include "slicescope/model.h"
#include "slicescope/random.h"
#include "slicescope/serialization.h"
#include "slicescope/slicer.h"
#include "slicescope/train.h"

using namespace slicescope;
namespace fs = std::filesystem;

namespace {

constexpr int kConfigVersion = 1;
constexpr std::uint64_t kTrainSeedTag = 0x7472;
constexpr std::uint64_t kArnoldiSeedTag = 0x6172;
constexpr std::uint64_t kKMeansSeedTag = 0x6b6d;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Flags {
  std::string config_path;
  std::optional<std::string> out, train, test, data, model, factors, embeddings, train_embeddings, slices,
      truth, csv, role, task, kind, method, init;
  std::optional<std::size_t> p, d, k, min_size, branch, max_depth, topk, workers, hessian_batch, epochs,
      hidden, num_seeds, slice_id, classes;
  std::optional<double> accuracy, strength, learning_rate, eig_floor;
  std::optional<std::uint64_t> seed_train, seed_arnoldi, seed_kmeans, seed_data;
  std::optional<bool> normalize;
  bool over_test = false;
  bool last_layer = false;
  bool no_bias = false;
};

struct RunConfig {
  Json file;  // raw config file contents (empty object without --config)
  BlindspotSpec spec;
  BenchConfig bench;
  std::uint64_t data_seed = 0;
  std::uint64_t train_seed = 0;
  std::uint64_t arnoldi_seed = 0;
  std::uint64_t kmeans_seed = 0;
  std::vector<std::uint64_t> seeds;
  bool last_layer = false;
  std::size_t num_classes = 0;  // 0: infer from the data
};

template <typename T>
T field(const Json& json, const char* key, T fallback) {
  if (!json.contains(key)) return fallback;
  try {
    return json.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

template <typename T>
void override_with(T& target, const std::optional<T>& flag) {
  if (flag) target = *flag;
}

RunConfig load_config(const Flags& flags) {
  RunConfig config;
  config.file = Json::object();
  if (!flags.config_path.empty()) {
    try {
      config.file = read_json(flags.config_path);
    } catch (const FormatError& e) {
      throw ConfigError(e.what());
    }
    if (!config.file.is_object()) throw ConfigError("config must be a JSON object");
    if (!config.file.contains("version")) throw ConfigError("config is missing the 'version' field");
    const int version = field(config.file, "version", 0);
    if (version != kConfigVersion) {
      throw ConfigError("unsupported config version " + std::to_string(version));
    }
  }
  const Json& file = config.file;

  try {
    if (file.contains("spec")) config.spec = blindspot_spec_from_json(file.at("spec"));
    if (file.contains("bench")) config.bench = bench_config_from_json(file.at("bench"));
    if (flags.task) config.spec.task_kind = task_kind_from_string(*flags.task);
    if (flags.kind) config.bench.model_kind = model_kind_from_string(*flags.kind);
    if (flags.method) config.bench.method = slice_method_from_string(*flags.method);
    if (flags.init) config.bench.pipeline.kmeans.init = kmeans_init_from_string(*flags.init);
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }

  override_with(config.spec.strength, flags.strength);

  BenchConfig& bench = config.bench;
  override_with(bench.pipeline.arnoldi_dim, flags.p);
  override_with(bench.pipeline.rank, flags.d);
  override_with(bench.pipeline.eig_floor, flags.eig_floor);
  override_with(bench.pipeline.hessian_batch, flags.hessian_batch);
  override_with(bench.pipeline.kmeans.normalize_centroids, flags.normalize);
  override_with(bench.num_slices, flags.k);
  override_with(bench.rule.accuracy_threshold, flags.accuracy);
  override_with(bench.rule.size_threshold, flags.min_size);
  override_with(bench.rule.branching_factor, flags.branch);
  override_with(bench.rule.max_depth, flags.max_depth);
  override_with(bench.opponents_k, flags.topk);
  override_with(bench.train.epochs, flags.epochs);
  override_with(bench.train.learning_rate, flags.learning_rate);
  override_with(bench.hidden_dim, flags.hidden);
  if (flags.no_bias) bench.bias = false;
  bench.pipeline.workers = field<std::size_t>(file, "workers", bench.pipeline.workers);
  override_with(bench.pipeline.workers, flags.workers);

  config.data_seed = field<std::uint64_t>(file, "data_seed", config.spec.seed);
  override_with(config.data_seed, flags.seed_data);
  config.spec.seed = config.data_seed;
  config.train_seed = field<std::uint64_t>(file, "train_seed", mix_seed(config.data_seed, kTrainSeedTag));
  config.arnoldi_seed = field<std::uint64_t>(file, "arnoldi_seed", mix_seed(config.data_seed, kArnoldiSeedTag));
  config.kmeans_seed = field<std::uint64_t>(file, "kmeans_seed", mix_seed(config.data_seed, kKMeansSeedTag));
  override_with(config.train_seed, flags.seed_train);
  override_with(config.arnoldi_seed, flags.seed_arnoldi);
  override_with(config.kmeans_seed, flags.seed_kmeans);

  if (flags.num_seeds) {
    for (std::size_t s = 0; s < *flags.num_seeds; ++s) config.seeds.push_back(config.data_seed + s);
  } else if (file.contains("seeds")) {
    config.seeds = field<std::vector<std::uint64_t>>(file, "seeds", {});
  } else {
    const auto count = field<std::size_t>(file, "num_seeds", 20);
    for (std::size_t s = 0; s < count; ++s) config.seeds.push_back(config.data_seed + s);
  }

  config.last_layer = flags.last_layer || field(file, "last_layer", false);
  config.num_classes = file.contains("spec") ? config.spec.num_classes : 0;
  override_with(config.num_classes, flags.classes);

  // Cross-field checks.
  const auto& pipeline = bench.pipeline;
  if (pipeline.rank < 1) throw ConfigError("--d must be at least 1");
  if (pipeline.arnoldi_dim < 2) throw ConfigError("--p must be at least 2");
  if (pipeline.rank > pipeline.arnoldi_dim) throw ConfigError("--d must not exceed --p");
  if (pipeline.hessian_batch < 1) throw ConfigError("hessian batch must be positive");
  if (pipeline.workers < 1) throw ConfigError("--workers must be at least 1");
  if (bench.num_slices < 1) throw ConfigError("--k must be at least 1");
  if (bench.model_kind == ModelKind::kMlp && bench.hidden_dim < 1) throw ConfigError("mlp needs --hidden >= 1");
  if (bench.train.learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
  try {
    bench.rule.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
  return config;
}

std::string require_path(const RunConfig& config, const std::optional<std::string>& flag, const char* key) {
  if (flag) return *flag;
  if (config.file.contains("paths")) {
    const Json& paths = config.file.at("paths");
    if (paths.contains(key)) return field<std::string>(paths, key, "");
  }
  throw ConfigError(std::string("missing input: pass --") + key + " or set paths." + key);
}

std::optional<std::string> optional_path(const RunConfig& config, const std::optional<std::string>& flag,
                                         const char* key) {
  if (flag) return flag;
  if (config.file.contains("paths") && config.file.at("paths").contains(key)) {
    return field<std::string>(config.file.at("paths"), key, "");
  }
  return std::nullopt;
}

std::string output_path(const RunConfig& config, const Flags& flags, const std::string& fallback) {
  if (flags.out) return *flags.out;
  return optional_path(config, std::nullopt, "out").value_or(fallback);
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

void write_json_file(const fs::path& path, const Json& json) {
  ensure_parent(path);
  write_json(path, json);
}

ModelSpec model_spec_for(const RunConfig& config, std::size_t feature_dim, std::size_t num_classes) {
  const BenchConfig& bench = config.bench;
  ModelSpec spec = bench.model_kind == ModelKind::kMlp
                       ? ModelSpec::mlp(feature_dim, bench.hidden_dim, num_classes, bench.bias)
                       : ModelSpec::softmax_linear(feature_dim, num_classes, bench.bias);
  if (config.last_layer) spec.mask = spec.last_layer_mask();
  return spec;
}

// ---- subcommands -----------------------------------------------------------

int cmd_generate(const RunConfig& config, const Flags& flags) {
  try {
    config.spec.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
  const fs::path dir = output_path(config, flags, "data");
  spdlog::info("generating {} task, seed {}", to_string(config.spec.task_kind), config.spec.seed);
  const GeneratedTask task = generate(config.spec);
  fs::create_directories(dir);
  write_csv(task.train, dir / "train.csv");
  write_csv(task.test, dir / "test.csv");

  Json truth = Json::array();
  for (const auto& slice : task.truth) truth.push_back(to_json(slice));
  std::vector<std::size_t> manipulated;
  for (std::size_t i = 0; i < task.train_manipulated.size(); ++i) {
    if (task.train_manipulated[i]) manipulated.push_back(i);
  }
  Json json;
  json["format"] = "slicescope-truth";
  json["version"] = 1;
  json["spec"] = to_json(config.spec);
  json["truth"] = std::move(truth);
  json["train_manipulated"] = manipulated;
  write_json_file(dir / "truth.json", json);

  fmt::print("generate: {} task, {} train / {} test examples, {} truth slice(s), {} manipulated train examples\n",
             to_string(config.spec.task_kind), task.train.size(), task.test.size(), task.truth.size(),
             manipulated.size());
  fmt::print("wrote {}\n", dir.string());
  return 0;
}

int cmd_train(const RunConfig& config, const Flags& flags) {
  const std::string train_path = require_path(config, flags.train, "train");
  const fs::path out = output_path(config, flags, "model.bin");
  const LabeledDataset data = read_csv(train_path, config.num_classes);
  const ModelSpec spec = model_spec_for(config, data.feature_dim(), data.num_classes());
  spdlog::info("training {} on {} examples, seed {}", to_string(spec.kind), data.size(), config.train_seed);
  const Model model(spec, train(spec, data, config.bench.train, config.train_seed));
  ensure_parent(out);
  save_checkpoint(out, model);
  fmt::print("train: {} with {} parameters ({} masked), train accuracy {:.4f}\n", to_string(spec.kind),
             spec.param_count(), spec.masked_count(), model.accuracy(data));
  fmt::print("wrote {}\n", out.string());
  return 0;
}

int cmd_factor(const RunConfig& config, const Flags& flags) {
  const Model model = load_checkpoint(require_path(config, flags.model, "model"));
  const LabeledDataset data = read_csv(require_path(config, flags.train, "train"), model.spec().num_classes);
  const fs::path out = output_path(config, flags, "factors.bin");
  const auto& pipeline = config.bench.pipeline;
  FactorOptions options;
  options.arnoldi_dim = pipeline.arnoldi_dim;
  options.rank = pipeline.rank;
  options.eig_floor = pipeline.eig_floor;
  options.seed = config.arnoldi_seed;
  const LabeledDataset batch = hessian_batch(data, pipeline.hessian_batch, config.arnoldi_seed);
  spdlog::info("factoring Hessian over {} examples, P={} D={}", batch.size(), options.arnoldi_dim, options.rank);
  const HessianFactors factors = factor_hessian(model, batch, options);
  ensure_parent(out);
  save_factors(out, factors);
  const auto negatives = static_cast<std::size_t>((factors.signs.array() < 0.0).count());
  fmt::print("factor: rank {} (requested {}), Krylov dim {}, |lambda| in [{:.4g}, {:.4g}], {} negative\n",
             factors.rank(), factors.requested_rank, factors.arnoldi_dim,
             factors.eigenvalues.cwiseAbs().minCoeff(), factors.eigenvalues.cwiseAbs().maxCoeff(), negatives);
  fmt::print("wrote {}\n", out.string());
  return 0;
}

int cmd_embed(const RunConfig& config, const Flags& flags) {
  const Model model = load_checkpoint(require_path(config, flags.model, "model"));
  const HessianFactors factors = load_factors(require_path(config, flags.factors, "factors"));
  const LabeledDataset data = read_csv(require_path(config, flags.data, "data"), model.spec().num_classes);
  const fs::path out = output_path(config, flags, "embeddings.bin");
  if (!factors.model_hash.empty() && factors.model_hash != model_hash(model)) {
    throw FormatError("factors were computed for a different model");
  }
  const DatasetRole role = dataset_role_from_string(flags.role.value_or("test"));
  const EmbeddingMatrix embeddings = get_embeddings(data, factors, model, role, config.bench.pipeline.workers);
  ensure_parent(out);
  save_embeddings(out, embeddings);
  fmt::print("embed: {} {} examples -> {} x {} embeddings\n", embeddings.size(), to_string(role),
             embeddings.size(), embeddings.dim());
  fmt::print("wrote {}\n", out.string());
  return 0;
}

struct Labelled {
  std::vector<std::size_t> labels;
  std::vector<std::size_t> predictions;
  std::size_t num_classes = 0;
};

std::optional<Labelled> load_labels(const RunConfig& config, const Flags& flags, std::size_t n, bool required) {
  const auto model_path = optional_path(config, flags.model, "model");
  const auto data_path = optional_path(config, flags.data, "data");
  if (!model_path || !data_path) {
    if (required) throw ConfigError("this command needs --model and --data");
    return std::nullopt;
  }
  const Model model = load_checkpoint(*model_path);
  const LabeledDataset data = read_csv(*data_path, model.spec().num_classes);
  if (data.size() != n) {
    throw FormatError("dataset has " + std::to_string(data.size()) + " rows but embeddings have " +
                      std::to_string(n));
  }
  return Labelled{data.class_ids(), model.predict_classes(data), model.spec().num_classes};
}

Json slices_json(const std::string& method, const EmbeddingMatrix& embeddings,
                 const std::vector<std::vector<std::size_t>>& members, const std::optional<Labelled>& labelled) {
  Json slices = Json::array();
  for (std::size_t s = 0; s < members.size(); ++s) {
    if (labelled) {
      slices.push_back(to_json(build_slice_report(s, members[s], embeddings.rows, labelled->labels,
                                                  labelled->predictions, labelled->num_classes)));
      continue;
    }
    const std::vector<std::size_t> zeros(embeddings.size(), 0);
    const SliceReport report = build_slice_report(s, members[s], embeddings.rows, zeros, zeros, 1);
    slices.push_back({{"slice_id", s}, {"size", report.size()}, {"coherence", report.coherence},
                      {"members", report.members}});
  }
  Json json;
  json["format"] = "slicescope-slices";
  json["version"] = 1;
  json["method"] = method;
  json["num_examples"] = embeddings.size();
  json["factors_hash"] = embeddings.factors_hash;
  json["slices"] = std::move(slices);
  return json;
}

void print_slices(const Json& json) {
  for (const auto& slice : json.at("slices")) {
    if (slice.contains("accuracy")) {
      fmt::print("  slice {:>3}: size {:>5}, accuracy {:.3f}, coherence {:.4g}\n", slice.at("slice_id").get<std::size_t>(),
                 slice.at("size").get<std::size_t>(), slice.at("accuracy").get<double>(),
                 slice.at("coherence").get<double>());
    } else {
      fmt::print("  slice {:>3}: size {:>5}, coherence {:.4g}\n", slice.at("slice_id").get<std::size_t>(),
                 slice.at("size").get<std::size_t>(), slice.at("coherence").get<double>());
    }
  }
}

int cmd_slice(const RunConfig& config, const Flags& flags) {
  const EmbeddingMatrix embeddings = load_embeddings(require_path(config, flags.embeddings, "embeddings"));
  const fs::path out = output_path(config, flags, "slices.json");
  const auto labelled = load_labels(config, flags, embeddings.size(), false);
  KMeansOptions options = config.bench.pipeline.kmeans;
  options.k = config.bench.num_slices;
  options.seed = config.kmeans_seed;
  const KMeansResult result = kmeans(embeddings.rows, options);
  const CoherenceScores coherence = coherence_score(embeddings.rows, result.partition);

  Json json = slices_json("kmeans", embeddings, result.partition.slices(), labelled);
  json["k"] = options.k;
  json["kmeans_seed"] = options.seed;
  json["iterations"] = result.iterations;
  json["assignments"] = result.partition.assignments;
  json["coherence"] = {{"per_slice", coherence.per_slice},
                       {"aggregate", coherence.aggregate},
                       {"per_example", coherence.per_example}};
  write_json_file(out, json);
  fmt::print("slice: {} examples into {} slices, coherence {:.4g} ({:.4g} per example)\n", embeddings.size(),
             options.k, coherence.aggregate, coherence.per_example);
  print_slices(json);
  fmt::print("wrote {}\n", out.string());
  return 0;
}

int cmd_rule_slice(const RunConfig& config, const Flags& flags) {
  const EmbeddingMatrix embeddings = load_embeddings(require_path(config, flags.embeddings, "embeddings"));
  const fs::path out = output_path(config, flags, "slices.json");
  const auto labelled = load_labels(config, flags, embeddings.size(), true);
  std::vector<bool> correct(embeddings.size());
  for (std::size_t i = 0; i < correct.size(); ++i) correct[i] = labelled->labels[i] == labelled->predictions[i];
  KMeansOptions options = config.bench.pipeline.kmeans;
  options.seed = config.kmeans_seed;
  const SliceRule& rule = config.bench.rule;
  const std::vector<Slice> found = rule_find(embeddings.rows, correct, rule, options);

  std::vector<std::vector<std::size_t>> members;
  for (const auto& slice : found) members.push_back(slice.members);
  Json json = slices_json("rule", embeddings, members, labelled);
  json["rule"] = {{"accuracy", rule.accuracy_threshold},
                  {"min_size", rule.size_threshold},
                  {"branch", rule.branching_factor},
                  {"max_depth", rule.max_depth}};
  json["kmeans_seed"] = options.seed;
  write_json_file(out, json);
  fmt::print("rule-slice: {} slice(s) with accuracy <= {} and size >= {}\n", found.size(), rule.accuracy_threshold,
             rule.size_threshold);
  print_slices(json);
  fmt::print("wrote {}\n", out.string());
  return 0;
}

int cmd_opponents(const RunConfig& config, const Flags& flags) {
  const Json slices = read_json(require_path(config, flags.slices, "slices"));
  const EmbeddingMatrix test_embeddings = load_embeddings(require_path(config, flags.embeddings, "embeddings"));
  const HessianFactors factors = load_factors(require_path(config, flags.factors, "factors"));
  const fs::path out = output_path(config, flags, "opponents.json");
  const EmbeddingMatrix candidates =
      flags.over_test ? test_embeddings
                      : load_embeddings(require_path(config, flags.train_embeddings, "train_embeddings"));

  const std::string expected_hash = factors_hash(factors);
  if (test_embeddings.factors_hash != expected_hash || candidates.factors_hash != expected_hash) {
    throw FormatError("embeddings were computed with different factors");
  }

  const Json* target = nullptr;
  try {
    const Json& list = slices.at("slices");
    if (list.empty()) throw FormatError("slices file holds no slices");
    if (flags.slice_id) {
      for (const auto& slice : list) {
        if (slice.at("slice_id").get<std::size_t>() == *flags.slice_id) target = &slice;
      }
      if (!target) throw ConfigError("no slice with id " + std::to_string(*flags.slice_id));
    } else {
      for (const auto& slice : list) {
        if (!slice.contains("accuracy")) throw ConfigError("slices carry no accuracy; pass --slice-id");
        if (slice.at("size").get<std::size_t>() == 0) continue;
        if (!target || slice.at("accuracy").get<double>() < target->at("accuracy").get<double>()) target = &slice;
      }
      if (!target) throw FormatError("every slice is empty");
    }
  } catch (const Json::exception& e) {
    throw FormatError(std::string("bad slices file: ") + e.what());
  }

  const auto members = target->at("members").get<std::vector<std::size_t>>();
  for (std::size_t i : members) {
    if (i >= test_embeddings.size()) throw FormatError("slice member out of range of the embeddings");
  }
  const std::vector<std::size_t> zeros(test_embeddings.size(), 0);
  const SliceReport report = build_slice_report(target->at("slice_id").get<std::size_t>(), members,
                                                test_embeddings.rows, zeros, zeros, 1);
  const std::size_t k = std::min(config.bench.opponents_k, candidates.size());
  const OpponentList opponents = slice_opponents(report, candidates.rows, factors.signs, k);

  Json json;
  json["format"] = "slicescope-opponents";
  json["version"] = 1;
  json["slice_id"] = report.slice_id;
  json["slice_size"] = report.size();
  json["candidates"] = to_string(candidates.role);
  json["opponents"] = to_json(opponents);

  std::optional<double> manipulated_fraction;
  if (const auto truth_path = optional_path(config, flags.truth, "truth"); truth_path && !flags.over_test) {
    const Json truth = read_json(*truth_path);
    const auto flagged = truth.at("train_manipulated").get<std::vector<std::size_t>>();
    std::size_t hits = 0;
    for (const auto& entry : opponents.entries) {
      hits += std::binary_search(flagged.begin(), flagged.end(), entry.train_index) ? 1 : 0;
    }
    if (k > 0) manipulated_fraction = static_cast<double>(hits) / static_cast<double>(k);
    json["manipulated_fraction"] = manipulated_fraction ? Json(*manipulated_fraction) : Json(nullptr);
  }
  write_json_file(out, json);

  fmt::print("opponents: top {} {} examples against slice {} (size {})\n", k, to_string(candidates.role),
             report.slice_id, report.size());
  for (std::size_t r = 0; r < std::min<std::size_t>(k, 10); ++r) {
    fmt::print("  {:>6}  {:.6g}\n", opponents.entries[r].train_index, opponents.entries[r].influence);
  }
  if (manipulated_fraction) fmt::print("  manipulated fraction {:.3f}\n", *manipulated_fraction);
  fmt::print("wrote {}\n", out.string());
  return 0;
}

int cmd_bench(const RunConfig& config, const Flags& flags) {
  try {
    config.spec.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
  if (config.seeds.empty()) throw ConfigError("bench needs at least one seed");
  const fs::path out = output_path(config, flags, "bench.json");
  spdlog::info("running {} seeds of the {} task", config.seeds.size(), to_string(config.spec.task_kind));
  const BenchReport report = run_benchmark(config.spec, config.bench, config.seeds);
  write_json_file(out, to_json(report));
  if (const auto csv = optional_path(config, flags.csv, "csv")) write_text(*csv, bench_csv(report));

  std::size_t failed = 0;
  for (const auto& seed : report.seeds) {
    if (seed.error) {
      ++failed;
      spdlog::warn("seed {} failed: {}", seed.seed, *seed.error);
    }
  }
  fmt::print("bench: {} task, method {}, {} seed(s), {} failed\n", to_string(config.spec.task_kind),
             to_string(config.bench.method), report.seeds.size(), failed);
  for (const auto& [name, summary] : report.summaries) {
    if (summary.count == 0) {
      fmt::print("  {:<32} n/a\n", name);
    } else {
      fmt::print("  {:<32} median {:.4f}  IQR {:.4f}\n", name, summary.median, summary.iqr());
    }
  }
  fmt::print("wrote {}\n", out.string());
  return 0;
}

// ---- wiring ---------------------------------------------------------------

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("slicescope");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::level::level_enum level = spdlog::level::warn;
  if (const char* env = std::getenv("SLICESCOPE_LOG"); env && *env) {
    level = spdlog::level::from_str(env);
  }
  spdlog::set_level(level);
}

std::string one_line(std::string text) {
  std::replace(text.begin(), text.end(), '\n', ' ');
  return text;
}

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config_path, "JSON run config (flags take precedence)");
  cmd->add_option("--out", f.out, "output path");
  cmd->add_option("--workers", f.workers, "worker threads (output does not depend on it)");
  cmd->add_option("--seed-data", f.seed_data, "data seed; the other seeds derive from it by default");
  cmd->add_option("--seed-train", f.seed_train, "training seed");
  cmd->add_option("--seed-arnoldi", f.seed_arnoldi, "Arnoldi start-vector and Hessian-batch seed");
  cmd->add_option("--seed-kmeans", f.seed_kmeans, "k-means seed");
}

void add_pipeline(CLI::App* cmd, Flags& f) {
  cmd->add_option("--p", f.p, "Arnoldi dimension P");
  cmd->add_option("--d", f.d, "number of kept eigenpairs D");
  cmd->add_option("--eig-floor", f.eig_floor, "relative eigenvalue floor");
  cmd->add_option("--hessian-batch", f.hessian_batch, "training examples used for the Hessian");
}

void add_model(CLI::App* cmd, Flags& f) {
  cmd->add_option("--kind", f.kind, "softmax-linear or mlp");
  cmd->add_option("--hidden", f.hidden, "MLP hidden width");
  cmd->add_flag("--no-bias", f.no_bias, "drop the output-layer bias");
  cmd->add_flag("--last-layer", f.last_layer, "restrict gradients to the output layer");
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--lr", f.learning_rate, "learning rate");
}

void add_kmeans(CLI::App* cmd, Flags& f) {
  cmd->add_option("--init", f.init, "kmeanspp or random");
  cmd->add_option("--normalize-centroids", f.normalize, "rescale centroids to unit norm (true/false)");
}

void add_rule(CLI::App* cmd, Flags& f) {
  cmd->add_option("--accuracy", f.accuracy, "emit slices with accuracy at most this");
  cmd->add_option("--min-size", f.min_size, "emit slices with at least this many examples");
  cmd->add_option("--branch", f.branch, "clusters per split");
  cmd->add_option("--max-depth", f.max_depth, "recursion depth cap");
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"slicescope: influence-embedding slice discovery"};
  app.require_subcommand(1);
  Flags f;

  auto* generate_cmd = app.add_subcommand("generate", "write a synthetic blindspot task (train.csv, test.csv, truth.json)");
  add_common(generate_cmd, f);
  generate_cmd->add_option("--task", f.task, "rare, correlation, noisy_label or multi_feature");
  generate_cmd->add_option("--strength", f.strength, "manipulation strength in [0, 1]");

  auto* train_cmd = app.add_subcommand("train", "train a classifier and write a checkpoint");
  add_common(train_cmd, f);
  add_model(train_cmd, f);
  train_cmd->add_option("--train", f.train, "training CSV");
  train_cmd->add_option("--classes", f.classes, "number of classes (default: from config or data)");

  auto* factor_cmd = app.add_subcommand("factor", "low-rank factors of the inverse Hessian");
  add_common(factor_cmd, f);
  add_pipeline(factor_cmd, f);
  factor_cmd->add_option("--model", f.model, "checkpoint");
  factor_cmd->add_option("--train", f.train, "training CSV");

  auto* embed_cmd = app.add_subcommand("embed", "influence embeddings of a dataset");
  add_common(embed_cmd, f);
  embed_cmd->add_option("--model", f.model, "checkpoint");
  embed_cmd->add_option("--factors", f.factors, "factors file");
  embed_cmd->add_option("--data", f.data, "CSV to embed");
  embed_cmd->add_option("--role", f.role, "train or test (default test)");

  auto* slice_cmd = app.add_subcommand("slice", "k-means slices of test embeddings");
  add_common(slice_cmd, f);
  add_kmeans(slice_cmd, f);
  slice_cmd->add_option("--embeddings", f.embeddings, "test embeddings");
  slice_cmd->add_option("--k", f.k, "number of slices");
  slice_cmd->add_option("--model", f.model, "checkpoint (optional, adds accuracy per slice)");
  slice_cmd->add_option("--data", f.data, "test CSV (optional, with --model)");

  auto* rule_cmd = app.add_subcommand("rule-slice", "recursive search for low-accuracy slices");
  add_common(rule_cmd, f);
  add_kmeans(rule_cmd, f);
  add_rule(rule_cmd, f);
  rule_cmd->add_option("--embeddings", f.embeddings, "test embeddings");
  rule_cmd->add_option("--model", f.model, "checkpoint");
  rule_cmd->add_option("--data", f.data, "test CSV");

  auto* opp_cmd = app.add_subcommand("opponents", "training examples that most increase a slice's loss");
  add_common(opp_cmd, f);
  opp_cmd->add_option("--slices", f.slices, "slices JSON from slice or rule-slice");
  opp_cmd->add_option("--slice-id", f.slice_id, "slice to explain (default: lowest accuracy)");
  opp_cmd->add_option("--embeddings", f.embeddings, "test embeddings the slices were built from");
  opp_cmd->add_option("--train-embeddings", f.train_embeddings, "candidate training embeddings");
  opp_cmd->add_option("--factors", f.factors, "factors file (eigenvalue signs)");
  opp_cmd->add_option("--topk", f.topk, "number of opponents");
  opp_cmd->add_option("--truth", f.truth, "truth.json from generate (reports the manipulated fraction)");
  opp_cmd->add_flag("--over-test", f.over_test, "rank test examples instead of training examples");

  auto* bench_cmd = app.add_subcommand("bench", "end-to-end benchmark over seeds");
  add_common(bench_cmd, f);
  add_pipeline(bench_cmd, f);
  add_model(bench_cmd, f);
  add_kmeans(bench_cmd, f);
  add_rule(bench_cmd, f);
  bench_cmd->add_option("--task", f.task, "rare, correlation, noisy_label or multi_feature");
  bench_cmd->add_option("--strength", f.strength, "manipulation strength in [0, 1]");
  bench_cmd->add_option("--method", f.method, "inf_embed or inf_embed_rule");
  bench_cmd->add_option("--k", f.k, "number of slices");
  bench_cmd->add_option("--topk", f.topk, "opponents per worst slice");
  bench_cmd->add_option("--num-seeds", f.num_seeds, "seeds data_seed .. data_seed + n - 1");
  bench_cmd->add_option("--csv", f.csv, "also write a per-seed CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "slicescope: config error: " << one_line(e.what()) << '\n';
    return 2;
  }

  const std::vector<std::pair<CLI::App*, std::function<int(const RunConfig&, const Flags&)>>> commands{
      {generate_cmd, cmd_generate}, {train_cmd, cmd_train},     {factor_cmd, cmd_factor},
      {embed_cmd, cmd_embed},       {slice_cmd, cmd_slice},     {rule_cmd, cmd_rule_slice},
      {opp_cmd, cmd_opponents},     {bench_cmd, cmd_bench},
  };
  for (const auto& [cmd, run] : commands) {
    if (!cmd->parsed()) continue;
    const std::string stage = cmd->get_name();
    try {
      const RunConfig config = load_config(f);
      return run(config, f);
    } catch (const ConfigError& e) {
      std::cerr << "slicescope: " << stage << ": config error: " << one_line(e.what()) << '\n';
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "slicescope: " << stage << " failed: " << one_line(e.what()) << '\n';
      return 1;
    }
  }
  return 2;
}
