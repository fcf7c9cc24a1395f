#include "slicescope/bench.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "slicescope/analysis.h"
#include "slicescope/errors.h"
#include "slicescope/influence.h"
#include "slicescope/random.h"

namespace slicescope {

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kRare:
      return "rare";
    case TaskKind::kCorrelation:
      return "correlation";
    case TaskKind::kNoisyLabel:
      return "noisy_label";
    case TaskKind::kMultiFeature:
      return "multi_feature";
  }
  return "correlation";
}

TaskKind task_kind_from_string(const std::string& name) {
  if (name == "rare") return TaskKind::kRare;
  if (name == "correlation") return TaskKind::kCorrelation;
  if (name == "noisy_label") return TaskKind::kNoisyLabel;
  if (name == "multi_feature") return TaskKind::kMultiFeature;
  throw ContractViolation("unknown task kind '" + name + "'");
}

std::string to_string(SliceMethod method) {
  return method == SliceMethod::kInfEmbed ? "inf_embed" : "inf_embed_rule";
}

SliceMethod slice_method_from_string(const std::string& name) {
  if (name == "inf_embed" || name == "kmeans") return SliceMethod::kInfEmbed;
  if (name == "inf_embed_rule" || name == "rule") return SliceMethod::kInfEmbedRule;
  throw ContractViolation("unknown slice method '" + name + "'");
}

void BlindspotSpec::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  require(num_classes >= 2, "benchmark needs at least two classes");
  require(feature_dim >= num_attributes + 2, "feature_dim must leave room for signal and spurious coordinates");
  require(num_train >= 1 && num_test >= 1, "benchmark splits must be nonempty");
  require(unit(strength), "manipulation strength must lie in [0, 1]");
  require(unit(attribute_probability), "attribute probability must lie in [0, 1]");
  require(noise >= 0.0 && class_separation >= 0.0, "noise and separation must be nonnegative");
  require(target_class < num_classes, "target class out of range");
  if (task_kind == TaskKind::kNoisyLabel) {
    require(noisy_flip_to < num_classes && noisy_flip_to != target_class,
            "noisy_label needs a destination class different from the target");
  }
  if (task_kind == TaskKind::kMultiFeature) {
    require(!blindspots.empty(), "multi_feature needs at least one blindspot");
    for (const auto& spot : blindspots) {
      require(spot.class_id < num_classes, "blindspot class out of range");
      require(spot.flip_to < num_classes && spot.flip_to != spot.class_id,
              "blindspot flip destination must be a different class");
      for (std::size_t a : spot.attributes) require(a < num_attributes, "blindspot attribute out of range");
    }
  }
}

namespace {

struct Draw {
  Vector features;
  std::size_t label;
  std::vector<bool> attributes;
};

Draw draw_example(Rng& rng, const BlindspotSpec& spec, const Matrix& class_means) {
  Draw draw;
  draw.label = rng.below(spec.num_classes);
  draw.features.resize(static_cast<Eigen::Index>(spec.feature_dim));
  const std::size_t signal = spec.signal_dim();
  for (std::size_t f = 0; f < signal; ++f) {
    draw.features[static_cast<Eigen::Index>(f)] =
        class_means(static_cast<Eigen::Index>(draw.label), static_cast<Eigen::Index>(f)) +
        spec.noise * rng.normal();
  }
  draw.attributes.resize(spec.num_attributes);
  for (std::size_t a = 0; a < spec.num_attributes; ++a) {
    draw.attributes[a] = rng.bernoulli(spec.attribute_probability);
    draw.features[static_cast<Eigen::Index>(signal + a)] =
        (draw.attributes[a] ? spec.attribute_shift : 0.0) + 0.25 * spec.noise * rng.normal();
  }
  draw.features[static_cast<Eigen::Index>(spec.feature_dim - 1)] = 0.25 * spec.noise * rng.normal();
  return draw;
}

bool in_blindspot(const Blindspot& spot, std::size_t label, const std::vector<bool>& attributes) {
  if (label != spot.class_id) return false;
  return std::all_of(spot.attributes.begin(), spot.attributes.end(),
                     [&](std::size_t a) { return attributes[a]; });
}

std::string describe(const Blindspot& spot) {
  std::ostringstream out;
  out << "label=" << spot.class_id;
  for (std::size_t a : spot.attributes) out << " & attr" << a;
  return out.str();
}

}  // namespace

GeneratedTask generate(const BlindspotSpec& spec) {
  spec.validate();
  const std::size_t C = spec.num_classes;

  Rng mean_rng(mix_seed(spec.seed, 1));
  Matrix class_means(static_cast<Eigen::Index>(C), static_cast<Eigen::Index>(spec.signal_dim()));
  for (Eigen::Index c = 0; c < class_means.rows(); ++c) {
    for (Eigen::Index f = 0; f < class_means.cols(); ++f) {
      class_means(c, f) = spec.class_separation * mean_rng.normal();
    }
  }

  Rng test_rng(mix_seed(spec.seed, 2));
  std::vector<Draw> test_draws;
  test_draws.reserve(spec.num_test);
  for (std::size_t i = 0; i < spec.num_test; ++i) test_draws.push_back(draw_example(test_rng, spec, class_means));

  Rng train_rng(mix_seed(spec.seed, 3));
  std::vector<Draw> train_draws;
  train_draws.reserve(spec.num_train);
  for (std::size_t i = 0; i < spec.num_train; ++i) train_draws.push_back(draw_example(train_rng, spec, class_means));

  // Manipulations touch the training split only.
  Rng manipulation_rng(mix_seed(spec.seed, 4));
  std::vector<bool> keep(train_draws.size(), true);
  std::vector<bool> manipulated(train_draws.size(), false);
  const std::size_t spurious = spec.feature_dim - 1;
  for (std::size_t i = 0; i < train_draws.size(); ++i) {
    Draw& d = train_draws[i];
    switch (spec.task_kind) {
      case TaskKind::kCorrelation:
        if (d.label == spec.target_class && manipulation_rng.bernoulli(spec.strength)) {
          d.features[static_cast<Eigen::Index>(spurious)] += spec.spurious_value;
          manipulated[i] = true;
        }
        break;
      case TaskKind::kRare:
        if (d.label == spec.target_class && manipulation_rng.bernoulli(spec.strength)) keep[i] = false;
        break;
      case TaskKind::kNoisyLabel:
        if (d.label == spec.target_class && manipulation_rng.bernoulli(spec.strength)) {
          d.label = spec.noisy_flip_to;
          manipulated[i] = true;
        }
        break;
      case TaskKind::kMultiFeature:
        for (const auto& spot : spec.blindspots) {
          if (in_blindspot(spot, d.label, d.attributes)) {
            if (manipulation_rng.bernoulli(spec.strength)) {
              d.label = spot.flip_to;
              manipulated[i] = true;
            }
            break;
          }
        }
        break;
    }
  }

  std::vector<Example> train_examples;
  std::vector<bool> train_manipulated;
  std::vector<std::vector<bool>> train_attributes;
  std::vector<bool> class_present(C, false);
  for (std::size_t i = 0; i < train_draws.size(); ++i) {
    if (!keep[i]) continue;
    class_present[train_draws[i].label] = true;
    train_examples.push_back(Example::with_class(train_draws[i].features, train_draws[i].label, C));
    train_manipulated.push_back(manipulated[i]);
    train_attributes.push_back(train_draws[i].attributes);
  }
  if (train_examples.empty() || (spec.task_kind == TaskKind::kRare && !class_present[spec.target_class])) {
    throw GenerationError("down-sampling left the target class with no training examples");
  }

  std::vector<Example> test_examples;
  std::vector<std::vector<bool>> test_attributes;
  for (const auto& d : test_draws) {
    test_examples.push_back(Example::with_class(d.features, d.label, C));
    test_attributes.push_back(d.attributes);
  }

  std::vector<GroundTruthSlice> truth;
  if (spec.strength > 0.0) {
    if (spec.task_kind == TaskKind::kMultiFeature) {
      for (const auto& spot : spec.blindspots) {
        GroundTruthSlice slice;
        slice.description = describe(spot);
        for (std::size_t i = 0; i < test_draws.size(); ++i) {
          if (in_blindspot(spot, test_draws[i].label, test_draws[i].attributes)) slice.test_indices.push_back(i);
        }
        if (!slice.test_indices.empty()) truth.push_back(std::move(slice));
      }
    } else {
      GroundTruthSlice slice;
      slice.description = to_string(spec.task_kind) + ": label=" + std::to_string(spec.target_class);
      for (std::size_t i = 0; i < test_draws.size(); ++i) {
        if (test_draws[i].label == spec.target_class) slice.test_indices.push_back(i);
      }
      if (!slice.test_indices.empty()) truth.push_back(std::move(slice));
    }
  }

  return GeneratedTask{LabeledDataset(std::move(train_examples), spec.feature_dim, C),
                       LabeledDataset(std::move(test_examples), spec.feature_dim, C),
                       std::move(truth),
                       std::move(train_manipulated),
                       std::move(train_attributes),
                       std::move(test_attributes)};
}

double precision_at_k(const SliceMembers& discovered, const GroundTruthSlice& truth, std::size_t k,
                      const Matrix& embeddings) {
  require(k >= 1, "precision-at-k needs k >= 1");
  double best = 0.0;
  for (const auto& members : discovered) {
    if (members.empty()) continue;
    Vector centroid = Vector::Zero(embeddings.cols());
    for (std::size_t i : members) {
      require(i < static_cast<std::size_t>(embeddings.rows()), "slice member out of range");
      centroid += embeddings.row(static_cast<Eigen::Index>(i)).transpose();
    }
    centroid /= static_cast<double>(members.size());
    std::vector<std::pair<double, std::size_t>> ranked;
    ranked.reserve(members.size());
    for (std::size_t i : members) {
      ranked.emplace_back((embeddings.row(static_cast<Eigen::Index>(i)).transpose() - centroid).squaredNorm(), i);
    }
    const std::size_t take = std::min(k, ranked.size());
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(take), ranked.end());
    std::size_t hits = 0;
    for (std::size_t r = 0; r < take; ++r) {
      hits += std::binary_search(truth.test_indices.begin(), truth.test_indices.end(), ranked[r].second);
    }
    best = std::max(best, static_cast<double>(hits) / static_cast<double>(take));
  }
  return best;
}

double precision_at_k(const Partition& discovered, const GroundTruthSlice& truth, std::size_t k,
                      const Matrix& embeddings) {
  return precision_at_k(discovered.slices(), truth, k, embeddings);
}

DiscoveryRates discovery_rates(const SliceMembers& slices, const std::vector<GroundTruthSlice>& truths,
                               double precision_floor, double recall_floor) {
  require(precision_floor > 0.0 && precision_floor <= 1.0, "precision floor must lie in (0, 1]");
  require(recall_floor > 0.0 && recall_floor <= 1.0, "recall floor must lie in (0, 1]");
  std::vector<bool> discovered(truths.size(), false);
  std::size_t false_slices = 0;
  std::size_t emitted = 0;
  for (const auto& slice : slices) {
    if (slice.empty()) continue;
    ++emitted;
    std::vector<std::size_t> sorted = slice;
    std::sort(sorted.begin(), sorted.end());
    bool matched = false;
    for (std::size_t t = 0; t < truths.size(); ++t) {
      const auto& truth = truths[t].test_indices;
      std::vector<std::size_t> overlap;
      std::set_intersection(sorted.begin(), sorted.end(), truth.begin(), truth.end(), std::back_inserter(overlap));
      const double precision = static_cast<double>(overlap.size()) / static_cast<double>(sorted.size());
      const double recall = truth.empty() ? 0.0 : static_cast<double>(overlap.size()) / static_cast<double>(truth.size());
      if (precision >= precision_floor && recall >= recall_floor) {
        matched = true;
        discovered[t] = true;
      }
    }
    false_slices += !matched;
  }
  DiscoveryRates rates;
  if (!truths.empty()) {
    rates.discovery_rate = static_cast<double>(std::count(discovered.begin(), discovered.end(), true)) /
                           static_cast<double>(truths.size());
  }
  rates.false_discovery_rate = emitted == 0 ? 0.0 : static_cast<double>(false_slices) / static_cast<double>(emitted);
  return rates;
}

Summary summarize(std::vector<double> values) {
  Summary summary;
  summary.count = values.size();
  if (values.empty()) return summary;
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double position = q * static_cast<double>(values.size() - 1);
    const auto lower = static_cast<std::size_t>(std::floor(position));
    const std::size_t upper = std::min(lower + 1, values.size() - 1);
    const double fraction = position - static_cast<double>(lower);
    return values[lower] + fraction * (values[upper] - values[lower]);
  };
  summary.median = quantile(0.5);
  summary.q1 = quantile(0.25);
  summary.q3 = quantile(0.75);
  return summary;
}

const Summary* BenchReport::summary(const std::string& name) const {
  for (const auto& [key, value] : summaries) {
    if (key == name) return &value;
  }
  return nullptr;
}

SeedResult run_seed(const BlindspotSpec& base_spec, const BenchConfig& config, std::uint64_t seed) {
  SeedResult result;
  result.seed = seed;
  BlindspotSpec spec = base_spec;
  spec.seed = seed;
  const GeneratedTask task = generate(spec);

  const ModelSpec model_spec =
      config.model_kind == ModelKind::kMlp
          ? ModelSpec::mlp(spec.feature_dim, config.hidden_dim, spec.num_classes, config.bias)
          : ModelSpec::softmax_linear(spec.feature_dim, spec.num_classes, config.bias);
  const Model model(model_spec, train(model_spec, task.train, config.train, mix_seed(seed, 0x7472)));
  result.train_accuracy = model.accuracy(task.train);
  const auto predictions = model.predict_classes(task.test);
  const auto labels = task.test.class_ids();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i];
  result.test_accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());

  std::vector<std::size_t> truth_union;
  for (const auto& truth : task.truth) {
    truth_union.insert(truth_union.end(), truth.test_indices.begin(), truth.test_indices.end());
  }
  std::sort(truth_union.begin(), truth_union.end());
  truth_union.erase(std::unique(truth_union.begin(), truth_union.end()), truth_union.end());
  if (!truth_union.empty()) {
    std::size_t hits = 0;
    for (std::size_t i : truth_union) hits += predictions[i] == labels[i];
    result.truth_accuracy = static_cast<double>(hits) / static_cast<double>(truth_union.size());
  }

  const PipelineSeeds seeds{mix_seed(seed, 0x6172), mix_seed(seed, 0x6b6d)};
  EmbeddingStage stage;
  SliceMembers slices;
  if (config.method == SliceMethod::kInfEmbed) {
    InfEmbedResult run = inf_embed(config.num_slices, task.test, task.train, model, config.pipeline, seeds);
    slices = run.partition().slices();
    result.coherence = coherence_score(run.stage.test_embeddings.rows, run.partition()).aggregate;
    stage = std::move(run.stage);
  } else {
    InfEmbedRuleResult run = inf_embed_rule(task.test, task.train, model, config.rule, config.pipeline, seeds);
    for (auto& slice : run.slices) slices.push_back(std::move(slice.members));
    stage = std::move(run.stage);
  }
  result.factor_rank = stage.factors.rank();
  const Matrix& embeddings = stage.test_embeddings.rows;

  std::vector<SliceReport> reports;
  for (std::size_t s = 0; s < slices.size(); ++s) {
    if (slices[s].empty()) continue;
    reports.push_back(build_slice_report(s, slices[s], embeddings, labels, predictions, spec.num_classes));
  }
  result.num_slices = reports.size();
  if (config.method == SliceMethod::kInfEmbedRule) {
    for (const auto& report : reports) result.coherence += report.coherence;
  }

  for (const auto& truth : task.truth) {
    result.precision_at_k.push_back(precision_at_k(slices, truth, config.precision_k, embeddings));
  }
  result.rates = discovery_rates(slices, task.truth, config.precision_floor, config.recall_floor);

  if (!reports.empty()) {
    const SliceReport* worst = &reports.front();
    for (const auto& report : reports) {
      if (report.accuracy < worst->accuracy) worst = &report;
    }
    result.worst_slice_size = worst->size();
    result.worst_slice_accuracy = worst->accuracy;
    const auto& histogram = worst->label_histogram;
    result.worst_slice_modal_label =
        static_cast<std::size_t>(std::max_element(histogram.begin(), histogram.end()) - histogram.begin());
    result.worst_slice_label_purity = label_homogeneity(worst->members, labels, predictions).label_purity;

    if (config.opponents_k > 0) {
      const EmbeddingMatrix train_embeddings =
          get_embeddings(task.train, stage.factors, model, DatasetRole::kTrain, config.pipeline.workers);
      const std::size_t k = std::min(config.opponents_k, train_embeddings.size());
      const OpponentList opponents = slice_opponents(*worst, train_embeddings.rows, stage.factors.signs, k);
      std::size_t flagged = 0;
      for (const auto& entry : opponents.entries) flagged += task.train_manipulated[entry.train_index];
      result.opponent_manipulated_fraction = static_cast<double>(flagged) / static_cast<double>(k);
    }
  }
  return result;
}

BenchReport run_benchmark(const BlindspotSpec& spec, const BenchConfig& config,
                          const std::vector<std::uint64_t>& seeds) {
  spec.validate();
  BenchReport report;
  report.spec = spec;
  report.config = config;
  for (std::uint64_t seed : seeds) {
    try {
      report.seeds.push_back(run_seed(spec, config, seed));
    } catch (const std::exception& e) {
      SeedResult failed;
      failed.seed = seed;
      failed.error = e.what();
      report.seeds.push_back(std::move(failed));
    }
  }

  std::vector<std::pair<std::string, std::vector<double>>> columns = {
      {"test_accuracy", {}},      {"truth_accuracy", {}},        {"accuracy_gap", {}},
      {"precision_at_k", {}},     {"discovery_rate", {}},        {"false_discovery_rate", {}},
      {"coherence", {}},          {"num_slices", {}},            {"worst_slice_accuracy", {}},
      {"worst_slice_label_purity", {}}, {"opponent_manipulated_fraction", {}},
  };
  auto column = [&](const std::string& name) -> std::vector<double>& {
    for (auto& [key, values] : columns) {
      if (key == name) return values;
    }
    throw std::logic_error("unknown column " + name);
  };
  for (const auto& seed : report.seeds) {
    if (seed.error) continue;
    column("test_accuracy").push_back(seed.test_accuracy);
    if (seed.truth_accuracy) {
      column("truth_accuracy").push_back(*seed.truth_accuracy);
      column("accuracy_gap").push_back(seed.test_accuracy - *seed.truth_accuracy);
    }
    if (!seed.precision_at_k.empty()) {
      column("precision_at_k")
          .push_back(std::accumulate(seed.precision_at_k.begin(), seed.precision_at_k.end(), 0.0) /
                     static_cast<double>(seed.precision_at_k.size()));
    }
    if (seed.rates.discovery_rate) column("discovery_rate").push_back(*seed.rates.discovery_rate);
    column("false_discovery_rate").push_back(seed.rates.false_discovery_rate);
    column("coherence").push_back(seed.coherence);
    column("num_slices").push_back(static_cast<double>(seed.num_slices));
    if (seed.worst_slice_accuracy) column("worst_slice_accuracy").push_back(*seed.worst_slice_accuracy);
    if (seed.worst_slice_label_purity) column("worst_slice_label_purity").push_back(*seed.worst_slice_label_purity);
    if (seed.opponent_manipulated_fraction) {
      column("opponent_manipulated_fraction").push_back(*seed.opponent_manipulated_fraction);
    }
  }
  for (auto& [key, values] : columns) report.summaries.emplace_back(key, summarize(std::move(values)));
  return report;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

template <typename T>
Json optional_json(const std::optional<T>& value) {
  return value ? Json(*value) : Json(nullptr);
}

}  // namespace

Json to_json(const BlindspotSpec& spec) {
  Json json;
  json["task_kind"] = to_string(spec.task_kind);
  json["num_classes"] = spec.num_classes;
  json["feature_dim"] = spec.feature_dim;
  json["num_train"] = spec.num_train;
  json["num_test"] = spec.num_test;
  json["num_attributes"] = spec.num_attributes;
  json["attribute_probability"] = spec.attribute_probability;
  json["attribute_shift"] = spec.attribute_shift;
  json["class_separation"] = spec.class_separation;
  json["noise"] = spec.noise;
  json["target_class"] = spec.target_class;
  json["strength"] = spec.strength;
  json["spurious_value"] = spec.spurious_value;
  json["noisy_flip_to"] = spec.noisy_flip_to;
  Json spots = Json::array();
  for (const auto& spot : spec.blindspots) {
    spots.push_back({{"class_id", spot.class_id}, {"attributes", spot.attributes}, {"flip_to", spot.flip_to}});
  }
  json["blindspots"] = std::move(spots);
  json["seed"] = spec.seed;
  return json;
}

BlindspotSpec blindspot_spec_from_json(const Json& json) {
  BlindspotSpec spec;
  try {
    spec.task_kind = task_kind_from_string(json.value("task_kind", to_string(spec.task_kind)));
    spec.num_classes = json.value("num_classes", spec.num_classes);
    spec.feature_dim = json.value("feature_dim", spec.feature_dim);
    spec.num_train = json.value("num_train", spec.num_train);
    spec.num_test = json.value("num_test", spec.num_test);
    spec.num_attributes = json.value("num_attributes", spec.num_attributes);
    spec.attribute_probability = json.value("attribute_probability", spec.attribute_probability);
    spec.attribute_shift = json.value("attribute_shift", spec.attribute_shift);
    spec.class_separation = json.value("class_separation", spec.class_separation);
    spec.noise = json.value("noise", spec.noise);
    spec.target_class = json.value("target_class", spec.target_class);
    spec.strength = json.value("strength", spec.strength);
    spec.spurious_value = json.value("spurious_value", spec.spurious_value);
    spec.noisy_flip_to = json.value("noisy_flip_to", spec.noisy_flip_to);
    if (json.contains("blindspots")) {
      for (const auto& item : json.at("blindspots")) {
        Blindspot spot;
        spot.class_id = item.at("class_id").get<std::size_t>();
        spot.attributes = item.value("attributes", std::vector<std::size_t>{});
        spot.flip_to = item.value("flip_to", (spot.class_id + 1) % spec.num_classes);
        spec.blindspots.push_back(std::move(spot));
      }
    }
    spec.seed = json.value("seed", spec.seed);
  } catch (const Json::exception& e) {
    throw ContractViolation(std::string("bad blindspot spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

Json to_json(const BenchConfig& config) {
  Json json;
  json["model_kind"] = to_string(config.model_kind);
  json["hidden_dim"] = config.hidden_dim;
  json["bias"] = config.bias;
  json["train"] = {{"epochs", config.train.epochs},
                   {"learning_rate", config.train.learning_rate},
                   {"momentum", config.train.momentum},
                   {"target_loss", config.train.target_loss}};
  const auto& p = config.pipeline;
  json["pipeline"] = {{"p", p.arnoldi_dim},
                      {"d", p.rank},
                      {"eig_floor", p.eig_floor},
                      {"hessian_batch", p.hessian_batch},
                      {"kmeans_max_iters", p.kmeans.max_iters},
                      {"kmeans_tolerance", p.kmeans.tolerance},
                      {"kmeans_init", to_string(p.kmeans.init)},
                      {"normalize_centroids", p.kmeans.normalize_centroids}};
  json["method"] = to_string(config.method);
  json["k"] = config.num_slices;
  json["rule"] = {{"accuracy", config.rule.accuracy_threshold},
                  {"min_size", config.rule.size_threshold},
                  {"branch", config.rule.branching_factor},
                  {"max_depth", config.rule.max_depth}};
  json["precision_k"] = config.precision_k;
  json["opponents_k"] = config.opponents_k;
  json["precision_floor"] = config.precision_floor;
  json["recall_floor"] = config.recall_floor;
  return json;
}

BenchConfig bench_config_from_json(const Json& json) {
  BenchConfig config;
  try {
    config.model_kind = model_kind_from_string(json.value("model_kind", to_string(config.model_kind)));
    config.hidden_dim = json.value("hidden_dim", config.hidden_dim);
    config.bias = json.value("bias", config.bias);
    if (json.contains("train")) {
      const auto& t = json.at("train");
      config.train.epochs = t.value("epochs", config.train.epochs);
      config.train.learning_rate = t.value("learning_rate", config.train.learning_rate);
      config.train.momentum = t.value("momentum", config.train.momentum);
      config.train.target_loss = t.value("target_loss", config.train.target_loss);
    }
    if (json.contains("pipeline")) {
      const auto& p = json.at("pipeline");
      auto& out = config.pipeline;
      out.arnoldi_dim = p.value("p", out.arnoldi_dim);
      out.rank = p.value("d", out.rank);
      out.eig_floor = p.value("eig_floor", out.eig_floor);
      out.hessian_batch = p.value("hessian_batch", out.hessian_batch);
      out.kmeans.max_iters = p.value("kmeans_max_iters", out.kmeans.max_iters);
      out.kmeans.tolerance = p.value("kmeans_tolerance", out.kmeans.tolerance);
      out.kmeans.init = kmeans_init_from_string(p.value("kmeans_init", to_string(out.kmeans.init)));
      out.kmeans.normalize_centroids = p.value("normalize_centroids", out.kmeans.normalize_centroids);
    }
    config.method = slice_method_from_string(json.value("method", to_string(config.method)));
    config.num_slices = json.value("k", config.num_slices);
    if (json.contains("rule")) {
      const auto& r = json.at("rule");
      config.rule.accuracy_threshold = r.value("accuracy", config.rule.accuracy_threshold);
      config.rule.size_threshold = r.value("min_size", config.rule.size_threshold);
      config.rule.branching_factor = r.value("branch", config.rule.branching_factor);
      config.rule.max_depth = r.value("max_depth", config.rule.max_depth);
    }
    config.precision_k = json.value("precision_k", config.precision_k);
    config.opponents_k = json.value("opponents_k", config.opponents_k);
    config.precision_floor = json.value("precision_floor", config.precision_floor);
    config.recall_floor = json.value("recall_floor", config.recall_floor);
  } catch (const Json::exception& e) {
    throw ContractViolation(std::string("bad bench config: ") + e.what());
  }
  return config;
}

Json to_json(const BenchReport& report) {
  Json json;
  json["format"] = "slicescope-bench-report";
  json["version"] = 1;
  json["spec"] = to_json(report.spec);
  json["config"] = to_json(report.config);
  Json seeds = Json::array();
  for (const auto& seed : report.seeds) {
    Json row;
    row["seed"] = seed.seed;
    row["error"] = optional_json(seed.error);
    if (!seed.error) {
      row["train_accuracy"] = seed.train_accuracy;
      row["test_accuracy"] = seed.test_accuracy;
      row["truth_accuracy"] = optional_json(seed.truth_accuracy);
      row["factor_rank"] = seed.factor_rank;
      row["num_slices"] = seed.num_slices;
      row["precision_at_k"] = seed.precision_at_k;
      row["discovery_rate"] = optional_json(seed.rates.discovery_rate);
      row["false_discovery_rate"] = seed.rates.false_discovery_rate;
      row["coherence"] = seed.coherence;
      row["worst_slice_size"] = optional_json(seed.worst_slice_size);
      row["worst_slice_accuracy"] = optional_json(seed.worst_slice_accuracy);
      row["worst_slice_modal_label"] = optional_json(seed.worst_slice_modal_label);
      row["worst_slice_label_purity"] = optional_json(seed.worst_slice_label_purity);
      row["opponent_manipulated_fraction"] = optional_json(seed.opponent_manipulated_fraction);
    }
    seeds.push_back(std::move(row));
  }
  json["seeds"] = std::move(seeds);
  Json summaries = Json::object();
  for (const auto& [name, summary] : report.summaries) {
    if (summary.count == 0) {
      summaries[name] = nullptr;  // no-truth sentinel
      continue;
    }
    summaries[name] = {{"count", summary.count},
                       {"median", summary.median},
                       {"q1", summary.q1},
                       {"q3", summary.q3},
                       {"iqr", summary.iqr()}};
  }
  json["summary"] = std::move(summaries);
  return json;
}

std::string bench_csv(const BenchReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "seed,error,test_accuracy,truth_accuracy,precision_at_k,discovery_rate,false_discovery_rate,"
         "coherence,num_slices,worst_slice_accuracy,opponent_manipulated_fraction\n";
  auto opt = [&](const std::optional<double>& v) {
    if (v) out << *v;
  };
  for (const auto& seed : report.seeds) {
    out << seed.seed << ',' << (seed.error ? "failed" : "") << ',';
    if (!seed.error) {
      out << seed.test_accuracy << ',';
      opt(seed.truth_accuracy);
      out << ',';
      if (!seed.precision_at_k.empty()) {
        out << std::accumulate(seed.precision_at_k.begin(), seed.precision_at_k.end(), 0.0) /
                   static_cast<double>(seed.precision_at_k.size());
      }
      out << ',';
      opt(seed.rates.discovery_rate);
      out << ',' << seed.rates.false_discovery_rate << ',' << seed.coherence << ',' << seed.num_slices << ',';
      opt(seed.worst_slice_accuracy);
      out << ',';
      opt(seed.opponent_manipulated_fraction);
    } else {
      out << ",,,,,,,,";
    }
    out << '\n';
  }
  return out.str();
}

Json to_json(const GroundTruthSlice& truth) {
  return Json{{"description", truth.description},
              {"size", truth.test_indices.size()},
              {"test_indices", truth.test_indices}};
}

}  // namespace slicescope
