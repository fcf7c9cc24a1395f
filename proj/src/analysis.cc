#include "slicescope/analysis.h"

#include <algorithm>
#include <map>

#include "slicescope/errors.h"

namespace slicescope {

SliceReport build_slice_report(std::size_t slice_id, std::vector<std::size_t> members,
                               const Matrix& embeddings, const std::vector<std::size_t>& labels,
                               const std::vector<std::size_t>& predictions, std::size_t num_classes) {
  require(labels.size() == static_cast<std::size_t>(embeddings.rows()) &&
              predictions.size() == labels.size(),
          "labels and predictions must match the embedding rows");
  std::sort(members.begin(), members.end());
  SliceReport report;
  report.slice_id = slice_id;
  report.label_histogram.assign(num_classes, 0);
  report.prediction_histogram.assign(num_classes, 0);
  report.query_vector = Vector::Zero(embeddings.cols());
  std::size_t correct = 0;
  for (std::size_t i : members) {
    require(i < labels.size(), "slice member out of range");
    require(labels[i] < num_classes && predictions[i] < num_classes, "class id out of range");
    ++report.label_histogram[labels[i]];
    ++report.prediction_histogram[predictions[i]];
    correct += labels[i] == predictions[i];
    report.query_vector += embeddings.row(static_cast<Eigen::Index>(i)).transpose();
  }
  if (!members.empty()) {
    const double n = static_cast<double>(members.size());
    report.accuracy = static_cast<double>(correct) / n;
    const Vector mean = report.query_vector / n;
    for (std::size_t i : members) {
      report.coherence += (embeddings.row(static_cast<Eigen::Index>(i)).transpose() - mean).squaredNorm();
    }
  }
  report.members = std::move(members);
  return report;
}

OpponentList slice_opponents(const SliceReport& report, const Matrix& train_embeddings,
                             const Vector& signs, std::size_t k) {
  require(!report.members.empty(), "opponents need a nonempty slice");
  require(k <= static_cast<std::size_t>(train_embeddings.rows()), "k exceeds the training set size");
  require(signs.size() == train_embeddings.cols() && report.query_vector.size() == signs.size(),
          "embedding dimensions do not match");
  const Vector scores = train_embeddings * signs.cwiseProduct(report.query_vector);

  std::vector<std::size_t> order(static_cast<std::size_t>(scores.size()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto before = [&](std::size_t a, std::size_t b) {
    const double sa = scores[static_cast<Eigen::Index>(a)];
    const double sb = scores[static_cast<Eigen::Index>(b)];
    return sa < sb || (sa == sb && a < b);
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), before);

  OpponentList out;
  out.k = k;
  out.entries.reserve(k);
  for (std::size_t r = 0; r < k; ++r) {
    out.entries.push_back(Opponent{order[r], scores[static_cast<Eigen::Index>(order[r])]});
  }
  return out;
}

CoherenceScores coherence_score(const Matrix& embeddings, const Partition& partition) {
  CoherenceScores scores;
  scores.per_slice = slice_objectives(embeddings, partition);
  for (double value : scores.per_slice) scores.aggregate += value;
  scores.per_example =
      partition.size() == 0 ? 0.0 : scores.aggregate / static_cast<double>(partition.size());
  return scores;
}

namespace {

double modal_fraction(const std::vector<std::size_t>& members, const std::vector<std::size_t>& ids) {
  std::map<std::size_t, std::size_t> counts;
  std::size_t best = 0;
  for (std::size_t i : members) {
    require(i < ids.size(), "slice member out of range");
    best = std::max(best, ++counts[ids[i]]);
  }
  return static_cast<double>(best) / static_cast<double>(members.size());
}

}  // namespace

Homogeneity label_homogeneity(const std::vector<std::size_t>& members,
                              const std::vector<std::size_t>& labels,
                              const std::vector<std::size_t>& predictions) {
  require(!members.empty(), "label homogeneity needs a nonempty slice");
  return Homogeneity{modal_fraction(members, labels), modal_fraction(members, predictions)};
}

double margin_kernel(const Example& z, const Example& z_other, const Model& model) {
  const ModelSpec& spec = model.spec();
  if (spec.kind != ModelKind::kSoftmaxLinear || spec.bias ||
      spec.masked_count() != spec.param_count()) {
    throw UnsupportedModelError("margin kernel needs a bias-free softmax-linear model with a full mask");
  }
  const Vector margin = z.label - model.forward(z.features).probs;
  const Vector margin_other = z_other.label - model.forward(z_other.features).probs;
  return margin.dot(margin_other) * z.features.dot(z_other.features);
}

Json to_json(const SliceReport& report) {
  Json json;
  json["slice_id"] = report.slice_id;
  json["size"] = report.size();
  json["accuracy"] = report.accuracy;
  json["label_histogram"] = report.label_histogram;
  json["prediction_histogram"] = report.prediction_histogram;
  json["coherence"] = report.coherence;
  json["members"] = report.members;
  return json;
}

Json to_json(const OpponentList& opponents) {
  Json entries = Json::array();
  for (const auto& entry : opponents.entries) {
    entries.push_back({{"train_index", entry.train_index}, {"influence", entry.influence}});
  }
  return Json{{"k", opponents.k}, {"entries", std::move(entries)}};
}

}  // namespace slicescope
