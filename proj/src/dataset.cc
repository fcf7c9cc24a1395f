#include "slicescope/dataset.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>

#include "slicescope/errors.h"
#include "slicescope/random.h"

namespace slicescope {

Example Example::with_class(Vector features, std::size_t class_id, std::size_t num_classes) {
  require(class_id < num_classes, "class id out of range");
  Example example{std::move(features), Vector::Zero(static_cast<Eigen::Index>(num_classes))};
  example.label[static_cast<Eigen::Index>(class_id)] = 1.0;
  return example;
}

std::size_t Example::class_id() const {
  Eigen::Index index = 0;
  label.maxCoeff(&index);
  return static_cast<std::size_t>(index);
}

void validate_label(const Vector& label) {
  std::size_t ones = 0;
  for (Eigen::Index c = 0; c < label.size(); ++c) {
    if (label[c] == 1.0) {
      ++ones;
    } else if (label[c] != 0.0) {
      throw ContractViolation("label entries must be 0 or 1");
    }
  }
  require(ones == 1, "label must have exactly one nonzero entry");
}

LabeledDataset::LabeledDataset(std::vector<Example> examples, std::size_t feature_dim,
                               std::size_t num_classes)
    : examples_(std::move(examples)), feature_dim_(feature_dim), num_classes_(num_classes) {
  require(!examples_.empty(), "dataset must be nonempty");
  require(num_classes_ >= 1, "dataset needs at least one class");
  for (const auto& example : examples_) {
    require(static_cast<std::size_t>(example.features.size()) == feature_dim_,
            "example feature length does not match dataset feature_dim");
    require(static_cast<std::size_t>(example.label.size()) == num_classes_,
            "example label length does not match dataset num_classes");
    validate_label(example.label);
    require(example.features.allFinite(), "example features must be finite");
  }
}

std::vector<std::size_t> LabeledDataset::class_ids() const {
  std::vector<std::size_t> ids;
  ids.reserve(examples_.size());
  for (const auto& example : examples_) ids.push_back(example.class_id());
  return ids;
}

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& indices) const {
  std::vector<Example> picked;
  picked.reserve(indices.size());
  for (std::size_t i : indices) {
    require(i < examples_.size(), "subset index out of range");
    picked.push_back(examples_[i]);
  }
  return LabeledDataset(std::move(picked), feature_dim_, num_classes_);
}

std::vector<std::size_t> sample_indices(std::size_t size, std::size_t max_size, std::uint64_t seed) {
  std::vector<std::size_t> indices(size);
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  if (max_size >= size) return indices;
  Rng rng(seed);
  for (std::size_t i = 0; i < max_size; ++i) {
    const std::size_t j = i + rng.below(size - i);
    std::swap(indices[i], indices[j]);
  }
  indices.resize(max_size);
  std::sort(indices.begin(), indices.end());
  return indices;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream stream(line);
  while (std::getline(stream, field, ',')) {
    if (!field.empty() && field.back() == '\r') field.pop_back();
    fields.push_back(field);
  }
  return fields;
}

double parse_double(const std::string& text, std::size_t line_number) {
  try {
    std::size_t consumed = 0;
    const double value = std::stod(text, &consumed);
    if (consumed != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw FormatError("line " + std::to_string(line_number) + ": bad number '" + text + "'");
  }
}

}  // namespace

LabeledDataset read_csv(const std::filesystem::path& path, std::size_t num_classes) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open dataset " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty dataset file " + path.string());
  const auto header = split_line(line);
  if (header.size() < 2 || header.back() != "label") {
    throw FormatError("dataset header must be f0..f{F-1},label");
  }
  const std::size_t feature_dim = header.size() - 1;
  for (std::size_t f = 0; f < feature_dim; ++f) {
    if (header[f] != "f" + std::to_string(f)) {
      throw FormatError("unexpected column '" + header[f] + "' in dataset header");
    }
  }

  std::vector<Vector> features;
  std::vector<long> labels;
  std::size_t line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_line(line);
    if (fields.size() != header.size()) {
      throw FormatError("line " + std::to_string(line_number) + ": expected " +
                        std::to_string(header.size()) + " columns");
    }
    Vector x(static_cast<Eigen::Index>(feature_dim));
    for (std::size_t f = 0; f < feature_dim; ++f) {
      x[static_cast<Eigen::Index>(f)] = parse_double(fields[f], line_number);
    }
    long label = 0;
    const auto& text = fields.back();
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), label);
    if (ec != std::errc() || ptr != text.data() + text.size() || label < 0) {
      throw FormatError("line " + std::to_string(line_number) + ": bad label '" + text + "'");
    }
    features.push_back(std::move(x));
    labels.push_back(label);
  }
  if (labels.empty()) throw FormatError("dataset has no rows: " + path.string());

  if (num_classes == 0) {
    num_classes = static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
  }
  std::vector<Example> examples;
  examples.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw FormatError("label " + std::to_string(labels[i]) + " exceeds class count");
    }
    examples.push_back(
        Example::with_class(std::move(features[i]), static_cast<std::size_t>(labels[i]), num_classes));
  }
  return LabeledDataset(std::move(examples), feature_dim, num_classes);
}

void write_csv(const LabeledDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write dataset " + path.string());
  for (std::size_t f = 0; f < dataset.feature_dim(); ++f) out << 'f' << f << ',';
  out << "label\n";
  out << std::setprecision(17);
  for (const auto& example : dataset) {
    for (Eigen::Index f = 0; f < example.features.size(); ++f) out << example.features[f] << ',';
    out << example.class_id() << '\n';
  }
}

}  // namespace slicescope
