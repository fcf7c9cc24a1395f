#ifndef SLICESCOPE_DATASET_H_
#define SLICESCOPE_DATASET_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

namespace slicescope {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// A single labelled example. The label is one-hot over the classes.
struct Example {
  Vector features;
  Vector label;

  // Builds an example with a one-hot label for `class_id`.
  static Example with_class(Vector features, std::size_t class_id, std::size_t num_classes);

  // Index of the nonzero label entry.
  std::size_t class_id() const;
};

// Checks the one-hot invariant; throws ContractViolation otherwise.
void validate_label(const Vector& label);

class LabeledDataset {
 public:
  // Validates that every example has `feature_dim` features and a one-hot
  // label over `num_classes` classes. Empty datasets are rejected.
  LabeledDataset(std::vector<Example> examples, std::size_t feature_dim, std::size_t num_classes);

  std::size_t size() const { return examples_.size(); }
  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t num_classes() const { return num_classes_; }

  const Example& operator[](std::size_t i) const { return examples_[i]; }
  const std::vector<Example>& examples() const { return examples_; }
  auto begin() const { return examples_.begin(); }
  auto end() const { return examples_.end(); }

  std::vector<std::size_t> class_ids() const;

  // Subset in the order given by `indices`.
  LabeledDataset subset(const std::vector<std::size_t>& indices) const;

 private:
  std::vector<Example> examples_;
  std::size_t feature_dim_;
  std::size_t num_classes_;
};

// Seeded sample of min(size, max_size) indices without replacement, returned
// in ascending order. Used to pick the Hessian batch.
std::vector<std::size_t> sample_indices(std::size_t size, std::size_t max_size, std::uint64_t seed);

// CSV with header f0,...,f{F-1},label where label is an integer class id.
// `num_classes` of 0 infers C as max(label) + 1.
LabeledDataset read_csv(const std::filesystem::path& path, std::size_t num_classes = 0);
void write_csv(const LabeledDataset& dataset, const std::filesystem::path& path);

}  // namespace slicescope

#endif  // SLICESCOPE_DATASET_H_
