#ifndef SLICESCOPE_MODEL_H_
#define SLICESCOPE_MODEL_H_

#include <cstddef>
#include <string>
#include <vector>

#include "slicescope/dataset.h"

namespace slicescope {

enum class ModelKind { kSoftmaxLinear, kMlp };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

// A named contiguous range of the flat parameter vector. Weight matrices are
// stored row-major with one row per output unit.
struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 1;

  std::size_t size() const { return rows * cols; }
};

// Contiguous range of parameter blocks that gradients and Hessian-vector
// products are restricted to. `block_count == 0` means "through the last block".
struct LayerMask {
  std::size_t first_block = 0;
  std::size_t block_count = 0;

  static LayerMask all() { return {}; }
  friend bool operator==(const LayerMask&, const LayerMask&) = default;
};

struct ModelSpec {
  ModelKind kind = ModelKind::kSoftmaxLinear;
  std::size_t feature_dim = 0;
  std::size_t num_classes = 0;
  std::size_t hidden_dim = 0;  // MLP only
  bool bias = true;            // output-layer bias; the MLP hidden layer always has one
  LayerMask mask;

  static ModelSpec softmax_linear(std::size_t feature_dim, std::size_t num_classes, bool bias = true);
  static ModelSpec mlp(std::size_t feature_dim, std::size_t hidden_dim, std::size_t num_classes,
                       bool bias = true);

  // Mask selecting only the output layer's weight and bias blocks.
  LayerMask last_layer_mask() const;

  std::vector<ParamBlock> blocks() const;
  std::size_t param_count() const;
  // Offset and length of the masked range inside the flat parameter vector.
  std::size_t masked_offset() const;
  std::size_t masked_count() const;

  // Throws ContractViolation on an inconsistent spec.
  void validate() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// Flat model parameters. All entries are finite.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(Vector values);

  const Vector& values() const { return values_; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }

 private:
  Vector values_;
};

struct Prediction {
  Vector logits;
  Vector probs;

  std::size_t predicted_class() const;
};

// Largest masked parameter count for which explicit_hessian is allowed.
inline constexpr std::size_t kExplicitHessianCap = 2000;

// A classifier with cross-entropy loss. Gradients and Hessian-vector
// products are taken with respect to the masked parameter range only.
class Model {
 public:
  Model(ModelSpec spec, ParamVector params);

  const ModelSpec& spec() const { return spec_; }
  const ParamVector& params() const { return params_; }

  Prediction forward(const Vector& x) const;
  double loss(const Example& z) const;
  // Unscaled per-example gradient restricted to the mask.
  Vector grad(const Example& z) const;
  // Product of the Hessian of the MEAN loss over `batch` with `v`.
  Vector hvp(const LabeledDataset& batch, const Vector& v) const;
  // Dense masked Hessian of the mean loss. Softmax-linear uses the closed
  // form (diag(p) - p p^T) (x) x x^T; the MLP assembles columns from hvp.
  Matrix explicit_hessian(const LabeledDataset& batch) const;

  // Mean loss and full (unmasked) gradient; used by the trainer.
  double mean_loss_and_full_grad(const LabeledDataset& data, Vector& full_grad) const;

  std::vector<std::size_t> predict_classes(const LabeledDataset& data) const;
  // Fraction of examples whose argmax prediction equals the label.
  double accuracy(const LabeledDataset& data) const;

 private:
  void check_example(const Example& z) const;

  ModelSpec spec_;
  ParamVector params_;
};

// Numerically stable softmax and log-softmax.
Vector softmax(const Vector& logits);
Vector log_softmax(const Vector& logits);

}  // namespace slicescope

#endif  // SLICESCOPE_MODEL_H_
