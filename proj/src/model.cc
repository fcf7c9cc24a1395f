#include "slicescope/model.h"

#include <cmath>

#include "slicescope/errors.h"

namespace slicescope {

namespace {

using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;

// Intermediate values of one forward pass, kept for backprop.
struct ForwardCache {
  Vector hidden;  // tanh activations (MLP only)
  Vector logits;
  Vector probs;
};

struct Layout {
  std::size_t F, C, H;
  bool bias;
  // Offsets into the flat vector.
  std::size_t w1, b1, w2, b2;  // linear: w2/b2 are the only blocks
};

Layout layout_of(const ModelSpec& spec) {
  Layout l{spec.feature_dim, spec.num_classes, spec.hidden_dim, spec.bias, 0, 0, 0, 0};
  if (spec.kind == ModelKind::kSoftmaxLinear) {
    l.w2 = 0;
    l.b2 = l.C * l.F;
  } else {
    l.w1 = 0;
    l.b1 = l.H * l.F;
    l.w2 = l.b1 + l.H;
    l.b2 = l.w2 + l.C * l.H;
  }
  return l;
}

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

ForwardCache run_forward(const ModelSpec& spec, const Vector& theta, const Vector& x) {
  const Layout l = layout_of(spec);
  ForwardCache cache;
  if (spec.kind == ModelKind::kSoftmaxLinear) {
    ConstRowMap w(theta.data() + l.w2, idx(l.C), idx(l.F));
    cache.logits = w * x;
  } else {
    ConstRowMap w1(theta.data() + l.w1, idx(l.H), idx(l.F));
    ConstRowMap w2(theta.data() + l.w2, idx(l.C), idx(l.H));
    Vector pre = w1 * x + theta.segment(idx(l.b1), idx(l.H));
    cache.hidden = pre.array().tanh().matrix();
    cache.logits = w2 * cache.hidden;
  }
  if (l.bias) cache.logits += theta.segment(idx(l.b2), idx(l.C));
  cache.probs = softmax(cache.logits);
  return cache;
}

// Full-length gradient of the cross-entropy loss of one example.
Vector full_gradient(const ModelSpec& spec, const Vector& theta, const Example& z) {
  const Layout l = layout_of(spec);
  const ForwardCache cache = run_forward(spec, theta, z.features);
  const Vector delta = cache.probs - z.label;
  Vector g = Vector::Zero(theta.size());
  if (spec.kind == ModelKind::kSoftmaxLinear) {
    RowMap gw(g.data() + l.w2, idx(l.C), idx(l.F));
    for (std::size_t c = 0; c < l.C; ++c) gw.row(idx(c)) = delta[idx(c)] * z.features.transpose();
  } else {
    RowMap gw2(g.data() + l.w2, idx(l.C), idx(l.H));
    gw2.noalias() = delta * cache.hidden.transpose();
    ConstRowMap w2(theta.data() + l.w2, idx(l.C), idx(l.H));
    const Vector delta_hidden = w2.transpose() * delta;
    const Vector delta_pre =
        (delta_hidden.array() * (1.0 - cache.hidden.array().square())).matrix();
    RowMap gw1(g.data() + l.w1, idx(l.H), idx(l.F));
    gw1.noalias() = delta_pre * z.features.transpose();
    g.segment(idx(l.b1), idx(l.H)) = delta_pre;
  }
  if (l.bias) g.segment(idx(l.b2), idx(l.C)) = delta;
  return g;
}

// Directional derivative of full_gradient along `v` (forward-over-reverse).
Vector full_hessian_vector(const ModelSpec& spec, const Vector& theta, const Example& z,
                           const Vector& v) {
  const Layout l = layout_of(spec);
  const ForwardCache cache = run_forward(spec, theta, z.features);
  const Vector& p = cache.probs;
  const Vector& x = z.features;
  Vector out = Vector::Zero(theta.size());

  if (spec.kind == ModelKind::kSoftmaxLinear) {
    ConstRowMap vw(v.data() + l.w2, idx(l.C), idx(l.F));
    Vector r_logits = vw * x;
    if (l.bias) r_logits += v.segment(idx(l.b2), idx(l.C));
    const Vector r_probs = (p.array() * r_logits.array()).matrix() - p * p.dot(r_logits);
    RowMap ow(out.data() + l.w2, idx(l.C), idx(l.F));
    ow.noalias() = r_probs * x.transpose();
    if (l.bias) out.segment(idx(l.b2), idx(l.C)) = r_probs;
    return out;
  }

  ConstRowMap w2(theta.data() + l.w2, idx(l.C), idx(l.H));
  ConstRowMap vw1(v.data() + l.w1, idx(l.H), idx(l.F));
  ConstRowMap vw2(v.data() + l.w2, idx(l.C), idx(l.H));
  const Vector& h = cache.hidden;
  const Vector tanh_slope = (1.0 - h.array().square()).matrix();

  const Vector r_pre = vw1 * x + v.segment(idx(l.b1), idx(l.H));
  const Vector r_hidden = (tanh_slope.array() * r_pre.array()).matrix();
  Vector r_logits = vw2 * h + w2 * r_hidden;
  if (l.bias) r_logits += v.segment(idx(l.b2), idx(l.C));
  const Vector r_probs = (p.array() * r_logits.array()).matrix() - p * p.dot(r_logits);

  const Vector delta = p - z.label;
  RowMap ow2(out.data() + l.w2, idx(l.C), idx(l.H));
  ow2.noalias() = r_probs * h.transpose() + delta * r_hidden.transpose();
  if (l.bias) out.segment(idx(l.b2), idx(l.C)) = r_probs;

  const Vector delta_hidden = w2.transpose() * delta;
  const Vector r_delta_hidden = vw2.transpose() * delta + w2.transpose() * r_probs;
  const Vector r_delta_pre =
      (r_delta_hidden.array() * tanh_slope.array() -
       2.0 * delta_hidden.array() * h.array() * r_hidden.array())
          .matrix();
  RowMap ow1(out.data() + l.w1, idx(l.H), idx(l.F));
  ow1.noalias() = r_delta_pre * x.transpose();
  out.segment(idx(l.b1), idx(l.H)) = r_delta_pre;
  return out;
}

}  // namespace

std::string to_string(ModelKind kind) {
  return kind == ModelKind::kSoftmaxLinear ? "softmax-linear" : "mlp-1hidden";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "softmax-linear" || name == "softmax_linear" || name == "linear") return ModelKind::kSoftmaxLinear;
  if (name == "mlp-1hidden" || name == "mlp") return ModelKind::kMlp;
  throw ContractViolation("unknown model kind '" + name + "'");
}

ModelSpec ModelSpec::softmax_linear(std::size_t feature_dim, std::size_t num_classes, bool bias) {
  ModelSpec spec;
  spec.kind = ModelKind::kSoftmaxLinear;
  spec.feature_dim = feature_dim;
  spec.num_classes = num_classes;
  spec.bias = bias;
  spec.validate();
  return spec;
}

ModelSpec ModelSpec::mlp(std::size_t feature_dim, std::size_t hidden_dim, std::size_t num_classes,
                         bool bias) {
  ModelSpec spec;
  spec.kind = ModelKind::kMlp;
  spec.feature_dim = feature_dim;
  spec.num_classes = num_classes;
  spec.hidden_dim = hidden_dim;
  spec.bias = bias;
  spec.validate();
  return spec;
}

LayerMask ModelSpec::last_layer_mask() const {
  if (kind == ModelKind::kSoftmaxLinear) return LayerMask::all();
  return LayerMask{2, 0};
}

std::vector<ParamBlock> ModelSpec::blocks() const {
  std::vector<ParamBlock> out;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    out.push_back(ParamBlock{std::move(name), offset, rows, cols});
    offset += rows * cols;
  };
  if (kind == ModelKind::kSoftmaxLinear) {
    add("weight", num_classes, feature_dim);
    if (bias) add("bias", num_classes, 1);
  } else {
    add("hidden.weight", hidden_dim, feature_dim);
    add("hidden.bias", hidden_dim, 1);
    add("output.weight", num_classes, hidden_dim);
    if (bias) add("output.bias", num_classes, 1);
  }
  return out;
}

std::size_t ModelSpec::param_count() const {
  std::size_t total = 0;
  for (const auto& block : blocks()) total += block.size();
  return total;
}

std::size_t ModelSpec::masked_offset() const { return blocks().at(mask.first_block).offset; }

std::size_t ModelSpec::masked_count() const {
  const auto all_blocks = blocks();
  const std::size_t end =
      mask.block_count == 0 ? all_blocks.size() : mask.first_block + mask.block_count;
  std::size_t total = 0;
  for (std::size_t b = mask.first_block; b < end; ++b) total += all_blocks[b].size();
  return total;
}

void ModelSpec::validate() const {
  require(feature_dim >= 1, "feature_dim must be positive");
  require(num_classes >= 2, "num_classes must be at least 2");
  if (kind == ModelKind::kMlp) {
    require(hidden_dim >= 1, "mlp needs hidden_dim >= 1");
  } else {
    require(hidden_dim == 0, "softmax-linear has no hidden layer");
  }
  const std::size_t block_total = blocks().size();
  require(mask.first_block < block_total, "layer mask starts past the last block");
  require(mask.first_block + mask.block_count <= block_total, "layer mask runs past the last block");
}

ParamVector::ParamVector(Vector values) : values_(std::move(values)) {
  require(values_.allFinite(), "parameter vector has non-finite entries");
}

std::size_t Prediction::predicted_class() const {
  Eigen::Index index = 0;
  logits.maxCoeff(&index);
  return static_cast<std::size_t>(index);
}

Vector softmax(const Vector& logits) {
  const double shift = logits.maxCoeff();
  Vector e = (logits.array() - shift).exp().matrix();
  return e / e.sum();
}

Vector log_softmax(const Vector& logits) {
  const double shift = logits.maxCoeff();
  const double log_norm = std::log((logits.array() - shift).exp().sum());
  return (logits.array() - shift - log_norm).matrix();
}

Model::Model(ModelSpec spec, ParamVector params) : spec_(std::move(spec)), params_(std::move(params)) {
  spec_.validate();
  require(params_.size() == spec_.param_count(), "parameter count does not match model spec");
}

void Model::check_example(const Example& z) const {
  require(static_cast<std::size_t>(z.features.size()) == spec_.feature_dim,
          "example feature length does not match model");
  require(static_cast<std::size_t>(z.label.size()) == spec_.num_classes,
          "example label length does not match model");
}

Prediction Model::forward(const Vector& x) const {
  require(static_cast<std::size_t>(x.size()) == spec_.feature_dim,
          "input length does not match model feature_dim");
  ForwardCache cache = run_forward(spec_, params_.values(), x);
  return Prediction{std::move(cache.logits), std::move(cache.probs)};
}

double Model::loss(const Example& z) const {
  check_example(z);
  const ForwardCache cache = run_forward(spec_, params_.values(), z.features);
  return -z.label.dot(log_softmax(cache.logits));
}

Vector Model::grad(const Example& z) const {
  check_example(z);
  const Vector g = full_gradient(spec_, params_.values(), z);
  return g.segment(idx(spec_.masked_offset()), idx(spec_.masked_count()));
}

Vector Model::hvp(const LabeledDataset& batch, const Vector& v) const {
  const std::size_t offset = spec_.masked_offset();
  const std::size_t count = spec_.masked_count();
  require(static_cast<std::size_t>(v.size()) == count, "hvp vector length does not match mask");
  require(batch.feature_dim() == spec_.feature_dim && batch.num_classes() == spec_.num_classes,
          "hvp batch does not match model dimensions");
  Vector full_v = Vector::Zero(idx(spec_.param_count()));
  full_v.segment(idx(offset), idx(count)) = v;
  Vector acc = Vector::Zero(idx(count));
  for (const auto& z : batch) {
    acc += full_hessian_vector(spec_, params_.values(), z, full_v).segment(idx(offset), idx(count));
  }
  return acc / static_cast<double>(batch.size());
}

Matrix Model::explicit_hessian(const LabeledDataset& batch) const {
  const std::size_t offset = spec_.masked_offset();
  const std::size_t count = spec_.masked_count();
  if (count > kExplicitHessianCap) {
    throw ContractViolation("explicit Hessian refused: " + std::to_string(count) +
                            " masked parameters exceeds cap of " +
                            std::to_string(kExplicitHessianCap));
  }
  require(batch.feature_dim() == spec_.feature_dim && batch.num_classes() == spec_.num_classes,
          "Hessian batch does not match model dimensions");

  if (spec_.kind == ModelKind::kMlp) {
    Matrix h(idx(count), idx(count));
    for (std::size_t j = 0; j < count; ++j) {
      h.col(idx(j)) = hvp(batch, Vector::Unit(idx(count), idx(j)));
    }
    return 0.5 * (h + h.transpose());
  }

  // Every linear parameter multiplies one input value into one class logit.
  const std::size_t F = spec_.feature_dim;
  const std::size_t C = spec_.num_classes;
  std::vector<std::size_t> param_class(count);
  std::vector<std::size_t> param_feature(count);  // F marks the bias
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t global = offset + i;
    if (global < C * F) {
      param_class[i] = global / F;
      param_feature[i] = global % F;
    } else {
      param_class[i] = global - C * F;
      param_feature[i] = F;
    }
  }
  Matrix h = Matrix::Zero(idx(count), idx(count));
  Vector phi(idx(count));
  for (const auto& z : batch) {
    const Vector p = softmax(run_forward(spec_, params_.values(), z.features).logits);
    const Matrix curvature = Matrix(p.asDiagonal()) - p * p.transpose();
    for (std::size_t i = 0; i < count; ++i) {
      phi[idx(i)] = param_feature[i] == F ? 1.0 : z.features[idx(param_feature[i])];
    }
    for (std::size_t j = 0; j < count; ++j) {
      for (std::size_t i = 0; i < count; ++i) {
        h(idx(i), idx(j)) +=
            curvature(idx(param_class[i]), idx(param_class[j])) * phi[idx(i)] * phi[idx(j)];
      }
    }
  }
  return h / static_cast<double>(batch.size());
}

double Model::mean_loss_and_full_grad(const LabeledDataset& data, Vector& full_grad) const {
  full_grad = Vector::Zero(idx(spec_.param_count()));
  double total = 0.0;
  for (const auto& z : data) {
    check_example(z);
    total += loss(z);
    full_grad += full_gradient(spec_, params_.values(), z);
  }
  const double n = static_cast<double>(data.size());
  full_grad /= n;
  return total / n;
}

std::vector<std::size_t> Model::predict_classes(const LabeledDataset& data) const {
  std::vector<std::size_t> out;
  out.reserve(data.size());
  for (const auto& z : data) out.push_back(forward(z.features).predicted_class());
  return out;
}

double Model::accuracy(const LabeledDataset& data) const {
  const auto predicted = predict_classes(data);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) correct += predicted[i] == data[i].class_id();
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace slicescope
