#include "slicescope/train.h"

#include <cmath>
#include <string>

#include "slicescope/errors.h"
#include "slicescope/random.h"

namespace slicescope {

ParamVector initialize_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  Vector values = Vector::Zero(static_cast<Eigen::Index>(spec.param_count()));
  for (const auto& block : spec.blocks()) {
    if (block.name.ends_with("bias")) continue;
    const double scale = 1.0 / std::sqrt(static_cast<double>(block.cols));
    for (std::size_t i = 0; i < block.size(); ++i) {
      values[static_cast<Eigen::Index>(block.offset + i)] = rng.uniform(-scale, scale);
    }
  }
  return ParamVector(std::move(values));
}

ParamVector train(const ModelSpec& spec, const LabeledDataset& dataset, const TrainOptions& options,
                  std::uint64_t seed) {
  require(dataset.feature_dim() == spec.feature_dim && dataset.num_classes() == spec.num_classes,
          "training data does not match model dimensions");
  require(options.learning_rate > 0.0, "learning rate must be positive");
  require(options.momentum >= 0.0 && options.momentum < 1.0, "momentum must lie in [0, 1)");

  Vector theta = initialize_params(spec, seed).values();
  Vector velocity = Vector::Zero(theta.size());
  Vector gradient;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    const Model model(spec, ParamVector(theta));
    const double loss = model.mean_loss_and_full_grad(dataset, gradient);
    if (!std::isfinite(loss) || !gradient.allFinite()) {
      throw TrainingError("training diverged at epoch " + std::to_string(epoch));
    }
    if (loss < options.target_loss) break;
    velocity = options.momentum * velocity - options.learning_rate * gradient;
    theta += velocity;
    if (!theta.allFinite()) {
      throw TrainingError("training diverged at epoch " + std::to_string(epoch));
    }
  }
  return ParamVector(std::move(theta));
}

}  // namespace slicescope
