#ifndef SLICESCOPE_TRAIN_H_
#define SLICESCOPE_TRAIN_H_

#include <cstddef>
#include <cstdint>

#include "slicescope/model.h"

namespace slicescope {

// Full-batch gradient descent with optional heavy-ball momentum.
struct TrainOptions {
  std::size_t epochs = 500;
  double learning_rate = 0.5;
  double momentum = 0.9;
  // Stop as soon as the mean training loss drops below this value.
  double target_loss = 0.0;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
ParamVector initialize_params(const ModelSpec& spec, std::uint64_t seed);

// Deterministic given (spec, dataset, options, seed). Throws TrainingError if
// the loss becomes non-finite.
ParamVector train(const ModelSpec& spec, const LabeledDataset& dataset, const TrainOptions& options,
                  std::uint64_t seed);

}  // namespace slicescope

#endif  // SLICESCOPE_TRAIN_H_
