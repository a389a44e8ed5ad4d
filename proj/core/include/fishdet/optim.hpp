#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "fishdet/tensor.hpp"

namespace fishdet {

struct TrainConfig {
  double learning_rate = 0.001;
  double momentum = 0.9;
  std::size_t batch_size = 128;      // region-classifier minibatch
  std::size_t rpn_batch_size = 256;  // anchor minibatch
  std::size_t iterations = 2000;
  std::size_t snapshot_interval = 500;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& config);

using ParamMap = std::map<std::string, Tensor>;

/// Momentum SGD on a single tensor: v <- momentum*v - lr*g; p <- p + v.
void sgd_step(Tensor& param, const Tensor& grad, double learning_rate,
              double momentum, Tensor& velocity);

/// Applies the update to every gradient entry; velocity tensors are created
/// on first use. Unknown gradient names and shape mismatches are errors.
void sgd_step(ParamMap& params, const ParamMap& grads,
              const TrainConfig& config, ParamMap& velocity);

}  // namespace fishdet
