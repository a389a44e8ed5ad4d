#include "fishdet/optim.hpp"

#include <stdexcept>

namespace fishdet {

void validate(const TrainConfig& config) {
  if (!(config.learning_rate > 0.0)) {
    throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
  }
  if (!(config.momentum >= 0.0 && config.momentum < 1.0)) {
    throw std::invalid_argument("TrainConfig: momentum must lie in [0, 1)");
  }
  if (config.batch_size < 1 || config.rpn_batch_size < 1) {
    throw std::invalid_argument("TrainConfig: batch sizes must be >= 1");
  }
  if (config.snapshot_interval < 1) {
    throw std::invalid_argument("TrainConfig: snapshot_interval must be >= 1");
  }
  if (config.iterations < 1) {
    throw std::invalid_argument("TrainConfig: iterations must be >= 1");
  }
}

void sgd_step(Tensor& param, const Tensor& grad, double learning_rate,
              double momentum, Tensor& velocity) {
  if (!param.same_shape(grad)) {
    throw std::invalid_argument("sgd_step: gradient shape mismatch");
  }
  if (velocity.size() == 0) velocity = Tensor(param.shape());
  if (!velocity.same_shape(param)) {
    throw std::invalid_argument("sgd_step: velocity shape mismatch");
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = momentum * velocity[i] - learning_rate * grad[i];
    param[i] += velocity[i];
  }
}

void sgd_step(ParamMap& params, const ParamMap& grads,
              const TrainConfig& config, ParamMap& velocity) {
  for (const auto& [name, grad] : grads) {
    const auto it = params.find(name);
    if (it == params.end()) {
      throw std::invalid_argument("sgd_step: gradient for unknown parameter " +
                                  name);
    }
    sgd_step(it->second, grad, config.learning_rate, config.momentum,
             velocity[name]);
  }
}

}  // namespace fishdet
