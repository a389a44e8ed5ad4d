#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fishdet/random.hpp"
#include "fishdet/tensor.hpp"

namespace fishdet {

enum class LayerKind : std::uint8_t {
  Conv,
  Relu,
  MaxPool,
  FullyConnected,
  Softmax
};

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::string name;
  // conv
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;
  // maxpool
  std::size_t pool_size = 2;
  std::size_t pool_stride = 2;
  // fully connected
  std::size_t out_features = 0;
};

LayerSpec conv_layer(std::string name, std::size_t out_channels,
                     std::size_t kernel, std::size_t stride, std::size_t pad);
LayerSpec relu_layer(std::string name);
LayerSpec maxpool_layer(std::string name, std::size_t size = 2,
                        std::size_t stride = 2);
LayerSpec fully_connected_layer(std::string name, std::size_t out_features);
LayerSpec softmax_layer(std::string name);

/// An ordered layer stack plus its named parameter tensors. Parameters are
/// keyed "<layer>.weight" / "<layer>.bias". A fully-connected layer after a
/// spatial one implicitly flattens.
struct NetworkSpec {
  std::vector<std::size_t> input_shape;  // [C,H,W] or [D]
  std::vector<LayerSpec> layers;
  std::map<std::string, Tensor> params;
};

/// Shape after every layer; element 0 is the input shape. Throws a shape
/// error naming the offending layer when the stack does not fit.
std::vector<std::vector<std::size_t>> infer_shapes(const NetworkSpec& spec);

/// Allocates and seeds every parameter tensor. Conv and fully-connected
/// weights draw from a fan-in scaled Gaussian (std = sqrt(2/fan_in)), biases
/// start at zero.
void initialize_params(NetworkSpec& spec, std::uint64_t seed);

Tensor gaussian_tensor(const std::vector<std::size_t>& shape, double stddev,
                       Rng& rng);

/// Forward pass; element i+1 is the output of layer i (element 0 the input).
std::vector<Tensor> forward(const NetworkSpec& spec, const Tensor& input);

struct Gradients {
  std::map<std::string, Tensor> params;
  Tensor input;
};

/// Backpropagates loss_grad (shaped like the final activation) through the
/// stack, returning per-parameter gradients and the input gradient.
Gradients backward(const NetworkSpec& spec,
                   const std::vector<Tensor>& activations,
                   const Tensor& loss_grad);

struct LayerReceptiveField {
  std::string layer;
  std::size_t rf;
};

/// Receptive-field extent after each layer via the standard recurrence
/// rf += (k - 1) * jump, jump *= stride. Elementwise layers change nothing;
/// a fully-connected layer is an error (undefined past flatten).
std::vector<LayerReceptiveField> receptive_field(const NetworkSpec& spec);

enum class Arch { Zf, CnnM, Vgg16 };

Arch arch_from_string(std::string_view name);
std::string to_string(Arch arch);

/// Desk-scale convolutional feature extractor preserving the distinguishing
/// structure of each architecture; width_scale in (0,1] multiplies channel
/// counts (floor, at least 1). Deterministic for a given seed.
NetworkSpec build_backbone(Arch arch, double width_scale,
                           std::vector<std::size_t> input_shape,
                           std::uint64_t seed);

/// Ratio of input height to final feature height (total downsampling).
std::size_t feature_stride(const NetworkSpec& spec);

}  // namespace fishdet
