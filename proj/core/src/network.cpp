#include "fishdet/network.hpp"

#include <cmath>
#include <stdexcept>

#include "fishdet/layers.hpp"

namespace fishdet {
namespace {

std::string weight_key(const LayerSpec& layer) { return layer.name + ".weight"; }
std::string bias_key(const LayerSpec& layer) { return layer.name + ".bias"; }

[[noreturn]] void shape_fail(const LayerSpec& layer, const std::string& what) {
  throw std::invalid_argument("layer " + layer.name + ": " + what);
}

std::size_t scaled_channels(std::size_t base, double width_scale) {
  const auto scaled =
      static_cast<std::size_t>(std::floor(static_cast<double>(base) * width_scale));
  return scaled < 1 ? 1 : scaled;
}

const Tensor& param(const NetworkSpec& spec, const std::string& key) {
  const auto it = spec.params.find(key);
  if (it == spec.params.end()) {
    throw std::invalid_argument("missing parameter tensor: " + key);
  }
  return it->second;
}

}  // namespace

LayerSpec conv_layer(std::string name, std::size_t out_channels,
                     std::size_t kernel, std::size_t stride, std::size_t pad) {
  LayerSpec layer;
  layer.kind = LayerKind::Conv;
  layer.name = std::move(name);
  layer.out_channels = out_channels;
  layer.kernel = kernel;
  layer.stride = stride;
  layer.pad = pad;
  return layer;
}

LayerSpec relu_layer(std::string name) {
  LayerSpec layer;
  layer.kind = LayerKind::Relu;
  layer.name = std::move(name);
  return layer;
}

LayerSpec maxpool_layer(std::string name, std::size_t size,
                        std::size_t stride) {
  LayerSpec layer;
  layer.kind = LayerKind::MaxPool;
  layer.name = std::move(name);
  layer.pool_size = size;
  layer.pool_stride = stride;
  return layer;
}

LayerSpec fully_connected_layer(std::string name, std::size_t out_features) {
  LayerSpec layer;
  layer.kind = LayerKind::FullyConnected;
  layer.name = std::move(name);
  layer.out_features = out_features;
  return layer;
}

LayerSpec softmax_layer(std::string name) {
  LayerSpec layer;
  layer.kind = LayerKind::Softmax;
  layer.name = std::move(name);
  return layer;
}

std::vector<std::vector<std::size_t>> infer_shapes(const NetworkSpec& spec) {
  if (spec.input_shape.empty()) {
    throw std::invalid_argument("infer_shapes: input shape is empty");
  }
  std::vector<std::vector<std::size_t>> shapes;
  shapes.push_back(spec.input_shape);
  for (const LayerSpec& layer : spec.layers) {
    const std::vector<std::size_t>& in = shapes.back();
    switch (layer.kind) {
      case LayerKind::Conv: {
        if (in.size() != 3) shape_fail(layer, "conv expects a [C,H,W] input");
        const std::size_t h = in[1];
        const std::size_t w = in[2];
        const std::size_t padded_h = h + 2 * layer.pad;
        const std::size_t padded_w = w + 2 * layer.pad;
        if (padded_h < layer.kernel || padded_w < layer.kernel) {
          shape_fail(layer, "input too small for the kernel");
        }
        if ((padded_h - layer.kernel) % layer.stride != 0 ||
            (padded_w - layer.kernel) % layer.stride != 0) {
          shape_fail(layer, "output dims are not integral");
        }
        shapes.push_back({layer.out_channels,
                          (padded_h - layer.kernel) / layer.stride + 1,
                          (padded_w - layer.kernel) / layer.stride + 1});
        break;
      }
      case LayerKind::Relu:
        shapes.push_back(in);
        break;
      case LayerKind::MaxPool: {
        if (in.size() != 3) shape_fail(layer, "maxpool expects a [C,H,W] input");
        const std::size_t h = in[1];
        const std::size_t w = in[2];
        if (h < layer.pool_size || w < layer.pool_size ||
            (h - layer.pool_size) % layer.pool_stride != 0 ||
            (w - layer.pool_size) % layer.pool_stride != 0) {
          shape_fail(layer, "spatial dims do not satisfy the pooling rule");
        }
        shapes.push_back({in[0], (h - layer.pool_size) / layer.pool_stride + 1,
                          (w - layer.pool_size) / layer.pool_stride + 1});
        break;
      }
      case LayerKind::FullyConnected: {
        if (layer.out_features < 1) shape_fail(layer, "out_features must be >= 1");
        shapes.push_back({layer.out_features});
        break;
      }
      case LayerKind::Softmax: {
        if (in.size() != 1) shape_fail(layer, "softmax expects a flat input");
        shapes.push_back(in);
        break;
      }
    }
  }
  return shapes;
}

Tensor gaussian_tensor(const std::vector<std::size_t>& shape, double stddev,
                       Rng& rng) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = rng.gaussian(0.0, stddev);
  }
  return t;
}

void initialize_params(NetworkSpec& spec, std::uint64_t seed) {
  const auto shapes = infer_shapes(spec);
  Rng rng(seed);
  spec.params.clear();
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    const std::vector<std::size_t>& in = shapes[i];
    if (layer.kind == LayerKind::Conv) {
      const std::size_t fan_in = in[0] * layer.kernel * layer.kernel;
      const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
      spec.params[weight_key(layer)] = gaussian_tensor(
          {layer.out_channels, in[0], layer.kernel, layer.kernel}, stddev, rng);
      spec.params[bias_key(layer)] = Tensor({layer.out_channels});
    } else if (layer.kind == LayerKind::FullyConnected) {
      const std::size_t fan_in = shape_size(in);
      const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
      spec.params[weight_key(layer)] =
          gaussian_tensor({layer.out_features, fan_in}, stddev, rng);
      spec.params[bias_key(layer)] = Tensor({layer.out_features});
    }
  }
}

std::vector<Tensor> forward(const NetworkSpec& spec, const Tensor& input) {
  if (input.shape() != spec.input_shape) {
    throw std::invalid_argument("forward: input does not match declared shape");
  }
  std::vector<Tensor> activations;
  activations.reserve(spec.layers.size() + 1);
  activations.push_back(input);
  for (const LayerSpec& layer : spec.layers) {
    const Tensor& in = activations.back();
    switch (layer.kind) {
      case LayerKind::Conv:
        activations.push_back(conv2d_forward(in, param(spec, weight_key(layer)),
                                             param(spec, bias_key(layer)),
                                             layer.stride, layer.pad));
        break;
      case LayerKind::Relu:
        activations.push_back(relu_forward(in));
        break;
      case LayerKind::MaxPool:
        activations.push_back(
            maxpool_forward(in, layer.pool_size, layer.pool_stride));
        break;
      case LayerKind::FullyConnected:
        activations.push_back(fully_connected_forward(
            in.rank() == 1 ? in : in.flattened(),
            param(spec, weight_key(layer)), param(spec, bias_key(layer))));
        break;
      case LayerKind::Softmax:
        activations.push_back(softmax(in));
        break;
    }
  }
  return activations;
}

Gradients backward(const NetworkSpec& spec,
                   const std::vector<Tensor>& activations,
                   const Tensor& loss_grad) {
  if (activations.size() != spec.layers.size() + 1) {
    throw std::invalid_argument(
        "backward: activations do not match the layer stack");
  }
  Gradients grads;
  Tensor upstream = loss_grad;
  for (std::size_t i = spec.layers.size(); i-- > 0;) {
    const LayerSpec& layer = spec.layers[i];
    const Tensor& in = activations[i];
    switch (layer.kind) {
      case LayerKind::Conv: {
        Conv2dGrads g = conv2d_backward(in, param(spec, weight_key(layer)),
                                        layer.stride, layer.pad, upstream);
        grads.params[weight_key(layer)] = std::move(g.kernels);
        grads.params[bias_key(layer)] = std::move(g.bias);
        upstream = std::move(g.input);
        break;
      }
      case LayerKind::Relu:
        upstream = relu_backward(in, upstream);
        break;
      case LayerKind::MaxPool:
        upstream =
            maxpool_backward(in, layer.pool_size, layer.pool_stride, upstream);
        break;
      case LayerKind::FullyConnected: {
        const Tensor flat_in = in.rank() == 1 ? in : in.flattened();
        FullyConnectedGrads g = fully_connected_backward(
            flat_in, param(spec, weight_key(layer)), upstream);
        grads.params[weight_key(layer)] = std::move(g.weights);
        grads.params[bias_key(layer)] = std::move(g.bias);
        upstream = in.rank() == 1 ? std::move(g.input)
                                  : g.input.reshaped(in.shape());
        break;
      }
      case LayerKind::Softmax: {
        // dL/dx = (diag(p) - p p^T) g with p = softmax(x)
        const Tensor& probs = activations[i + 1];
        double dot = 0.0;
        for (std::size_t j = 0; j < probs.size(); ++j) {
          dot += probs[j] * upstream[j];
        }
        Tensor g(probs.shape());
        for (std::size_t j = 0; j < probs.size(); ++j) {
          g[j] = probs[j] * (upstream[j] - dot);
        }
        upstream = std::move(g);
        break;
      }
    }
  }
  grads.input = std::move(upstream);
  return grads;
}

std::vector<LayerReceptiveField> receptive_field(const NetworkSpec& spec) {
  std::vector<LayerReceptiveField> result;
  result.reserve(spec.layers.size());
  std::size_t rf = 1;
  std::size_t jump = 1;
  for (const LayerSpec& layer : spec.layers) {
    switch (layer.kind) {
      case LayerKind::Conv:
        rf += (layer.kernel - 1) * jump;
        jump *= layer.stride;
        break;
      case LayerKind::MaxPool:
        rf += (layer.pool_size - 1) * jump;
        jump *= layer.pool_stride;
        break;
      case LayerKind::Relu:
      case LayerKind::Softmax:
        break;
      case LayerKind::FullyConnected:
        throw std::invalid_argument(
            "receptive_field: undefined past flatten (layer " + layer.name +
            ")");
    }
    result.push_back({layer.name, rf});
  }
  return result;
}

Arch arch_from_string(std::string_view name) {
  if (name == "zf") return Arch::Zf;
  if (name == "cnn-m" || name == "cnnm") return Arch::CnnM;
  if (name == "vgg16" || name == "vgg-16") return Arch::Vgg16;
  throw std::invalid_argument("unknown architecture: " + std::string(name));
}

std::string to_string(Arch arch) {
  switch (arch) {
    case Arch::Zf: return "zf";
    case Arch::CnnM: return "cnn-m";
    case Arch::Vgg16: return "vgg16";
  }
  throw std::logic_error("unreachable");
}

NetworkSpec build_backbone(Arch arch, double width_scale,
                           std::vector<std::size_t> input_shape,
                           std::uint64_t seed) {
  if (!(width_scale > 0.0 && width_scale <= 1.0)) {
    throw std::invalid_argument("build_backbone: width_scale must be in (0,1]");
  }
  if (input_shape.size() != 3) {
    throw std::invalid_argument("build_backbone: input shape must be [C,H,W]");
  }

  NetworkSpec spec;
  spec.input_shape = std::move(input_shape);
  const auto ch = [&](std::size_t base) {
    return scaled_channels(base, width_scale);
  };

  switch (arch) {
    case Arch::Zf:
      // 5 convs, 7x7 first kernel, two pooling stages; layer 4 is the wide
      // one (1024 at full width).
      spec.layers = {
          conv_layer("conv1", ch(96), 7, 3, 2),
          relu_layer("relu1"),
          maxpool_layer("pool1"),
          conv_layer("conv2", ch(256), 5, 1, 2),
          relu_layer("relu2"),
          maxpool_layer("pool2"),
          conv_layer("conv3", ch(384), 3, 1, 1),
          relu_layer("relu3"),
          conv_layer("conv4", ch(1024), 3, 1, 1),
          relu_layer("relu4"),
          conv_layer("conv5", ch(256), 3, 1, 1),
          relu_layer("relu5"),
      };
      break;
    case Arch::CnnM:
      // Mirrors the ZF stack except: smaller first kernel at a decreased
      // stride, a stride-2 second conv, and 512 channels in layer 4.
      spec.layers = {
          conv_layer("conv1", ch(96), 5, 1, 2),
          relu_layer("relu1"),
          maxpool_layer("pool1"),
          conv_layer("conv2", ch(256), 6, 2, 2),
          relu_layer("relu2"),
          maxpool_layer("pool2"),
          conv_layer("conv3", ch(384), 3, 1, 1),
          relu_layer("relu3"),
          conv_layer("conv4", ch(512), 3, 1, 1),
          relu_layer("relu4"),
          conv_layer("conv5", ch(256), 3, 1, 1),
          relu_layer("relu5"),
      };
      break;
    case Arch::Vgg16: {
      // 13 convs, all 3x3 stride 1 pad 1, in blocks of 2/2/3/3/3 with 2x2
      // stride-2 pooling between blocks.
      const std::size_t block_sizes[5] = {2, 2, 3, 3, 3};
      const std::size_t block_channels[5] = {64, 128, 256, 512, 512};
      for (std::size_t b = 0; b < 5; ++b) {
        for (std::size_t l = 0; l < block_sizes[b]; ++l) {
          const std::string suffix =
              std::to_string(b + 1) + "_" + std::to_string(l + 1);
          spec.layers.push_back(
              conv_layer("conv" + suffix, ch(block_channels[b]), 3, 1, 1));
          spec.layers.push_back(relu_layer("relu" + suffix));
        }
        if (b + 1 < 5) {
          spec.layers.push_back(maxpool_layer("pool" + std::to_string(b + 1)));
        }
      }
      break;
    }
  }

  initialize_params(spec, seed);
  return spec;
}

std::size_t feature_stride(const NetworkSpec& spec) {
  const auto shapes = infer_shapes(spec);
  const std::size_t in_h = shapes.front()[1];
  const std::size_t out_h = shapes.back()[1];
  if (out_h == 0 || in_h % out_h != 0) {
    throw std::invalid_argument(
        "feature_stride: input height is not a multiple of the feature height");
  }
  return in_h / out_h;
}

}  // namespace fishdet
