#include <cmath>
#include <stdexcept>
#include <string>

#include "doctest.h"
#include "fishdet/layers.hpp"
#include "fishdet/network.hpp"
#include "fishdet/optim.hpp"
#include "oracles.hpp"

using namespace fishdet;

namespace {

std::vector<const LayerSpec*> conv_layers(const NetworkSpec& spec) {
  std::vector<const LayerSpec*> convs;
  for (const LayerSpec& layer : spec.layers) {
    if (layer.kind == LayerKind::Conv) convs.push_back(&layer);
  }
  return convs;
}

}  // namespace

TEST_CASE("zf backbone keeps its 7x7 first kernel at every width") {
  for (double scale : {1.0, 0.25, 0.1}) {
    const NetworkSpec spec = build_backbone(Arch::Zf, scale, {3, 96, 96}, 0);
    const auto convs = conv_layers(spec);
    REQUIRE(convs.size() == 5);
    CHECK(convs[0]->kernel == 7);
  }
}

TEST_CASE("vgg16 backbone uses only 3x3 convs and 2x2 stride-2 pools") {
  const NetworkSpec spec = build_backbone(Arch::Vgg16, 0.25, {3, 96, 96}, 0);
  std::size_t convs = 0;
  std::size_t pools = 0;
  for (const LayerSpec& layer : spec.layers) {
    if (layer.kind == LayerKind::Conv) {
      ++convs;
      CHECK(layer.kernel == 3);
      CHECK(layer.stride == 1);
      CHECK(layer.pad == 1);
    }
    if (layer.kind == LayerKind::MaxPool) {
      ++pools;
      CHECK(layer.pool_size == 2);
      CHECK(layer.pool_stride == 2);
    }
  }
  CHECK(convs == 13);
  CHECK(pools == 4);
}

TEST_CASE("cnn-m mirrors zf with its stated deltas") {
  const NetworkSpec cnnm = build_backbone(Arch::CnnM, 1.0, {3, 96, 96}, 0);
  const NetworkSpec zf = build_backbone(Arch::Zf, 1.0, {3, 96, 96}, 0);
  const auto m_convs = conv_layers(cnnm);
  const auto z_convs = conv_layers(zf);
  REQUIRE(m_convs.size() == 5);
  REQUIRE(z_convs.size() == 5);
  // layer 4: 512 instead of 1024
  CHECK(m_convs[3]->out_channels == 512);
  CHECK(z_convs[3]->out_channels == 1024);
  // stride-2 second conv against a stride-1 sibling
  CHECK(m_convs[1]->stride == 2);
  CHECK(z_convs[1]->stride == 1);
  // smaller first kernel at a decreased stride
  CHECK(m_convs[0]->kernel < z_convs[0]->kernel);
  CHECK(m_convs[0]->stride < z_convs[0]->stride);
}

TEST_CASE("width scaling floors channels with a minimum of one") {
  const NetworkSpec spec = build_backbone(Arch::Zf, 0.25, {3, 96, 96}, 0);
  const auto convs = conv_layers(spec);
  CHECK(convs[0]->out_channels == 24);   // floor(96 * 0.25)
  CHECK(convs[3]->out_channels == 256);  // floor(1024 * 0.25)

  const NetworkSpec tiny = build_backbone(Arch::Zf, 0.001, {3, 96, 96}, 0);
  for (const LayerSpec* conv : conv_layers(tiny)) {
    CHECK(conv->out_channels >= 1);
  }
  CHECK_THROWS_AS(build_backbone(Arch::Zf, 0.0, {3, 96, 96}, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_backbone(Arch::Zf, 1.5, {3, 96, 96}, 0),
                  std::invalid_argument);
}

TEST_CASE("build_backbone is deterministic per seed") {
  const NetworkSpec a = build_backbone(Arch::Zf, 0.1, {3, 48, 48}, 9);
  const NetworkSpec b = build_backbone(Arch::Zf, 0.1, {3, 48, 48}, 9);
  const NetworkSpec c = build_backbone(Arch::Zf, 0.1, {3, 48, 48}, 10);
  REQUIRE(a.params.size() == b.params.size());
  bool any_differs_from_c = false;
  for (const auto& [name, tensor] : a.params) {
    const Tensor& other = b.params.at(name);
    REQUIRE(tensor.size() == other.size());
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      CHECK(tensor[i] == other[i]);
    }
    const Tensor& third = c.params.at(name);
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      if (tensor[i] != third[i]) any_differs_from_c = true;
    }
  }
  CHECK(any_differs_from_c);
}

TEST_CASE("shape errors name the offending layer") {
  try {
    build_backbone(Arch::Zf, 0.25, {3, 10, 10}, 0);
    FAIL("expected a shape error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("conv1") != std::string::npos);
  }

  // too small for the vgg pooling chain
  try {
    build_backbone(Arch::Vgg16, 0.25, {3, 8, 8}, 0);
    FAIL("expected a shape error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("pool") != std::string::npos);
  }
}

TEST_CASE("receptive field recurrence") {
  SUBCASE("three stacked 3x3 convs see 7 pixels, like one 7x7 conv") {
    NetworkSpec triple;
    triple.input_shape = {1, 32, 32};
    triple.layers = {conv_layer("c1", 1, 3, 1, 1), conv_layer("c2", 1, 3, 1, 1),
                     conv_layer("c3", 1, 3, 1, 1)};
    const auto rf = receptive_field(triple);
    REQUIRE(rf.size() == 3);
    CHECK(rf[0].rf == 3);
    CHECK(rf[1].rf == 5);
    CHECK(rf[2].rf == 7);

    NetworkSpec wide;
    wide.input_shape = {1, 32, 32};
    wide.layers = {conv_layer("c", 1, 7, 1, 3)};
    CHECK(receptive_field(wide).back().rf == rf.back().rf);
  }
  SUBCASE("1x1 conv sees a single pixel") {
    NetworkSpec spec;
    spec.input_shape = {1, 8, 8};
    spec.layers = {conv_layer("c", 4, 1, 1, 0)};
    CHECK(receptive_field(spec).back().rf == 1);
  }
  SUBCASE("conv, pool, conv unrolls to 8") {
    NetworkSpec spec;
    spec.input_shape = {1, 16, 16};
    spec.layers = {conv_layer("c1", 2, 3, 1, 1), maxpool_layer("p"),
                   conv_layer("c2", 2, 3, 1, 1)};
    const auto rf = receptive_field(spec);
    CHECK(rf[0].rf == 3);
    CHECK(rf[1].rf == 4);
    CHECK(rf[2].rf == 8);
  }
  SUBCASE("elementwise layers change nothing") {
    NetworkSpec spec;
    spec.input_shape = {1, 8, 8};
    spec.layers = {conv_layer("c", 2, 3, 1, 1), relu_layer("r")};
    const auto rf = receptive_field(spec);
    CHECK(rf[0].rf == rf[1].rf);
  }
  SUBCASE("fully connected layers are out of range") {
    NetworkSpec spec;
    spec.input_shape = {1, 8, 8};
    spec.layers = {conv_layer("c", 2, 3, 1, 1),
                   fully_connected_layer("fc", 10)};
    CHECK_THROWS_AS(receptive_field(spec), std::invalid_argument);
  }
}

TEST_CASE("forward: zero input stays zero through a relu stack") {
  NetworkSpec spec = build_backbone(Arch::Zf, 0.05, {3, 48, 48}, 3);
  const Tensor zero({3, 48, 48});
  const auto acts = forward(spec, zero);
  const Tensor& out = acts.back();
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("forward is deterministic") {
  NetworkSpec spec = build_backbone(Arch::CnnM, 0.05, {3, 32, 32}, 5);
  Rng rng(6);
  Tensor input({3, 32, 32});
  for (std::size_t i = 0; i < input.size(); ++i) input[i] = rng.uniform(-1, 1);
  const auto a = forward(spec, input);
  const auto b = forward(spec, input);
  for (std::size_t i = 0; i < a.back().size(); ++i) {
    CHECK(a.back()[i] == b.back()[i]);
  }
}

TEST_CASE("backward: single linear layer matches the hand derivative") {
  NetworkSpec spec;
  spec.input_shape = {3};
  spec.layers = {fully_connected_layer("fc", 2)};
  spec.params["fc.weight"] = Tensor({2, 3}, {1.0, 2.0, 3.0, -1.0, 0.5, 4.0});
  spec.params["fc.bias"] = Tensor({2}, {0.1, -0.2});

  const Tensor input({3}, {0.5, -1.0, 2.0});
  const auto acts = forward(spec, input);
  const Tensor loss_grad({2}, {1.0, -2.0});
  const Gradients grads = backward(spec, acts, loss_grad);

  // dW[o][i] = g[o] * x[i]
  const Tensor& dw = grads.params.at("fc.weight");
  CHECK(dw[0] == 0.5);
  CHECK(dw[1] == -1.0);
  CHECK(dw[2] == 2.0);
  CHECK(dw[3] == -1.0);
  CHECK(dw[4] == 2.0);
  CHECK(dw[5] == -4.0);
  // dx[i] = sum_o g[o] W[o][i]
  CHECK(grads.input[0] == 1.0 * 1.0 + (-2.0) * (-1.0));
  CHECK(grads.input[1] == 1.0 * 2.0 + (-2.0) * 0.5);
  CHECK(grads.input[2] == 1.0 * 3.0 + (-2.0) * 4.0);
  const Tensor& db = grads.params.at("fc.bias");
  CHECK(db[0] == 1.0);
  CHECK(db[1] == -2.0);
}

TEST_CASE("full scaled zf network passes the finite-difference check") {
  for (std::uint64_t seed = 0; seed < 2; ++seed) {
    NetworkSpec spec = build_backbone(Arch::Zf, 0.05, {3, 48, 48}, seed);
    spec.layers.push_back(fully_connected_layer("fc", 4));
    initialize_params(spec, seed);

    Rng rng(mix_seed(42, seed));
    Tensor input({3, 48, 48});
    for (std::size_t i = 0; i < input.size(); ++i) {
      input[i] = rng.uniform(-1.0, 1.0);
    }
    const std::size_t label = rng.below(4);

    const auto loss_value = [&]() {
      const auto acts = forward(spec, input);
      return softmax_cross_entropy(acts.back(), label).loss;
    };

    const auto acts = forward(spec, input);
    const auto sce = softmax_cross_entropy(acts.back(), label);
    const Gradients grads = backward(spec, acts, sce.grad_logits);

    for (auto& [name, tensor] : spec.params) {
      const Tensor& analytic = grads.params.at(name);
      const std::size_t step = std::max<std::size_t>(1, tensor.size() / 4);
      for (std::size_t i = 0; i < tensor.size(); i += step) {
        const double fd = oracles::central_difference(loss_value, tensor[i]);
        CHECK(oracles::gradients_match(analytic[i], fd));
      }
    }
  }
}

TEST_CASE("a linearly separable toy problem trains below 0.1 cross-entropy") {
  NetworkSpec spec;
  spec.input_shape = {2};
  spec.layers = {fully_connected_layer("fc", 2)};
  initialize_params(spec, 12);

  Rng rng(13);
  std::vector<Tensor> samples;
  std::vector<std::size_t> labels;
  for (int i = 0; i < 40; ++i) {
    const std::size_t label = i % 2;
    const double sign = label == 0 ? 1.0 : -1.0;
    samples.push_back(Tensor({2}, {sign * 2.0 + rng.gaussian(0, 0.3),
                                   sign * 2.0 + rng.gaussian(0, 0.3)}));
    labels.push_back(label);
  }

  TrainConfig config;
  config.learning_rate = 0.001;
  config.momentum = 0.9;
  ParamMap velocity;
  double mean_loss = 0.0;
  for (int iter = 0; iter < 500; ++iter) {
    ParamMap grads;
    mean_loss = 0.0;
    for (std::size_t s = 0; s < samples.size(); ++s) {
      const auto acts = forward(spec, samples[s]);
      const auto sce = softmax_cross_entropy(acts.back(), labels[s]);
      mean_loss += sce.loss / static_cast<double>(samples.size());
      Tensor scaled(sce.grad_logits.shape());
      for (std::size_t i = 0; i < scaled.size(); ++i) {
        scaled[i] = sce.grad_logits[i] / static_cast<double>(samples.size());
      }
      const Gradients g = backward(spec, acts, scaled);
      for (const auto& [name, tensor] : g.params) {
        auto it = grads.find(name);
        if (it == grads.end()) {
          grads[name] = tensor;
        } else {
          for (std::size_t i = 0; i < tensor.size(); ++i) {
            it->second[i] += tensor[i];
          }
        }
      }
    }
    sgd_step(spec.params, grads, config, velocity);
  }
  CHECK(mean_loss < 0.1);
}

TEST_CASE("feature_stride reports total downsampling") {
  CHECK(feature_stride(build_backbone(Arch::Zf, 0.1, {3, 96, 96}, 0)) == 12);
  CHECK(feature_stride(build_backbone(Arch::CnnM, 0.1, {3, 96, 96}, 0)) == 8);
  CHECK(feature_stride(build_backbone(Arch::Vgg16, 0.1, {3, 96, 96}, 0)) == 16);
}
