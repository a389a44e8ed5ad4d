#pragma once

#include <cstddef>

#include "fishdet/tensor.hpp"

namespace fishdet {

/// Cross-correlation of input [C,H,W] with kernels [K,C,kh,kw]. The output
/// spatial size (H + 2*pad - kh)/stride + 1 must be a positive integer;
/// anything else is a shape error. bias is [K] or empty.
Tensor conv2d_forward(const Tensor& input, const Tensor& kernels,
                      const Tensor& bias, std::size_t stride, std::size_t pad);

struct Conv2dGrads {
  Tensor input;
  Tensor kernels;
  Tensor bias;
};
Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels,
                            std::size_t stride, std::size_t pad,
                            const Tensor& grad_out);

Tensor relu_forward(const Tensor& input);
/// Gradient passes where the forward input was > 0 and is dropped elsewhere.
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

/// Per-window max over [C,H,W]; (H - size) and (W - size) must divide the
/// stride. Gradient routes to the argmax cell, ties to the first cell in
/// row-major scan order.
Tensor maxpool_forward(const Tensor& input, std::size_t size = 2,
                       std::size_t stride = 2);
Tensor maxpool_backward(const Tensor& input, std::size_t size,
                        std::size_t stride, const Tensor& grad_out);

/// Affine map of a rank-1 input: weights [out,in] * input [in] + bias [out].
/// bias may be empty.
Tensor fully_connected_forward(const Tensor& input, const Tensor& weights,
                               const Tensor& bias);

struct FullyConnectedGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};
FullyConnectedGrads fully_connected_backward(const Tensor& input,
                                             const Tensor& weights,
                                             const Tensor& grad_out);

/// Max-subtracted softmax over a rank-1 tensor.
Tensor softmax(const Tensor& logits);

struct SoftmaxCrossEntropyResult {
  double loss;
  Tensor probs;
  Tensor grad_logits;  // probs - one_hot(true_label)
};
/// Negative log-likelihood of true_label under softmax(logits); requires at
/// least two classes and a label in range.
SoftmaxCrossEntropyResult softmax_cross_entropy(const Tensor& logits,
                                                std::size_t true_label);

struct SmoothL1Result {
  double loss;
  Tensor grad_pred;
};
/// Sum over components of 0.5*x^2 for |x| < 1 and |x| - 0.5 otherwise,
/// where x = pred - target.
SmoothL1Result smooth_l1(const Tensor& pred, const Tensor& target);

/// cls_loss + lambda * reg_loss. The regression term is accumulated by the
/// caller over positive samples only, so an all-negative batch contributes
/// exactly zero.
double multi_task_loss(double cls_loss, double reg_loss, double lambda);

}  // namespace fishdet
