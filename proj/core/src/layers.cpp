#include "fishdet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fishdet {
namespace {

// Row-major C[m,n] += A[m,k] * B[k,n]. The j-contiguous inner loop keeps the
// compiler's vectorizer happy without any reassociation.
void gemm_accumulate(std::size_t m, std::size_t n, std::size_t k,
                     const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               std::size_t stride, std::size_t pad,
                               const char* axis) {
  const std::size_t padded = in + 2 * pad;
  if (padded < kernel) {
    throw std::invalid_argument(std::string("conv2d: kernel exceeds padded ") +
                                axis);
  }
  const std::size_t span = padded - kernel;
  if (span % stride != 0) {
    throw std::invalid_argument(
        std::string("conv2d: output ") + axis +
        " is not integral for the given kernel/stride/pad");
  }
  return span / stride + 1;
}

struct ConvShape {
  std::size_t in_c, in_h, in_w;
  std::size_t out_c, kh, kw;
  std::size_t out_h, out_w;
};

ConvShape check_conv(const Tensor& input, const Tensor& kernels,
                     std::size_t stride, std::size_t pad) {
  if (input.rank() != 3) {
    throw std::invalid_argument("conv2d: input must be [C,H,W]");
  }
  if (kernels.rank() != 4) {
    throw std::invalid_argument("conv2d: kernels must be [K,C,kh,kw]");
  }
  if (kernels.dim(1) != input.dim(0)) {
    throw std::invalid_argument("conv2d: kernel channels do not match input");
  }
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  ConvShape s{};
  s.in_c = input.dim(0);
  s.in_h = input.dim(1);
  s.in_w = input.dim(2);
  s.out_c = kernels.dim(0);
  s.kh = kernels.dim(2);
  s.kw = kernels.dim(3);
  s.out_h = conv_output_extent(s.in_h, s.kh, stride, pad, "height");
  s.out_w = conv_output_extent(s.in_w, s.kw, stride, pad, "width");
  return s;
}

// cols is [C*kh*kw, out_h*out_w]; out-of-frame taps read as zero.
std::vector<double> im2col(const Tensor& input, const ConvShape& s,
                           std::size_t stride, std::size_t pad) {
  const std::size_t rows = s.in_c * s.kh * s.kw;
  const std::size_t cols_n = s.out_h * s.out_w;
  std::vector<double> cols(rows * cols_n, 0.0);
  const double* in = input.data();
  for (std::size_t c = 0; c < s.in_c; ++c) {
    for (std::size_t ky = 0; ky < s.kh; ++ky) {
      for (std::size_t kx = 0; kx < s.kw; ++kx) {
        const std::size_t row = (c * s.kh + ky) * s.kw + kx;
        double* dst = cols.data() + row * cols_n;
        for (std::size_t oy = 0; oy < s.out_h; ++oy) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy * stride + ky) -
              static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.in_h)) continue;
          const double* src = in + (c * s.in_h + iy) * s.in_w;
          for (std::size_t ox = 0; ox < s.out_w; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * stride + kx) -
                static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.in_w)) continue;
            dst[oy * s.out_w + ox] = src[ix];
          }
        }
      }
    }
  }
  return cols;
}

void check_pool(const Tensor& input, std::size_t size, std::size_t stride) {
  if (input.rank() != 3) {
    throw std::invalid_argument("maxpool: input must be [C,H,W]");
  }
  if (size < 1 || stride < 1) {
    throw std::invalid_argument("maxpool: size and stride must be >= 1");
  }
  const std::size_t h = input.dim(1);
  const std::size_t w = input.dim(2);
  if (h < size || w < size || (h - size) % stride != 0 ||
      (w - size) % stride != 0) {
    throw std::invalid_argument(
        "maxpool: spatial dims are not divisible by the window/stride rule");
  }
}

void check_fc(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (input.rank() != 1) {
    throw std::invalid_argument("fully_connected: input must be rank 1");
  }
  if (weights.rank() != 2 || weights.dim(1) != input.dim(0)) {
    throw std::invalid_argument(
        "fully_connected: weights must be [out,in] with in matching input");
  }
  if (!bias.empty() && (bias.rank() != 1 || bias.dim(0) != weights.dim(0))) {
    throw std::invalid_argument("fully_connected: bias must be [out]");
  }
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& kernels,
                      const Tensor& bias, std::size_t stride,
                      std::size_t pad) {
  const ConvShape s = check_conv(input, kernels, stride, pad);
  if (!bias.empty() && (bias.rank() != 1 || bias.dim(0) != s.out_c)) {
    throw std::invalid_argument("conv2d: bias must be [K]");
  }
  const std::size_t ckk = s.in_c * s.kh * s.kw;
  const std::size_t hw = s.out_h * s.out_w;
  const std::vector<double> cols = im2col(input, s, stride, pad);

  Tensor out({s.out_c, s.out_h, s.out_w});
  gemm_accumulate(s.out_c, hw, ckk, kernels.data(), cols.data(), out.data());
  if (!bias.empty()) {
    for (std::size_t k = 0; k < s.out_c; ++k) {
      double* row = out.data() + k * hw;
      const double b = bias[k];
      for (std::size_t j = 0; j < hw; ++j) row[j] += b;
    }
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels,
                            std::size_t stride, std::size_t pad,
                            const Tensor& grad_out) {
  const ConvShape s = check_conv(input, kernels, stride, pad);
  if (grad_out.rank() != 3 || grad_out.dim(0) != s.out_c ||
      grad_out.dim(1) != s.out_h || grad_out.dim(2) != s.out_w) {
    throw std::invalid_argument("conv2d_backward: grad_out shape mismatch");
  }
  const std::size_t ckk = s.in_c * s.kh * s.kw;
  const std::size_t hw = s.out_h * s.out_w;
  const std::vector<double> cols = im2col(input, s, stride, pad);
  const double* go = grad_out.data();

  Conv2dGrads grads;
  grads.bias = Tensor({s.out_c});
  for (std::size_t k = 0; k < s.out_c; ++k) {
    double acc = 0.0;
    const double* row = go + k * hw;
    for (std::size_t j = 0; j < hw; ++j) acc += row[j];
    grads.bias[k] = acc;
  }

  // d/dkernels = grad_out x cols^T, accumulated column-by-column so both
  // inner walks stay contiguous.
  grads.kernels = Tensor(kernels.shape());
  {
    std::vector<double> cols_t(hw * ckk);
    for (std::size_t r = 0; r < ckk; ++r) {
      for (std::size_t j = 0; j < hw; ++j) {
        cols_t[j * ckk + r] = cols[r * hw + j];
      }
    }
    double* gk = grads.kernels.data();
    for (std::size_t j = 0; j < hw; ++j) {
      const double* col_row = cols_t.data() + j * ckk;
      for (std::size_t k = 0; k < s.out_c; ++k) {
        const double g = go[k * hw + j];
        if (g == 0.0) continue;
        double* dst = gk + k * ckk;
        for (std::size_t r = 0; r < ckk; ++r) dst[r] += g * col_row[r];
      }
    }
  }

  // d/dinput = col2im(kernels^T x grad_out)
  std::vector<double> grad_cols(ckk * hw, 0.0);
  for (std::size_t r = 0; r < ckk; ++r) {
    double* dst = grad_cols.data() + r * hw;
    for (std::size_t k = 0; k < s.out_c; ++k) {
      const double a = kernels[k * ckk + r];
      if (a == 0.0) continue;
      const double* src = go + k * hw;
      for (std::size_t j = 0; j < hw; ++j) dst[j] += a * src[j];
    }
  }
  grads.input = Tensor(input.shape());
  double* gi = grads.input.data();
  for (std::size_t c = 0; c < s.in_c; ++c) {
    for (std::size_t ky = 0; ky < s.kh; ++ky) {
      for (std::size_t kx = 0; kx < s.kw; ++kx) {
        const std::size_t row = (c * s.kh + ky) * s.kw + kx;
        const double* src = grad_cols.data() + row * hw;
        for (std::size_t oy = 0; oy < s.out_h; ++oy) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy * stride + ky) -
              static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.in_h)) continue;
          double* drow = gi + (c * s.in_h + iy) * s.in_w;
          for (std::size_t ox = 0; ox < s.out_w; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * stride + kx) -
                static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.in_w)) continue;
            drow[ix] += src[oy * s.out_w + ox];
          }
        }
      }
    }
  }
  return grads;
}

Tensor relu_forward(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    out[i] = input[i] > 0.0 ? input[i] : 0.0;
  }
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
  if (!input.same_shape(grad_out)) {
    throw std::invalid_argument("relu_backward: shape mismatch");
  }
  Tensor grad(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    grad[i] = input[i] > 0.0 ? grad_out[i] : 0.0;
  }
  return grad;
}

Tensor maxpool_forward(const Tensor& input, std::size_t size,
                       std::size_t stride) {
  check_pool(input, size, stride);
  const std::size_t c_n = input.dim(0);
  const std::size_t h = input.dim(1);
  const std::size_t w = input.dim(2);
  const std::size_t oh = (h - size) / stride + 1;
  const std::size_t ow = (w - size) / stride + 1;
  Tensor out({c_n, oh, ow});
  const double* in = input.data();
  for (std::size_t c = 0; c < c_n; ++c) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double best = in[(c * h + oy * stride) * w + ox * stride];
        for (std::size_t ky = 0; ky < size; ++ky) {
          for (std::size_t kx = 0; kx < size; ++kx) {
            const double v =
                in[(c * h + oy * stride + ky) * w + ox * stride + kx];
            if (v > best) best = v;
          }
        }
        out[(c * oh + oy) * ow + ox] = best;
      }
    }
  }
  return out;
}

Tensor maxpool_backward(const Tensor& input, std::size_t size,
                        std::size_t stride, const Tensor& grad_out) {
  check_pool(input, size, stride);
  const std::size_t c_n = input.dim(0);
  const std::size_t h = input.dim(1);
  const std::size_t w = input.dim(2);
  const std::size_t oh = (h - size) / stride + 1;
  const std::size_t ow = (w - size) / stride + 1;
  if (grad_out.rank() != 3 || grad_out.dim(0) != c_n || grad_out.dim(1) != oh ||
      grad_out.dim(2) != ow) {
    throw std::invalid_argument("maxpool_backward: grad_out shape mismatch");
  }
  Tensor grad(input.shape());
  const double* in = input.data();
  for (std::size_t c = 0; c < c_n; ++c) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best_idx = (c * h + oy * stride) * w + ox * stride;
        double best = in[best_idx];
        for (std::size_t ky = 0; ky < size; ++ky) {
          for (std::size_t kx = 0; kx < size; ++kx) {
            const std::size_t idx =
                (c * h + oy * stride + ky) * w + ox * stride + kx;
            if (in[idx] > best) {  // strict: first cell wins ties
              best = in[idx];
              best_idx = idx;
            }
          }
        }
        grad[best_idx] += grad_out[(c * oh + oy) * ow + ox];
      }
    }
  }
  return grad;
}

Tensor fully_connected_forward(const Tensor& input, const Tensor& weights,
                               const Tensor& bias) {
  check_fc(input, weights, bias);
  const std::size_t out_n = weights.dim(0);
  const std::size_t in_n = weights.dim(1);
  Tensor out({out_n});
  const double* x = input.data();
  for (std::size_t o = 0; o < out_n; ++o) {
    const double* wrow = weights.data() + o * in_n;
    // four-way unrolled dot product; fixed summation order keeps runs
    // reproducible
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= in_n; i += 4) {
      a0 += wrow[i] * x[i];
      a1 += wrow[i + 1] * x[i + 1];
      a2 += wrow[i + 2] * x[i + 2];
      a3 += wrow[i + 3] * x[i + 3];
    }
    for (; i < in_n; ++i) a0 += wrow[i] * x[i];
    out[o] = (a0 + a1) + (a2 + a3);
    if (!bias.empty()) out[o] += bias[o];
  }
  return out;
}

FullyConnectedGrads fully_connected_backward(const Tensor& input,
                                             const Tensor& weights,
                                             const Tensor& grad_out) {
  check_fc(input, weights, Tensor{});
  const std::size_t out_n = weights.dim(0);
  const std::size_t in_n = weights.dim(1);
  if (grad_out.rank() != 1 || grad_out.dim(0) != out_n) {
    throw std::invalid_argument(
        "fully_connected_backward: grad_out shape mismatch");
  }
  FullyConnectedGrads grads;
  grads.weights = Tensor(weights.shape());
  grads.bias = Tensor({out_n});
  grads.input = Tensor(input.shape());
  for (std::size_t o = 0; o < out_n; ++o) {
    const double g = grad_out[o];
    grads.bias[o] = g;
    double* gw = grads.weights.data() + o * in_n;
    const double* wrow = weights.data() + o * in_n;
    double* gx = grads.input.data();
    const double* x = input.data();
    for (std::size_t i = 0; i < in_n; ++i) {
      gw[i] = g * x[i];
      gx[i] += g * wrow[i];
    }
  }
  return grads;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 1 || logits.size() == 0) {
    throw std::invalid_argument("softmax: logits must be a nonempty vector");
  }
  Tensor probs(logits.shape());
  double max_logit = logits[0];
  for (std::size_t i = 1; i < logits.size(); ++i) {
    max_logit = std::max(max_logit, logits[i]);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - max_logit);
    sum += probs[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) probs[i] /= sum;
  return probs;
}

SoftmaxCrossEntropyResult softmax_cross_entropy(const Tensor& logits,
                                                std::size_t true_label) {
  if (logits.rank() != 1 || logits.size() < 2) {
    throw std::invalid_argument(
        "softmax_cross_entropy: needs at least two classes");
  }
  if (true_label >= logits.size()) {
    throw std::out_of_range("softmax_cross_entropy: label out of range");
  }
  double max_logit = logits[0];
  for (std::size_t i = 1; i < logits.size(); ++i) {
    max_logit = std::max(max_logit, logits[i]);
  }
  double sum = 0.0;
  Tensor probs(logits.shape());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - max_logit);
    sum += probs[i];
  }
  const double loss = std::log(sum) - (logits[true_label] - max_logit);
  SoftmaxCrossEntropyResult result;
  result.loss = loss;
  result.grad_logits = Tensor(logits.shape());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] /= sum;
    result.grad_logits[i] = probs[i] - (i == true_label ? 1.0 : 0.0);
  }
  result.probs = std::move(probs);
  return result;
}

SmoothL1Result smooth_l1(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target)) {
    throw std::invalid_argument("smooth_l1: shape mismatch");
  }
  SmoothL1Result result;
  result.loss = 0.0;
  result.grad_pred = Tensor(pred.shape());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double x = pred[i] - target[i];
    const double ax = std::abs(x);
    if (ax < 1.0) {
      result.loss += 0.5 * x * x;
      result.grad_pred[i] = x;
    } else {
      result.loss += ax - 0.5;
      result.grad_pred[i] = x > 0.0 ? 1.0 : -1.0;
    }
  }
  return result;
}

double multi_task_loss(double cls_loss, double reg_loss, double lambda) {
  if (!(lambda >= 0.0)) {
    throw std::invalid_argument("multi_task_loss: lambda must be >= 0");
  }
  return cls_loss + lambda * reg_loss;
}

}  // namespace fishdet
