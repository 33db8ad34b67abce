#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tangma/autodiff.hpp"
#include "tangma/ops.hpp"
#include "tangma/tensor.hpp"

namespace tangma {

/// Output extent of a convolution or pooling window along one axis:
/// (W - K + 2P) / S + 1, which must be a positive integer.
inline std::size_t conv_output_size(std::size_t input, std::size_t kernel, std::size_t stride, std::size_t padding) {
  const std::size_t padded = input + 2 * padding;
  if (stride == 0 || kernel == 0 || padded < kernel || (padded - kernel) % stride != 0) {
    throw ShapeError("conv output size (W - K + 2P)/S + 1 is not a positive integer for W=" + std::to_string(input) +
                     " K=" + std::to_string(kernel) + " P=" + std::to_string(padding) +
                     " S=" + std::to_string(stride));
  }
  return (padded - kernel) / stride + 1;
}

template <typename T>
struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
  Var<T> weights;  // [out x in x K x K]
  Var<T> bias;     // [out]

  std::size_t patch_size() const { return in_channels * kernel * kernel; }
};

namespace kernels {

// Gathers the K x K patches of one sample [C x H x W] into
// cols [(C K K) x (Ho Wo)]; out-of-bounds taps read as zero.
template <typename T>
void im2col(const T* image, std::size_t channels, std::size_t height, std::size_t width, std::size_t kernel,
            std::size_t stride, std::size_t padding, std::size_t out_h, std::size_t out_w, T* cols) {
  const std::size_t plane = out_h * out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < kernel; ++ky) {
      for (std::size_t kx = 0; kx < kernel; ++kx) {
        T* row = cols + ((c * kernel + ky) * kernel + kx) * plane;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(padding);
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(padding);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(height) &&
                                ix < static_cast<std::ptrdiff_t>(width);
            row[oy * out_w + ox] = inside ? image[(c * height + static_cast<std::size_t>(iy)) * width +
                                                  static_cast<std::size_t>(ix)]
                                          : T{0};
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds patch gradients back onto the image.
template <typename T>
void col2im(const T* cols, std::size_t channels, std::size_t height, std::size_t width, std::size_t kernel,
            std::size_t stride, std::size_t padding, std::size_t out_h, std::size_t out_w, T* image) {
  const std::size_t plane = out_h * out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < kernel; ++ky) {
      for (std::size_t kx = 0; kx < kernel; ++kx) {
        const T* row = cols + ((c * kernel + ky) * kernel + kx) * plane;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(padding);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width)) continue;
            image[(c * height + static_cast<std::size_t>(iy)) * width + static_cast<std::size_t>(ix)] +=
                row[oy * out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace kernels

/// 2-D cross-correlation plus per-channel bias.
/// x [B x C x H x W] -> [B x out x Ho x Wo], lowered per sample to
/// W [out x CKK] * cols [CKK x HoWo].
template <typename T>
Var<T> conv2d(const Var<T>& x, const ConvSpec<T>& spec) {
  const auto& s = x.shape();
  if (s.size() != 4) throw ShapeError("conv2d: expected [B x C x H x W] input, got " + to_string(s));
  if (s[1] != spec.in_channels) {
    throw ShapeError("conv2d: input has " + std::to_string(s[1]) + " channels, layer expects " +
                     std::to_string(spec.in_channels));
  }
  const Shape wshape{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel};
  if (spec.weights.shape() != wshape || spec.bias.numel() != spec.out_channels) {
    throw ShapeError("conv2d: weights " + to_string(spec.weights.shape()) + " / bias " +
                     to_string(spec.bias.shape()) + " do not match " + to_string(wshape));
  }
  const std::size_t batch = s[0], channels = s[1], height = s[2], width = s[3];
  const std::size_t out_h = conv_output_size(height, spec.kernel, spec.stride, spec.padding);
  const std::size_t out_w = conv_output_size(width, spec.kernel, spec.stride, spec.padding);
  const std::size_t out_c = spec.out_channels, patch = spec.patch_size(), plane = out_h * out_w;
  const std::size_t in_sample = channels * height * width, out_sample = out_c * plane;
  const std::size_t kernel = spec.kernel, stride = spec.stride, padding = spec.padding;

  std::vector<T> cols(batch * patch * plane);
  Tensor<T> out({batch, out_c, out_h, out_w});
  auto o = out.mutable_data();
  const T* xv = x.value().data().data();
  const T* wv = spec.weights.value().data().data();
  const auto bv = spec.bias.value().data();
  for (std::size_t n = 0; n < batch; ++n) {
    T* cn = cols.data() + n * patch * plane;
    kernels::im2col(xv + n * in_sample, channels, height, width, kernel, stride, padding, out_h, out_w, cn);
    T* on = o.data() + n * out_sample;
    kernels::gemm(kernels::Trans::No, kernels::Trans::No, out_c, plane, patch, wv, cn, on, false);
    for (std::size_t c = 0; c < out_c; ++c)
      for (std::size_t i = 0; i < plane; ++i) on[c * plane + i] += bv[c];
  }

  return make_result<T>(
      "conv2d", std::move(out), {x, spec.weights, spec.bias},
      [=, cols = std::move(cols)](Node<T>& self) {
        auto& X = *self.inputs[0];
        auto& W = *self.inputs[1];
        auto& B = *self.inputs[2];
        const T* g = self.grad.data();
        if (W.requires_grad) {
          T* gw = W.grad_buffer().data();
          for (std::size_t n = 0; n < batch; ++n)  // dW += dY_n cols_n^T
            kernels::gemm(kernels::Trans::No, kernels::Trans::Yes, out_c, patch, plane, g + n * out_sample,
                          cols.data() + n * patch * plane, gw, true);
        }
        if (B.requires_grad) {
          auto gb = B.grad_buffer();
          for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t c = 0; c < out_c; ++c)
              for (std::size_t i = 0; i < plane; ++i) gb[c] += g[n * out_sample + c * plane + i];
        }
        if (X.requires_grad) {
          T* gx = X.grad_buffer().data();
          std::vector<T> dcols(patch * plane);
          for (std::size_t n = 0; n < batch; ++n) {  // dcols = W^T dY_n
            kernels::gemm(kernels::Trans::Yes, kernels::Trans::No, patch, plane, out_c, W.value.data().data(),
                          g + n * out_sample, dcols.data(), false);
            kernels::col2im(dcols.data(), channels, height, width, kernel, stride, padding, out_h, out_w,
                            gx + n * in_sample);
          }
        }
      });
}

/// Non-overlapping max pooling. Each output's gradient goes to exactly one
/// input: the first maximum of its window in row-major order.
template <typename T>
Var<T> maxpool2d(const Var<T>& x, std::size_t kernel = 2, std::size_t stride = 2) {
  const auto& s = x.shape();
  if (s.size() != 4) throw ShapeError("maxpool2d: expected [B x C x H x W] input, got " + to_string(s));
  if (kernel == 2 && stride == 2 && (s[2] % 2 != 0 || s[3] % 2 != 0)) {
    throw ShapeError("maxpool2d: odd spatial size " + to_string(s) + " with kernel 2 stride 2");
  }
  const std::size_t planes = s[0] * s[1], height = s[2], width = s[3];
  const std::size_t out_h = conv_output_size(height, kernel, stride, 0);
  const std::size_t out_w = conv_output_size(width, kernel, stride, 0);
  Tensor<T> out({s[0], s[1], out_h, out_w});
  auto o = out.mutable_data();
  std::vector<std::uint32_t> argmax(out.numel());
  const auto xv = x.value().data();
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t in_base = p * height * width;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        std::size_t best = in_base + (oy * stride) * width + ox * stride;
        for (std::size_t ky = 0; ky < kernel; ++ky)
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const std::size_t idx = in_base + (oy * stride + ky) * width + ox * stride + kx;
            if (xv[idx] > xv[best]) best = idx;
          }
        const std::size_t oi = (p * out_h + oy) * out_w + ox;
        o[oi] = xv[best];
        argmax[oi] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return make_result<T>("maxpool2d", std::move(out), {x}, [argmax = std::move(argmax)](Node<T>& self) {
    auto gx = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += self.grad[i];
  });
}

/// x [B x n] * W^T [n x m] + b [m].
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weights, const Var<T>& bias) {
  const auto& sx = x.shape();
  const auto& sw = weights.shape();
  if (sx.size() != 2 || sw.size() != 2 || sx[1] != sw[1] || bias.numel() != sw[0]) {
    throw ShapeError("linear: input " + to_string(sx) + ", weights " + to_string(sw) + ", bias " +
                     to_string(bias.shape()));
  }
  const std::size_t batch = sx[0], in = sx[1], out_dim = sw[0];
  Tensor<T> out({batch, out_dim});
  T* o = out.mutable_data().data();
  kernels::gemm(kernels::Trans::No, kernels::Trans::Yes, batch, out_dim, in, x.value().data().data(),
                weights.value().data().data(), o, false);
  const auto bv = bias.value().data();
  for (std::size_t r = 0; r < batch; ++r)
    for (std::size_t c = 0; c < out_dim; ++c) o[r * out_dim + c] += bv[c];
  return make_result<T>("linear", std::move(out), {x, weights, bias}, [batch, in, out_dim](Node<T>& self) {
    auto& X = *self.inputs[0];
    auto& W = *self.inputs[1];
    auto& B = *self.inputs[2];
    const T* g = self.grad.data();
    if (X.requires_grad)  // dX = dY W
      kernels::gemm(kernels::Trans::No, kernels::Trans::No, batch, in, out_dim, g, W.value.data().data(),
                    X.grad_buffer().data(), true);
    if (W.requires_grad)  // dW = dY^T X
      kernels::gemm(kernels::Trans::Yes, kernels::Trans::No, out_dim, in, batch, g, X.value.data().data(),
                    W.grad_buffer().data(), true);
    if (B.requires_grad) {
      auto gb = B.grad_buffer();
      for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t c = 0; c < out_dim; ++c) gb[c] += g[r * out_dim + c];
    }
  });
}

enum class Mode { Train, Eval };

struct DropoutSpec {
  double p = 0.5;
  Mode mode = Mode::Train;
};

/// Inverted dropout: in training, each element is zeroed with probability p
/// and survivors are scaled by 1/(1-p). Evaluation is the identity.
template <typename T, typename Rng>
Var<T> dropout(const Var<T>& x, const DropoutSpec& spec, Rng& rng) {
  if (!(spec.p >= 0.0 && spec.p < 1.0)) throw std::invalid_argument("dropout: p must lie in [0, 1)");
  if (spec.mode == Mode::Eval || spec.p == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - spec.p));
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const std::size_t n = x.numel();
  std::vector<T> mask(n);
  for (auto& m : mask) m = uniform(rng) < spec.p ? T{0} : keep_scale;
  Tensor<T> out(x.shape());
  auto o = out.mutable_data();
  const auto xv = x.value().data();
  for (std::size_t i = 0; i < n; ++i) o[i] = xv[i] * mask[i];
  return make_result<T>("dropout", std::move(out), {x}, [mask = std::move(mask)](Node<T>& self) {
    auto gx = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < mask.size(); ++i) gx[i] += self.grad[i] * mask[i];
  });
}

}  // namespace tangma
