#pragma once

#include <cstdint>
#include <random>

#include "quicksilver/nn/tensor.hpp"

namespace quicksilver::nn {

/// Cubic kernel convolution over 2 or 3 spatial axes. Weights are
/// (out, in, k...) for ordinary and (in, out, k...) for transposed layers.
struct ConvSpec {
  int dim = 2;
  int in_ch = 1;
  int out_ch = 1;
  int kernel = 3;
  int stride = 1;
  int pad = 0;
  int output_pad = 0;  // transposed only: extra trailing extent
  bool transposed = false;

  int out_extent(int in) const;
  std::vector<int> weight_shape() const;
  void validate() const;
};

template <class T>
Tensor<T> conv_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, const ConvSpec& spec);

/// Gradients for input (skipped when gx is null), weight and bias; gw and gb
/// are overwritten.
template <class T>
void conv_backward(const Tensor<T>& x, const Tensor<T>& w, const ConvSpec& spec, const Tensor<T>& gy, Tensor<T>* gx,
                   Tensor<T>& gw, Tensor<T>& gb);

/// Per-channel PReLU on (batch, channels, ...): x if x > 0, else slope[c] * x.
template <class T>
Tensor<T> prelu_forward(const Tensor<T>& x, const Tensor<T>& slope);

template <class T>
void prelu_backward(const Tensor<T>& x, const Tensor<T>& slope, const Tensor<T>& gy, Tensor<T>& gx, Tensor<T>& gslope);

/// Inverted dropout mask: 0 with probability p, else 1 / (1 - p).
template <class T>
Tensor<T> dropout_mask(const std::vector<int>& shape, double p, std::mt19937_64& rng);

/// Mean absolute difference. `grad` (optional) receives d loss / d pred with
/// subgradient 0 where pred == truth.
template <class T>
double l1_loss(const Tensor<T>& pred, const Tensor<T>& truth, Tensor<T>* grad = nullptr);

/// Uniform double in [0, 1) from 53 random bits, identical across platforms.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace quicksilver::nn
