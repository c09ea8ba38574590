#pragma once

#include <cstddef>
#include <vector>

#include "convtrans/rng.hpp"
#include "convtrans/tensor.hpp"

namespace cts {

// Differentiable tensor operations. Every op records itself on the active
// tape when at least one input requires grad; otherwise it is a plain
// forward computation. Shape violations throw ConfigError.

/// a + b, where b's shape equals a's shape or a trailing suffix of it
/// (b is then broadcast over a's leading dimensions).
template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
/// Elementwise product of equally shaped tensors.
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> scale(const Tensor<T>& x, T factor);
/// Sum of all elements, shape [1].
template <class T>
Tensor<T> sum(const Tensor<T>& x);
template <class T>
Tensor<T> mean(const Tensor<T>& x);

template <class T>
Tensor<T> relu(const Tensor<T>& x);
/// Max-shifted softmax over the last dimension.
template <class T>
Tensor<T> softmax_lastdim(const Tensor<T>& x);
/// Inverted dropout: survivors are scaled by 1/(1-p). Identity when
/// !training or p == 0.
template <class T>
Tensor<T> dropout(const Tensor<T>& x, T p, bool training, RngState& rng);

/// x[..., d_in] * weight[d_in, d_out] + bias[d_out].
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);
/// Batched matrix product over matching leading dimensions:
/// a[..., m, k] * b[..., k, n], or b[..., n, k] transposed when transpose_b.
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);
/// out.shape[i] = x.shape[perm[i]].
template <class T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm);
/// Merges dimensions [start, end] (inclusive) into one.
template <class T>
Tensor<T> flatten(const Tensor<T>& x, std::size_t start, std::size_t end);

/// Cross-correlation of x[N, C_in, H, W] with weight[C_out, C_in, k, k],
/// zero padding on every side, stride 1.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t padding);
/// 2x2 max pooling, stride 2. Ties route the gradient to the first element
/// of the window in row-major order.
template <class T>
Tensor<T> max_pool2(const Tensor<T>& x);

template <class T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);

  static BatchNormState identity(std::size_t channels) {
    return {Tensor<T>::zeros({channels}), Tensor<T>::ones({channels})};
  }
};

/// Per-channel normalization of x[N, C, H, W]. Training mode uses biased
/// batch statistics and updates the running estimates (unbiased variance);
/// eval mode uses the running estimates.
template <class T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                       BatchNormState<T>& state, bool training);
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5));

}  // namespace cts
