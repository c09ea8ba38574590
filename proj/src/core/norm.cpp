#include <cmath>

#include "convtrans/errors.hpp"
#include "convtrans/ops.hpp"

namespace cts {

using detail::grad_of;

template <class T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                       BatchNormState<T>& state, bool training) {
  if (x.rank() != 4) throw ConfigError("batch_norm2d: expected 4-d input, got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c} ||
      state.running_mean.shape() != Shape{c} || state.running_var.shape() != Shape{c})
    throw ConfigError("batch_norm2d: parameter shapes do not match " + std::to_string(c) + " channels");
  const std::size_t count = n * hw;
  if (training && count < 2)
    throw ConfigError("batch_norm2d: training mode needs at least 2 values per channel");

  std::vector<T> mean(c), rstd(c);
  auto xd = x.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (training) {
      // two-pass moments in double for stability in single precision
      double s = 0;
      for (std::size_t s_i = 0; s_i < n; ++s_i) {
        const T* p = xd.data() + (s_i * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(count);
      double ss = 0;
      for (std::size_t s_i = 0; s_i < n; ++s_i) {
        const T* p = xd.data() + (s_i * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) ss += (p[i] - mu) * (p[i] - mu);
      }
      const double var = ss / static_cast<double>(count);
      mean[ch] = static_cast<T>(mu);
      rstd[ch] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(state.eps)));
      const double unbiased = ss / static_cast<double>(count - 1);
      auto& rm = state.running_mean[ch];
      auto& rv = state.running_var[ch];
      rm = (T(1) - state.momentum) * rm + state.momentum * static_cast<T>(mu);
      rv = (T(1) - state.momentum) * rv + state.momentum * static_cast<T>(unbiased);
    } else {
      mean[ch] = state.running_mean[ch];
      rstd[ch] = T(1) / std::sqrt(state.running_var[ch] + state.eps);
    }
  }

  Tensor<T> out(x.shape());
  auto od = out.data();
  for (std::size_t s_i = 0; s_i < n; ++s_i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (s_i * c + ch) * hw;
      const T a = gamma[ch] * rstd[ch];
      const T b = beta[ch] - a * mean[ch];
      for (std::size_t i = 0; i < hw; ++i) od[base + i] = a * xd[base + i] + b;
    }

  if (detail::should_record<T>({&x, &gamma, &beta})) {
    auto xs = x.storage(), gs = gamma.storage(), bs = beta.storage(), os = out.storage();
    detail::record<T>("batch_norm2d", out, {&x, &gamma, &beta},
                      [xs, gs, bs, os, n, c, hw, count, training, mean = std::move(mean),
                       rstd = std::move(rstd)] {
      const auto& g = os->grad;
      const auto& xv = xs->data;
      for (std::size_t ch = 0; ch < c; ++ch) {
        T sum_g = 0, sum_gx = 0;
        for (std::size_t s_i = 0; s_i < n; ++s_i) {
          const std::size_t base = (s_i * c + ch) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            const T xhat = (xv[base + i] - mean[ch]) * rstd[ch];
            sum_g += g[base + i];
            sum_gx += g[base + i] * xhat;
          }
        }
        if (gs->requires_grad) grad_of(*gs)[ch] += sum_gx;
        if (bs->requires_grad) grad_of(*bs)[ch] += sum_g;
        if (!xs->requires_grad) continue;
        auto& gx = grad_of(*xs);
        const T scale = gs->data[ch] * rstd[ch];
        const T inv_count = T(1) / static_cast<T>(count);
        for (std::size_t s_i = 0; s_i < n; ++s_i) {
          const std::size_t base = (s_i * c + ch) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            if (training) {
              const T xhat = (xv[base + i] - mean[ch]) * rstd[ch];
              gx[base + i] += scale * (g[base + i] - inv_count * sum_g - xhat * inv_count * sum_gx);
            } else {
              gx[base + i] += scale * g[base + i];
            }
          }
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  const std::size_t d = x.dim(-1);
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d})
    throw ConfigError("layer_norm: parameters must have shape [" + std::to_string(d) + "]");
  const std::size_t rows = x.numel() / d;
  std::vector<T> xhat(x.numel()), rstd(rows);
  Tensor<T> out(x.shape());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* p = xd.data() + r * d;
    T mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += p[j];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (p[j] - mu) * (p[j] - mu);
    var /= static_cast<T>(d);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (p[j] - mu) * rstd[r];
      od[r * d + j] = gamma[j] * xhat[r * d + j] + beta[j];
    }
  }
  if (detail::should_record<T>({&x, &gamma, &beta})) {
    auto xs = x.storage(), gs = gamma.storage(), bs = beta.storage(), os = out.storage();
    detail::record<T>("layer_norm", out, {&x, &gamma, &beta},
                      [xs, gs, bs, os, rows, d, xhat = std::move(xhat), rstd = std::move(rstd)] {
      const auto& g = os->grad;
      if (gs->requires_grad) {
        auto& gg = grad_of(*gs);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * xhat[r * d + j];
      }
      if (bs->requires_grad) {
        auto& gb = grad_of(*bs);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
      }
      if (!xs->requires_grad) return;
      auto& gx = grad_of(*xs);
      const T inv_d = T(1) / static_cast<T>(d);
      for (std::size_t r = 0; r < rows; ++r) {
        T mean_gy = 0, mean_gy_xhat = 0;
        for (std::size_t j = 0; j < d; ++j) {
          const T gy = g[r * d + j] * gs->data[j];
          mean_gy += gy;
          mean_gy_xhat += gy * xhat[r * d + j];
        }
        mean_gy *= inv_d;
        mean_gy_xhat *= inv_d;
        for (std::size_t j = 0; j < d; ++j) {
          const T gy = g[r * d + j] * gs->data[j];
          gx[r * d + j] += rstd[r] * (gy - mean_gy - xhat[r * d + j] * mean_gy_xhat);
        }
      }
    });
  }
  return out;
}

template Tensor<float> batch_norm2d(const Tensor<float>&, const Tensor<float>&,
                                    const Tensor<float>&, BatchNormState<float>&, bool);
template Tensor<double> batch_norm2d(const Tensor<double>&, const Tensor<double>&,
                                     const Tensor<double>&, BatchNormState<double>&, bool);
template Tensor<float> layer_norm(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                  float);
template Tensor<double> layer_norm(const Tensor<double>&, const Tensor<double>&,
                                   const Tensor<double>&, double);

}  // namespace cts
