#include <algorithm>
#include <limits>

#include "convtrans/errors.hpp"
#include "convtrans/ops.hpp"
#include "gemm.hpp"

namespace cts {

using detail::grad_of;

namespace {

struct ConvGeometry {
  std::size_t channels, height, width, kernel, padding, out_h, out_w;
  std::size_t rows() const { return channels * kernel * kernel; }
  std::size_t cols() const { return out_h * out_w; }
};

// cols[(c*k + ky)*k + kx][oy*out_w + ox] = x[c][oy+ky-pad][ox+kx-pad], zero outside.
template <class T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ky = 0; ky < g.kernel; ++ky)
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        T* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * g.cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(g.padding);
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = x + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(g.padding);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) ? T(0) : src[ix];
          }
        }
      }
}

template <class T>
void col2im_add(const T* cols, const ConvGeometry& g, T* dx) {
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ky = 0; ky < g.kernel; ++ky)
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const T* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * g.cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(g.padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          T* dst = dx + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          const T* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(g.padding);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) dst[ix] += src[ox];
          }
        }
      }
}

}  // namespace

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t padding) {
  if (x.rank() != 4 || weight.rank() != 4)
    throw ConfigError("conv2d: expected 4-d input and weight, got " + shape_str(x.shape()) +
                      " and " + shape_str(weight.shape()));
  if (x.dim(1) != weight.dim(1))
    throw ConfigError("conv2d: input channels of " + shape_str(x.shape()) +
                      " do not match weight " + shape_str(weight.shape()));
  const std::size_t k = weight.dim(2);
  if (weight.dim(3) != k || k % 2 == 0)
    throw ConfigError("conv2d: kernel must be square and odd, got " + shape_str(weight.shape()));
  const std::size_t c_out = weight.dim(0);
  if (bias.rank() != 1 || bias.dim(0) != c_out)
    throw ConfigError("conv2d: bias " + shape_str(bias.shape()) + " does not match weight " +
                      shape_str(weight.shape()));
  const std::size_t n = x.dim(0);
  if (x.dim(2) + 2 * padding < k || x.dim(3) + 2 * padding < k)
    throw ConfigError("conv2d: kernel larger than padded input " + shape_str(x.shape()));
  ConvGeometry g{x.dim(1), x.dim(2), x.dim(3), k, padding, x.dim(2) + 2 * padding - k + 1,
                 x.dim(3) + 2 * padding - k + 1};
  const bool pointwise = (k == 1 && padding == 0);

  Tensor<T> out({n, c_out, g.out_h, g.out_w});
  const std::size_t in_size = g.channels * g.height * g.width;
  const std::size_t out_size = c_out * g.cols();
  const std::size_t col_size = g.rows() * g.cols();
  std::vector<T> cols(pointwise ? 0 : n * col_size);
  auto od = out.data();
  for (std::size_t s = 0; s < n; ++s) {
    T* o = od.data() + s * out_size;
    for (std::size_t c = 0; c < c_out; ++c) std::fill(o + c * g.cols(), o + (c + 1) * g.cols(), bias[c]);
    const T* src = x.data().data() + s * in_size;
    if (!pointwise) {
      im2col(src, g, cols.data() + s * col_size);
      src = cols.data() + s * col_size;
    }
    detail::gemm<T>(false, false, c_out, g.cols(), g.rows(), weight.data().data(), src, o, true);
  }

  if (detail::should_record<T>({&x, &weight, &bias})) {
    auto xs = x.storage(), ws = weight.storage(), bs = bias.storage(), os = out.storage();
    detail::record<T>("conv2d", out, {&x, &weight, &bias},
                      [xs, ws, bs, os, g, n, c_out, in_size, out_size, col_size, pointwise,
                       cols = std::move(cols)] {
      const auto& grad = os->grad;
      std::vector<T> dcols(pointwise ? 0 : col_size);
      for (std::size_t s = 0; s < n; ++s) {
        const T* go = grad.data() + s * out_size;
        const T* col = pointwise ? xs->data.data() + s * in_size : cols.data() + s * col_size;
        if (ws->requires_grad)  // dW[c_out, rows] += g[c_out, cols] * col^T
          detail::gemm<T>(false, true, c_out, g.rows(), g.cols(), go, col, grad_of(*ws).data(), true);
        if (bs->requires_grad) {
          auto& gb = grad_of(*bs);
          for (std::size_t c = 0; c < c_out; ++c) {
            T acc = 0;
            for (std::size_t p = 0; p < g.cols(); ++p) acc += go[c * g.cols() + p];
            gb[c] += acc;
          }
        }
        if (xs->requires_grad) {
          T* gx = grad_of(*xs).data() + s * in_size;
          if (pointwise) {
            detail::gemm<T>(true, false, g.rows(), g.cols(), c_out, ws->data.data(), go, gx, true);
          } else {
            detail::gemm<T>(true, false, g.rows(), g.cols(), c_out, ws->data.data(), go,
                            dcols.data(), false);
            col2im_add(dcols.data(), g, gx);
          }
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> max_pool2(const Tensor<T>& x) {
  if (x.rank() != 4) throw ConfigError("max_pool2: expected 4-d input, got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0)
    throw ConfigError("max_pool2: spatial extents must be even, got " + shape_str(x.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor<T> out({n, c, oh, ow});
  std::vector<std::size_t> argmax(out.numel());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t in_base = plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::size_t o = (plane * oh + oy) * ow + ox;
        const std::size_t top = in_base + 2 * oy * w + 2 * ox;
        const std::size_t window[4] = {top, top + 1, top + w, top + w + 1};
        std::size_t best = window[0];
        for (std::size_t i = 1; i < 4; ++i)
          if (xd[window[i]] > xd[best]) best = window[i];  // strict: first max wins ties
        od[o] = xd[best];
        argmax[o] = best;
      }
  }
  if (detail::should_record<T>({&x})) {
    auto xs = x.storage(), os = out.storage();
    detail::record<T>("max_pool2", out, {&x}, [xs, os, argmax = std::move(argmax)] {
      auto& gx = grad_of(*xs);
      for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += os->grad[i];
    });
  }
  return out;
}

template Tensor<float> conv2d(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                              std::size_t);
template Tensor<double> conv2d(const Tensor<double>&, const Tensor<double>&,
                               const Tensor<double>&, std::size_t);
template Tensor<float> max_pool2(const Tensor<float>&);
template Tensor<double> max_pool2(const Tensor<double>&);

}  // namespace cts
