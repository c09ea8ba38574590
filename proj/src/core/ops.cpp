#include "convtrans/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "convtrans/errors.hpp"
#include "gemm.hpp"

namespace cts {

using detail::grad_of;

namespace {

template <class T>
bool is_suffix(const Shape& full, const Shape& tail) {
  if (tail.size() > full.size()) return false;
  return std::equal(tail.rbegin(), tail.rend(), full.rbegin());
}

template <class T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
}

}  // namespace

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!is_suffix<T>(a.shape(), b.shape()))
    throw ConfigError("add: cannot broadcast " + shape_str(b.shape()) + " onto " +
                      shape_str(a.shape()));
  Tensor<T> out(a.shape());
  const std::size_t inner = b.numel();
  const std::size_t outer = a.numel() / inner;
  auto o = out.data();
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t r = 0; r < outer; ++r)
    for (std::size_t i = 0; i < inner; ++i) o[r * inner + i] = ad[r * inner + i] + bd[i];
  if (detail::should_record<T>({&a, &b})) {
    auto as = a.storage(), bs = b.storage(), os = out.storage();
    detail::record<T>("add", out, {&a, &b}, [as, bs, os, inner, outer] {
      const auto& g = os->grad;
      if (as->requires_grad) {
        auto& ga = grad_of(*as);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bs->requires_grad) {
        auto& gb = grad_of(*bs);
        for (std::size_t r = 0; r < outer; ++r)
          for (std::size_t i = 0; i < inner; ++i) gb[i] += g[r * inner + i];
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("sub", a, b);
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] - b[i];
  if (detail::should_record<T>({&a, &b})) {
    auto as = a.storage(), bs = b.storage(), os = out.storage();
    detail::record<T>("sub", out, {&a, &b}, [as, bs, os] {
      const auto& g = os->grad;
      if (as->requires_grad) {
        auto& ga = grad_of(*as);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bs->requires_grad) {
        auto& gb = grad_of(*bs);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("mul", a, b);
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * b[i];
  if (detail::should_record<T>({&a, &b})) {
    auto as = a.storage(), bs = b.storage(), os = out.storage();
    detail::record<T>("mul", out, {&a, &b}, [as, bs, os] {
      const auto& g = os->grad;
      // read both operands before writing; a and b may alias
      if (as->requires_grad) {
        auto& ga = grad_of(*as);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bs->data[i];
      }
      if (bs->requires_grad) {
        auto& gb = grad_of(*bs);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * as->data[i];
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x[i] * factor;
  if (detail::should_record<T>({&x})) {
    auto xs = x.storage(), os = out.storage();
    detail::record<T>("scale", out, {&x}, [xs, os, factor] {
      auto& gx = grad_of(*xs);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += os->grad[i] * factor;
    });
  }
  return out;
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (auto v : x.data()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (detail::should_record<T>({&x})) {
    auto xs = x.storage(), os = out.storage();
    detail::record<T>("sum", out, {&x}, [xs, os] {
      auto& gx = grad_of(*xs);
      const T g = os->grad[0];
      for (auto& v : gx) v += g;
    });
  }
  return out;
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  if (detail::should_record<T>({&x})) {
    auto xs = x.storage(), os = out.storage();
    detail::record<T>("relu", out, {&x}, [xs, os] {
      auto& gx = grad_of(*xs);
      for (std::size_t i = 0; i < gx.size(); ++i)
        if (xs->data[i] > T(0)) gx[i] += os->grad[i];
    });
  }
  return out;
}

template <class T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
  const std::size_t d = x.dim(-1);
  const std::size_t rows = x.numel() / d;
  Tensor<T> out(x.shape());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xd.data() + r * d;
    T* o = od.data() + r * d;
    T mx = *std::max_element(in, in + d);
    T total = 0;
    for (std::size_t j = 0; j < d; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    const T inv = T(1) / total;
    for (std::size_t j = 0; j < d; ++j) o[j] *= inv;
  }
  if (detail::should_record<T>({&x})) {
    auto xs = x.storage(), os = out.storage();
    detail::record<T>("softmax", out, {&x}, [xs, os, d, rows] {
      auto& gx = grad_of(*xs);
      const auto& y = os->data;
      const auto& g = os->grad;
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * d;
        T dot = 0;
        for (std::size_t j = 0; j < d; ++j) dot += y[base + j] * g[base + j];
        for (std::size_t j = 0; j < d; ++j) gx[base + j] += y[base + j] * (g[base + j] - dot);
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> dropout(const Tensor<T>& x, T p, bool training, RngState& rng) {
  if (!(p >= T(0) && p < T(1))) throw ConfigError("dropout: p must lie in [0, 1)");
  if (!training || p == T(0)) return x;
  const T keep_scale = T(1) / (T(1) - p);
  std::vector<T> mask(x.numel());
  for (auto& m : mask) m = rng.uniform() < static_cast<double>(p) ? T(0) : keep_scale;
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x[i] * mask[i];
  if (detail::should_record<T>({&x})) {
    auto xs = x.storage(), os = out.storage();
    detail::record<T>("dropout", out, {&x}, [xs, os, mask = std::move(mask)] {
      auto& gx = grad_of(*xs);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += os->grad[i] * mask[i];
    });
  }
  return out;
}

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (weight.rank() != 2 || bias.rank() != 1 || bias.dim(0) != weight.dim(1))
    throw ConfigError("linear: weight " + shape_str(weight.shape()) + " and bias " +
                      shape_str(bias.shape()) + " are inconsistent");
  const std::size_t d_in = weight.dim(0), d_out = weight.dim(1);
  if (x.dim(-1) != d_in)
    throw ConfigError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                      shape_str(weight.shape()));
  const std::size_t rows = x.numel() / d_in;
  Shape out_shape = x.shape();
  out_shape.back() = d_out;
  Tensor<T> out(out_shape);
  auto od = out.data();
  for (std::size_t r = 0; r < rows; ++r) std::copy(bias.data().begin(), bias.data().end(), od.begin() + r * d_out);
  detail::gemm<T>(false, false, rows, d_out, d_in, x.data().data(), weight.data().data(), od.data(), true);
  if (detail::should_record<T>({&x, &weight, &bias})) {
    auto xs = x.storage(), ws = weight.storage(), bs = bias.storage(), os = out.storage();
    detail::record<T>("linear", out, {&x, &weight, &bias}, [xs, ws, bs, os, rows, d_in, d_out] {
      const auto& g = os->grad;
      if (xs->requires_grad)
        detail::gemm<T>(false, true, rows, d_in, d_out, g.data(), ws->data.data(),
                        grad_of(*xs).data(), true);
      if (ws->requires_grad)
        detail::gemm<T>(true, false, d_in, d_out, rows, xs->data.data(), g.data(),
                        grad_of(*ws).data(), true);
      if (bs->requires_grad) {
        auto& gb = grad_of(*bs);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d_out; ++j) gb[j] += g[r * d_out + j];
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  if (a.rank() < 2 || a.rank() != b.rank() ||
      !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin()))
    throw ConfigError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                      shape_str(b.shape()));
  const std::size_t m = a.dim(-2), k = a.dim(-1);
  const std::size_t bk = transpose_b ? b.dim(-1) : b.dim(-2);
  const std::size_t n = transpose_b ? b.dim(-2) : b.dim(-1);
  if (bk != k)
    throw ConfigError("matmul: inner extents differ in " + shape_str(a.shape()) + " and " +
                      shape_str(b.shape()));
  const std::size_t batch = a.numel() / (m * k);
  Shape out_shape = a.shape();
  out_shape.back() = n;
  Tensor<T> out(out_shape);
  for (std::size_t i = 0; i < batch; ++i)
    detail::gemm<T>(false, transpose_b, m, n, k, a.data().data() + i * m * k,
                    b.data().data() + i * k * n, out.data().data() + i * m * n, false);
  if (detail::should_record<T>({&a, &b})) {
    auto as = a.storage(), bs = b.storage(), os = out.storage();
    detail::record<T>("matmul", out, {&a, &b}, [as, bs, os, batch, m, n, k, transpose_b] {
      const auto& g = os->grad;
      for (std::size_t i = 0; i < batch; ++i) {
        const T* gi = g.data() + i * m * n;
        const T* ai = as->data.data() + i * m * k;
        const T* bi = bs->data.data() + i * k * n;
        if (as->requires_grad)
          detail::gemm<T>(false, !transpose_b, m, k, n, gi, bi, grad_of(*as).data() + i * m * k, true);
        if (bs->requires_grad) {
          if (transpose_b)  // dB[n, k] = g^T[n, m] * A[m, k]
            detail::gemm<T>(true, false, n, k, m, gi, ai, grad_of(*bs).data() + i * k * n, true);
          else  // dB[k, n] = A^T[k, m] * g[m, n]
            detail::gemm<T>(true, false, k, n, m, ai, gi, grad_of(*bs).data() + i * k * n, true);
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw ConfigError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  Tensor<T> out(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  if (detail::should_record<T>({&x})) {
    auto xs = x.storage(), os = out.storage();
    detail::record<T>("reshape", out, {&x}, [xs, os] {
      auto& gx = grad_of(*xs);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += os->grad[i];
    });
  }
  return out;
}

template <class T>
Tensor<T> flatten(const Tensor<T>& x, std::size_t start, std::size_t end) {
  if (start > end || end >= x.rank())
    throw ConfigError("flatten: invalid range for shape " + shape_str(x.shape()));
  Shape s(x.shape().begin(), x.shape().begin() + static_cast<std::ptrdiff_t>(start));
  std::size_t merged = 1;
  for (std::size_t i = start; i <= end; ++i) merged *= x.shape()[i];
  s.push_back(merged);
  s.insert(s.end(), x.shape().begin() + static_cast<std::ptrdiff_t>(end + 1), x.shape().end());
  return reshape(x, std::move(s));
}

namespace {

// Source offset for every destination element of a permutation.
std::vector<std::size_t> permute_index(const Shape& in, const std::vector<std::size_t>& perm) {
  const std::size_t r = in.size();
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * in[i];
  Shape out(r);
  std::vector<std::size_t> stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    out[i] = in[perm[i]];
    stride[i] = in_stride[perm[i]];
  }
  std::vector<std::size_t> src(shape_numel(in));
  std::vector<std::size_t> idx(r, 0);
  std::size_t offset = 0;
  for (std::size_t flat = 0; flat < src.size(); ++flat) {
    src[flat] = offset;
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      offset += stride[d];
      if (idx[d] < out[d]) break;
      offset -= stride[d] * idx[d];
      idx[d] = 0;
    }
  }
  return src;
}

}  // namespace

template <class T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
  const std::size_t r = x.rank();
  std::vector<bool> seen(r, false);
  if (perm.size() != r)
    throw ConfigError("permute: permutation rank does not match shape " + shape_str(x.shape()));
  for (auto p : perm) {
    if (p >= r || seen[p]) throw ConfigError("permute: invalid permutation");
    seen[p] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = x.shape()[perm[i]];
  auto src = permute_index(x.shape(), perm);
  Tensor<T> out(out_shape);
  auto od = out.data();
  auto xd = x.data();
  for (std::size_t i = 0; i < src.size(); ++i) od[i] = xd[src[i]];
  if (detail::should_record<T>({&x})) {
    auto xs = x.storage(), os = out.storage();
    detail::record<T>("permute", out, {&x}, [xs, os, src = std::move(src)] {
      auto& gx = grad_of(*xs);
      for (std::size_t i = 0; i < src.size(); ++i) gx[src[i]] += os->grad[i];
    });
  }
  return out;
}

#define CTS_INSTANTIATE(T)                                                              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> scale(const Tensor<T>&, T);                                       \
  template Tensor<T> sum(const Tensor<T>&);                                            \
  template Tensor<T> mean(const Tensor<T>&);                                           \
  template Tensor<T> relu(const Tensor<T>&);                                           \
  template Tensor<T> softmax_lastdim(const Tensor<T>&);                                \
  template Tensor<T> dropout(const Tensor<T>&, T, bool, RngState&);                    \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&, bool);                 \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                 \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);       \
  template Tensor<T> flatten(const Tensor<T>&, std::size_t, std::size_t);

CTS_INSTANTIATE(float)
CTS_INSTANTIATE(double)
#undef CTS_INSTANTIATE

}  // namespace cts
