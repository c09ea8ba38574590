#include "gemm.hpp"

#include <algorithm>
#include <vector>

#include "convtrans/parallel.hpp"

namespace cts::detail {
namespace {

constexpr std::size_t kBlockN = 512;
constexpr std::size_t kBlockK = 256;

template <class T>
void transpose(const T* src, std::size_t rows, std::size_t cols, T* dst) {
  constexpr std::size_t tile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += tile)
    for (std::size_t c0 = 0; c0 < cols; c0 += tile) {
      std::size_t r1 = std::min(rows, r0 + tile), c1 = std::min(cols, c0 + tile);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * cols + c];
    }
}

// Rows [row_begin, row_end) of C = A * B, all row-major, no transposes.
template <class T>
void gemm_nn_rows(std::size_t row_begin, std::size_t row_end, std::size_t n, std::size_t k,
                  const T* __restrict a, const T* __restrict b, T* __restrict c, bool accumulate) {
  if (!accumulate)
    std::fill(c + row_begin * n, c + row_end * n, T(0));
  for (std::size_t j0 = 0; j0 < n; j0 += kBlockN) {
    const std::size_t jn = std::min(n, j0 + kBlockN) - j0;
    for (std::size_t p0 = 0; p0 < k; p0 += kBlockK) {
      const std::size_t p1 = std::min(k, p0 + kBlockK);
      std::size_t i = row_begin;
      for (; i + 4 <= row_end; i += 4) {
        T* __restrict c0 = c + i * n + j0;
        T* __restrict c1 = c0 + n;
        T* __restrict c2 = c1 + n;
        T* __restrict c3 = c2 + n;
        const T* a0 = a + i * k;
        for (std::size_t p = p0; p < p1; ++p) {
          const T* __restrict br = b + p * n + j0;
          const T v0 = a0[p], v1 = a0[k + p], v2 = a0[2 * k + p], v3 = a0[3 * k + p];
          for (std::size_t j = 0; j < jn; ++j) {
            const T bv = br[j];
            c0[j] += v0 * bv;
            c1[j] += v1 * bv;
            c2[j] += v2 * bv;
            c3[j] += v3 * bv;
          }
        }
      }
      for (; i < row_end; ++i) {
        T* __restrict c0 = c + i * n + j0;
        const T* a0 = a + i * k;
        for (std::size_t p = p0; p < p1; ++p) {
          const T* __restrict br = b + p * n + j0;
          const T v0 = a0[p];
          for (std::size_t j = 0; j < jn; ++j) c0[j] += v0 * br[j];
        }
      }
    }
  }
}

}  // namespace

template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) std::fill(c, c + m * n, T(0));
    return;
  }
  std::vector<T> a_buf, b_buf;
  if (trans_a) {
    a_buf.resize(m * k);
    transpose(a, k, m, a_buf.data());
    a = a_buf.data();
  }
  if (trans_b) {
    b_buf.resize(k * n);
    transpose(b, n, k, b_buf.data());
    b = b_buf.data();
  }
  // Split on multiples of four rows so the unrolled path is used throughout.
  const std::size_t blocks = (m + 3) / 4;
  const std::size_t work_per_block = 4 * n * k;
  const std::size_t grain = std::max<std::size_t>(1, (1u << 20) / std::max<std::size_t>(1, work_per_block));
  parallel_for(blocks, grain, [&](std::size_t b0, std::size_t b1) {
    gemm_nn_rows(b0 * 4, std::min(m, b1 * 4), n, k, a, b, c, accumulate);
  });
}

template void gemm<float>(bool, bool, std::size_t, std::size_t, std::size_t, const float*,
                          const float*, float*, bool);
template void gemm<double>(bool, bool, std::size_t, std::size_t, std::size_t, const double*,
                           const double*, double*, bool);

}  // namespace cts::detail
