#pragma once

#include <cstddef>

namespace cts::detail {

// Row-major C (m x n) = op(A) * op(B), or C += ... when accumulate is set.
// op(A) is m x k, op(B) is k x n. Every C[i][j] sums over k in ascending
// order, independent of blocking and thread count.
template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate);

}  // namespace cts::detail
