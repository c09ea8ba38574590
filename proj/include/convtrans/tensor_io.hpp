#pragma once

#include <filesystem>
#include <iosfwd>

#include "convtrans/tensor.hpp"

namespace cts {

// "CTS-T1" raw tensor container:
//   8 bytes  magic "CTSTEN01"
//   1 byte   dtype (0 = float32 little-endian)
//   1 byte   rank r
//   r x 8    extents, little-endian uint64
//   payload  row-major float32 little-endian

inline constexpr char kTensorMagic[8] = {'C', 'T', 'S', 'T', 'E', 'N', '0', '1'};

void write_tensor(std::ostream& out, const Tensor<float>& t);
Tensor<float> read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor<float>& t);
Tensor<float> load_tensor(const std::filesystem::path& path);

/// Encoded size in bytes of a tensor with this shape.
std::size_t encoded_tensor_size(const Shape& shape);

}  // namespace cts
