#include "convtrans/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "convtrans/errors.hpp"

namespace cts {
namespace {

constexpr std::uint8_t kDtypeF32 = 0;

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b.data(), 8);
}

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  in.read(reinterpret_cast<char*>(b.data()), 8);
  if (!in) throw DataError("CTS-T1: truncated extent");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
  return v;
}

}  // namespace

std::size_t encoded_tensor_size(const Shape& shape) {
  return 8 + 1 + 1 + 8 * shape.size() + 4 * shape_numel(shape);
}

void write_tensor(std::ostream& out, const Tensor<float>& t) {
  if (t.rank() > 255) throw ConfigError("CTS-T1: rank exceeds 255");
  out.write(kTensorMagic, 8);
  out.put(static_cast<char>(kDtypeF32));
  out.put(static_cast<char>(t.rank()));
  for (auto e : t.shape()) put_u64(out, e);
  std::vector<char> payload(4 * t.numel());
  for (std::size_t i = 0; i < t.numel(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(t[i]);
    for (int b = 0; b < 4; ++b) payload[4 * i + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw DataError("CTS-T1: write failed");
}

Tensor<float> read_tensor(std::istream& in) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kTensorMagic, 8) != 0) throw DataError("CTS-T1: bad magic");
  int dtype = in.get();
  int rank = in.get();
  if (!in) throw DataError("CTS-T1: truncated header");
  if (dtype != kDtypeF32) throw DataError("CTS-T1: unsupported dtype " + std::to_string(dtype));
  if (rank == 0) throw DataError("CTS-T1: rank 0 is not supported");
  Shape shape(static_cast<std::size_t>(rank));
  for (auto& e : shape) {
    e = get_u64(in);
    if (e == 0) throw DataError("CTS-T1: zero extent");
  }
  std::vector<unsigned char> payload(4 * shape_numel(shape));
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!in) throw DataError("CTS-T1: truncated payload");
  std::vector<float> values(shape_numel(shape));
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 3; b >= 0; --b) bits = (bits << 8) | payload[4 * i + static_cast<std::size_t>(b)];
    values[i] = std::bit_cast<float>(bits);
  }
  return Tensor<float>(std::move(shape), std::move(values));
}

void save_tensor(const std::filesystem::path& path, const Tensor<float>& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_tensor(out, t);
}

Tensor<float> load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_tensor(in);
}

}  // namespace cts
