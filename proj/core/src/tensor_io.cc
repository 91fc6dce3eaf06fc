#include "headlens/tensor_io.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "headlens/errors.h"

namespace headlens {
namespace {

constexpr std::size_t kFixedHeaderBytes = 4 + 3 * sizeof(std::uint32_t);

template <typename UInt>
void put_le(std::vector<std::byte>& out, UInt value) {
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    out.push_back(static_cast<std::byte>((value >> (8 * i)) & 0xFF));
  }
}

template <typename UInt>
UInt get_le(std::span<const std::byte> bytes, std::size_t offset) {
  UInt value = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    value |= static_cast<UInt>(std::to_integer<std::uint8_t>(bytes[offset + i])) << (8 * i);
  }
  return value;
}

}  // namespace

std::uint64_t checked_element_count(std::span<const std::uint64_t> shape) {
  if (shape.empty() || shape.size() > kMaxTensorRank) {
    throw FormatError(FormatError::Kind::kBadShape,
                      "tensor rank must be 1.." + std::to_string(kMaxTensorRank) + ", got " +
                          std::to_string(shape.size()));
  }
  constexpr std::uint64_t kMaxElements = std::numeric_limits<std::uint64_t>::max() / sizeof(float);
  std::uint64_t count = 1;
  for (const auto extent : shape) {
    if (extent != 0 && count > kMaxElements / extent) {
      throw FormatError(FormatError::Kind::kBadShape, "tensor shape overflows payload size");
    }
    count *= extent;
  }
  return count;
}

bool bitwise_equal(const TensorRecord& a, const TensorRecord& b) {
  return a.dtype == b.dtype && a.shape == b.shape && a.data.size() == b.data.size() &&
         (a.data.empty() || std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0);
}

std::vector<std::byte> encode_tensor(const TensorRecord& record) {
  if (record.dtype != DType::kF32) {
    throw FormatError(FormatError::Kind::kUnsupportedDtype, "only f32 tensors can be written");
  }
  const auto count = checked_element_count(record.shape);
  if (count != record.data.size()) {
    throw FormatError(FormatError::Kind::kBadShape,
                      "payload has " + std::to_string(record.data.size()) + " elements, shape implies " +
                          std::to_string(count));
  }

  std::vector<std::byte> out;
  out.reserve(kFixedHeaderBytes + record.shape.size() * 8 + record.data.size() * 4);
  for (const char c : kTensorMagic) out.push_back(static_cast<std::byte>(c));
  put_le<std::uint32_t>(out, kTensorVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(record.dtype));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(record.shape.size()));
  for (const auto extent : record.shape) put_le<std::uint64_t>(out, extent);
  for (const float v : record.data) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

TensorRecord decode_tensor(std::span<const std::byte> bytes) {
  if (bytes.size() < kFixedHeaderBytes) {
    throw FormatError(FormatError::Kind::kCorruptHeader, "tensor header truncated");
  }
  if (std::memcmp(bytes.data(), kTensorMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::kBadMagic, "bad tensor magic (expected HLNS)");
  }
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kTensorVersion) {
    throw FormatError(FormatError::Kind::kBadVersion, "unsupported tensor version " + std::to_string(version));
  }
  const auto dtype = get_le<std::uint32_t>(bytes, 8);
  if (dtype != static_cast<std::uint32_t>(DType::kF32)) {
    throw FormatError(FormatError::Kind::kUnsupportedDtype, "unsupported dtype code " + std::to_string(dtype));
  }
  const auto ndim = get_le<std::uint32_t>(bytes, 12);
  if (ndim == 0 || ndim > kMaxTensorRank) {
    throw FormatError(FormatError::Kind::kCorruptHeader, "invalid tensor rank " + std::to_string(ndim));
  }
  const std::size_t header_bytes = kFixedHeaderBytes + std::size_t{ndim} * 8;
  if (bytes.size() < header_bytes) {
    throw FormatError(FormatError::Kind::kCorruptHeader, "tensor extents truncated");
  }

  TensorRecord record;
  record.dtype = DType::kF32;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    record.shape.push_back(get_le<std::uint64_t>(bytes, kFixedHeaderBytes + 8 * i));
  }
  const auto count = checked_element_count(record.shape);
  const auto payload = bytes.size() - header_bytes;
  if (payload / sizeof(float) != count || payload % sizeof(float) != 0) {
    throw FormatError(FormatError::Kind::kTruncatedPayload,
                      "payload is " + std::to_string(payload) + " bytes, shape requires " +
                          std::to_string(count * sizeof(float)));
  }
  record.data.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    record.data[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, header_bytes + 4 * i));
  }
  return record;
}

void write_tensor(const TensorRecord& record, const std::filesystem::path& path) {
  const auto bytes = encode_tensor(record);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

TensorRecord read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open tensor file '" + path.string() + "'");
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(std::as_bytes(std::span<const char>(raw)));
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace headlens
