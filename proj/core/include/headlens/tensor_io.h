#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace headlens {

enum class DType : std::uint32_t { kF32 = 0 };

inline constexpr char kTensorMagic[4] = {'H', 'L', 'N', 'S'};
inline constexpr std::uint32_t kTensorVersion = 1;
inline constexpr std::size_t kMaxTensorRank = 3;

// A dense row-major tensor. data.size() must equal the product of shape.
struct TensorRecord {
  DType dtype = DType::kF32;
  std::vector<std::uint64_t> shape;
  std::vector<float> data;
};

// Product of extents; throws FormatError(kBadShape) on rank outside 1..3 or
// when the payload size in bytes would overflow 64 bits.
std::uint64_t checked_element_count(std::span<const std::uint64_t> shape);

// Compares dtype, shape and payload bytes (so NaN payloads compare by bits).
bool bitwise_equal(const TensorRecord& a, const TensorRecord& b);

// Serialized layout, all integers little-endian:
//   magic "HLNS" | u32 version | u32 dtype | u32 ndim | ndim x u64 extent | payload
std::vector<std::byte> encode_tensor(const TensorRecord& record);
TensorRecord decode_tensor(std::span<const std::byte> bytes);

void write_tensor(const TensorRecord& record, const std::filesystem::path& path);
TensorRecord read_tensor(const std::filesystem::path& path);

}  // namespace headlens
