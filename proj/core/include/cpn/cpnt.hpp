#pragma once

// CPNT binary tensor format, little-endian throughout:
//
//   offset 0   "CPNT"            magic
//   offset 4   0x01              version
//   offset 5   u32 rank
//   offset 9   u32 extent[rank]
//   ...        f32 data[prod(extent)]   row-major IEEE-754
//
// No padding, no footer. Trailing bytes are a format error.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cpn/tensor.hpp"

namespace cpn {

inline constexpr std::uint8_t kCpntVersion = 0x01;
inline constexpr std::size_t kCpntFixedHeader = 9;

std::vector<std::uint8_t> encode_cpnt(const Tensor& t);
Tensor decode_cpnt(std::span<const std::uint8_t> bytes);

Tensor tensor_load(const std::filesystem::path& path);
void tensor_store(const Tensor& t, const std::filesystem::path& path);

}  // namespace cpn
