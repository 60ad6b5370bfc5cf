#include "cpn/cpnt.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace cpn {
namespace {

constexpr char kMagic[4] = {'C', 'P', 'N', 'T'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes[at + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_cpnt(const Tensor& t) {
  if (t.rank() > std::numeric_limits<std::uint32_t>::max())
    throw std::invalid_argument("tensor rank exceeds CPNT limit");
  std::vector<std::uint8_t> out;
  out.reserve(kCpntFixedHeader + 4 * t.rank() + 4 * t.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  out.push_back(kCpntVersion);
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) {
    if (e > std::numeric_limits<std::uint32_t>::max())
      throw std::invalid_argument("tensor extent exceeds CPNT u32 limit");
    put_u32(out, static_cast<std::uint32_t>(e));
  }
  for (float f : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

Tensor decode_cpnt(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kCpntFixedHeader)
    throw FormatError("truncated CPNT header", static_cast<std::int64_t>(bytes.size()));
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad CPNT magic", 0);
  if (bytes[4] != kCpntVersion)
    throw FormatError("unsupported CPNT version " + std::to_string(bytes[4]), 4);

  const std::uint32_t rank = get_u32(bytes, 5);
  if (rank == 0) throw FormatError("CPNT rank must be >= 1", 5);

  std::size_t pos = kCpntFixedHeader;
  if ((bytes.size() - pos) / 4 < rank)
    throw FormatError("truncated CPNT extent list", static_cast<std::int64_t>(bytes.size()));

  Shape shape;
  shape.reserve(rank);
  std::size_t count = 1;
  constexpr std::size_t max_count = std::numeric_limits<std::size_t>::max() / 4;
  for (std::uint32_t r = 0; r < rank; ++r, pos += 4) {
    const std::uint32_t e = get_u32(bytes, pos);
    if (e == 0) throw FormatError("CPNT extent must be >= 1", static_cast<std::int64_t>(pos));
    if (count > max_count / e)
      throw FormatError("CPNT extent product overflows", static_cast<std::int64_t>(pos));
    count *= e;
    shape.push_back(e);
  }

  if ((bytes.size() - pos) / 4 < count)
    throw FormatError("truncated CPNT payload", static_cast<std::int64_t>(bytes.size()));
  const std::size_t need = pos + 4 * count;
  if (bytes.size() > need)
    throw FormatError("trailing bytes after CPNT payload", static_cast<std::int64_t>(need));

  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i, pos += 4)
    data[i] = std::bit_cast<float>(get_u32(bytes, pos));
  return Tensor(std::move(shape), std::move(data));
}

Tensor tensor_load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open tensor file", path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure", path.string());
  try {
    return decode_cpnt(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.message(), e.offset());
  }
}

void tensor_store(const Tensor& t, const std::filesystem::path& path) {
  const auto bytes = encode_cpnt(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open tensor file for writing", path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failure", path.string());
}

}  // namespace cpn
