#include "gaid/gft.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "gaid/error.hpp"

namespace gaid {

namespace {

constexpr char kMagic[4] = {'G', 'F', 'T', '1'};
constexpr int kMaxRank = 4;

void append_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

std::uint32_t read_u32_le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

template <typename T>
std::vector<std::uint8_t> encode_payload(GftDtype dtype, const Tensor<T>& t) {
  std::vector<std::uint8_t> out;
  const std::size_t word = dtype == GftDtype::F32 ? 4 : 8;
  out.reserve(6 + 4 * static_cast<std::size_t>(t.rank()) + word * static_cast<std::size_t>(t.numel()));
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(static_cast<std::uint8_t>(dtype));
  if (t.rank() < 1 || t.rank() > kMaxRank)
    throw ParseError("gft: rank " + std::to_string(t.rank()) + " outside 1..4");
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) append_u32_le(out, static_cast<std::uint32_t>(t.dim(i)));
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    if (dtype == GftDtype::F32) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(t[i]));
      append_u32_le(out, bits);
    } else {
      const auto bits = std::bit_cast<std::uint64_t>(static_cast<double>(t[i]));
      append_u32_le(out, static_cast<std::uint32_t>(bits & 0xffffffffULL));
      append_u32_le(out, static_cast<std::uint32_t>(bits >> 32));
    }
  }
  return out;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("gft: cannot open for write: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("gft: write failed: " + path);
}

}  // namespace

std::vector<std::uint8_t> encode_gft(const TensorF& t) { return encode_payload(GftDtype::F32, t); }
std::vector<std::uint8_t> encode_gft(const TensorD& t) { return encode_payload(GftDtype::F64, t); }

void save_gft(const std::string& path, const TensorF& t) { write_file(path, encode_gft(t)); }
void save_gft(const std::string& path, const TensorD& t) { write_file(path, encode_gft(t)); }

GftTensor decode_gft(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  if (bytes.size() < 6 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw ParseError("gft: bad magic in " + origin);
  const auto dtype_tag = bytes[4];
  if (dtype_tag != 1 && dtype_tag != 2) {
    throw ParseError("gft: bad dtype tag " + std::to_string(static_cast<int>(dtype_tag)) + " in " +
                     origin);
  }
  const GftDtype dtype = static_cast<GftDtype>(dtype_tag);
  const int rank = static_cast<int>(bytes[5]);
  if (rank < 1 || rank > kMaxRank)
    throw ParseError("gft: bad rank " + std::to_string(rank) + " in " + origin);
  const std::size_t header = 6 + 4 * static_cast<std::size_t>(rank);
  if (bytes.size() < header) throw ParseError("gft: truncated header in " + origin);
  Shape shape(static_cast<std::size_t>(rank));
  std::int64_t numel = 1;
  for (int i = 0; i < rank; ++i) {
    const std::uint32_t d = read_u32_le(bytes.data() + 6 + 4 * static_cast<std::size_t>(i));
    if (d == 0) throw ParseError("gft: zero dimension in " + origin);
    shape[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(d);
    numel *= static_cast<std::int64_t>(d);
  }
  const std::size_t word = dtype == GftDtype::F32 ? 4 : 8;
  const std::size_t expected = header + word * static_cast<std::size_t>(numel);
  if (bytes.size() != expected) {
    throw ParseError("gft: payload length mismatch in " + origin + " (expected " +
                     std::to_string(expected) + " bytes, got " + std::to_string(bytes.size()) + ")");
  }
  TensorD values(shape);
  for (std::int64_t i = 0; i < numel; ++i) {
    const std::uint8_t* p = bytes.data() + header + word * static_cast<std::size_t>(i);
    double v;
    if (dtype == GftDtype::F32) {
      v = static_cast<double>(std::bit_cast<float>(read_u32_le(p)));
    } else {
      const std::uint64_t lo = read_u32_le(p);
      const std::uint64_t hi = read_u32_le(p + 4);
      v = std::bit_cast<double>(lo | (hi << 32));
    }
    if (!std::isfinite(v)) throw ParseError("gft: non-finite payload in " + origin);
    values[i] = v;
  }
  return GftTensor{dtype, std::move(values)};
}

GftTensor load_gft(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("gft: cannot open: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_gft(bytes, path);
}

}  // namespace gaid
