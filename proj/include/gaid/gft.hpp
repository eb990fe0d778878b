#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gaid/tensor.hpp"

// GFT tensor file: "GFT1" | u8 dtype (1=f32, 2=f64) | u8 rank (1..4) |
// rank x u32 little-endian dims | row-major little-endian payload.

namespace gaid {

enum class GftDtype : std::uint8_t { F32 = 1, F64 = 2 };

struct GftHeader {
  GftDtype dtype;
  Shape shape;
};

// Raw decoded file: header plus payload widened to double (exact for both dtypes).
struct GftTensor {
  GftDtype dtype;
  TensorD values;
};

GftTensor load_gft(const std::string& path);
GftTensor decode_gft(const std::vector<std::uint8_t>& bytes, const std::string& origin);

void save_gft(const std::string& path, const TensorF& t);
void save_gft(const std::string& path, const TensorD& t);
std::vector<std::uint8_t> encode_gft(const TensorF& t);
std::vector<std::uint8_t> encode_gft(const TensorD& t);

// Loads and converts to the requested scalar type.
template <typename T>
Tensor<T> load_gft_as(const std::string& path) {
  return load_gft(path).values.template cast<T>();
}

}  // namespace gaid
