#ifndef TEMA_BINARY_IO_H_
#define TEMA_BINARY_IO_H_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>

#include "tema/common.h"

namespace tema {

// Tensor block layout shared by frozen-embedding files and checkpoints:
//   "TEMA" | u8 version=1 | u8 kind | u32 rows | u32 cols |
//   rows*cols float32 (row-major) | u32 CRC32 of the float payload
// All integers and floats little-endian.
enum class TensorKind : std::uint8_t { kImage = 0, kText = 1, kParameter = 2 };

inline constexpr std::uint8_t kTensorFormatVersion = 1;

struct TensorBlock {
  TensorKind kind = TensorKind::kParameter;
  Matrix values;
};

void WriteTensorBlock(std::ostream& out, TensorKind kind, const Matrix& values);
// Throws Error on bad magic, unsupported version, truncation or CRC mismatch.
TensorBlock ReadTensorBlock(std::istream& in);

std::uint32_t Crc32(std::span<const unsigned char> bytes);
std::string Sha256Hex(std::string_view data);
std::string Sha256FileHex(const std::string& path);

// Order-sensitive digest of the exact bits of a matrix.
std::string MatrixDigest(const Matrix& m);

// Rounds every entry through float32, matching what a tensor block stores.
Matrix QuantizeToFloat(const Matrix& m);

}  // namespace tema

#endif  // TEMA_BINARY_IO_H_
