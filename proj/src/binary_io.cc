#include "tema/binary_io.h"

#include <openssl/evp.h>
#include <zlib.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <vector>

namespace tema {
namespace {

static_assert(std::endian::native == std::endian::little,
              "tensor files are written with native little-endian layout");

constexpr std::array<char, 4> kMagic = {'T', 'E', 'M', 'A'};

void PutU32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t GetU32(std::istream& in) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
    throw Error("tensor block truncated");
  }
  return v;
}

std::string ToHex(const unsigned char* data, std::size_t n) {
  static const char* kDigits = "0123456789abcdef";
  std::string out(2 * n, '0');
  for (std::size_t i = 0; i < n; ++i) {
    out[2 * i] = kDigits[data[i] >> 4];
    out[2 * i + 1] = kDigits[data[i] & 0xF];
  }
  return out;
}

}  // namespace

std::uint32_t Crc32(std::span<const unsigned char> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for very large payloads.
  const std::size_t kChunk = 1u << 30;
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const std::size_t n = std::min(kChunk, bytes.size() - offset);
    crc = crc32(crc, bytes.data() + offset, static_cast<uInt>(n));
    offset += n;
  }
  return static_cast<std::uint32_t>(crc);
}

void WriteTensorBlock(std::ostream& out, TensorKind kind,
                      const Matrix& values) {
  std::vector<float> payload(static_cast<std::size_t>(values.size()));
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    payload[static_cast<std::size_t>(i)] = static_cast<float>(values.data()[i]);
  }
  out.write(kMagic.data(), kMagic.size());
  const std::uint8_t header[2] = {kTensorFormatVersion,
                                  static_cast<std::uint8_t>(kind)};
  out.write(reinterpret_cast<const char*>(header), 2);
  PutU32(out, static_cast<std::uint32_t>(values.rows()));
  PutU32(out, static_cast<std::uint32_t>(values.cols()));
  const auto* raw = reinterpret_cast<const unsigned char*>(payload.data());
  const std::size_t nbytes = payload.size() * sizeof(float);
  out.write(reinterpret_cast<const char*>(raw),
            static_cast<std::streamsize>(nbytes));
  PutU32(out, Crc32({raw, nbytes}));
  if (!out) throw Error("failed writing tensor block");
}

TensorBlock ReadTensorBlock(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size())) {
    throw Error("tensor block truncated before magic");
  }
  if (magic != kMagic) throw Error("bad magic: expected \"TEMA\"");
  std::uint8_t header[2] = {0, 0};
  if (!in.read(reinterpret_cast<char*>(header), 2)) {
    throw Error("tensor block truncated");
  }
  if (header[0] != kTensorFormatVersion) {
    throw Error("unsupported tensor format version " +
                std::to_string(header[0]));
  }
  if (header[1] > static_cast<std::uint8_t>(TensorKind::kParameter)) {
    throw Error("unknown tensor kind " + std::to_string(header[1]));
  }
  const std::uint32_t rows = GetU32(in);
  const std::uint32_t cols = GetU32(in);
  std::vector<float> payload(static_cast<std::size_t>(rows) * cols);
  const std::size_t nbytes = payload.size() * sizeof(float);
  if (!in.read(reinterpret_cast<char*>(payload.data()),
               static_cast<std::streamsize>(nbytes))) {
    throw Error("tensor payload truncated");
  }
  const std::uint32_t stored_crc = GetU32(in);
  const auto* raw = reinterpret_cast<const unsigned char*>(payload.data());
  if (Crc32({raw, nbytes}) != stored_crc) throw Error("CRC32 mismatch");

  TensorBlock block;
  block.kind = static_cast<TensorKind>(header[1]);
  block.values.resize(rows, cols);
  for (std::size_t i = 0; i < payload.size(); ++i) {
    block.values.data()[i] = payload[i];
  }
  return block;
}

std::string Sha256Hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(),
                 nullptr) != 1) {
    throw Error("sha256 failed");
  }
  return ToHex(digest, len);
}

std::string Sha256FileHex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  return Sha256Hex(content);
}

std::string MatrixDigest(const Matrix& m) {
  std::string buf;
  buf.resize(2 * sizeof(std::int64_t) + m.size() * sizeof(double));
  const std::int64_t dims[2] = {m.rows(), m.cols()};
  std::memcpy(buf.data(), dims, sizeof(dims));
  if (m.size() > 0) {
    std::memcpy(buf.data() + sizeof(dims), m.data(), m.size() * sizeof(double));
  }
  return Sha256Hex(buf);
}

Matrix QuantizeToFloat(const Matrix& m) {
  return m.cast<float>().cast<double>();
}

}  // namespace tema
