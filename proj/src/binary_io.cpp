// Copyright 2026 The saesteer Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "saesteer/binary_io.hpp"

#include <zlib.h>

#include <array>

#include "saesteer/error.hpp"

namespace saesteer::io {

std::uint32_t crc32_update(std::uint32_t crc, const void* data, std::size_t n) {
  const auto* p = static_cast<const Bytef*>(data);
  uLong c = crc;
  while (n > 0) {
    const uInt chunk = n > (1u << 30) ? (1u << 30) : static_cast<uInt>(n);
    c = ::crc32(c, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

void encode_f32(std::span<const float> src, std::uint8_t* dst) {
  if constexpr (std::endian::native == std::endian::little) {
    if (!src.empty()) std::memcpy(dst, src.data(), src.size_bytes());
  } else {
    for (std::size_t i = 0; i < src.size(); ++i) {
      put_u32(dst + 4 * i, std::bit_cast<std::uint32_t>(src[i]));
    }
  }
}

void decode_f32(const std::uint8_t* src, std::span<float> dst) {
  if constexpr (std::endian::native == std::endian::little) {
    if (!dst.empty()) std::memcpy(dst.data(), src, dst.size_bytes());
  } else {
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i] = std::bit_cast<float>(get_u32(src + 4 * i));
    }
  }
}

void encode_f64(std::span<const double> src, std::uint8_t* dst) {
  if constexpr (std::endian::native == std::endian::little) {
    if (!src.empty()) std::memcpy(dst, src.data(), src.size_bytes());
  } else {
    for (std::size_t i = 0; i < src.size(); ++i) {
      const auto bits = std::bit_cast<std::uint64_t>(src[i]);
      put_u32(dst + 8 * i, static_cast<std::uint32_t>(bits));
      put_u32(dst + 8 * i + 4, static_cast<std::uint32_t>(bits >> 32));
    }
  }
}

void decode_f64(const std::uint8_t* src, std::span<double> dst) {
  if constexpr (std::endian::native == std::endian::little) {
    if (!dst.empty()) std::memcpy(dst.data(), src, dst.size_bytes());
  } else {
    for (std::size_t i = 0; i < dst.size(); ++i) {
      const std::uint64_t bits = static_cast<std::uint64_t>(get_u32(src + 8 * i)) |
                                 (static_cast<std::uint64_t>(get_u32(src + 8 * i + 4)) << 32);
      dst[i] = std::bit_cast<double>(bits);
    }
  }
}

ChecksummedWriter::ChecksummedWriter(const std::filesystem::path& path)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw IoError("cannot open '" + path.string() + "' for writing");
}

void ChecksummedWriter::write(const void* data, std::size_t n) {
  if (n == 0) return;
  crc_ = crc32_update(crc_, data, n);
  out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out_) throw IoError("write failed on '" + path_.string() + "'");
}

void ChecksummedWriter::write_u32(std::uint32_t v) {
  std::uint8_t b[4];
  put_u32(b, v);
  write(b, 4);
}

void ChecksummedWriter::write_f32(std::span<const float> values) {
  scratch_.resize(values.size_bytes());
  encode_f32(values, scratch_.data());
  write(scratch_.data(), scratch_.size());
}

void ChecksummedWriter::write_f64(std::span<const double> values) {
  scratch_.resize(values.size_bytes());
  encode_f64(values, scratch_.data());
  write(scratch_.data(), scratch_.size());
}

void ChecksummedWriter::finish() {
  std::uint8_t b[4];
  put_u32(b, crc_);
  out_.write(reinterpret_cast<const char*>(b), 4);
  out_.close();
  if (!out_) throw IoError("failed to finalize '" + path_.string() + "'");
}

ChecksummedBuffer ChecksummedBuffer::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  ChecksummedBuffer buf;
  buf.path_ = path;
  buf.bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  if (buf.bytes_.size() < 4) throw FormatError("'" + path.string() + "' is truncated");
  buf.payload_size_ = buf.bytes_.size() - 4;
  const std::uint32_t stored = get_u32(buf.bytes_.data() + buf.payload_size_);
  const std::uint32_t actual = crc32_update(0, buf.bytes_.data(), buf.payload_size_);
  if (stored != actual) throw FormatError("checksum mismatch in '" + path.string() + "'");
  return buf;
}

void ChecksummedBuffer::read(void* out, std::size_t n) {
  if (n > remaining()) throw FormatError("'" + path_.string() + "' is truncated");
  if (n > 0) std::memcpy(out, bytes_.data() + pos_, n);
  pos_ += n;
}

std::uint32_t ChecksummedBuffer::read_u32() {
  std::uint8_t b[4];
  read(b, 4);
  return get_u32(b);
}

std::string ChecksummedBuffer::read_string(std::size_t n) {
  if (n > remaining()) throw FormatError("'" + path_.string() + "' is truncated");
  std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
  pos_ += n;
  return s;
}

void ChecksummedBuffer::read_f32(std::span<float> out) {
  if (out.size_bytes() > remaining()) {
    throw FormatError("'" + path_.string() + "' is truncated");
  }
  decode_f32(bytes_.data() + pos_, out);
  pos_ += out.size_bytes();
}

void ChecksummedBuffer::read_f64(std::span<double> out) {
  if (out.size_bytes() > remaining()) {
    throw FormatError("'" + path_.string() + "' is truncated");
  }
  decode_f64(bytes_.data() + pos_, out);
  pos_ += out.size_bytes();
}

void ChecksummedBuffer::expect_end() const {
  if (remaining() != 0) {
    throw FormatError("'" + path_.string() + "' has " + std::to_string(remaining()) +
                      " unexpected trailing bytes");
  }
}

std::uint32_t crc32_of_file_prefix(const std::filesystem::path& path, std::uint64_t length) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::array<char, 1 << 16> block{};
  std::uint32_t crc = 0;
  std::uint64_t left = length;
  while (left > 0) {
    const auto want = static_cast<std::streamsize>(std::min<std::uint64_t>(left, block.size()));
    in.read(block.data(), want);
    if (in.gcount() != want) throw FormatError("'" + path.string() + "' is truncated");
    crc = crc32_update(crc, block.data(), static_cast<std::size_t>(want));
    left -= static_cast<std::uint64_t>(want);
  }
  return crc;
}

}  // namespace saesteer::io
