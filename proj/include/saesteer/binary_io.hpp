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


// Little-endian encoding helpers and a CRC32-tracking file writer shared by
// the store, checkpoint and vector file formats.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace saesteer::io {

std::uint32_t crc32_update(std::uint32_t crc, const void* data, std::size_t n);

inline void put_u32(std::uint8_t* out, std::uint32_t v) {
  out[0] = static_cast<std::uint8_t>(v);
  out[1] = static_cast<std::uint8_t>(v >> 8);
  out[2] = static_cast<std::uint8_t>(v >> 16);
  out[3] = static_cast<std::uint8_t>(v >> 24);
}

inline std::uint32_t get_u32(const std::uint8_t* in) {
  return static_cast<std::uint32_t>(in[0]) | (static_cast<std::uint32_t>(in[1]) << 8) |
         (static_cast<std::uint32_t>(in[2]) << 16) | (static_cast<std::uint32_t>(in[3]) << 24);
}

// Converts host floats to little-endian bytes (and back). No-op copies on
// little-endian hosts.
void encode_f32(std::span<const float> src, std::uint8_t* dst);
void decode_f32(const std::uint8_t* src, std::span<float> dst);
void encode_f64(std::span<const double> src, std::uint8_t* dst);
void decode_f64(const std::uint8_t* src, std::span<double> dst);

class ChecksummedWriter {
 public:
  explicit ChecksummedWriter(const std::filesystem::path& path);

  void write(const void* data, std::size_t n);
  void write_u32(std::uint32_t v);
  void write_f32(std::span<const float> values);
  void write_f64(std::span<const double> values);
  void write_string(std::string_view s) { write(s.data(), s.size()); }

  // Appends the CRC32 trailer and closes the file.
  void finish();

  std::uint32_t crc() const { return crc_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::uint32_t crc_ = 0;
  std::vector<std::uint8_t> scratch_;
};

// Whole-file buffer with bounds-checked cursor; the CRC trailer is verified on
// load. Used for the small formats (checkpoints, vector files).
class ChecksummedBuffer {
 public:
  static ChecksummedBuffer load(const std::filesystem::path& path);

  std::size_t remaining() const { return payload_size_ - pos_; }
  void read(void* out, std::size_t n);
  std::uint32_t read_u32();
  std::string read_string(std::size_t n);
  void read_f32(std::span<float> out);
  void read_f64(std::span<double> out);
  void expect_end() const;

 private:
  std::filesystem::path path_;
  std::vector<std::uint8_t> bytes_;
  std::size_t payload_size_ = 0;
  std::size_t pos_ = 0;
};

// CRC32 of the first `length` bytes of a file, streamed in blocks.
std::uint32_t crc32_of_file_prefix(const std::filesystem::path& path, std::uint64_t length);

}  // namespace saesteer::io
