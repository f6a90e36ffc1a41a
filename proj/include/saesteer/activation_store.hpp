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


// Binary activation store: per-layer, language-labeled token activations.
//
// Layout (all integers u32 little-endian):
//   "SAEA" | version | d_model | manifest_len | manifest JSON (manifest_len bytes)
//   records: layer | language | T | ceil(T/8) mask bytes (bit t = byte t/8, LSB first)
//            | T*d_model f32 little-endian, row-major
//   CRC32 of everything above
//
// Manifest keys: format_version, model_name, d_model, layers, languages,
// dtype ("f32-little-endian"), counts (counts[layer position][language]).

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "saesteer/matrix.hpp"

namespace saesteer {

inline constexpr std::uint32_t kStoreFormatVersion = 1;
inline constexpr char kStoreDtype[] = "f32-little-endian";

struct StoreManifest {
  std::uint32_t format_version = kStoreFormatVersion;
  std::string model_name;
  std::uint32_t d_model = 0;
  std::vector<std::uint32_t> layer_indices;  // sorted, unique
  std::vector<std::string> languages;        // unique, non-empty
  std::string dtype = kStoreDtype;
  // counts[layer position][language index]
  std::vector<std::vector<std::uint64_t>> record_counts;

  // Throws ValidationError when the structural invariants do not hold.
  void validate() const;

  std::optional<std::size_t> layer_position(std::uint32_t layer) const;
  std::optional<std::size_t> language_index(const std::string& label) const;
  std::uint64_t count(std::uint32_t layer, std::uint32_t language) const;
  std::uint64_t total_records() const;
};

struct ActivationRecord {
  std::uint32_t layer = 0;
  std::uint32_t language_index = 0;
  std::uint32_t d_model = 0;
  std::vector<float> activations;  // token_count x d_model, row-major
  std::vector<std::uint8_t> keep_mask;  // 1 = regular token, 0 = special

  std::uint32_t token_count() const { return static_cast<std::uint32_t>(keep_mask.size()); }
  std::span<const float> token(std::size_t t) const {
    return {activations.data() + t * d_model, d_model};
  }
  std::span<float> token(std::size_t t) { return {activations.data() + t * d_model, d_model}; }
  std::size_t kept_count() const;

  // Shape and finiteness checks against the given model dimension.
  void validate(std::uint32_t expected_d_model) const;

  friend bool operator==(const ActivationRecord&, const ActivationRecord&) = default;
};

// Rows whose keep_mask entry is set, in order. Throws ValidationError
// ("no usable tokens") if none are.
Matrix masked_token_matrix(const ActivationRecord& record);

// Streaming writer. Records are spooled to a side file and the final store is
// assembled on finish(), once the per-(layer, language) counts are known.
class StoreWriter {
 public:
  // `manifest` supplies model_name, d_model, layers and languages; its counts
  // are ignored and recomputed from the written records.
  StoreWriter(std::filesystem::path path, StoreManifest manifest);
  ~StoreWriter();
  StoreWriter(const StoreWriter&) = delete;
  StoreWriter& operator=(const StoreWriter&) = delete;

  void write(const ActivationRecord& record);
  // Writes the final file and returns the manifest it contains.
  StoreManifest finish();

 private:
  std::filesystem::path path_;
  std::filesystem::path spool_path_;
  StoreManifest manifest_;
  std::ofstream spool_;
  std::vector<std::uint8_t> scratch_;
  bool finished_ = false;
};

StoreManifest write_store(const StoreManifest& manifest,
                          std::span<const ActivationRecord> records,
                          const std::filesystem::path& path);

struct RecordFilter {
  std::optional<std::uint32_t> layer = std::nullopt;
  std::optional<std::string> language = std::nullopt;
};

struct RecordLocation {
  std::uint64_t offset = 0;  // byte offset of the record header
  std::uint32_t layer = 0;
  std::uint32_t language_index = 0;
  std::uint32_t token_count = 0;
};

class StoreReader;

// Independent forward cursor over the records matching a filter. Owns its own
// file handle, so cursors can be moved to other threads.
class RecordCursor {
 public:
  bool next(ActivationRecord& out);

 private:
  friend class StoreReader;
  RecordCursor(std::filesystem::path path, std::uint32_t d_model,
               std::vector<RecordLocation> locations);

  std::uint32_t d_model_;
  std::vector<RecordLocation> locations_;
  std::size_t pos_ = 0;
  std::unique_ptr<std::ifstream> in_;
  std::vector<std::uint8_t> scratch_;
};

class StoreReader {
 public:
  // Verifies magic, version, checksum and record framing; builds a record
  // index. Throws FormatError on corruption.
  static StoreReader open(const std::filesystem::path& path);

  const StoreManifest& manifest() const { return manifest_; }
  const std::filesystem::path& path() const { return path_; }
  const std::vector<RecordLocation>& index() const { return index_; }

  // Unknown layer or language in the filter throws ValidationError.
  RecordCursor scan(const RecordFilter& filter = {}) const;
  std::vector<ActivationRecord> read_all(const RecordFilter& filter = {}) const;

 private:
  std::filesystem::path path_;
  StoreManifest manifest_;
  std::vector<RecordLocation> index_;
};

}  // namespace saesteer
