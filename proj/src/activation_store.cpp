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


#include "saesteer/activation_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include <nlohmann/json.hpp>

#include "saesteer/binary_io.hpp"
#include "saesteer/error.hpp"

namespace saesteer {
namespace {

constexpr char kMagic[4] = {'S', 'A', 'E', 'A'};
constexpr std::size_t kHeaderBytes = 16;  // magic, version, d_model, manifest_len
constexpr std::size_t kRecordHeaderBytes = 12;

std::size_t mask_bytes(std::uint32_t tokens) { return (static_cast<std::size_t>(tokens) + 7) / 8; }

nlohmann::json manifest_to_json(const StoreManifest& m) {
  nlohmann::json j;
  j["format_version"] = m.format_version;
  j["model_name"] = m.model_name;
  j["d_model"] = m.d_model;
  j["layers"] = m.layer_indices;
  j["languages"] = m.languages;
  j["dtype"] = m.dtype;
  j["counts"] = m.record_counts;
  return j;
}

StoreManifest manifest_from_json(const nlohmann::json& j) {
  StoreManifest m;
  m.format_version = j.at("format_version").get<std::uint32_t>();
  m.model_name = j.at("model_name").get<std::string>();
  m.d_model = j.at("d_model").get<std::uint32_t>();
  m.layer_indices = j.at("layers").get<std::vector<std::uint32_t>>();
  m.languages = j.at("languages").get<std::vector<std::string>>();
  m.dtype = j.at("dtype").get<std::string>();
  m.record_counts = j.at("counts").get<std::vector<std::vector<std::uint64_t>>>();
  return m;
}

void reset_counts(StoreManifest& m) {
  m.record_counts.assign(m.layer_indices.size(),
                         std::vector<std::uint64_t>(m.languages.size(), 0));
}

}  // namespace

void StoreManifest::validate() const {
  if (d_model == 0) throw ValidationError("d_model must be positive");
  if (languages.empty()) throw ValidationError("manifest has no languages");
  std::set<std::string> seen;
  for (const auto& l : languages) {
    if (l.empty()) throw ValidationError("empty language label");
    if (!seen.insert(l).second) throw ValidationError("duplicate language '" + l + "'");
  }
  for (std::size_t i = 1; i < layer_indices.size(); ++i) {
    if (layer_indices[i] <= layer_indices[i - 1]) {
      throw ValidationError("layer indices must be sorted and unique");
    }
  }
  if (dtype != kStoreDtype) throw ValidationError("unsupported dtype '" + dtype + "'");
  if (!record_counts.empty()) {
    if (record_counts.size() != layer_indices.size()) {
      throw ValidationError("counts table does not match layer list");
    }
    for (const auto& row : record_counts) {
      if (row.size() != languages.size()) {
        throw ValidationError("counts table does not match language list");
      }
    }
  }
}

std::optional<std::size_t> StoreManifest::layer_position(std::uint32_t layer) const {
  const auto it = std::lower_bound(layer_indices.begin(), layer_indices.end(), layer);
  if (it == layer_indices.end() || *it != layer) return std::nullopt;
  return static_cast<std::size_t>(it - layer_indices.begin());
}

std::optional<std::size_t> StoreManifest::language_index(const std::string& label) const {
  const auto it = std::find(languages.begin(), languages.end(), label);
  if (it == languages.end()) return std::nullopt;
  return static_cast<std::size_t>(it - languages.begin());
}

std::uint64_t StoreManifest::count(std::uint32_t layer, std::uint32_t language) const {
  const auto pos = layer_position(layer);
  if (!pos || language >= languages.size() || record_counts.empty()) return 0;
  return record_counts[*pos][language];
}

std::uint64_t StoreManifest::total_records() const {
  std::uint64_t total = 0;
  for (const auto& row : record_counts) {
    for (auto c : row) total += c;
  }
  return total;
}

std::size_t ActivationRecord::kept_count() const {
  return static_cast<std::size_t>(std::count(keep_mask.begin(), keep_mask.end(), 1));
}

void ActivationRecord::validate(std::uint32_t expected_d_model) const {
  if (d_model != expected_d_model) {
    throw ValidationError("dimension mismatch: record has d_model " + std::to_string(d_model) +
                          ", store expects " + std::to_string(expected_d_model));
  }
  if (keep_mask.empty()) throw ValidationError("record has no tokens");
  if (activations.size() != keep_mask.size() * d_model) {
    throw ValidationError("dimension mismatch: activation payload does not equal T*d_model");
  }
  for (auto m : keep_mask) {
    if (m > 1) throw ValidationError("keep_mask entries must be 0 or 1");
  }
  if (!all_finite(activations)) throw ValidationError("record contains NaN or Inf activations");
}

Matrix masked_token_matrix(const ActivationRecord& record) {
  Matrix out;
  std::vector<float> rows;
  std::size_t kept = 0;
  for (std::size_t t = 0; t < record.keep_mask.size(); ++t) {
    if (!record.keep_mask[t]) continue;
    const auto tok = record.token(t);
    rows.insert(rows.end(), tok.begin(), tok.end());
    ++kept;
  }
  if (kept == 0) throw ValidationError("no usable tokens in record");
  return Matrix(kept, record.d_model, std::move(rows));
}

// ---------------------------------------------------------------------------

StoreWriter::StoreWriter(std::filesystem::path path, StoreManifest manifest)
    : path_(std::move(path)), manifest_(std::move(manifest)) {
  manifest_.format_version = kStoreFormatVersion;
  manifest_.dtype = kStoreDtype;
  manifest_.record_counts.clear();
  manifest_.validate();
  reset_counts(manifest_);
  spool_path_ = path_;
  spool_path_ += ".spool";
  spool_.open(spool_path_, std::ios::binary | std::ios::trunc);
  if (!spool_) throw IoError("cannot open '" + spool_path_.string() + "' for writing");
}

StoreWriter::~StoreWriter() {
  if (!finished_) {
    spool_.close();
    std::error_code ec;
    std::filesystem::remove(spool_path_, ec);
  }
}

void StoreWriter::write(const ActivationRecord& record) {
  if (finished_) throw ValidationError("store writer already finished");
  record.validate(manifest_.d_model);
  const auto pos = manifest_.layer_position(record.layer);
  if (!pos) throw ValidationError("record references unknown layer " + std::to_string(record.layer));
  if (record.language_index >= manifest_.languages.size()) {
    throw ValidationError("record references unknown language index " +
                          std::to_string(record.language_index));
  }
  const std::uint32_t tokens = record.token_count();
  const std::size_t nmask = mask_bytes(tokens);
  scratch_.assign(kRecordHeaderBytes + nmask + record.activations.size() * 4, 0);
  io::put_u32(scratch_.data(), record.layer);
  io::put_u32(scratch_.data() + 4, record.language_index);
  io::put_u32(scratch_.data() + 8, tokens);
  std::uint8_t* mask = scratch_.data() + kRecordHeaderBytes;
  for (std::uint32_t t = 0; t < tokens; ++t) {
    if (record.keep_mask[t]) mask[t / 8] |= static_cast<std::uint8_t>(1u << (t % 8));
  }
  io::encode_f32(record.activations, mask + nmask);
  spool_.write(reinterpret_cast<const char*>(scratch_.data()),
               static_cast<std::streamsize>(scratch_.size()));
  if (!spool_) throw IoError("write failed on '" + spool_path_.string() + "'");
  ++manifest_.record_counts[*pos][record.language_index];
}

StoreManifest StoreWriter::finish() {
  if (finished_) throw ValidationError("store writer already finished");
  spool_.close();
  if (!spool_) throw IoError("failed to flush '" + spool_path_.string() + "'");

  const std::string manifest_json = manifest_to_json(manifest_).dump();
  io::ChecksummedWriter out(path_);
  out.write(kMagic, 4);
  out.write_u32(kStoreFormatVersion);
  out.write_u32(manifest_.d_model);
  out.write_u32(static_cast<std::uint32_t>(manifest_json.size()));
  out.write_string(manifest_json);

  std::ifstream spool(spool_path_, std::ios::binary);
  if (!spool) throw IoError("cannot reopen '" + spool_path_.string() + "'");
  std::vector<char> block(1 << 16);
  while (spool) {
    spool.read(block.data(), static_cast<std::streamsize>(block.size()));
    const auto got = spool.gcount();
    if (got > 0) out.write(block.data(), static_cast<std::size_t>(got));
  }
  spool.close();
  out.finish();
  std::filesystem::remove(spool_path_);
  finished_ = true;
  return manifest_;
}

StoreManifest write_store(const StoreManifest& manifest,
                          std::span<const ActivationRecord> records,
                          const std::filesystem::path& path) {
  StoreWriter writer(path, manifest);
  for (const auto& r : records) writer.write(r);
  return writer.finish();
}

// ---------------------------------------------------------------------------

RecordCursor::RecordCursor(std::filesystem::path path, std::uint32_t d_model,
                           std::vector<RecordLocation> locations)
    : d_model_(d_model),
      locations_(std::move(locations)),
      in_(std::make_unique<std::ifstream>(path, std::ios::binary)) {
  if (!*in_) throw IoError("cannot open '" + path.string() + "'");
}

bool RecordCursor::next(ActivationRecord& out) {
  if (pos_ >= locations_.size()) return false;
  const RecordLocation& loc = locations_[pos_++];
  const std::size_t nmask = mask_bytes(loc.token_count);
  const std::size_t nvals = static_cast<std::size_t>(loc.token_count) * d_model_;
  scratch_.resize(nmask + nvals * 4);
  in_->seekg(static_cast<std::streamoff>(loc.offset + kRecordHeaderBytes));
  in_->read(reinterpret_cast<char*>(scratch_.data()), static_cast<std::streamsize>(scratch_.size()));
  if (!*in_) throw FormatError("store record is truncated");
  out.layer = loc.layer;
  out.language_index = loc.language_index;
  out.d_model = d_model_;
  out.keep_mask.resize(loc.token_count);
  for (std::uint32_t t = 0; t < loc.token_count; ++t) {
    out.keep_mask[t] = (scratch_[t / 8] >> (t % 8)) & 1u;
  }
  out.activations.resize(nvals);
  io::decode_f32(scratch_.data() + nmask, out.activations);
  return true;
}

StoreReader StoreReader::open(const std::filesystem::path& path) {
  std::error_code ec;
  const auto file_size = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cannot stat '" + path.string() + "': " + ec.message());
  if (file_size < kHeaderBytes + 4) throw FormatError("'" + path.string() + "' is truncated");

  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::uint8_t header[kHeaderBytes];
  in.read(reinterpret_cast<char*>(header), kHeaderBytes);
  if (std::memcmp(header, kMagic, 4) != 0) {
    throw FormatError("'" + path.string() + "' is not an activation store (bad magic)");
  }
  const std::uint32_t version = io::get_u32(header + 4);
  if (version != kStoreFormatVersion) {
    throw FormatError("unsupported activation store version " + std::to_string(version));
  }
  const std::uint32_t d_model = io::get_u32(header + 8);
  const std::uint32_t manifest_len = io::get_u32(header + 12);
  const std::uint64_t payload_end = file_size - 4;
  if (kHeaderBytes + static_cast<std::uint64_t>(manifest_len) > payload_end) {
    throw FormatError("'" + path.string() + "' is truncated");
  }

  std::uint8_t trailer[4];
  in.seekg(static_cast<std::streamoff>(payload_end));
  in.read(reinterpret_cast<char*>(trailer), 4);
  if (io::crc32_of_file_prefix(path, payload_end) != io::get_u32(trailer)) {
    throw FormatError("checksum mismatch in '" + path.string() + "'");
  }

  StoreReader reader;
  reader.path_ = path;
  std::string manifest_json(manifest_len, '\0');
  in.seekg(kHeaderBytes);
  in.read(manifest_json.data(), manifest_len);
  try {
    reader.manifest_ = manifest_from_json(nlohmann::json::parse(manifest_json));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed store manifest: ") + e.what());
  }
  try {
    reader.manifest_.validate();
  } catch (const ValidationError& e) {
    throw FormatError(std::string("invalid store manifest: ") + e.what());
  }
  if (reader.manifest_.d_model != d_model) throw FormatError("header/manifest d_model mismatch");
  if (reader.manifest_.record_counts.empty()) reset_counts(reader.manifest_);

  std::vector<std::vector<std::uint64_t>> seen(
      reader.manifest_.layer_indices.size(),
      std::vector<std::uint64_t>(reader.manifest_.languages.size(), 0));
  std::uint64_t offset = kHeaderBytes + manifest_len;
  while (offset < payload_end) {
    if (offset + kRecordHeaderBytes > payload_end) throw FormatError("truncated record header");
    std::uint8_t rh[kRecordHeaderBytes];
    in.seekg(static_cast<std::streamoff>(offset));
    in.read(reinterpret_cast<char*>(rh), kRecordHeaderBytes);
    RecordLocation loc{offset, io::get_u32(rh), io::get_u32(rh + 4), io::get_u32(rh + 8)};
    const auto pos = reader.manifest_.layer_position(loc.layer);
    if (!pos || loc.language_index >= reader.manifest_.languages.size() || loc.token_count == 0) {
      throw FormatError("record at offset " + std::to_string(offset) +
                        " is inconsistent with the manifest");
    }
    offset += kRecordHeaderBytes + mask_bytes(loc.token_count) +
              static_cast<std::uint64_t>(loc.token_count) * d_model * 4;
    if (offset > payload_end) throw FormatError("truncated record payload");
    ++seen[*pos][loc.language_index];
    reader.index_.push_back(loc);
  }
  if (seen != reader.manifest_.record_counts) {
    throw FormatError("manifest record counts do not match the records present");
  }
  return reader;
}

RecordCursor StoreReader::scan(const RecordFilter& filter) const {
  std::optional<std::uint32_t> lang;
  if (filter.language) {
    const auto idx = manifest_.language_index(*filter.language);
    if (!idx) throw ValidationError("unknown language '" + *filter.language + "'");
    lang = static_cast<std::uint32_t>(*idx);
  }
  if (filter.layer && !manifest_.layer_position(*filter.layer)) {
    throw ValidationError("unknown layer " + std::to_string(*filter.layer));
  }
  std::vector<RecordLocation> chosen;
  for (const auto& loc : index_) {
    if (filter.layer && loc.layer != *filter.layer) continue;
    if (lang && loc.language_index != *lang) continue;
    chosen.push_back(loc);
  }
  return RecordCursor(path_, manifest_.d_model, std::move(chosen));
}

std::vector<ActivationRecord> StoreReader::read_all(const RecordFilter& filter) const {
  auto cursor = scan(filter);
  std::vector<ActivationRecord> out;
  ActivationRecord rec;
  while (cursor.next(rec)) out.push_back(rec);
  return out;
}

}  // namespace saesteer
