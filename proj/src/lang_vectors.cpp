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


#include "saesteer/lang_vectors.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "saesteer/binary_io.hpp"
#include "saesteer/error.hpp"
#include "saesteer/kernels.hpp"

namespace saesteer {
namespace {

constexpr char kVectorKind[] = "steering-vector";
constexpr char kVectorSetKind[] = "language-vector-set";

void write_container(const std::filesystem::path& path, const nlohmann::json& header,
                     const std::vector<std::uint8_t>& payload) {
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  std::uint8_t len[4];
  io::put_u32(len, static_cast<std::uint32_t>(text.size()));
  out.write(reinterpret_cast<const char*>(len), 4);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write failed on '" + path.string() + "'");
}

std::pair<nlohmann::json, std::vector<std::uint8_t>> read_container(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 4) throw FormatError("'" + path.string() + "' is truncated");
  const std::uint32_t len = io::get_u32(bytes.data());
  if (bytes.size() < 4 + static_cast<std::size_t>(len)) {
    throw FormatError("'" + path.string() + "' is truncated");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 4, bytes.begin() + 4 + len);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path.string() + "' has a malformed header: " + e.what());
  }
  return {std::move(header), std::vector<std::uint8_t>(bytes.begin() + 4 + len, bytes.end())};
}

std::size_t total_tokens(const LanguageSums& s, std::optional<std::size_t> skip = std::nullopt) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < s.counts.size(); ++i) {
    if (skip && *skip == i) continue;
    n += s.counts[i];
  }
  return n;
}

}  // namespace

std::string_view space_name(Space s) { return s == Space::kSparse ? "sparse" : "dense"; }

Space parse_space(std::string_view name) {
  if (name == "sparse") return Space::kSparse;
  if (name == "dense") return Space::kDense;
  throw ValidationError("unknown space '" + std::string(name) + "' (expected sparse|dense)");
}

double suite_default_alpha(Suite suite) { return suite == Suite::kGemma ? 100.0 : 5.0; }

Suite parse_suite(std::string_view name) {
  if (name == "llama") return Suite::kLlama;
  if (name == "gemma") return Suite::kGemma;
  throw ValidationError("unknown suite '" + std::string(name) + "' (expected llama|gemma)");
}

Codec Codec::dense(std::uint32_t d_model) { return Codec(d_model, nullptr); }

Codec Codec::sparse(const SaeParams& sae) {
  sae.validate();
  return Codec(sae.d_model, &sae);
}

std::size_t Codec::output_dims() const { return sae_ ? sae_->n_features : d_model_; }

void Codec::accumulate(std::span<const float> h, std::span<double> acc) const {
  if (h.size() != d_model_ || acc.size() != output_dims()) {
    throw ValidationError("dimension mismatch in codec accumulate");
  }
  if (!sae_) {
    kernels::active().axpy_acc(1.0, h.data(), acc.data(), h.size());
    return;
  }
  const SparseCode code = encode(*sae_, h);
  for (auto j : code.active) acc[j] += code.z[j];
}

LanguageSums language_sums(const StoreReader& store, const Codec& codec, std::uint32_t layer) {
  const auto& m = store.manifest();
  if (codec.input_dims() != m.d_model) {
    throw ValidationError("codec expects D=" + std::to_string(codec.input_dims()) +
                          " but the store has d_model " + std::to_string(m.d_model));
  }
  LanguageSums s;
  s.layer = layer;
  s.space = codec.space();
  s.labels = m.languages;
  s.sums.assign(m.languages.size(), std::vector<double>(codec.output_dims(), 0.0));
  s.counts.assign(m.languages.size(), 0);
  auto cursor = store.scan(RecordFilter{layer, std::nullopt});
  ActivationRecord rec;
  while (cursor.next(rec)) {
    for (std::size_t t = 0; t < rec.token_count(); ++t) {
      if (!rec.keep_mask[t]) continue;
      codec.accumulate(rec.token(t), s.sums[rec.language_index]);
      ++s.counts[rec.language_index];
    }
  }
  return s;
}

void SteeringVector::validate() const {
  if (w.empty()) throw ValidationError("steering vector is empty");
  if (target_language.empty()) throw ValidationError("steering vector has no target language");
  if (!all_finite(w)) throw ValidationError("steering vector contains NaN or Inf");
  if (!std::isfinite(default_alpha)) throw ValidationError("steering strength must be finite");
}

void LanguageVectorSet::validate() const {
  if (labels.size() < 2) throw ValidationError("a language vector set needs at least 2 languages");
  if (vectors.size() != labels.size()) throw ValidationError("vector/label count mismatch");
  std::set<std::string> seen;
  for (const auto& l : labels) {
    if (!seen.insert(l).second) throw ValidationError("duplicate language '" + l + "'");
  }
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].size() != vectors[0].size() || vectors[i].empty()) {
      throw ValidationError("language vectors have inconsistent lengths");
    }
    if (!all_finite(vectors[i])) {
      throw ValidationError("language vector for '" + labels[i] + "' is not finite");
    }
  }
}

std::vector<double> mean_code(const StoreReader& store, const Codec& codec, std::uint32_t layer,
                              std::span<const std::string> languages) {
  const LanguageSums s = language_sums(store, codec, layer);
  std::vector<double> sum(codec.output_dims(), 0.0);
  std::uint64_t n = 0;
  for (const auto& label : languages) {
    const auto idx = store.manifest().language_index(label);
    if (!idx) throw ValidationError("unknown language '" + label + "'");
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += s.sums[*idx][i];
    n += s.counts[*idx];
  }
  if (n == 0) {
    throw ValidationError("no usable tokens for the requested languages at layer " +
                          std::to_string(layer));
  }
  for (auto& v : sum) v /= static_cast<double>(n);
  return sum;
}

std::vector<double> diffmean_from_sums(const LanguageSums& sums, std::size_t target) {
  if (target >= sums.labels.size()) throw ValidationError("target language index out of range");
  const std::uint64_t n_pos = sums.counts[target];
  const std::uint64_t n_neg = total_tokens(sums, target);
  if (n_pos == 0) {
    throw ValidationError("no usable tokens for target language '" + sums.labels[target] +
                          "' at layer " + std::to_string(sums.layer));
  }
  if (n_neg == 0) {
    throw ValidationError("empty negative pool for target language '" + sums.labels[target] +
                          "' at layer " + std::to_string(sums.layer));
  }
  const std::size_t dims = sums.dims();
  std::vector<double> neg(dims, 0.0);
  for (std::size_t l = 0; l < sums.labels.size(); ++l) {
    if (l == target) continue;
    for (std::size_t i = 0; i < dims; ++i) neg[i] += sums.sums[l][i];
  }
  std::vector<double> w(dims);
  const auto inv_pos = 1.0 / static_cast<double>(n_pos);
  const auto inv_neg = 1.0 / static_cast<double>(n_neg);
  for (std::size_t i = 0; i < dims; ++i) w[i] = sums.sums[target][i] * inv_pos - neg[i] * inv_neg;
  return w;
}

SteeringVector diffmean(const StoreReader& store, const Codec& codec, std::uint32_t layer,
                        const std::string& target_language, double default_alpha) {
  const auto target = store.manifest().language_index(target_language);
  if (!target) throw ValidationError("unknown language '" + target_language + "'");
  const LanguageSums s = language_sums(store, codec, layer);
  const auto w = diffmean_from_sums(s, *target);
  SteeringVector v;
  v.layer = layer;
  v.space = codec.space();
  v.target_language = target_language;
  v.w.assign(w.begin(), w.end());
  v.default_alpha = default_alpha;
  v.validate();
  return v;
}

LanguageVectorSet contrast_from_sums(const LanguageSums& sums) {
  if (sums.labels.size() < 2) {
    throw ValidationError("contrast vectors need at least 2 languages");
  }
  LanguageVectorSet set;
  set.layer = sums.layer;
  set.space = sums.space;
  set.labels = sums.labels;
  for (std::size_t i = 0; i < sums.labels.size(); ++i) {
    set.vectors.push_back(diffmean_from_sums(sums, i));
  }
  set.validate();
  return set;
}

LanguageVectorSet contrast_set(const StoreReader& store, const Codec& codec, std::uint32_t layer) {
  return contrast_from_sums(language_sums(store, codec, layer));
}

void save_steering_vector(const SteeringVector& v, const std::filesystem::path& path) {
  v.validate();
  nlohmann::json h;
  h["kind"] = kVectorKind;
  h["layer"] = v.layer;
  h["space"] = space_name(v.space);
  h["language"] = v.target_language;
  h["alpha"] = v.default_alpha;
  h["dims"] = v.w.size();
  h["dtype"] = "f32";
  std::vector<std::uint8_t> payload(v.w.size() * 4);
  io::encode_f32(v.w, payload.data());
  write_container(path, h, payload);
}

SteeringVector load_steering_vector(const std::filesystem::path& path) {
  auto [h, payload] = read_container(path);
  SteeringVector v;
  try {
    if (h.at("kind").get<std::string>() != kVectorKind || h.at("dtype").get<std::string>() != "f32") {
      throw FormatError("'" + path.string() + "' is not a steering-vector file");
    }
    v.layer = h.at("layer").get<std::uint32_t>();
    v.space = parse_space(h.at("space").get<std::string>());
    v.target_language = h.at("language").get<std::string>();
    v.default_alpha = h.at("alpha").get<double>();
    v.w.resize(h.at("dims").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path.string() + "' has an invalid header: " + e.what());
  }
  if (payload.size() != v.w.size() * 4) throw FormatError("'" + path.string() + "' payload size mismatch");
  io::decode_f32(payload.data(), v.w);
  v.validate();
  return v;
}

void save_vector_set(const LanguageVectorSet& set, const std::filesystem::path& path) {
  set.validate();
  nlohmann::json h;
  h["kind"] = kVectorSetKind;
  h["layer"] = set.layer;
  h["space"] = space_name(set.space);
  h["labels"] = set.labels;
  h["rows"] = set.size();
  h["dims"] = set.dims();
  h["dtype"] = "f64";
  std::vector<std::uint8_t> payload(set.size() * set.dims() * 8);
  for (std::size_t i = 0; i < set.size(); ++i) {
    io::encode_f64(set.vectors[i], payload.data() + i * set.dims() * 8);
  }
  write_container(path, h, payload);
}

LanguageVectorSet load_vector_set(const std::filesystem::path& path) {
  auto [h, payload] = read_container(path);
  LanguageVectorSet set;
  std::size_t rows = 0, dims = 0;
  try {
    if (h.at("kind").get<std::string>() != kVectorSetKind || h.at("dtype").get<std::string>() != "f64") {
      throw FormatError("'" + path.string() + "' is not a language-vector-set file");
    }
    set.layer = h.at("layer").get<std::uint32_t>();
    set.space = parse_space(h.at("space").get<std::string>());
    set.labels = h.at("labels").get<std::vector<std::string>>();
    rows = h.at("rows").get<std::size_t>();
    dims = h.at("dims").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path.string() + "' has an invalid header: " + e.what());
  }
  if (rows != set.labels.size() || payload.size() != rows * dims * 8) {
    throw FormatError("'" + path.string() + "' payload size mismatch");
  }
  set.vectors.assign(rows, std::vector<double>(dims));
  for (std::size_t i = 0; i < rows; ++i) io::decode_f64(payload.data() + i * dims * 8, set.vectors[i]);
  set.validate();
  return set;
}

}  // namespace saesteer
