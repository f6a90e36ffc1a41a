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


// DiffMean steering vectors and per-language contrast vectors.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "saesteer/activation_store.hpp"
#include "saesteer/sae.hpp"

namespace saesteer {

enum class Space { kSparse, kDense };

std::string_view space_name(Space s);
Space parse_space(std::string_view name);  // "sparse" | "dense"

// Steering strengths the two reference model suites use.
enum class Suite { kLlama, kGemma };
double suite_default_alpha(Suite suite);  // 5.0 and 100.0
Suite parse_suite(std::string_view name);

// Maps a dense activation into the space the statistics are taken in: the
// identity (dense) or the SAE code (sparse).
class Codec {
 public:
  static Codec dense(std::uint32_t d_model);
  static Codec sparse(const SaeParams& sae);

  Space space() const { return sae_ ? Space::kSparse : Space::kDense; }
  std::size_t input_dims() const { return d_model_; }
  std::size_t output_dims() const;
  // acc += code(h)
  void accumulate(std::span<const float> h, std::span<double> acc) const;

 private:
  Codec(std::uint32_t d_model, const SaeParams* sae) : d_model_(d_model), sae_(sae) {}
  std::uint32_t d_model_;
  const SaeParams* sae_;
};

// Per-language sums of codes over kept tokens at one layer, accumulated in
// double in file order.
struct LanguageSums {
  std::uint32_t layer = 0;
  Space space = Space::kDense;
  std::vector<std::string> labels;
  std::vector<std::vector<double>> sums;  // one row per language
  std::vector<std::uint64_t> counts;      // kept tokens per language

  std::size_t dims() const { return sums.empty() ? 0 : sums.front().size(); }
};

LanguageSums language_sums(const StoreReader& store, const Codec& codec, std::uint32_t layer);

struct SteeringVector {
  std::uint32_t layer = 0;
  Space space = Space::kSparse;
  std::string target_language;
  std::vector<float> w;
  double default_alpha = 5.0;

  void validate() const;
};

struct LanguageVectorSet {
  std::uint32_t layer = 0;
  Space space = Space::kDense;
  std::vector<std::string> labels;
  std::vector<std::vector<double>> vectors;  // v_i, one per label

  std::size_t size() const { return labels.size(); }
  std::size_t dims() const { return vectors.empty() ? 0 : vectors.front().size(); }
  // N >= 2, unique labels, equal-length finite rows.
  void validate() const;
};

// Mean code over every kept token of the listed languages at `layer`.
std::vector<double> mean_code(const StoreReader& store, const Codec& codec, std::uint32_t layer,
                              std::span<const std::string> languages);

// Mean of the target language's tokens minus the mean of all other
// languages' tokens pooled together.
std::vector<double> diffmean_from_sums(const LanguageSums& sums, std::size_t target);
SteeringVector diffmean(const StoreReader& store, const Codec& codec, std::uint32_t layer,
                        const std::string& target_language, double default_alpha = 5.0);

// diffmean for every language of the store, as one set.
LanguageVectorSet contrast_from_sums(const LanguageSums& sums);
LanguageVectorSet contrast_set(const StoreReader& store, const Codec& codec, std::uint32_t layer);

// Vector files: u32 header length | JSON header | raw little-endian payload.
// Steering vectors carry f32 payloads; vector sets carry f64 so the analysis
// stays in double end to end.
void save_steering_vector(const SteeringVector& v, const std::filesystem::path& path);
SteeringVector load_steering_vector(const std::filesystem::path& path);
void save_vector_set(const LanguageVectorSet& set, const std::filesystem::path& path);
LanguageVectorSet load_vector_set(const std::filesystem::path& path);

}  // namespace saesteer
