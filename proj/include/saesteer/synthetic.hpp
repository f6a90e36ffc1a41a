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


// Synthetic multi-layer, multi-language activation stores whose
// multilinguality profile is known in closed form, plus the brute-force
// reference path that computes that profile.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "saesteer/activation_store.hpp"
#include "saesteer/lang_vectors.hpp"
#include "saesteer/layer_analysis.hpp"

namespace saesteer {

// Language means at layer l interpolate between a two-family configuration
// (t = 0) and a configuration where every language has its own direction
// (t = 1):
//   block_i    = scale * (u_family(i) + family_spread * u_{2+i})
//   distinct_i = scale * u_{2+i}
//   mean_i(l)  = (1 - t_l) * block_i + t_l * distinct_i
// over a seeded random orthonormal basis u_0..u_{N+1} of R^D. The first half
// of the languages forms family 0, the rest family 1. Each record starts with
// one masked special token whose activation ignores the language.
struct SynthSpec {
  std::uint32_t n_languages = 6;
  std::uint32_t d_model = 32;
  std::uint32_t n_layers = 12;
  std::uint32_t samples_per_language = 64;  // kept tokens per language per layer
  std::uint32_t tokens_per_record = 8;      // kept tokens per record (plus the special one)
  double sigma = 0.0;                       // absolute per-component noise
  double sigma_fraction = 0.0;              // added noise as a fraction of the mean ||mean_i||
  double scale = 4.0;
  double family_spread = 0.3;
  std::vector<double> blend;                // t_l per layer in [0, 1]; empty = linear ramp
  double tolerance = kDefaultIntersectionTolerance;
  std::uint64_t seed = 0;
  std::string model_name = "synthetic";

  // N >= 3, D >= N + 2, blend values within [0, 1], sigma >= 0.
  void validate() const;
  double blend_at(std::uint32_t layer) const;
  std::vector<std::string> labels() const;
  std::vector<std::uint32_t> families() const;
};

void to_json(nlohmann::json& j, const SynthSpec& s);
void from_json(const nlohmann::json& j, SynthSpec& s);

struct SynthOutput {
  StoreManifest manifest;
  LayerProfile oracle;
  // Float-rounded noiseless means, [layer][language][component].
  std::vector<std::vector<std::vector<float>>> means;
  double effective_sigma = 0.0;
  double mean_norm = 0.0;
};

// Writes the store to `store_path` and returns the reference profile.
SynthOutput generate(const SynthSpec& spec, const std::filesystem::path& store_path);

nlohmann::json oracle_json(const LayerProfile& profile, double tolerance);
LayerProfile oracle_from_json(const nlohmann::json& j);

// Vectors in R^{N+1} whose Pearson correlation matrix equals the target
// C_ij = 1 (i == j), rho_in (same family), rho_out (otherwise). Throws
// ValidationError if the target is not positive semidefinite.
LanguageVectorSet plant_block_correlation(std::span<const std::uint32_t> family_of, double rho_in,
                                          double rho_out);
std::vector<double> block_correlation_target(std::span<const std::uint32_t> family_of,
                                             double rho_in, double rho_out);

// Reference computations: scalar loops that share no code with the library's
// analysis path.
namespace oracle {

// Pearson matrix via the textbook two-pass formula.
std::vector<double> pearson_matrix(const std::vector<std::vector<double>>& vectors);
// All eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
std::vector<double> jacobi_eigenvalues(std::vector<double> a, std::size_t n);
// lambda_max / sum(lambda).
double explained_variance_ratio(const std::vector<double>& corr, std::size_t n);
// Sign-change / on-grid crossing search for f = 0.5.
std::vector<double> crossings(const std::vector<std::uint32_t>& layers,
                              const std::vector<double>& f, double tol);
// v_i = N/(N-1) * (mean_i - grand mean)
std::vector<std::vector<double>> noiseless_contrast(const std::vector<std::vector<float>>& means);

}  // namespace oracle

}  // namespace saesteer
