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


// Correlation structure of language vectors across layers: multilinguality
// (top-eigenvalue explained-variance ratio), separability, and the layers
// where the two balance.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "saesteer/lang_vectors.hpp"

namespace saesteer {

inline constexpr double kDefaultIntersectionTolerance = 1e-3;

struct CorrelationMatrix {
  std::vector<std::string> labels;
  std::vector<double> values;  // N x N, row-major

  std::size_t size() const { return labels.size(); }
  double operator()(std::size_t i, std::size_t j) const { return values[i * size() + j]; }

  // Symmetric to 1e-12, unit diagonal, entries in [-1, 1], eigenvalues
  // >= -1e-8. Throws ValidationError otherwise.
  void validate() const;
};

// Pearson correlation of every pair of vectors over their components.
// A vector with zero variance is an error naming its language.
CorrelationMatrix correlation(const LanguageVectorSet& vectors);

// lambda_max / N.
double multilinguality(const CorrelationMatrix& c);

inline double separability(double multilinguality) { return 1.0 - multilinguality; }

struct LayerProfile {
  std::vector<std::uint32_t> layers;
  std::vector<double> f;  // multilinguality per layer
  std::vector<double> s;  // separability per layer
  std::vector<double> intersections;  // fractional layer positions
};

// Positions where g = 2f - 1 vanishes: a layer with |g| <= tau is reported as
// is; an adjacent pair with g values of opposite sign, both beyond tau, is
// reported at the linearly interpolated position. Sorted, duplicates within
// 1e-9 merged. `layers` must be strictly increasing.
std::vector<double> find_intersections(std::span<const std::uint32_t> layers,
                                       std::span<const double> f, double tau);

// Profile over one vector set per layer (any order; layers must be distinct).
LayerProfile build_profile(std::span<const LanguageVectorSet> per_layer, double tau);

struct FamilyPairMean {
  std::string first;
  std::string second;
  double mean = 0.0;
};

struct FamilyReport {
  std::vector<std::string> families;            // first-appearance order
  std::vector<std::optional<double>> within;    // nullopt for single-member families
  std::vector<FamilyPairMean> cross;            // one entry per family pair
  std::optional<double> overall_within;         // mean over all within-family pairs
  std::optional<double> overall_cross;          // mean over all cross-family pairs
};

// Block means of the off-diagonal correlations, grouped by family.
// `family_of` maps every label of `c` to a family name.
FamilyReport family_report(const CorrelationMatrix& c,
                           const std::map<std::string, std::string>& family_of);

// "layer,f,s" rows, 17 significant digits.
std::string profile_csv(const LayerProfile& profile);

nlohmann::json profile_json(const LayerProfile& profile, double tau);
nlohmann::json family_report_json(const FamilyReport& report);

}  // namespace saesteer
