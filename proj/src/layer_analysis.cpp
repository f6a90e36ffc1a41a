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


#include "saesteer/layer_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <nlohmann/json.hpp>

#include "saesteer/error.hpp"
#include "saesteer/symmetric_eigen.hpp"

namespace saesteer {

void CorrelationMatrix::validate() const {
  const std::size_t n = size();
  if (values.size() != n * n) throw ValidationError("correlation matrix is not N x N");
  for (std::size_t i = 0; i < n; ++i) {
    if ((*this)(i, i) != 1.0) throw ValidationError("correlation matrix diagonal must be 1");
    for (std::size_t j = 0; j < n; ++j) {
      const double v = (*this)(i, j);
      if (!std::isfinite(v) || v < -1.0 || v > 1.0) {
        throw ValidationError("correlation entry outside [-1, 1]");
      }
      if (std::abs(v - (*this)(j, i)) > 1e-12) {
        throw ValidationError("correlation matrix is not symmetric");
      }
    }
  }
  const auto eig = symmetric_eigenvalues(values, n);
  if (!eig.empty() && eig.front() < -1e-8) {
    throw ValidationError("correlation matrix is not positive semidefinite");
  }
}

CorrelationMatrix correlation(const LanguageVectorSet& vectors) {
  vectors.validate();
  const std::size_t n = vectors.size();
  const std::size_t dims = vectors.dims();
  // Center and scale each vector once; C_ij is then a plain dot product.
  std::vector<std::vector<double>> unit(n, std::vector<double>(dims));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& v = vectors.vectors[i];
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(dims);
    double ss = 0.0;
    double max_abs = 0.0;
    for (std::size_t k = 0; k < dims; ++k) {
      unit[i][k] = v[k] - mean;
      ss += unit[i][k] * unit[i][k];
      max_abs = std::max(max_abs, std::abs(v[k]));
    }
    const double norm = std::sqrt(ss);
    // Centering a constant vector leaves only rounding residue.
    if (!(norm > 1e-12 * max_abs * std::sqrt(static_cast<double>(dims)))) {
      throw ValidationError("language vector for '" + vectors.labels[i] +
                            "' has zero variance at layer " + std::to_string(vectors.layer));
    }
    for (auto& x : unit[i]) x /= norm;
  }
  CorrelationMatrix c;
  c.labels = vectors.labels;
  c.values.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    c.values[i * n + i] = 1.0;
    for (std::size_t j = 0; j < i; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < dims; ++k) dot += unit[i][k] * unit[j][k];
      dot = std::clamp(dot, -1.0, 1.0);
      c.values[i * n + j] = dot;
      c.values[j * n + i] = dot;
    }
  }
  return c;
}

double multilinguality(const CorrelationMatrix& c) {
  const std::size_t n = c.size();
  if (n == 0 || c.values.size() != n * n) throw ValidationError("empty correlation matrix");
  const auto eig = symmetric_eigenvalues(c.values, n);
  return eig.back() / static_cast<double>(n);
}

std::vector<double> find_intersections(std::span<const std::uint32_t> layers,
                                       std::span<const double> f, double tau) {
  if (layers.size() != f.size()) throw ValidationError("layer/profile length mismatch");
  if (layers.size() < 2) throw ValidationError("intersection search needs at least 2 layers");
  if (!(tau >= 0.0)) throw ValidationError("tolerance must be non-negative");
  for (std::size_t i = 1; i < layers.size(); ++i) {
    if (layers[i] <= layers[i - 1]) throw ValidationError("layers must be strictly increasing");
  }
  std::vector<double> g(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!std::isfinite(f[i])) throw ValidationError("non-finite multilinguality value");
    g[i] = 2.0 * f[i] - 1.0;
  }
  std::vector<double> hits;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (std::abs(g[i]) <= tau) hits.push_back(layers[i]);
    if (i + 1 < g.size() && std::abs(g[i]) > tau && std::abs(g[i + 1]) > tau &&
        g[i] * g[i + 1] < 0.0) {
      const double frac = g[i] / (g[i] - g[i + 1]);
      const double span = static_cast<double>(layers[i + 1]) - static_cast<double>(layers[i]);
      hits.push_back(static_cast<double>(layers[i]) + frac * span);
    }
  }
  std::sort(hits.begin(), hits.end());
  std::vector<double> out;
  for (double h : hits) {
    if (out.empty() || h - out.back() > 1e-9) out.push_back(h);
  }
  return out;
}

LayerProfile build_profile(std::span<const LanguageVectorSet> per_layer, double tau) {
  std::vector<std::size_t> order(per_layer.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return per_layer[a].layer < per_layer[b].layer; });
  LayerProfile p;
  for (auto idx : order) {
    const auto& set = per_layer[idx];
    if (!p.layers.empty() && p.layers.back() == set.layer) {
      throw ValidationError("duplicate vector set for layer " + std::to_string(set.layer));
    }
    const double f = multilinguality(correlation(set));
    p.layers.push_back(set.layer);
    p.f.push_back(f);
    p.s.push_back(separability(f));
  }
  if (p.layers.size() >= 2) p.intersections = find_intersections(p.layers, p.f, tau);
  return p;
}

FamilyReport family_report(const CorrelationMatrix& c,
                           const std::map<std::string, std::string>& family_of) {
  const std::size_t n = c.size();
  FamilyReport r;
  std::vector<std::size_t> fam(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto it = family_of.find(c.labels[i]);
    if (it == family_of.end()) {
      throw ValidationError("no family assigned to language '" + c.labels[i] + "'");
    }
    const auto pos = std::find(r.families.begin(), r.families.end(), it->second);
    fam[i] = static_cast<std::size_t>(pos - r.families.begin());
    if (pos == r.families.end()) r.families.push_back(it->second);
  }
  const std::size_t nf = r.families.size();
  std::vector<double> sum(nf * nf, 0.0);
  std::vector<std::size_t> count(nf * nf, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const std::size_t a = std::min(fam[i], fam[j]);
      const std::size_t b = std::max(fam[i], fam[j]);
      sum[a * nf + b] += c(i, j);
      ++count[a * nf + b];
    }
  }
  double within_sum = 0.0, cross_sum = 0.0;
  std::size_t within_n = 0, cross_n = 0;
  for (std::size_t a = 0; a < nf; ++a) {
    const std::size_t k = a * nf + a;
    r.within.push_back(count[k] ? std::optional<double>(sum[k] / static_cast<double>(count[k]))
                                : std::nullopt);
    within_sum += sum[k];
    within_n += count[k];
    for (std::size_t b = a + 1; b < nf; ++b) {
      const std::size_t kb = a * nf + b;
      r.cross.push_back({r.families[a], r.families[b], sum[kb] / static_cast<double>(count[kb])});
      cross_sum += sum[kb];
      cross_n += count[kb];
    }
  }
  if (within_n) r.overall_within = within_sum / static_cast<double>(within_n);
  if (cross_n) r.overall_cross = cross_sum / static_cast<double>(cross_n);
  return r;
}

std::string profile_csv(const LayerProfile& profile) {
  std::string out = "layer,f,s\n";
  char line[96];
  for (std::size_t i = 0; i < profile.layers.size(); ++i) {
    std::snprintf(line, sizeof(line), "%u,%.17g,%.17g\n", profile.layers[i], profile.f[i],
                  profile.s[i]);
    out += line;
  }
  return out;
}

nlohmann::json profile_json(const LayerProfile& profile, double tau) {
  nlohmann::json j;
  j["tolerance"] = tau;
  j["intersections"] = profile.intersections;
  j["layers"] = nlohmann::json::array();
  for (std::size_t i = 0; i < profile.layers.size(); ++i) {
    j["layers"].push_back({{"layer", profile.layers[i]}, {"f", profile.f[i]}, {"s", profile.s[i]}});
  }
  return j;
}

nlohmann::json family_report_json(const FamilyReport& report) {
  nlohmann::json j;
  j["families"] = report.families;
  j["within"] = nlohmann::json::object();
  for (std::size_t a = 0; a < report.families.size(); ++a) {
    j["within"][report.families[a]] =
        report.within[a] ? nlohmann::json(*report.within[a]) : nlohmann::json(nullptr);
  }
  j["cross"] = nlohmann::json::array();
  for (const auto& p : report.cross) {
    j["cross"].push_back({{"a", p.first}, {"b", p.second}, {"mean", p.mean}});
  }
  j["overall_within"] = report.overall_within ? nlohmann::json(*report.overall_within)
                                              : nlohmann::json(nullptr);
  j["overall_cross"] = report.overall_cross ? nlohmann::json(*report.overall_cross)
                                            : nlohmann::json(nullptr);
  return j;
}

}  // namespace saesteer
