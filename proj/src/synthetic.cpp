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


#include "saesteer/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "saesteer/error.hpp"
#include "saesteer/train.hpp"

namespace saesteer {
namespace {

constexpr const char* kFloresCodes[] = {
    "eng_Latn", "deu_Latn", "fra_Latn", "spa_Latn", "ita_Latn", "por_Latn", "nld_Latn",
    "afr_Latn", "swe_Latn", "dan_Latn", "nob_Latn", "pol_Latn", "rus_Cyrl", "tur_Latn",
    "mlt_Latn", "arb_Arab", "hin_Deva", "zho_Hans", "jpn_Jpan", "kor_Hang", "bod_Tibt"};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Box-Muller on the raw engine, independent of <random> distributions.
class Gaussian {
 public:
  explicit Gaussian(std::uint64_t seed) : rng_(seed) {}
  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01(rng_);
    while (u1 <= 0.0) u1 = uniform01(rng_);
    const double u2 = uniform01(rng_);
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::vector<std::vector<double>> orthonormal_basis(std::size_t count, std::size_t dims,
                                                   std::uint64_t seed) {
  Gaussian gauss(seed);
  std::vector<std::vector<double>> basis;
  while (basis.size() < count) {
    std::vector<double> v(dims);
    for (auto& x : v) x = gauss();
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) {
        double dot = 0.0;
        for (std::size_t k = 0; k < dims; ++k) dot += v[k] * b[k];
        for (std::size_t k = 0; k < dims; ++k) v[k] -= dot * b[k];
      }
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-6) continue;
    for (auto& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  return basis;
}

}  // namespace

void SynthSpec::validate() const {
  if (n_languages < 3) throw ValidationError("synthetic spec: need N >= 3 languages");
  if (d_model < n_languages + 2) throw ValidationError("synthetic spec: need D >= N + 2");
  if (n_layers == 0) throw ValidationError("synthetic spec: need at least one layer");
  if (!blend.empty() && blend.size() != n_layers) {
    throw ValidationError("synthetic spec: blend must be empty or have one value per layer");
  }
  for (double t : blend) {
    if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("synthetic spec: blend values must lie in [0, 1]");
  }
  if (!(sigma >= 0.0) || !(sigma_fraction >= 0.0)) {
    throw ValidationError("synthetic spec: noise must be non-negative");
  }
  if (samples_per_language == 0 || tokens_per_record == 0) {
    throw ValidationError("synthetic spec: sample counts must be positive");
  }
  if (!(scale > 0.0) || !std::isfinite(family_spread)) {
    throw ValidationError("synthetic spec: scale must be positive");
  }
  if (!(tolerance >= 0.0)) throw ValidationError("synthetic spec: tolerance must be non-negative");
}

double SynthSpec::blend_at(std::uint32_t layer) const {
  if (!blend.empty()) return blend.at(layer);
  if (n_layers == 1) return 0.0;
  return static_cast<double>(layer) / static_cast<double>(n_layers - 1);
}

std::vector<std::string> SynthSpec::labels() const {
  std::vector<std::string> out;
  constexpr std::size_t n_codes = sizeof(kFloresCodes) / sizeof(kFloresCodes[0]);
  for (std::uint32_t i = 0; i < n_languages; ++i) {
    out.push_back(i < n_codes ? kFloresCodes[i] : "lang_" + std::to_string(i));
  }
  return out;
}

std::vector<std::uint32_t> SynthSpec::families() const {
  std::vector<std::uint32_t> out(n_languages);
  const std::uint32_t first = (n_languages + 1) / 2;
  for (std::uint32_t i = 0; i < n_languages; ++i) out[i] = i < first ? 0 : 1;
  return out;
}

#define SAESTEER_SYNTH_FIELDS(X)                                                         \
  X(n_languages) X(d_model) X(n_layers) X(samples_per_language) X(tokens_per_record)     \
  X(sigma) X(sigma_fraction) X(scale) X(family_spread) X(blend) X(tolerance) X(seed)     \
  X(model_name)

void to_json(nlohmann::json& j, const SynthSpec& s) {
  j = nlohmann::json::object();
#define X(name) j[#name] = s.name;
  SAESTEER_SYNTH_FIELDS(X)
#undef X
}

void from_json(const nlohmann::json& j, SynthSpec& s) {
  if (!j.is_object()) throw ValidationError("synthetic spec must be a JSON object");
  static const std::vector<std::string> known = {
#define X(name) #name,
      SAESTEER_SYNTH_FIELDS(X)
#undef X
  };
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ValidationError("unknown synthetic spec key '" + key + "'");
    }
  }
  try {
#define X(name) \
  if (j.contains(#name)) j.at(#name).get_to(s.name);
    SAESTEER_SYNTH_FIELDS(X)
#undef X
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid synthetic spec value: ") + e.what());
  }
}

#undef SAESTEER_SYNTH_FIELDS

SynthOutput generate(const SynthSpec& spec, const std::filesystem::path& store_path) {
  spec.validate();
  const std::size_t n = spec.n_languages;
  const std::size_t d = spec.d_model;
  const auto fam = spec.families();
  const auto basis = orthonormal_basis(n + 2, d, splitmix64(spec.seed));

  SynthOutput out;
  out.means.resize(spec.n_layers);
  double norm_sum = 0.0;
  for (std::size_t l = 0; l < spec.n_layers; ++l) {
    const double t = spec.blend_at(static_cast<std::uint32_t>(l));
    out.means[l].assign(n, std::vector<float>(d));
    for (std::size_t i = 0; i < n; ++i) {
      double norm = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double block = spec.scale * (basis[fam[i]][k] + spec.family_spread * basis[2 + i][k]);
        const double distinct = spec.scale * basis[2 + i][k];
        const float m = static_cast<float>((1.0 - t) * block + t * distinct);
        out.means[l][i][k] = m;
        norm += static_cast<double>(m) * m;
      }
      norm_sum += std::sqrt(norm);
    }
  }
  out.mean_norm = norm_sum / static_cast<double>(spec.n_layers * n);
  out.effective_sigma = spec.sigma + spec.sigma_fraction * out.mean_norm;

  std::vector<float> special(d);
  for (std::size_t k = 0; k < d; ++k) {
    special[k] = static_cast<float>(spec.scale * (3.0 * basis[0][k] - 2.0 * basis[1][k]));
  }

  StoreManifest manifest;
  manifest.model_name = spec.model_name;
  manifest.d_model = spec.d_model;
  for (std::uint32_t l = 0; l < spec.n_layers; ++l) manifest.layer_indices.push_back(l);
  manifest.languages = spec.labels();

  StoreWriter writer(store_path, manifest);
  for (std::uint32_t l = 0; l < spec.n_layers; ++l) {
    Gaussian noise(splitmix64(spec.seed ^ splitmix64(0x5EED0000ull + l)));
    for (std::uint32_t i = 0; i < n; ++i) {
      std::uint32_t remaining = spec.samples_per_language;
      while (remaining > 0) {
        const std::uint32_t kept = std::min(remaining, spec.tokens_per_record);
        remaining -= kept;
        ActivationRecord rec;
        rec.layer = l;
        rec.language_index = i;
        rec.d_model = spec.d_model;
        rec.keep_mask.assign(kept + 1, 1);
        rec.keep_mask[0] = 0;
        rec.activations.insert(rec.activations.end(), special.begin(), special.end());
        for (std::uint32_t t = 0; t < kept; ++t) {
          for (std::size_t k = 0; k < d; ++k) {
            double v = out.means[l][i][k];
            if (out.effective_sigma > 0.0) v += out.effective_sigma * noise();
            rec.activations.push_back(static_cast<float>(v));
          }
        }
        writer.write(rec);
      }
    }
  }
  out.manifest = writer.finish();

  // Reference profile from the noiseless means.
  LayerProfile& p = out.oracle;
  for (std::uint32_t l = 0; l < spec.n_layers; ++l) {
    const auto v = oracle::noiseless_contrast(out.means[l]);
    const double f = oracle::explained_variance_ratio(oracle::pearson_matrix(v), n);
    p.layers.push_back(l);
    p.f.push_back(f);
    p.s.push_back(1.0 - f);
  }
  if (p.layers.size() >= 2) p.intersections = oracle::crossings(p.layers, p.f, spec.tolerance);
  return out;
}

nlohmann::json oracle_json(const LayerProfile& profile, double tolerance) {
  nlohmann::json j;
  j["layers"] = profile.layers;
  j["f"] = profile.f;
  j["s"] = profile.s;
  j["intersections"] = profile.intersections;
  j["tolerance"] = tolerance;
  return j;
}

LayerProfile oracle_from_json(const nlohmann::json& j) {
  LayerProfile p;
  try {
    p.layers = j.at("layers").get<std::vector<std::uint32_t>>();
    p.f = j.at("f").get<std::vector<double>>();
    p.s = j.at("s").get<std::vector<double>>();
    p.intersections = j.at("intersections").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed oracle JSON: ") + e.what());
  }
  return p;
}

std::vector<double> block_correlation_target(std::span<const std::uint32_t> family_of,
                                             double rho_in, double rho_out) {
  const std::size_t n = family_of.size();
  std::vector<double> c(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      c[i * n + j] = i == j ? 1.0 : (family_of[i] == family_of[j] ? rho_in : rho_out);
    }
  }
  return c;
}

LanguageVectorSet plant_block_correlation(std::span<const std::uint32_t> family_of, double rho_in,
                                          double rho_out) {
  const std::size_t n = family_of.size();
  if (n < 2) throw ValidationError("need at least 2 languages");
  if (std::abs(rho_in) > 1.0 || std::abs(rho_out) > 1.0) {
    throw ValidationError("target correlations must lie in [-1, 1]");
  }
  const auto c = block_correlation_target(family_of, rho_in, rho_out);

  // Semidefinite Cholesky: C = L L^T; a vanishing pivot zeroes its column.
  std::vector<double> lower(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double pivot = c[j * n + j];
    for (std::size_t k = 0; k < j; ++k) pivot -= lower[j * n + k] * lower[j * n + k];
    if (pivot < -1e-10) throw ValidationError("target correlation matrix is not positive semidefinite");
    const double diag = pivot > 1e-14 ? std::sqrt(pivot) : 0.0;
    lower[j * n + j] = diag;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = c[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= lower[i * n + k] * lower[j * n + k];
      if (diag == 0.0) {
        if (std::abs(s) > 1e-8) {
          throw ValidationError("target correlation matrix is not positive semidefinite");
        }
        lower[i * n + j] = 0.0;
      } else {
        lower[i * n + j] = s / diag;
      }
    }
  }

  // Embed the rows of L with the Helmert basis of the zero-sum subspace of
  // R^{N+1}: the vectors come out centered with Gram matrix C.
  const std::size_t dims = n + 1;
  LanguageVectorSet set;
  set.space = Space::kDense;
  for (std::size_t i = 0; i < n; ++i) {
    set.labels.push_back("lang_" + std::to_string(i));
    std::vector<double> v(dims, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      const double coef = lower[i * n + k];
      if (coef == 0.0) continue;
      const double m = static_cast<double>(k + 1);
      const double norm = std::sqrt(m * (m + 1.0));
      for (std::size_t q = 0; q <= k; ++q) v[q] += coef / norm;
      v[k + 1] -= coef * m / norm;
    }
    set.vectors.push_back(std::move(v));
  }
  set.validate();
  return set;
}

namespace oracle {

std::vector<double> pearson_matrix(const std::vector<std::vector<double>>& vectors) {
  const std::size_t n = vectors.size();
  std::vector<double> c(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const auto& x = vectors[i];
      const auto& y = vectors[j];
      const std::size_t m = x.size();
      double mx = 0.0, my = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        mx += x[k];
        my += y[k];
      }
      mx /= static_cast<double>(m);
      my /= static_cast<double>(m);
      double sxy = 0.0, sxx = 0.0, syy = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        sxy += (x[k] - mx) * (y[k] - my);
        sxx += (x[k] - mx) * (x[k] - mx);
        syy += (y[k] - my) * (y[k] - my);
      }
      c[i * n + j] = sxy / std::sqrt(sxx * syy);
    }
  }
  return c;
}

std::vector<double> jacobi_eigenvalues(std::vector<double> a, std::size_t n) {
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    double total = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = 0; q < n; ++q) {
        total += a[p * n + q] * a[p * n + q];
        if (p != q) off += a[p * n + q] * a[p * n + q];
      }
    }
    if (off <= 1e-30 * total || off == 0.0) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p];
          const double akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k];
          const double aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a[i * n + i];
  std::sort(eig.begin(), eig.end());
  return eig;
}

double explained_variance_ratio(const std::vector<double>& corr, std::size_t n) {
  const auto eig = jacobi_eigenvalues(corr, n);
  double sum = 0.0;
  for (double e : eig) sum += e;
  return eig.back() / sum;
}

std::vector<double> crossings(const std::vector<std::uint32_t>& layers,
                              const std::vector<double>& f, double tol) {
  std::vector<double> found;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double gi = 2.0 * f[i] - 1.0;
    if (gi >= -tol && gi <= tol) found.push_back(layers[i]);
    if (i + 1 == f.size()) continue;
    const double gj = 2.0 * f[i + 1] - 1.0;
    const bool both_clear = (gi > tol || gi < -tol) && (gj > tol || gj < -tol);
    if (both_clear && ((gi > 0.0) != (gj > 0.0))) {
      const double x0 = layers[i];
      const double x1 = layers[i + 1];
      found.push_back(x0 + (x1 - x0) * gi / (gi - gj));
    }
  }
  std::sort(found.begin(), found.end());
  found.erase(std::unique(found.begin(), found.end(),
                          [](double a, double b) { return b - a <= 1e-9; }),
              found.end());
  return found;
}

std::vector<std::vector<double>> noiseless_contrast(const std::vector<std::vector<float>>& means) {
  const std::size_t n = means.size();
  const std::size_t d = means.front().size();
  std::vector<double> grand(d, 0.0);
  for (const auto& m : means) {
    for (std::size_t k = 0; k < d; ++k) grand[k] += m[k];
  }
  for (auto& g : grand) g /= static_cast<double>(n);
  const double factor = static_cast<double>(n) / static_cast<double>(n - 1);
  std::vector<std::vector<double>> v(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) v[i][k] = factor * (means[i][k] - grand[k]);
  }
  return v;
}

}  // namespace oracle
}  // namespace saesteer
