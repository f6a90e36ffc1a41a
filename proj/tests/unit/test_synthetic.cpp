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


#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "saesteer/error.hpp"
#include "saesteer/lang_vectors.hpp"
#include "saesteer/layer_analysis.hpp"
#include "saesteer/synthetic.hpp"
#include "test_util.hpp"

using namespace saesteer;
using saesteer::testing::TempDir;

namespace {

LayerProfile pipeline_profile(const StoreReader& store, double tau) {
  std::vector<LanguageVectorSet> sets;
  for (auto layer : store.manifest().layer_indices) {
    sets.push_back(contrast_set(store, Codec::dense(store.manifest().d_model), layer));
  }
  return build_profile(sets, tau);
}

SynthSpec base_spec() {
  SynthSpec s;
  s.n_languages = 6;
  s.d_model = 32;
  s.n_layers = 12;
  s.samples_per_language = 32;
  return s;
}

}  // namespace

TEST_CASE("spec validation") {
  SynthSpec s = base_spec();
  CHECK_NOTHROW(s.validate());
  s.n_languages = 2;
  CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("N >= 3"), ValidationError);
  s = base_spec();
  s.d_model = 7;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = base_spec();
  s.blend = {0.5};
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s.blend.assign(12, 1.5);
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = base_spec();
  s.sigma = -1.0;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  CHECK(base_spec().blend_at(0) == 0.0);
  CHECK(base_spec().blend_at(11) == 1.0);
  CHECK(base_spec().labels().front() == "eng_Latn");
  CHECK(base_spec().families() == std::vector<std::uint32_t>{0, 0, 0, 1, 1, 1});
}

TEST_CASE("spec JSON rejects unknown keys") {
  SynthSpec s;
  CHECK_THROWS_AS(from_json(nlohmann::json{{"languages", 4}}, s), ValidationError);
  from_json(nlohmann::json{{"n_languages", 4}, {"seed", 9}}, s);
  CHECK(s.n_languages == 4);
  CHECK(s.seed == 9);
  nlohmann::json j;
  to_json(j, s);
  SynthSpec back;
  from_json(j, back);
  CHECK(back.n_languages == 4);
}

TEST_CASE("noiseless stores with constant blend reproduce the oracle f exactly") {
  TempDir dir;
  for (double t : {0.0, 0.35, 1.0}) {
    SynthSpec s = base_spec();
    s.n_layers = 4;
    s.blend.assign(4, t);
    const auto out = generate(s, dir / "s.saea");
    const auto p = pipeline_profile(StoreReader::open(dir / "s.saea"), s.tolerance);
    for (std::size_t l = 0; l < 4; ++l) {
      CHECK(std::abs(p.f[l] - out.oracle.f[l]) <= 1e-9);
      CHECK(p.f[l] == doctest::Approx(p.f[0]).epsilon(1e-12));
    }
  }
}

TEST_CASE("the planted crossing is recovered under 1% noise") {
  TempDir dir;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    SynthSpec s = base_spec();
    s.sigma_fraction = 0.01;
    s.seed = seed;
    const auto out = generate(s, dir / "s.saea");
    REQUIRE(out.oracle.intersections.size() == 1);
    const auto p = pipeline_profile(StoreReader::open(dir / "s.saea"), s.tolerance);
    REQUIRE(p.intersections.size() == 1);
    CHECK(std::abs(p.intersections[0] - out.oracle.intersections[0]) <= 0.5);
  }
}

TEST_CASE("generation is deterministic and the oracle JSON round-trips") {
  TempDir dir;
  SynthSpec s = base_spec();
  s.sigma = 0.05;
  s.seed = 77;
  const auto a = generate(s, dir / "a.saea");
  const auto b = generate(s, dir / "b.saea");
  CHECK(saesteer::testing::read_bytes(dir / "a.saea") == saesteer::testing::read_bytes(dir / "b.saea"));
  s.seed = 78;
  generate(s, dir / "c.saea");
  CHECK(saesteer::testing::read_bytes(dir / "a.saea") != saesteer::testing::read_bytes(dir / "c.saea"));

  const auto back = oracle_from_json(oracle_json(a.oracle, s.tolerance));
  CHECK(back.layers == a.oracle.layers);
  CHECK(back.f == a.oracle.f);
  CHECK(back.intersections == a.oracle.intersections);
  CHECK(a.effective_sigma == 0.05);
}

TEST_CASE("each record carries one masked special token") {
  TempDir dir;
  SynthSpec s = base_spec();
  s.n_layers = 2;
  s.samples_per_language = 10;
  s.tokens_per_record = 4;
  const auto out = generate(s, dir / "s.saea");
  const auto recs = StoreReader::open(dir / "s.saea").read_all();
  CHECK(recs.size() == 2 * 6 * 3);  // 4 + 4 + 2 kept tokens per language and layer
  for (const auto& r : recs) {
    CHECK(r.keep_mask[0] == 0);
    CHECK(r.kept_count() == r.token_count() - 1u);
  }
  CHECK(out.manifest.count(1, 5) == 3);
}

TEST_CASE("property: relabeling languages leaves f and s unchanged") {
  TempDir dir;
  SynthSpec s = base_spec();
  s.sigma_fraction = 0.02;
  s.n_layers = 5;
  generate(s, dir / "s.saea");
  const auto store = StoreReader::open(dir / "s.saea");
  const auto ref = pipeline_profile(store, s.tolerance);

  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<std::uint32_t> perm(6);
    std::iota(perm.begin(), perm.end(), 0u);
    std::shuffle(perm.begin(), perm.end(), rng);
    StoreManifest m = store.manifest();
    for (std::size_t i = 0; i < 6; ++i) m.languages[perm[i]] = store.manifest().languages[i];
    auto recs = store.read_all();
    for (auto& r : recs) r.language_index = perm[r.language_index];
    const auto path = dir / ("p" + std::to_string(trial) + ".saea");
    write_store(m, recs, path);
    const auto p = pipeline_profile(StoreReader::open(path), s.tolerance);
    for (std::size_t l = 0; l < 5; ++l) {
      CHECK(std::abs(p.f[l] - ref.f[l]) <= 1e-12);
      CHECK(std::abs(p.s[l] - ref.s[l]) <= 1e-12);
    }
  }
}

TEST_CASE("planted block correlations") {
  SUBCASE("zero correlation is the identity") {
    const std::vector<std::uint32_t> fam = {0, 0, 1, 1, 1};
    const auto c = correlation(plant_block_correlation(fam, 0.0, 0.0));
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(c(i, j) - (i == j ? 1.0 : 0.0)) <= 1e-12);
    }
    CHECK(multilinguality(c) == doctest::Approx(0.2).epsilon(1e-12));
  }
  SUBCASE("property: equal correlations give compound symmetry") {
    for (std::size_t n = 3; n <= 10; ++n) {
      const std::vector<std::uint32_t> fam(n, 0);
      for (double rho : {0.0, 0.25, 0.5, 0.9}) {
        const double f = multilinguality(correlation(plant_block_correlation(fam, rho, rho)));
        CHECK(std::abs(f - (1.0 + (n - 1.0) * rho) / n) <= 1e-10);
      }
    }
  }
  SUBCASE("two families against the Jacobi oracle") {
    const std::vector<std::uint32_t> fam = {0, 0, 0, 1, 1, 1};
    const auto set = plant_block_correlation(fam, 0.8, 0.2);
    const auto c = correlation(set);
    const auto target = block_correlation_target(fam, 0.8, 0.2);
    for (std::size_t i = 0; i < 36; ++i) CHECK(std::abs(c.values[i] - target[i]) <= 1e-12);
    const auto eig = oracle::jacobi_eigenvalues(target, 6);
    CHECK(std::abs(multilinguality(c) - eig.back() / 6.0) <= 1e-10);
    CHECK(std::abs(oracle::explained_variance_ratio(target, 6) - eig.back() / 6.0) <= 1e-12);
  }
  SUBCASE("non-PSD targets are refused") {
    const std::vector<std::uint32_t> fam = {0, 0, 1, 1};
    CHECK_THROWS_AS(plant_block_correlation(fam, -0.9, 0.9), ValidationError);
  }
}
